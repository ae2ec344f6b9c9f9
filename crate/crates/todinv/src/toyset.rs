//! Deterministic synthetic shapes: training data and the bundled 12-task
//! benchmark used by the evaluation harness.
//!
//! Latents are 4-channel 8x8 arrays: channels 0..3 carry RGB in [0,1] and
//! channel 3 is object occupancy. Prompts name the shape and color.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::latent::Latent;
use crate::prompt::component_seed;

pub const LATENT_SHAPE: (usize, usize, usize) = (4, 8, 8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Square,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
            Color::Yellow => [1.0, 1.0, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Disk => "disk",
        }
    }
}

/// Render a single shape onto a background level. Returns the latent and the
/// object occupancy footprint (1 inside the object).
pub fn render_shape(
    shape: Shape,
    color: Color,
    cx: f64,
    cy: f64,
    radius: f64,
    background: f64,
) -> (Latent, Vec<bool>) {
    let (c, h, w) = LATENT_SHAPE;
    let mut data = vec![0.0; c * h * w];
    let mut footprint = vec![false; h * w];
    let rgb = color.rgb();
    for y in 0..h {
        for x in 0..w {
            let inside = match shape {
                Shape::Square => {
                    (x as f64 - cx).abs() <= radius && (y as f64 - cy).abs() <= radius
                }
                Shape::Disk => {
                    (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= radius * radius
                }
            };
            let p = y * w + x;
            footprint[p] = inside;
            for ch in 0..3 {
                data[ch * h * w + p] = if inside { rgb[ch] } else { background };
            }
            data[3 * h * w + p] = if inside { 1.0 } else { 0.0 };
        }
    }
    (
        Latent {
            shape: LATENT_SHAPE,
            data,
            timestep_tag: None,
        },
        footprint,
    )
}

/// Training corpus: random shapes, colors, positions and background levels,
/// with prompts naming shape and color.
pub fn shapes_dataset(n: usize, seed: u64) -> Vec<(Latent, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [Shape::Square, Shape::Disk];
    let colors = [Color::Red, Color::Green, Color::Blue, Color::Yellow];
    (0..n)
        .map(|_| {
            let shape = shapes[rng.gen_range(0..2)];
            let color = colors[rng.gen_range(0..4)];
            let cx = rng.gen_range(2.0..5.5);
            let cy = rng.gen_range(2.0..5.5);
            let r = rng.gen_range(1.2..2.6);
            let bg = if rng.gen_bool(0.5) { 0.0 } else { 0.25 };
            let (latent, _) = render_shape(shape, color, cx, cy, r, bg);
            let prompt = format!("a {} {}", color.name(), shape.name());
            (latent, prompt)
        })
        .collect()
}

/// One generated benchmark task: the source latent, an edited-region mask
/// (1 where edits are allowed, 0 in the preserved region), and the prompts.
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub id: String,
    pub source_prompt: String,
    pub target_prompt: String,
    pub edit_type: String,
    pub multi_edit: bool,
    pub latent: Latent,
    pub mask: Latent,
}

fn footprint_mask(footprint: &[bool], dilate: usize, invert: bool) -> Latent {
    let (_, h, w) = LATENT_SHAPE;
    let mut edited = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if footprint[y * w + x] {
                let y0 = y.saturating_sub(dilate);
                let x0 = x.saturating_sub(dilate);
                for yy in y0..(y + dilate + 1).min(h) {
                    for xx in x0..(x + dilate + 1).min(w) {
                        edited[yy * w + xx] = true;
                    }
                }
            }
        }
    }
    let data = edited
        .iter()
        .map(|&e| {
            let v = if e { 1.0 } else { 0.0 };
            if invert {
                1.0 - v
            } else {
                v
            }
        })
        .collect();
    Latent {
        shape: (1, h, w),
        data,
        timestep_tag: None,
    }
}

/// The fixed 12-task benchmark: four tasks per edit class, deterministic
/// given the seed.
pub fn toy_benchmark(seed: u64) -> Vec<ToyTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "toy-benchmark"));
    let mut place = |shape, color, bg| {
        let cx = rng.gen_range(2.5..5.0);
        let cy = rng.gen_range(2.5..5.0);
        let r = rng.gen_range(1.4..2.2);
        render_shape(shape, color, cx, cy, r, bg)
    };

    let specs: Vec<(&str, &str, &str, &str, Shape, Color, f64, bool)> = vec![
        // structure edits
        ("t01", "a red square", "a red square and a blue disk", "add object", Shape::Square, Color::Red, 0.0, false),
        ("t02", "a green disk", "an empty scene", "delete object", Shape::Disk, Color::Green, 0.0, false),
        ("t03", "a blue square", "a blue disk", "change content", Shape::Square, Color::Blue, 0.0, false),
        ("t04", "a yellow square", "a tilted yellow square", "change pose", Shape::Square, Color::Yellow, 0.0, false),
        // appearance edits
        ("t05", "a red square", "a blue square", "change color", Shape::Square, Color::Red, 0.0, false),
        ("t06", "a green disk", "a yellow disk", "change color", Shape::Disk, Color::Green, 0.0, false),
        ("t07", "a blue square", "a shiny blue square", "change material", Shape::Square, Color::Blue, 0.25, false),
        ("t08", "a red disk", "a sketch of a red disk", "change style", Shape::Disk, Color::Red, 0.25, false),
        // global edits
        ("t09", "a red square", "a red square on a bright background", "change background", Shape::Square, Color::Red, 0.0, false),
        ("t10", "a blue disk", "a blue disk on a bright background", "change background", Shape::Disk, Color::Blue, 0.0, false),
        ("t11", "a green square", "a green square on a dark background", "change background", Shape::Square, Color::Green, 0.25, false),
        ("t12", "a yellow disk", "a yellow disk on a dark background", "change background", Shape::Disk, Color::Yellow, 0.25, false),
    ];

    specs
        .into_iter()
        .map(|(id, src, tgt, ty, shape, color, bg, multi)| {
            let (latent, footprint) = place(shape, color, bg);
            // background edits change everything except the object, so the
            // preserved region is the object footprint
            let mask = if ty == "change background" {
                footprint_mask(&footprint, 0, true)
            } else {
                footprint_mask(&footprint, 1, false)
            };
            ToyTask {
                id: id.to_string(),
                source_prompt: src.to_string(),
                target_prompt: tgt.to_string(),
                edit_type: ty.to_string(),
                multi_edit: multi,
                latent,
                mask,
            }
        })
        .collect()
}

/// Classify the dominant object color of a latent within a footprint mask
/// (1 = object). Returns the color channel argmax as a name.
pub fn classify_color(latent: &Latent, object_mask: &Latent) -> Option<&'static str> {
    let (_, h, w) = latent.shape;
    let mut sums = [0.0f64; 3];
    let mut n = 0.0;
    for p in 0..h * w {
        if object_mask.data[p] > 0.5 {
            for ch in 0..3 {
                sums[ch] += latent.data[ch * h * w + p];
            }
            n += 1.0;
        }
    }
    if n == 0.0 {
        return None;
    }
    let r = sums[0] / n;
    let g = sums[1] / n;
    let b = sums[2] / n;
    if r > 0.5 && g > 0.5 && b < 0.5 {
        Some("yellow")
    } else if r >= g && r >= b {
        Some("red")
    } else if g >= r && g >= b {
        Some("green")
    } else {
        Some("blue")
    }
}
