//! Versioned little-endian binary formats: latents, latent trajectories,
//! prompt grids, toy-model weights, and the plain-text residual trace.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::denoiser::{ToyArch, ToyDenoiser};
use crate::embedding::{Embedding, LayerGroup, PromptGrid, SharingMode, NUM_GROUPS};
use crate::error::{Error, Result};
use crate::latent::Latent;

const LATENT_MAGIC: &[u8; 8] = b"TODLAT\x00\x01";
const TRAJ_MAGIC: &[u8; 8] = b"TODTRJ\x00\x01";
const GRID_MAGIC: &[u8; 8] = b"TODGRD\x00\x01";
const WEIGHTS_MAGIC: &[u8; 8] = b"TODWGT\x00\x01";
const FORMAT_VERSION: u32 = 1;

fn fmt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(fmt_err(self.path, "truncated file"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(fmt_err(self.path, "bad magic"));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(fmt_err(self.path, format!("unsupported version {}", version)));
        }
        Ok(())
    }
}

fn push_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_f32s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn latent_bytes(l: &Latent) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(l.shape.0 as u32).to_le_bytes());
    out.extend_from_slice(&(l.shape.1 as u32).to_le_bytes());
    out.extend_from_slice(&(l.shape.2 as u32).to_le_bytes());
    let tag = l.timestep_tag.map(|t| t as u32 + 1).unwrap_or(0);
    out.extend_from_slice(&tag.to_le_bytes());
    push_f64s(&mut out, &l.data);
    out
}

fn latent_from(r: &mut Reader) -> Result<Latent> {
    let c = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let tag = r.u32()?;
    let data = r.f64s(c * h * w)?;
    Ok(Latent {
        shape: (c, h, w),
        data,
        timestep_tag: if tag == 0 { None } else { Some(tag as usize - 1) },
    })
}

pub fn write_latent(path: &Path, l: &Latent) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(LATENT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&latent_bytes(l));
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_latent(path: &Path) -> Result<Latent> {
    let buf = fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    r.expect_magic(LATENT_MAGIC)?;
    latent_from(&mut r)
}

pub fn write_trajectory(path: &Path, latents: &[Latent]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(TRAJ_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(latents.len() as u32).to_le_bytes());
    for l in latents {
        out.extend_from_slice(&latent_bytes(l));
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Latent>> {
    let buf = fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    r.expect_magic(TRAJ_MAGIC)?;
    let n = r.u32()? as usize;
    (0..n).map(|_| latent_from(&mut r)).collect()
}

/// Grid file: header (T, groups, tokens, dim, sharing mode) then row-major
/// 32-bit floats for the materialized cells, then the snapshot.
pub fn write_grid(path: &Path, grid: &PromptGrid) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.t_steps as u32).to_le_bytes());
    out.extend_from_slice(&(NUM_GROUPS as u32).to_le_bytes());
    out.extend_from_slice(&(grid.tokens as u32).to_le_bytes());
    out.extend_from_slice(&(grid.dim as u32).to_le_bytes());
    let mode = match grid.sharing_mode {
        SharingMode::P => 0u8,
        SharingMode::PT => 1,
        SharingMode::PPlus => 2,
        SharingMode::PStar => 3,
    };
    out.push(mode);
    for cell in grid.materialized_cells() {
        push_f32s(&mut out, &cell.data);
    }
    for t in 0..grid.t_steps {
        for g in LayerGroup::ALL {
            push_f32s(&mut out, &grid.snapshot_cell(t, g).data);
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<PromptGrid> {
    let buf = fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    r.expect_magic(GRID_MAGIC)?;
    let t_steps = r.u32()? as usize;
    let groups = r.u32()? as usize;
    if groups != NUM_GROUPS {
        return Err(fmt_err(path, format!("unsupported group count {}", groups)));
    }
    let tokens = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mode = match r.u8()? {
        0 => SharingMode::P,
        1 => SharingMode::PT,
        2 => SharingMode::PPlus,
        3 => SharingMode::PStar,
        m => return Err(fmt_err(path, format!("unknown sharing mode {}", m))),
    };
    let cell_len = tokens * dim;
    let mut cells = Vec::with_capacity(t_steps * NUM_GROUPS);
    for _ in 0..t_steps * NUM_GROUPS {
        cells.push(Embedding::from_data(tokens, dim, r.f32s(cell_len)?)?);
    }
    let mut snapshot = Vec::with_capacity(t_steps * NUM_GROUPS);
    for _ in 0..t_steps * NUM_GROUPS {
        snapshot.push(Embedding::from_data(tokens, dim, r.f32s(cell_len)?)?);
    }
    PromptGrid::from_materialized(t_steps, tokens, dim, mode, cells, snapshot)
}

/// Weights file: arch header, per-level layer-tag table, flat parameters,
/// null embedding.
pub fn write_weights(path: &Path, model: &ToyDenoiser) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        model.arch.channels,
        model.arch.levels,
        model.arch.tokens,
        model.arch.dim,
        model.arch.num_train_steps,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for tag in &model.layer_tags {
        out.push(match tag {
            LayerGroup::Appearance => 0,
            LayerGroup::Structure => 1,
        });
    }
    push_f64s(&mut out, &model.params);
    push_f64s(&mut out, &model.null_embedding.data);
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<ToyDenoiser> {
    let buf = fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    r.expect_magic(WEIGHTS_MAGIC)?;
    let channels = r.u32()? as usize;
    let levels = r.u32()? as usize;
    let tokens = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let num_train_steps = r.u32()? as usize;
    let arch = ToyArch {
        channels,
        levels,
        tokens,
        dim,
        num_train_steps,
    };
    let mut layer_tags = Vec::with_capacity(levels);
    for _ in 0..levels {
        layer_tags.push(match r.u8()? {
            0 => LayerGroup::Appearance,
            1 => LayerGroup::Structure,
            t => return Err(fmt_err(path, format!("unknown layer tag {}", t))),
        });
    }
    let params = r.f64s(arch.param_len())?;
    let null_data = r.f64s(tokens * dim)?;
    Ok(ToyDenoiser {
        arch,
        params,
        null_embedding: Embedding::from_data(tokens, dim, null_data)?,
        layer_tags,
        cond_enabled: [true, true],
    })
}

/// Plain-text residual trace: one line per optimizer step, plus the initial
/// residual at step 0.
pub fn write_trace(
    path: &Path,
    initial: &[f64],
    trace: &[Vec<f64>],
) -> Result<()> {
    let mut out = String::from("timestep\tstep\tresidual\n");
    for t in (0..trace.len()).rev() {
        out.push_str(&format!("{}\t0\t{:.12e}\n", t, initial[t]));
        for (k, r) in trace[t].iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{:.12e}\n", t, k + 1, r));
        }
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}
