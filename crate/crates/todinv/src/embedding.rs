//! The extended prompt space: a (timestep x layer-group) grid of embeddings
//! with selectable sharing structure, edit-class selection masks, and
//! target-prompt renewal.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_GROUPS: usize = 2;

/// Which band of network resolutions an embedding conditions. High-resolution
/// levels carry appearance, low-resolution levels carry structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerGroup {
    Appearance,
    Structure,
}

impl LayerGroup {
    pub const ALL: [LayerGroup; NUM_GROUPS] = [LayerGroup::Appearance, LayerGroup::Structure];

    pub fn index(self) -> usize {
        match self {
            LayerGroup::Appearance => 0,
            LayerGroup::Structure => 1,
        }
    }

    pub fn other(self) -> LayerGroup {
        match self {
            LayerGroup::Appearance => LayerGroup::Structure,
            LayerGroup::Structure => LayerGroup::Appearance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditClass {
    StructureEdit,
    AppearanceEdit,
    GlobalEdit,
}

/// Sharing structure of the grid: one shared embedding (P), per-timestep
/// (P_t), per-group (P+), or fully independent cells (P*).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    P,
    PT,
    PPlus,
    PStar,
}

impl SharingMode {
    pub fn parse(s: &str) -> Result<SharingMode> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "p" => Ok(SharingMode::P),
            "p_t" | "pt" => Ok(SharingMode::PT),
            "p_plus" | "pplus" | "p+" => Ok(SharingMode::PPlus),
            "p_star" | "pstar" | "p*" => Ok(SharingMode::PStar),
            other => Err(Error::Config(format!(
                "unknown sharing mode {:?}; expected p, p_t, p_plus or p_star",
                other
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SharingMode::P => "p",
            SharingMode::PT => "p_t",
            SharingMode::PPlus => "p_plus",
            SharingMode::PStar => "p_star",
        }
    }
}

/// A (tokens x dim) embedding matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub tokens: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Embedding {
    pub fn zeros(tokens: usize, dim: usize) -> Self {
        Embedding {
            tokens,
            dim,
            data: vec![0.0; tokens * dim],
        }
    }

    pub fn from_data(tokens: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != tokens * dim {
            return Err(Error::Config(format!(
                "embedding data length {} does not match {}x{}",
                data.len(),
                tokens,
                dim
            )));
        }
        Ok(Embedding { tokens, dim, data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean over token rows, one value per dim.
    pub fn pooled(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for tok in 0..self.tokens {
            for d in 0..self.dim {
                out[d] += self.data[tok * self.dim + d];
            }
        }
        let inv = 1.0 / self.tokens as f64;
        for v in &mut out {
            *v *= inv;
        }
        out
    }
}

/// The set of (timestep, group) cells an optimization pass may touch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    pub selected: BTreeSet<(usize, LayerGroup)>,
}

impl SelectionMask {
    pub fn contains(&self, t: usize, g: LayerGroup) -> bool {
        self.selected.contains(&(t, g))
    }

    pub fn groups_at(&self, t: usize) -> Vec<LayerGroup> {
        LayerGroup::ALL
            .into_iter()
            .filter(|&g| self.contains(t, g))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Override applied on top of the edit-class mask: `NoTopo` selects every
/// cell regardless of class, `Reverse` swaps the two non-global cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOverride {
    #[default]
    None,
    NoTopo,
    Reverse,
}

impl MaskOverride {
    pub fn parse(s: &str) -> Result<MaskOverride> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(MaskOverride::None),
            "no_topo" | "notopo" => Ok(MaskOverride::NoTopo),
            "reverse" => Ok(MaskOverride::Reverse),
            other => Err(Error::Config(format!(
                "unknown mask override {:?}; expected none, no_topo or reverse",
                other
            ))),
        }
    }
}

/// Cells the optimizer may touch for an edit class: structure edits optimize
/// appearance embeddings, appearance edits optimize structure embeddings,
/// global edits optimize everything.
pub fn selection_mask(edit_class: EditClass, t_steps: usize) -> SelectionMask {
    selection_mask_with(edit_class, t_steps, MaskOverride::None)
}

pub fn selection_mask_with(
    edit_class: EditClass,
    t_steps: usize,
    ov: MaskOverride,
) -> SelectionMask {
    let mut selected = BTreeSet::new();
    let all = |set: &mut BTreeSet<(usize, LayerGroup)>| {
        for t in 0..t_steps {
            for g in LayerGroup::ALL {
                set.insert((t, g));
            }
        }
    };
    let one = |set: &mut BTreeSet<(usize, LayerGroup)>, g: LayerGroup| {
        for t in 0..t_steps {
            set.insert((t, g));
        }
    };
    match (edit_class, ov) {
        (_, MaskOverride::NoTopo) | (EditClass::GlobalEdit, _) => all(&mut selected),
        (EditClass::StructureEdit, MaskOverride::None) => one(&mut selected, LayerGroup::Appearance),
        (EditClass::AppearanceEdit, MaskOverride::None) => one(&mut selected, LayerGroup::Structure),
        (EditClass::StructureEdit, MaskOverride::Reverse) => {
            one(&mut selected, LayerGroup::Structure)
        }
        (EditClass::AppearanceEdit, MaskOverride::Reverse) => {
            one(&mut selected, LayerGroup::Appearance)
        }
    }
    SelectionMask { selected }
}

pub const EDIT_TYPE_LABELS: [&str; 9] = [
    "add object",
    "delete object",
    "change object",
    "change content",
    "change pose",
    "change color",
    "change material",
    "change style",
    "change background",
];

/// Map a benchmark edit-type label to its class. `multi_edit` forces the
/// global class since stacked edits need every layer optimized.
pub fn classify_edit(edit_type_label: &str, multi_edit: bool) -> Result<EditClass> {
    let norm = edit_type_label
        .to_ascii_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let class = match norm.as_str() {
        "add object" | "delete object" | "change object" | "change content" | "change pose" => {
            EditClass::StructureEdit
        }
        "change color" | "change material" | "change style" => EditClass::AppearanceEdit,
        "change background" => EditClass::GlobalEdit,
        _ => {
            return Err(Error::UnknownEditType {
                label: edit_type_label.to_string(),
                valid: EDIT_TYPE_LABELS.join(", "),
            })
        }
    };
    if multi_edit {
        return Ok(EditClass::GlobalEdit);
    }
    Ok(class)
}

/// The embedding grid. Storage slots are deduplicated per the sharing mode;
/// cell views alias slots, so a write through one cell is visible through
/// every cell backed by the same slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGrid {
    pub t_steps: usize,
    pub tokens: usize,
    pub dim: usize,
    pub sharing_mode: SharingMode,
    storage: Vec<Embedding>,
    /// Materialized (T x groups) copy of the initial state, never mutated.
    snapshot: Vec<Embedding>,
    frozen: bool,
}

impl PromptGrid {
    pub fn slot_index(&self, t: usize, g: LayerGroup) -> usize {
        match self.sharing_mode {
            SharingMode::P => 0,
            SharingMode::PT => t,
            SharingMode::PPlus => g.index(),
            SharingMode::PStar => t * NUM_GROUPS + g.index(),
        }
    }

    pub fn num_slots(mode: SharingMode, t_steps: usize) -> usize {
        match mode {
            SharingMode::P => 1,
            SharingMode::PT => t_steps,
            SharingMode::PPlus => NUM_GROUPS,
            SharingMode::PStar => t_steps * NUM_GROUPS,
        }
    }

    pub fn cell(&self, t: usize, g: LayerGroup) -> &Embedding {
        &self.storage[self.slot_index(t, g)]
    }

    pub fn cell_mut(&mut self, t: usize, g: LayerGroup) -> &mut Embedding {
        assert!(!self.frozen, "grid is frozen");
        let idx = self.slot_index(t, g);
        &mut self.storage[idx]
    }

    pub fn slot(&self, idx: usize) -> &Embedding {
        &self.storage[idx]
    }

    pub fn slot_mut(&mut self, idx: usize) -> &mut Embedding {
        assert!(!self.frozen, "grid is frozen");
        &mut self.storage[idx]
    }

    pub fn snapshot_cell(&self, t: usize, g: LayerGroup) -> &Embedding {
        &self.snapshot[t * NUM_GROUPS + g.index()]
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Materialized cell list, row-major over (t, group).
    pub fn materialized_cells(&self) -> Vec<Embedding> {
        let mut out = Vec::with_capacity(self.t_steps * NUM_GROUPS);
        for t in 0..self.t_steps {
            for g in LayerGroup::ALL {
                out.push(self.cell(t, g).clone());
            }
        }
        out
    }

    /// Rebuild a grid from materialized cells and snapshot (file load path).
    /// For shared modes the slot is taken from the first cell that maps to it.
    pub fn from_materialized(
        t_steps: usize,
        tokens: usize,
        dim: usize,
        mode: SharingMode,
        cells: Vec<Embedding>,
        snapshot: Vec<Embedding>,
    ) -> Result<PromptGrid> {
        if cells.len() != t_steps * NUM_GROUPS || snapshot.len() != t_steps * NUM_GROUPS {
            return Err(Error::Config("cell count does not match T x groups".into()));
        }
        let mut storage = vec![Embedding::zeros(tokens, dim); Self::num_slots(mode, t_steps)];
        let mut grid = PromptGrid {
            t_steps,
            tokens,
            dim,
            sharing_mode: mode,
            storage: Vec::new(),
            snapshot,
            frozen: false,
        };
        for t in (0..t_steps).rev() {
            for g in LayerGroup::ALL {
                let idx = grid.slot_index(t, g);
                storage[idx] = cells[t * NUM_GROUPS + g.index()].clone();
            }
        }
        grid.storage = storage;
        Ok(grid)
    }
}

/// Broadcast a source embedding into a fresh grid under the given sharing
/// mode. Every cell initially reads equal to the source embedding.
pub fn init_grid(source: &Embedding, t_steps: usize, mode: SharingMode) -> Result<PromptGrid> {
    if t_steps == 0 {
        return Err(Error::Config("T must be >= 1".into()));
    }
    if !source.all_finite() {
        return Err(Error::Config("source embedding has non-finite values".into()));
    }
    let storage = vec![source.clone(); PromptGrid::num_slots(mode, t_steps)];
    let snapshot = vec![source.clone(); t_steps * NUM_GROUPS];
    Ok(PromptGrid {
        t_steps,
        tokens: source.tokens,
        dim: source.dim,
        sharing_mode: mode,
        storage,
        snapshot,
        frozen: false,
    })
}

/// Transfer the optimization delta onto a target embedding, per cell:
/// out(t,g) = cell(t,g) - snapshot(t,g) + target. The result is fully
/// materialized (independent cells).
pub fn renew_target(grid_opt: &PromptGrid, target: &Embedding) -> Result<PromptGrid> {
    if target.tokens != grid_opt.tokens || target.dim != grid_opt.dim {
        return Err(Error::Config(format!(
            "target embedding shape {}x{} does not match grid {}x{}",
            target.tokens, target.dim, grid_opt.tokens, grid_opt.dim
        )));
    }
    let mut cells = Vec::with_capacity(grid_opt.t_steps * NUM_GROUPS);
    for t in 0..grid_opt.t_steps {
        for g in LayerGroup::ALL {
            let cur = grid_opt.cell(t, g);
            let snap = grid_opt.snapshot_cell(t, g);
            // (c - s) + tg, with the unchanged-target case kept bit-exact so
            // renewal with the source embedding is an identity
            let data: Vec<f64> = cur
                .data
                .iter()
                .zip(&snap.data)
                .zip(&target.data)
                .map(|((c, s), tg)| if s == tg { *c } else { (c - s) + tg })
                .collect();
            cells.push(Embedding::from_data(target.tokens, target.dim, data)?);
        }
    }
    PromptGrid::from_materialized(
        grid_opt.t_steps,
        grid_opt.tokens,
        grid_opt.dim,
        SharingMode::PStar,
        cells.clone(),
        cells,
    )
}
