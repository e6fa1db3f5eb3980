//! Image-based comparison model: the scene is rasterized into an
//! annotated grid (history trail, current occupancy, occlusion marker)
//! and a patch transformer predicts the same occupancy target as the
//! vectorized model.

use alloc::format;
use alloc::vec::Vec;

use crate::grid::{GridSpec, Ogm};
use crate::net::NetConfig;
use crate::params::{Init, ModelParams};
use crate::scene::{for_footprint_cells, SceneSample};
use crate::tape::{AttnWires, NnError, Tape, ValId};
use crate::tensor::Tensor2;

/// Occlusion marker value in the annotated grid.
pub const ANNOTATION_OCCLUDED: f64 = 2.0;

/// Rasterized model input. Cell alphabet: 0 (free), 0.1..0.9 (occupied
/// k·100 ms ago, larger = more recent), 1 (occupied now by a visible
/// vehicle), 2 (occluded).
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedOgm {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<f64>,
}

impl AnnotatedOgm {
    pub fn zeros(spec: GridSpec) -> Self {
        AnnotatedOgm {
            height: spec.height,
            width: spec.width,
            cells: alloc::vec![0.0; spec.cell_count()],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    /// True when every cell is drawn from the 12-symbol alphabet.
    pub fn is_well_formed(&self) -> bool {
        self.cells.iter().all(|&v| {
            if v == ANNOTATION_OCCLUDED {
                return true;
            }
            let tenth = v * 10.0;
            (0.0..=10.0).contains(&tenth) && tenth == crate::fmath::floor(tenth)
        })
    }
}

/// Rasterizes a sample for the image model. History poses of visible
/// vehicles stamp 0.1..0.9 oldest to newest (latest overwrites), current
/// visible footprints stamp 1, and occluded cells stamp 2 last, so the
/// occlusion marker wins over everything.
pub fn annotate(sample: &SceneSample) -> AnnotatedOgm {
    let spec = sample.ground_truth.spec();
    let mut out = AnnotatedOgm::zeros(spec);
    let frame = &sample.frame;
    for k in (1..=9u32).rev() {
        let value = f64::from(10 - k) / 10.0;
        for rec in &sample.vehicles {
            if !rec.visible {
                continue;
            }
            if let Some(fp) = rec.footprint_at(-(k as i32)) {
                for_footprint_cells(&fp, frame, spec, |r, c| {
                    out.cells[r * spec.width + c] = value;
                });
            }
        }
    }
    for rec in &sample.vehicles {
        if !rec.visible {
            continue;
        }
        if let Some(fp) = rec.footprint_at(0) {
            for_footprint_cells(&fp, frame, spec, |r, c| {
                out.cells[r * spec.width + c] = 1.0;
            });
        }
    }
    for (i, &m) in sample.mask.cells.iter().enumerate() {
        if m == 1 {
            out.cells[i] = ANNOTATION_OCCLUDED;
        }
    }
    out
}

/// The patch-transformer comparison model. Shares `NetConfig` with the
/// vectorized model for width, depth, patch size, and loss weights; the
/// polyline capacities and include flags are simply unused here.
#[derive(Clone, Debug)]
pub struct BaselineNet {
    pub cfg: NetConfig,
}

impl BaselineNet {
    pub fn new(cfg: NetConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        Ok(BaselineNet { cfg })
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        let c = &self.cfg;
        let d = c.d_model;
        let table = |cols: usize| Init::Uniform { bound: 1.0 / crate::fmath::sqrt(cols as f64) };
        let mut p = ModelParams::new(seed);
        register_linear(&mut p, "bpatch", c.patch_len(), d);
        p.register("bpos", c.n_patches(), d, table(d));
        p.register("bcls", 1, d, table(d));
        for i in 0..c.enc_layers {
            register_block(&mut p, &format!("benc{i}"), d, c.ffn_hidden());
        }
        for i in 0..c.dec_blocks {
            register_block(&mut p, &format!("bdec{i}"), d, c.ffn_hidden());
        }
        register_linear(&mut p, "bhead", d, c.patch_len());
        p
    }

    /// Forward pass on a tape; returns the flat `[1, H·W]` probability row.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<'_>,
        input: &AnnotatedOgm,
    ) -> Result<ValId, NnError> {
        let c = &self.cfg;
        if (input.height, input.width) != (c.grid_height, c.grid_width) {
            return Err(NnError::ShapeMismatch {
                op: "baseline grid",
                lhs: (c.grid_height, c.grid_width),
                rhs: (input.height, input.width),
            });
        }
        let patches = self.patch_rows(input);
        let x = tape.constant(patches);
        let w = tape.param("bpatch.w");
        let b = tape.param("bpatch.b");
        let emb = tape.linear(x, w, b)?;
        let pos = tape.param("bpos");
        let mut tokens = tape.add(emb, pos)?;
        for i in 0..c.enc_layers {
            tokens = block(tape, &format!("benc{i}"), tokens, c.heads)?;
        }

        // Classification token joins for the decoder stack and is dropped
        // before the head; patch rows sit at 1..=n_patches.
        let cls = tape.param("bcls");
        let mut seq = tape.concat_rows(&[cls, tokens])?;
        for i in 0..c.dec_blocks {
            seq = block(tape, &format!("bdec{i}"), seq, c.heads)?;
        }
        let patch_rows = tape.gather_rows(seq, (1..=c.n_patches()).collect());

        let hw = tape.param("bhead.w");
        let hb = tape.param("bhead.b");
        let z = tape.linear(patch_rows, hw, hb)?;
        let p = tape.sigmoid(z);
        let map = unpatch_map(c);
        Ok(tape.permute(p, 1, c.grid_height * c.grid_width, map))
    }

    pub fn forward(
        &self,
        params: &ModelParams,
        input: &AnnotatedOgm,
    ) -> Result<Ogm, NnError> {
        let mut tape = Tape::new(params);
        let pred = self.forward_tape(&mut tape, input)?;
        let data = tape.value(pred).data.clone();
        Ok(Ogm::new(self.cfg.grid_spec(), data).expect("sigmoid output is in range"))
    }

    /// `[N_p, p²]` patch-major view of the annotated grid.
    fn patch_rows(&self, input: &AnnotatedOgm) -> Tensor2 {
        let c = &self.cfg;
        let p = c.patch;
        let per_row = c.grid_width / p;
        let mut data = Vec::with_capacity(c.n_patches() * c.patch_len());
        for patch in 0..c.n_patches() {
            let r0 = (patch / per_row) * p;
            let c0 = (patch % per_row) * p;
            for dr in 0..p {
                for dc in 0..p {
                    data.push(input.cells[(r0 + dr) * c.grid_width + (c0 + dc)]);
                }
            }
        }
        Tensor2::from_vec(c.n_patches(), c.patch_len(), data)
    }
}

fn register_linear(params: &mut ModelParams, prefix: &str, rows: usize, cols: usize) {
    let bound = 1.0 / crate::fmath::sqrt(rows as f64);
    params.register(&format!("{prefix}.w"), rows, cols, Init::Uniform { bound });
    params.register(&format!("{prefix}.b"), 1, cols, Init::Zero);
}

fn register_block(params: &mut ModelParams, prefix: &str, d: usize, hidden: usize) {
    let wb = 1.0 / crate::fmath::sqrt(d as f64);
    for w in ["wq", "wk", "wv", "wo"] {
        params.register(&format!("{prefix}.attn.{w}"), d, d, Init::Uniform { bound: wb });
    }
    for b in ["bq", "bk", "bv", "bo"] {
        params.register(&format!("{prefix}.attn.{b}"), 1, d, Init::Zero);
    }
    params.register(&format!("{prefix}.ln1.g"), 1, d, Init::One);
    params.register(&format!("{prefix}.ln1.b"), 1, d, Init::Zero);
    register_linear(params, &format!("{prefix}.ffn.fc1"), d, hidden);
    register_linear(params, &format!("{prefix}.ffn.fc2"), hidden, d);
    params.register(&format!("{prefix}.ln2.g"), 1, d, Init::One);
    params.register(&format!("{prefix}.ln2.b"), 1, d, Init::Zero);
}

/// One post-norm transformer block: MSA then FFN, each with residual and
/// layer norm.
fn block(tape: &mut Tape<'_>, prefix: &str, x: ValId, heads: usize) -> Result<ValId, NnError> {
    let wires = AttnWires {
        wq: tape.param(&format!("{prefix}.attn.wq")),
        bq: tape.param(&format!("{prefix}.attn.bq")),
        wk: tape.param(&format!("{prefix}.attn.wk")),
        bk: tape.param(&format!("{prefix}.attn.bk")),
        wv: tape.param(&format!("{prefix}.attn.wv")),
        bv: tape.param(&format!("{prefix}.attn.bv")),
        wo: tape.param(&format!("{prefix}.attn.wo")),
        bo: tape.param(&format!("{prefix}.attn.bo")),
    };
    let a = tape.self_attention(x, &wires, heads, None)?;
    let res = tape.add(x, a)?;
    let g = tape.param(&format!("{prefix}.ln1.g"));
    let b = tape.param(&format!("{prefix}.ln1.b"));
    let x = tape.layer_norm(res, g, b)?;

    let w1 = tape.param(&format!("{prefix}.ffn.fc1.w"));
    let b1 = tape.param(&format!("{prefix}.ffn.fc1.b"));
    let w2 = tape.param(&format!("{prefix}.ffn.fc2.w"));
    let b2 = tape.param(&format!("{prefix}.ffn.fc2.b"));
    let h = tape.linear(x, w1, b1)?;
    let h = tape.relu(h);
    let f = tape.linear(h, w2, b2)?;
    let res = tape.add(x, f)?;
    let g2 = tape.param(&format!("{prefix}.ln2.g"));
    let bb = tape.param(&format!("{prefix}.ln2.b"));
    tape.layer_norm(res, g2, bb)
}

/// For each row-major grid cell, its flat index in patch-major layout.
fn unpatch_map(c: &NetConfig) -> Vec<usize> {
    let p = c.patch;
    let per_row = c.grid_width / p;
    let mut map = Vec::with_capacity(c.grid_height * c.grid_width);
    for r in 0..c.grid_height {
        for col in 0..c.grid_width {
            let patch = (r / p) * per_row + col / p;
            let within = (r % p) * p + col % p;
            map.push(patch * c.patch_len() + within);
        }
    }
    map
}
