//! The vectorized occlusion-inference model.
//!
//! Pipeline per sample: each polyline's vectors are embedded by a shared
//! MLP plus within-polyline position embeddings, pooled to one feature
//! row by a learnable-token attention layer, mixed across polylines by a
//! post-norm transformer encoder, and decoded by occlusion queries (one
//! per grid patch) through stacked cross- and self-attention into a
//! sigmoid occupancy grid. Training uses a three-term loss: global
//! cross-entropy, cross-entropy restricted to occluded cells, and an
//! occupancy deficit pushing occupied ground-truth cells toward 1.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{GridSpec, MaskOgm, Ogm};
use crate::params::{Init, ModelParams};
use crate::scene::{Polyline, SceneSample, VectorClass};
use crate::tape::{AttnWires, NnError, Tape, ValId, BCE_CLAMP_HI, BCE_CLAMP_LO};
use crate::tensor::Tensor2;

/// Ego-frame meters are multiplied by this before entering the embed MLP,
/// keeping raw features O(1) so attention logits stay in a sane range at
/// init. Purely a preprocessing constant; it never changes afterwards.
pub const COORD_SCALE: f64 = 0.02;

/// Per-vector input width: 4 scaled coordinates, 3-way one-hot class,
/// 3 attribute slots.
pub const VECTOR_FEATURES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub d_model: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_blocks: usize,
    pub patch: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_polylines: usize,
    pub max_vectors: usize,
    pub include_trajectory: bool,
    pub include_context: bool,
    pub include_occlusion: bool,
    pub grid_height: usize,
    pub grid_width: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            d_model: 128,
            heads: 8,
            enc_layers: 6,
            dec_blocks: 3,
            patch: 10,
            alpha: 1.0,
            beta: 0.1,
            max_polylines: 64,
            max_vectors: 96,
            include_trajectory: true,
            include_context: true,
            include_occlusion: true,
            grid_height: 70,
            grid_width: 60,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.d_model == 0 {
            return Err(NnError::BadConfig { what: "d_model must be positive" });
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(NnError::HeadsDontDivide { d_model: self.d_model, heads: self.heads });
        }
        if self.patch == 0
            || self.grid_height % self.patch != 0
            || self.grid_width % self.patch != 0
        {
            return Err(NnError::BadConfig { what: "patch side must divide both grid dims" });
        }
        if self.enc_layers == 0 || self.dec_blocks == 0 {
            return Err(NnError::BadConfig { what: "need at least one encoder and decoder layer" });
        }
        if self.max_polylines == 0 || self.max_vectors == 0 {
            return Err(NnError::BadConfig { what: "capacities must be positive" });
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(NnError::BadConfig { what: "alpha must be finite and non-negative" });
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(NnError::BadConfig { what: "beta must be finite and non-negative" });
        }
        if !self.include_trajectory {
            return Err(NnError::BadConfig { what: "trajectory polylines cannot be excluded" });
        }
        Ok(())
    }

    pub fn patch_len(&self) -> usize {
        self.patch * self.patch
    }

    pub fn n_patches(&self) -> usize {
        (self.grid_height / self.patch) * (self.grid_width / self.patch)
    }

    pub fn ffn_hidden(&self) -> usize {
        4 * self.d_model
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid_height, self.grid_width, crate::grid::DEFAULT_RESOLUTION)
    }

    pub fn includes(&self, class: VectorClass) -> bool {
        match class {
            VectorClass::Trajectory => self.include_trajectory,
            VectorClass::SceneContext => self.include_context,
            VectorClass::Occlusion => self.include_occlusion,
        }
    }
}

/// Scalar nodes of the three-term loss on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub total: ValId,
    pub global: ValId,
    pub mask: ValId,
    pub occ: ValId,
}

/// Plain-number loss values, computed with arithmetic identical to the
/// tape version so the two agree bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub global: f64,
    pub mask: f64,
    pub occ: f64,
}

/// The model: configuration plus the parameter wiring. Parameters live in
/// a [`ModelParams`] registered by [`VectorNet::init_params`].
#[derive(Clone, Debug)]
pub struct VectorNet {
    pub cfg: NetConfig,
}

fn register_attn(params: &mut ModelParams, prefix: &str, d: usize) {
    let wb = 1.0 / crate::fmath::sqrt(d as f64);
    for w in ["wq", "wk", "wv", "wo"] {
        params.register(&format!("{prefix}.{w}"), d, d, Init::Uniform { bound: wb });
    }
    for b in ["bq", "bk", "bv", "bo"] {
        params.register(&format!("{prefix}.{b}"), 1, d, Init::Zero);
    }
}

fn register_ln(params: &mut ModelParams, prefix: &str, d: usize) {
    params.register(&format!("{prefix}.g"), 1, d, Init::One);
    params.register(&format!("{prefix}.b"), 1, d, Init::Zero);
}

fn register_linear(params: &mut ModelParams, prefix: &str, rows: usize, cols: usize) {
    let bound = 1.0 / crate::fmath::sqrt(rows as f64);
    params.register(&format!("{prefix}.w"), rows, cols, Init::Uniform { bound });
    params.register(&format!("{prefix}.b"), 1, cols, Init::Zero);
}

fn attn_wires(tape: &mut Tape<'_>, prefix: &str) -> AttnWires {
    AttnWires {
        wq: tape.param(&format!("{prefix}.wq")),
        bq: tape.param(&format!("{prefix}.bq")),
        wk: tape.param(&format!("{prefix}.wk")),
        bk: tape.param(&format!("{prefix}.bk")),
        wv: tape.param(&format!("{prefix}.wv")),
        bv: tape.param(&format!("{prefix}.bv")),
        wo: tape.param(&format!("{prefix}.wo")),
        bo: tape.param(&format!("{prefix}.bo")),
    }
}

impl VectorNet {
    pub fn new(cfg: NetConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        Ok(VectorNet { cfg })
    }

    /// Registers every parameter with its deterministic initializer.
    /// Registration order fixes the flat gradient layout, so it must not
    /// change between a checkpoint writer and reader.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let c = &self.cfg;
        let d = c.d_model;
        let table = |cols: usize| Init::Uniform { bound: 1.0 / crate::fmath::sqrt(cols as f64) };
        let mut p = ModelParams::new(seed);

        register_linear(&mut p, "embed.mlp1", VECTOR_FEATURES, d);
        register_linear(&mut p, "embed.mlp2", d, d);
        p.register("embed.pos", c.max_vectors, d, table(d));
        p.register("penc.token", 1, d, table(d));
        register_attn(&mut p, "penc.attn", d);
        register_ln(&mut p, "penc.ln", d);
        p.register("type_embed", 3, d, table(d));
        for i in 0..c.enc_layers {
            register_attn(&mut p, &format!("enc{i}.attn"), d);
            register_ln(&mut p, &format!("enc{i}.ln1"), d);
            register_linear(&mut p, &format!("enc{i}.ffn.fc1"), d, c.ffn_hidden());
            register_linear(&mut p, &format!("enc{i}.ffn.fc2"), c.ffn_hidden(), d);
            register_ln(&mut p, &format!("enc{i}.ln2"), d);
        }
        p.register("dec.query_pos", c.n_patches(), c.patch_len(), table(c.patch_len()));
        register_linear(&mut p, "dec.qproj", c.patch_len(), d);
        register_attn(&mut p, "dec.init.attn", d);
        register_ln(&mut p, "dec.init.ln", d);
        for i in 0..c.dec_blocks {
            register_attn(&mut p, &format!("dec{i}.cross"), d);
            register_ln(&mut p, &format!("dec{i}.ln1"), d);
            register_attn(&mut p, &format!("dec{i}.self"), d);
            register_ln(&mut p, &format!("dec{i}.ln2"), d);
        }
        register_linear(&mut p, "head", d, c.patch_len());
        p
    }

    /// Raw `[m, 10]` feature matrix for one polyline.
    fn vector_features(&self, poly: &Polyline) -> Result<Tensor2, NnError> {
        let m = poly.vectors.len();
        if m == 0 {
            return Err(NnError::EmptyPolyline);
        }
        if m > self.cfg.max_vectors {
            return Err(NnError::TooManyVectors { got: m, max: self.cfg.max_vectors });
        }
        let mut data = Vec::with_capacity(m * VECTOR_FEATURES);
        for v in &poly.vectors {
            data.extend_from_slice(&[
                v.start.x * COORD_SCALE,
                v.start.y * COORD_SCALE,
                v.end.x * COORD_SCALE,
                v.end.y * COORD_SCALE,
            ]);
            let mut one_hot = [0.0; 3];
            one_hot[v.class.code() as usize] = 1.0;
            data.extend_from_slice(&one_hot);
            data.extend_from_slice(&v.attrs);
        }
        Ok(Tensor2::from_vec(m, VECTOR_FEATURES, data))
    }

    /// Embeds one polyline's vectors: 2-layer MLP on the raw features,
    /// then position embeddings added after the MLP.
    pub fn embed_vectors(&self, tape: &mut Tape<'_>, poly: &Polyline) -> Result<ValId, NnError> {
        let raw = self.vector_features(poly)?;
        let m = raw.rows;
        let x = tape.constant(raw);
        let w1 = tape.param("embed.mlp1.w");
        let b1 = tape.param("embed.mlp1.b");
        let w2 = tape.param("embed.mlp2.w");
        let b2 = tape.param("embed.mlp2.b");
        let h = tape.linear(x, w1, b1)?;
        let h = tape.relu(h);
        let h = tape.linear(h, w2, b2)?;
        let pos_table = tape.param("embed.pos");
        let pos = tape.gather_rows(pos_table, (0..m).collect());
        tape.add(h, pos)
    }

    /// Pools embedded vectors to a single feature row: a learnable token
    /// is stacked on top, one post-norm attention layer runs over the
    /// stack, and the token's output row is the polyline feature.
    pub fn encode_polyline(&self, tape: &mut Tape<'_>, embedded: ValId) -> Result<ValId, NnError> {
        let token = tape.param("penc.token");
        let x = tape.concat_rows(&[token, embedded])?;
        let wires = attn_wires(tape, "penc.attn");
        let a = tape.self_attention(x, &wires, self.cfg.heads, None)?;
        let res = tape.add(x, a)?;
        let g = tape.param("penc.ln.g");
        let b = tape.param("penc.ln.b");
        let ln = tape.layer_norm(res, g, b)?;
        Ok(tape.gather_rows(ln, vec![0]))
    }

    /// Mixes polyline features across the scene: learned type embeddings
    /// added per row, then post-norm MSA/FFN layers. `key_valid` marks
    /// rows that real polylines occupy; padded rows never influence them.
    pub fn interaction_encoder(
        &self,
        tape: &mut Tape<'_>,
        feats: ValId,
        classes: &[VectorClass],
        key_valid: Option<&[bool]>,
    ) -> Result<ValId, NnError> {
        let n = tape.value(feats).rows;
        if classes.len() != n {
            return Err(NnError::ShapeMismatch {
                op: "interaction_encoder classes",
                lhs: (n, 1),
                rhs: (classes.len(), 1),
            });
        }
        let type_table = tape.param("type_embed");
        let type_rows =
            tape.gather_rows(type_table, classes.iter().map(|c| c.code() as usize).collect());
        let mut x = tape.add(feats, type_rows)?;
        for i in 0..self.cfg.enc_layers {
            let wires = attn_wires(tape, &format!("enc{i}.attn"));
            let a = tape.self_attention(x, &wires, self.cfg.heads, key_valid.map(<[_]>::to_vec))?;
            let res = tape.add(x, a)?;
            let g = tape.param(&format!("enc{i}.ln1.g"));
            let b = tape.param(&format!("enc{i}.ln1.b"));
            x = tape.layer_norm(res, g, b)?;

            let w1 = tape.param(&format!("enc{i}.ffn.fc1.w"));
            let b1 = tape.param(&format!("enc{i}.ffn.fc1.b"));
            let w2 = tape.param(&format!("enc{i}.ffn.fc2.w"));
            let b2 = tape.param(&format!("enc{i}.ffn.fc2.b"));
            let h = tape.linear(x, w1, b1)?;
            let h = tape.relu(h);
            let f = tape.linear(h, w2, b2)?;
            let res = tape.add(x, f)?;
            let g2 = tape.param(&format!("enc{i}.ln2.g"));
            let bb2 = tape.param(&format!("enc{i}.ln2.b"));
            x = tape.layer_norm(res, g2, bb2)?;
        }
        Ok(x)
    }

    /// Occlusion-query decoder. Queries start as the learned positional
    /// table over patches (the query content is the all-zero grid),
    /// projected to model width, then one initial self-attention block and
    /// `dec_blocks` rounds of cross-attention into the encoded polylines
    /// followed by self-attention, every sub-block post-norm residual.
    /// Output is the flat `[1, H·W]` probability row.
    pub fn decode(
        &self,
        tape: &mut Tape<'_>,
        encoded: ValId,
        key_valid: Option<&[bool]>,
    ) -> Result<ValId, NnError> {
        let qp = tape.param("dec.query_pos");
        let pw = tape.param("dec.qproj.w");
        let pb = tape.param("dec.qproj.b");
        let mut q = tape.linear(qp, pw, pb)?;

        let wires = attn_wires(tape, "dec.init.attn");
        let a = tape.self_attention(q, &wires, self.cfg.heads, None)?;
        let res = tape.add(q, a)?;
        let g = tape.param("dec.init.ln.g");
        let b = tape.param("dec.init.ln.b");
        q = tape.layer_norm(res, g, b)?;

        for i in 0..self.cfg.dec_blocks {
            let cross = attn_wires(tape, &format!("dec{i}.cross"));
            let c = tape.attention(
                q,
                encoded,
                &cross,
                self.cfg.heads,
                key_valid.map(<[_]>::to_vec),
            )?;
            let res = tape.add(q, c)?;
            let g = tape.param(&format!("dec{i}.ln1.g"));
            let b = tape.param(&format!("dec{i}.ln1.b"));
            q = tape.layer_norm(res, g, b)?;

            let selfw = attn_wires(tape, &format!("dec{i}.self"));
            let s = tape.self_attention(q, &selfw, self.cfg.heads, None)?;
            let res = tape.add(q, s)?;
            let g = tape.param(&format!("dec{i}.ln2.g"));
            let b = tape.param(&format!("dec{i}.ln2.b"));
            q = tape.layer_norm(res, g, b)?;
        }

        let hw = tape.param("head.w");
        let hb = tape.param("head.b");
        let z = tape.linear(q, hw, hb)?;
        let p = tape.sigmoid(z);
        let map = self.unpatch_map();
        Ok(tape.permute(p, 1, self.cfg.grid_height * self.cfg.grid_width, map))
    }

    /// For each row-major grid cell, the flat index of its value in the
    /// `[N_p, p²]` patch-major layout.
    fn unpatch_map(&self) -> Vec<usize> {
        let (hh, ww, p) = (self.cfg.grid_height, self.cfg.grid_width, self.cfg.patch);
        let patches_per_row = ww / p;
        let mut map = Vec::with_capacity(hh * ww);
        for r in 0..hh {
            for c in 0..ww {
                let patch = (r / p) * patches_per_row + c / p;
                let within = (r % p) * p + c % p;
                map.push(patch * self.cfg.patch_len() + within);
            }
        }
        map
    }

    /// Polylines the configuration admits, in sample order.
    pub fn admitted<'s>(&self, sample: &'s SceneSample) -> Vec<&'s Polyline> {
        sample.polylines.iter().filter(|p| self.cfg.includes(p.class)).collect()
    }

    /// Full forward pass on a tape; returns the flat probability node.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<'_>,
        sample: &SceneSample,
    ) -> Result<ValId, NnError> {
        if (sample.mask.height, sample.mask.width)
            != (self.cfg.grid_height, self.cfg.grid_width)
        {
            return Err(NnError::ShapeMismatch {
                op: "forward grid",
                lhs: (self.cfg.grid_height, self.cfg.grid_width),
                rhs: (sample.mask.height, sample.mask.width),
            });
        }
        let polys = self.admitted(sample);
        if polys.is_empty() {
            return Err(NnError::NoPolylines);
        }
        if polys.len() > self.cfg.max_polylines {
            return Err(NnError::TooManyPolylines {
                got: polys.len(),
                max: self.cfg.max_polylines,
            });
        }
        let mut feats = Vec::with_capacity(polys.len());
        let mut classes = Vec::with_capacity(polys.len());
        for poly in &polys {
            let emb = self.embed_vectors(tape, poly)?;
            feats.push(self.encode_polyline(tape, emb)?);
            classes.push(poly.class);
        }
        let stacked = tape.concat_rows(&feats)?;
        let encoded = self.interaction_encoder(tape, stacked, &classes, None)?;
        self.decode(tape, encoded, None)
    }

    /// Forward pass to a probability grid, no gradients kept.
    pub fn forward(
        &self,
        params: &ModelParams,
        sample: &SceneSample,
    ) -> Result<Ogm, NnError> {
        let mut tape = Tape::new(params);
        let pred = self.forward_tape(&mut tape, sample)?;
        Ok(self.node_to_ogm(&tape, pred))
    }

    /// Copies a flat prediction node into an `Ogm`.
    pub fn node_to_ogm(&self, tape: &Tape<'_>, pred: ValId) -> Ogm {
        let data = tape.value(pred).data.clone();
        Ogm::new(self.cfg.grid_spec(), data).expect("sigmoid output is in range")
    }

    /// Three-term loss with this model's `alpha` and `beta`; see
    /// [`loss_on_tape`].
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape<'_>,
        pred: ValId,
        gt: &Ogm,
        mask: &MaskOgm,
    ) -> Result<LossNodes, NnError> {
        loss_on_tape(tape, pred, gt, mask, self.cfg.alpha, self.cfg.beta)
    }

    /// Reads the four loss scalars off a tape.
    pub fn loss_scalars(&self, tape: &Tape<'_>, nodes: &LossNodes) -> LossValues {
        LossValues {
            total: tape.scalar(nodes.total),
            global: tape.scalar(nodes.global),
            mask: tape.scalar(nodes.mask),
            occ: tape.scalar(nodes.occ),
        }
    }
}

/// Three-term loss over a prediction node: global cross-entropy over
/// all cells, cross-entropy over occluded cells, and the occupancy
/// deficit over occupied ground-truth cells, combined as
/// `(global + α·mask) + β·occ` in that exact order. Shared by the vector
/// model and the grid baseline.
pub fn loss_on_tape(
    tape: &mut Tape<'_>,
    pred: ValId,
    gt: &Ogm,
    mask: &MaskOgm,
    alpha: f64,
    beta: f64,
) -> Result<LossNodes, NnError> {
    let n = tape.value(pred).len();
    if gt.cells.len() != n || mask.cells.len() != n {
        return Err(NnError::ShapeMismatch {
            op: "loss",
            lhs: (1, n),
            rhs: (gt.height, gt.width),
        });
    }
    let target = gt.cells.clone();
    let all: Vec<usize> = (0..n).collect();
    let masked: Vec<usize> = (0..n).filter(|&i| mask.cells[i] == 1).collect();
    let occupied: Vec<usize> = (0..n).filter(|&i| gt.cells[i] == 1.0).collect();
    let global = tape.bce_mean(pred, target.clone(), all);
    let mask_loss = tape.bce_mean(pred, target, masked);
    let occ = tape.occupancy_deficit(pred, occupied);
    let mask_scaled = tape.scale(mask_loss, alpha);
    let partial = tape.add(global, mask_scaled)?;
    let occ_scaled = tape.scale(occ, beta);
    let total = tape.add(partial, occ_scaled)?;
    Ok(LossNodes { total, global, mask: mask_loss, occ })
}

/// Tape-free loss computation, arithmetic-identical to
/// [`loss_on_tape`] (same orders, same clamping), so the two
/// agree exactly.
pub fn loss_values(
    pred: &Ogm,
    gt: &Ogm,
    mask: &MaskOgm,
    alpha: f64,
    beta: f64,
) -> Result<LossValues, NnError> {
    let n = pred.cells.len();
    if gt.cells.len() != n || mask.cells.len() != n {
        return Err(NnError::ShapeMismatch {
            op: "loss",
            lhs: (pred.height, pred.width),
            rhs: (gt.height, gt.width),
        });
    }
    let bce = |support: &mut dyn Iterator<Item = usize>| -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for i in support {
            let ph = pred.cells[i].clamp(BCE_CLAMP_LO, BCE_CLAMP_HI);
            let t = gt.cells[i];
            total += -(t * crate::fmath::ln(ph) + (1.0 - t) * crate::fmath::ln(1.0 - ph));
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    };
    let global = bce(&mut (0..n));
    let mask_loss = bce(&mut (0..n).filter(|&i| mask.cells[i] == 1));
    let occ: f64 =
        (0..n).filter(|&i| gt.cells[i] == 1.0).map(|i| 1.0 - pred.cells[i]).sum();
    let total = (global + alpha * mask_loss) + beta * occ;
    Ok(LossValues { total, global, mask: mask_loss, occ })
}

/// Compact loss line for logs.
pub fn format_losses(l: &LossValues) -> String {
    format!(
        "total {:.6} global {:.6} mask {:.6} occ {:.6}",
        l.total, l.global, l.mask, l.occ
    )
}
