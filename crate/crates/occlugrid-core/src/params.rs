//! Named parameter registry with deterministic initialization and flat
//! indexing for gradient checks and checkpoints.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::rng::ParamStream;
use crate::tensor::Tensor2;

/// How a freshly registered tensor is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `(-bound, bound)` from the parameter's own stream.
    Uniform { bound: f64 },
    Zero,
    One,
}

/// All learnable tensors of one model, ordered by registration.
///
/// Each parameter draws its values from a stream keyed by (seed, name),
/// so registering additional parameters never reshuffles existing ones.
pub struct ModelParams {
    pub seed: u64,
    entries: Vec<(String, Tensor2)>,
}

impl ModelParams {
    pub fn new(seed: u64) -> Self {
        ModelParams { seed, entries: Vec::new() }
    }

    /// Registers a parameter; names must be unique.
    pub fn register(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> usize {
        assert!(
            self.index_of(name).is_none(),
            "duplicate parameter name: {name}"
        );
        let mut t = Tensor2::zeros(rows, cols);
        match init {
            Init::Uniform { bound } => {
                let mut stream = ParamStream::new(self.seed, name);
                for v in t.data.iter_mut() {
                    *v = stream.next_symmetric(bound);
                }
            }
            Init::Zero => {}
            Init::One => {
                for v in t.data.iter_mut() {
                    *v = 1.0;
                }
            }
        }
        self.entries.push((name.to_string(), t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn tensor(&self, idx: usize) -> &Tensor2 {
        &self.entries[idx].1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor2 {
        &mut self.entries[idx].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor2> {
        self.index_of(name).map(|i| self.tensor(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total scalar count across all parameters.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.data.len()).sum()
    }

    /// Flat offset of each parameter in the concatenated vector.
    pub fn flat_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut off = 0;
        for (_, t) in &self.entries {
            out.push(off);
            off += t.data.len();
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for (_, t) in &self.entries {
            out.extend_from_slice(&t.data);
        }
        out
    }

    /// Location of one flat index as (parameter index, element index).
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let mut rem = flat;
        for (i, (_, t)) in self.entries.iter().enumerate() {
            if rem < t.data.len() {
                return (i, rem);
            }
            rem -= t.data.len();
        }
        panic!("flat index {flat} out of range");
    }

    pub fn get_flat(&self, flat: usize) -> f64 {
        let (p, e) = self.locate(flat);
        self.entries[p].1.data[e]
    }

    pub fn set_flat(&mut self, flat: usize, v: f64) {
        let (p, e) = self.locate(flat);
        self.entries[p].1.data[e] = v;
    }
}

/// Per-parameter gradient accumulator aligned with a [`ModelParams`].
pub struct GradStore {
    grads: Vec<Tensor2>,
}

impl GradStore {
    /// All-zero store shaped like `params`; untouched parameters keep
    /// exactly zero gradient.
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradStore {
            grads: (0..params.len())
                .map(|i| {
                    let t = params.tensor(i);
                    Tensor2::zeros(t.rows, t.cols)
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn grad(&self, idx: usize) -> &Tensor2 {
        &self.grads[idx]
    }

    pub fn grad_mut(&mut self, idx: usize) -> &mut Tensor2 {
        &mut self.grads[idx]
    }

    /// Element-wise `self += other`, used for batch reduction.
    pub fn add_assign(&mut self, other: &GradStore) {
        assert_eq!(self.grads.len(), other.grads.len(), "grad stores differ");
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut() {
            g.scale_assign(s);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.grads {
            out.extend_from_slice(&g.data);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_reproducible_per_seed() {
        let mut a = ModelParams::new(42);
        a.register("w", 3, 4, Init::Uniform { bound: 0.5 });
        a.register("b", 1, 4, Init::Zero);
        let mut b = ModelParams::new(42);
        b.register("w", 3, 4, Init::Uniform { bound: 0.5 });
        b.register("b", 1, 4, Init::Zero);
        assert_eq!(a.by_name("w").unwrap().data, b.by_name("w").unwrap().data);
        assert!(a.by_name("b").unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn registration_order_does_not_reshuffle_values() {
        let mut a = ModelParams::new(1);
        a.register("w", 2, 2, Init::Uniform { bound: 1.0 });
        let mut b = ModelParams::new(1);
        b.register("other", 5, 5, Init::Uniform { bound: 1.0 });
        b.register("w", 2, 2, Init::Uniform { bound: 1.0 });
        assert_eq!(a.by_name("w").unwrap().data, b.by_name("w").unwrap().data);
    }

    #[test]
    fn flat_indexing_round_trips() {
        let mut p = ModelParams::new(3);
        p.register("a", 2, 3, Init::Uniform { bound: 1.0 });
        p.register("b", 1, 5, Init::Uniform { bound: 1.0 });
        assert_eq!(p.total_len(), 11);
        let flat = p.flatten();
        for i in 0..flat.len() {
            assert_eq!(p.get_flat(i), flat[i]);
        }
        let mut q = ModelParams::new(3);
        q.register("a", 2, 3, Init::Zero);
        q.register("b", 1, 5, Init::Zero);
        for i in 0..flat.len() {
            q.set_flat(i, flat[i]);
        }
        assert_eq!(q.flatten(), flat);
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = ModelParams::new(1);
        a.register("w", 4, 4, Init::Uniform { bound: 1.0 });
        let mut b = ModelParams::new(2);
        b.register("w", 4, 4, Init::Uniform { bound: 1.0 });
        assert_ne!(a.by_name("w").unwrap().data, b.by_name("w").unwrap().data);
    }
}
