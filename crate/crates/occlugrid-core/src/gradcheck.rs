//! Central-difference gradient verification.
//!
//! Used by tests to confirm that tape backward passes match numeric
//! derivatives. Kept in the library (not test-only) so downstream crates
//! can run the same check against the full model.

use alloc::vec::Vec;

use crate::params::ModelParams;

/// Numeric gradient of `f` at the current parameter point, one central
/// difference per flat coordinate, in [`ModelParams::flatten`] order.
/// Parameters are restored exactly afterwards.
pub fn central_diff(
    params: &mut ModelParams,
    eps: f64,
    mut f: impl FnMut(&ModelParams) -> f64,
) -> Vec<f64> {
    let n = params.total_len();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let orig = params.get_flat(i);
        params.set_flat(i, orig + eps);
        let fp = f(params);
        params.set_flat(i, orig - eps);
        let fm = f(params);
        params.set_flat(i, orig);
        grad.push((fp - fm) / (2.0 * eps));
    }
    grad
}

/// Worst relative disagreement between two gradient vectors.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Per-coordinate relative error `|a - n| / max(floor, |a|, |n|)`,
/// reduced to the worst offender. The floor keeps near-zero pairs from
/// dominating with noise.
pub fn compare(analytic: &[f64], numeric: &[f64], floor: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut rep = GradCheckReport { max_rel_err: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for (i, (&a, &n)) in analytic.iter().zip(numeric.iter()).enumerate() {
        let denom = floor.max(a.abs()).max(n.abs());
        let rel = (a - n).abs() / denom;
        if rel > rep.max_rel_err {
            rep = GradCheckReport { max_rel_err: rel, worst_index: i, analytic: a, numeric: n };
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut p = ModelParams::new(5);
        p.register("x", 1, 3, Init::Uniform { bound: 1.0 });
        // f = sum of squares, gradient 2x; central differences are exact
        // for quadratics up to rounding.
        let g = central_diff(&mut p, 1e-5, |p| {
            p.tensor(0).data.iter().map(|v| v * v).sum()
        });
        for (gi, xi) in g.iter().zip(p.tensor(0).data.iter()) {
            assert!((gi - 2.0 * xi).abs() < 1e-9, "{gi} vs {}", 2.0 * xi);
        }
    }

    #[test]
    fn parameters_restored_after_probe() {
        let mut p = ModelParams::new(6);
        p.register("x", 2, 2, Init::Uniform { bound: 1.0 });
        let before = p.flatten();
        let _ = central_diff(&mut p, 1e-4, |p| p.get_flat(0));
        assert_eq!(p.flatten(), before);
    }

    #[test]
    fn compare_finds_the_worst_coordinate() {
        let rep = compare(&[1.0, 2.0, 3.0], &[1.0, 2.5, 3.0], 1e-8);
        assert_eq!(rep.worst_index, 1);
        assert!((rep.max_rel_err - 0.2).abs() < 1e-12);
    }
}
