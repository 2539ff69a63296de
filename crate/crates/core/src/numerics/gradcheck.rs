//! Central-difference validation of analytic gradients.

use crate::error::{Error, Result};

/// Compare an analytic gradient against central differences of `f`.
///
/// Returns the max over parameters of
/// |analytic − central-difference| / max(1, |central-difference|).
/// `f` must be deterministic; `eps` must lie in [1e-6, 1e-4].
pub fn finite_diff_check<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::Validation(format!(
            "finite-difference step {eps} outside [1e-6, 1e-4]"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::Validation(format!(
            "{} params but {} analytic gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + eps;
        let plus = f(&probe)?;
        probe[i] = params[i] - eps;
        let minus = f(&probe)?;
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at probe of parameter {i}: f+ = {plus}, f- = {minus}"
            )));
        }
        let central = (plus - minus) / (2.0 * eps);
        let rel = (analytic[i] - central).abs() / central.abs().max(1.0);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::Matrix;
    use crate::numerics::tape::{NodeId, Tape};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn quadratic_matches_analytic_slope() {
        let f = |p: &[f64]| Ok(p[0] * p[0]);
        let rel = finite_diff_check(f, &[3.0], &[6.0], 1e-5).unwrap();
        assert!(rel < 1e-9, "rel = {rel}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let f = |p: &[f64]| Ok(p[0] * p[0]);
        let rel = finite_diff_check(f, &[3.0], &[6.1], 1e-5).unwrap();
        assert!(rel > 1e-2, "rel = {rel}");
    }

    #[test]
    fn eps_outside_range_is_rejected() {
        let f = |p: &[f64]| Ok(p[0]);
        assert!(finite_diff_check(f, &[1.0], &[1.0], 1e-3).is_err());
        assert!(finite_diff_check(f, &[1.0], &[1.0], 1e-7).is_err());
    }

    #[test]
    fn non_finite_probe_is_an_error() {
        // sqrt probes below zero at w = 0.
        let f = |p: &[f64]| Ok(p[0].sqrt());
        let err = finite_diff_check(f, &[0.0], &[0.0], 1e-5).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    // ── Per-op checks ───────────────────────────────────────────────────
    //
    // Each builder receives leaves cut from a flat parameter vector and
    // returns a scalar loss node; the same builder serves both the analytic
    // backward pass and the central-difference probes.

    fn uniform(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn run_op_check<B>(shapes: &[(usize, usize)], seed: u64, build: B) -> f64
    where
        B: Fn(&mut Tape, &[NodeId]) -> NodeId,
    {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let total: usize = shapes.iter().map(|&(r, c)| r * c).sum();
        let params = uniform(&mut rng, total);

        let assemble = |flat: &[f64]| {
            let mut tape = Tape::new();
            let mut leaves = Vec::new();
            let mut at = 0;
            for &(r, c) in shapes {
                let m = Matrix::from_vec(r, c, flat[at..at + r * c].to_vec());
                leaves.push(tape.leaf(m));
                at += r * c;
            }
            let loss = build(&mut tape, &leaves);
            (tape, leaves, loss)
        };

        let (mut tape, leaves, loss) = assemble(&params);
        tape.backward(loss).unwrap();
        let mut analytic = Vec::with_capacity(total);
        for (idx, &leaf) in leaves.iter().enumerate() {
            let (r, c) = shapes[idx];
            match tape.grad(leaf) {
                Some(g) => analytic.extend_from_slice(g.data()),
                None => analytic.extend(std::iter::repeat(0.0).take(r * c)),
            }
        }

        let f = |flat: &[f64]| {
            let (tape, _, loss) = assemble(flat);
            Ok(tape.value(loss).get(0, 0))
        };
        finite_diff_check(f, &params, &analytic, 1e-5).unwrap()
    }

    /// Weighted scalar readout so asymmetric gradient errors cannot cancel.
    fn weighted_sum(tape: &mut Tape, x: NodeId, seed: u64) -> NodeId {
        let (r, c) = {
            let v = tape.value(x);
            (v.rows(), v.cols())
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
        let w = tape.leaf(Matrix::from_vec(r, c, uniform(&mut rng, r * c)));
        let prod = tape.mul(x, w).unwrap();
        tape.sum_all(prod)
    }

    #[test]
    fn op_matmul() {
        let rel = run_op_check(&[(2, 3), (3, 4)], 11, |t, l| {
            let c = t.matmul(l[0], l[1]).unwrap();
            weighted_sum(t, c, 11)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_matmul_transpose_b() {
        let rel = run_op_check(&[(2, 3), (4, 3)], 12, |t, l| {
            let c = t.matmul_transpose_b(l[0], l[1]).unwrap();
            weighted_sum(t, c, 12)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_add_mul_scale() {
        let rel = run_op_check(&[(3, 3), (3, 3)], 13, |t, l| {
            let s = t.add(l[0], l[1]).unwrap();
            let p = t.mul(s, l[0]).unwrap();
            let sc = t.scale(p, -0.7);
            weighted_sum(t, sc, 13)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_silu() {
        let rel = run_op_check(&[(2, 5)], 14, |t, l| {
            let y = t.silu(l[0]);
            weighted_sum(t, y, 14)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_rms_norm() {
        let rel = run_op_check(&[(3, 4), (1, 4)], 15, |t, l| {
            let y = t.rms_norm(l[0], l[1]).unwrap();
            weighted_sum(t, y, 15)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_rope() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let angles = Matrix::from_vec(3, 2, uniform(&mut rng, 6));
        let rel = run_op_check(&[(3, 4)], 16, move |t, l| {
            let y = t.rope(l[0], &angles).unwrap();
            weighted_sum(t, y, 16)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_softmax_masked() {
        let neg = f64::NEG_INFINITY;
        let mask = Matrix::from_rows(&[
            vec![0.0, neg, 0.0, 0.0],
            vec![0.0, 0.0, neg, neg],
            vec![0.0, 0.0, 0.0, 0.0],
        ]);
        let rel = run_op_check(&[(3, 4)], 17, move |t, l| {
            let y = t.softmax_masked(l[0], &mask).unwrap();
            weighted_sum(t, y, 17)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_concat_and_slice() {
        let rel = run_op_check(&[(2, 3), (1, 3), (3, 2)], 18, |t, l| {
            let rows = t.concat_rows(&[l[0], l[1]]).unwrap();
            let wide = t.concat_cols(&[rows, l[2]]).unwrap();
            let cut_r = t.slice_rows(wide, 1, 2).unwrap();
            let cut_c = t.slice_cols(cut_r, 1, 3).unwrap();
            weighted_sum(t, cut_c, 18)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_embed_lookup() {
        // Repeated id 1 exercises the scatter-add.
        let rel = run_op_check(&[(4, 3)], 19, |t, l| {
            let rows = t.embed_lookup(l[0], &[1, 3, 1, 0]).unwrap();
            weighted_sum(t, rows, 19)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_cross_entropy() {
        let rel = run_op_check(&[(4, 5)], 20, |t, l| {
            t.cross_entropy(l[0], &[2, 0, 4, 1], &[true, false, true, true]).unwrap()
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }

    #[test]
    fn op_attention_shaped_composite() {
        // Scaled dot-product attention over 4 tokens with a causal mask.
        let neg = f64::NEG_INFINITY;
        let mask = Matrix::from_fn(4, 4, |i, j| if j <= i { 0.0 } else { neg });
        let rel = run_op_check(&[(4, 4), (4, 4), (4, 4)], 21, move |t, l| {
            let scores = t.matmul_transpose_b(l[0], l[1]).unwrap();
            let scaled = t.scale(scores, 0.5);
            let probs = t.softmax_masked(scaled, &mask).unwrap();
            let out = t.matmul(probs, l[2]).unwrap();
            weighted_sum(t, out, 21)
        });
        assert!(rel < 1e-4, "rel = {rel}");
    }
}
