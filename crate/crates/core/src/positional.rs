//! Rotary positional embeddings and the position-ID schemes applied to them.
//!
//! Three ID schemes feed the same rotation kernel. `Distinct` numbers every
//! token in sequence order. `Balanced` reuses the spatial range for temporal
//! tokens so the two visual streams end at the same position, keeping either
//! stream equally far from the text that follows. `Harmonic` interleaves the
//! two per feature pair — balanced angles on even pairs, distinct on odd —
//! so each head sees both geometries at once.

use crate::error::{Error, Result};
use crate::numerics::tape::rotate_pairs;
use crate::numerics::Matrix;

/// Which ID track drives each rotation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RopeScheme {
    Distinct,
    Balanced,
    Harmonic,
}

impl RopeScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            RopeScheme::Distinct => "distinct",
            RopeScheme::Balanced => "balanced",
            RopeScheme::Harmonic => "harmonic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "distinct" => Ok(RopeScheme::Distinct),
            "balanced" => Ok(RopeScheme::Balanced),
            "harmonic" => Ok(RopeScheme::Harmonic),
            other => Err(Error::Config(format!("unknown rope scheme '{other}'"))),
        }
    }
}

/// Rotation geometry: the per-head feature width and the angle base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub base: f64,
}

impl RopeConfig {
    pub const DEFAULT_BASE: f64 = 10000.0;

    pub fn new(head_dim: usize, base: f64) -> Result<Self> {
        if head_dim < 2 || head_dim % 2 != 0 {
            return Err(Error::Validation(format!(
                "head_dim must be even and >= 2, got {head_dim}"
            )));
        }
        if !(base > 1.0) {
            return Err(Error::Validation(format!("rope base must be > 1, got {base}")));
        }
        Ok(RopeConfig { head_dim, base })
    }

    pub fn with_default_base(head_dim: usize) -> Result<Self> {
        Self::new(head_dim, Self::DEFAULT_BASE)
    }

    pub fn pairs(&self) -> usize {
        self.head_dim / 2
    }
}

/// Per-pair rotation rate: base^(-2k / head_dim).
pub fn theta(k: usize, cfg: &RopeConfig) -> Result<f64> {
    if k >= cfg.pairs() {
        return Err(Error::Validation(format!(
            "pair index {k} out of range for head_dim {}",
            cfg.head_dim
        )));
    }
    Ok(cfg.base.powf(-2.0 * k as f64 / cfg.head_dim as f64))
}

/// Rotate one token: pair k turns by angle p·θ_k.
pub fn rope_rotate(x: &[f64], p: usize, cfg: &RopeConfig) -> Result<Vec<f64>> {
    if x.len() != cfg.head_dim {
        return Err(Error::Validation(format!(
            "rope_rotate: vector of length {} does not match head_dim {}",
            x.len(),
            cfg.head_dim
        )));
    }
    let mut out = vec![0.0; x.len()];
    for k in 0..cfg.pairs() {
        let angle = p as f64 * theta(k, cfg)?;
        let (sin, cos) = angle.sin_cos();
        let u = x[2 * k];
        let v = x[2 * k + 1];
        out[2 * k] = u * cos - v * sin;
        out[2 * k + 1] = u * sin + v * cos;
    }
    Ok(out)
}

/// Sequence-order numbering 1..M+N+L over [temporal ×M, spatial ×N, text ×L].
pub fn distinct_ids(n: usize, m: usize, l: usize) -> Vec<usize> {
    (1..=m + n + l).collect()
}

/// Balanced numbering: temporal [N-M+1..N], spatial [1..N], text [N+1..N+L].
/// Requires N >= M so the temporal range fits inside the spatial one.
pub fn balanced_ids(n: usize, m: usize, l: usize) -> Result<Vec<usize>> {
    if m > n {
        return Err(Error::Validation(format!(
            "balanced ids need at least as many spatial as temporal tokens (N >= M), \
             got N={n}, M={m}"
        )));
    }
    let mut ids = Vec::with_capacity(m + n + l);
    ids.extend(n - m + 1..=n);
    ids.extend(1..=n);
    ids.extend(n + 1..=n + l);
    Ok(ids)
}

/// Both ID tracks for one assembled sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionIds {
    pub distinct: Vec<usize>,
    pub balanced: Vec<usize>,
}

impl PositionIds {
    pub fn build(n: usize, m: usize, l: usize) -> Result<Self> {
        Ok(PositionIds { distinct: distinct_ids(n, m, l), balanced: balanced_ids(n, m, l)? })
    }

    pub fn len(&self) -> usize {
        self.distinct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct.is_empty()
    }

    /// Extend both tracks for one generated text token: each continues one
    /// past its current maximum text-range value.
    pub fn push_generated(&mut self) {
        let d = self.distinct.last().copied().unwrap_or(0) + 1;
        let b = self.balanced.last().copied().unwrap_or(0) + 1;
        self.distinct.push(d);
        self.balanced.push(b);
    }
}

/// Per-(token, pair) rotation angles for a scheme: angle[i][k] = id·θ_k with
/// the ID track chosen per pair (harmonic: balanced on even k, distinct on
/// odd k).
pub fn rotation_angles(
    ids: &PositionIds,
    cfg: &RopeConfig,
    scheme: RopeScheme,
) -> Result<Matrix> {
    if ids.distinct.len() != ids.balanced.len() {
        return Err(Error::Validation(format!(
            "position id tracks differ in length: {} vs {}",
            ids.distinct.len(),
            ids.balanced.len()
        )));
    }
    let mut angles = Matrix::zeros(ids.len(), cfg.pairs());
    for k in 0..cfg.pairs() {
        let rate = theta(k, cfg)?;
        for i in 0..ids.len() {
            let id = match scheme {
                RopeScheme::Distinct => ids.distinct[i],
                RopeScheme::Balanced => ids.balanced[i],
                RopeScheme::Harmonic => {
                    if k % 2 == 0 {
                        ids.balanced[i]
                    } else {
                        ids.distinct[i]
                    }
                }
            };
            angles.set(i, k, id as f64 * rate);
        }
    }
    Ok(angles)
}

/// Rotate every row of `x` under the scheme's ID assignment.
pub fn harmonic_rotate(
    x: &Matrix,
    ids: &PositionIds,
    cfg: &RopeConfig,
    scheme: RopeScheme,
) -> Result<Matrix> {
    if x.rows() != ids.len() || x.cols() != cfg.head_dim {
        return Err(Error::Validation(format!(
            "harmonic_rotate: input {}x{} does not match {} ids at head_dim {}",
            x.rows(),
            x.cols(),
            ids.len(),
            cfg.head_dim
        )));
    }
    let angles = rotation_angles(ids, cfg, scheme)?;
    Ok(rotate_pairs(x, &angles, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg(head_dim: usize) -> RopeConfig {
        RopeConfig::with_default_base(head_dim).unwrap()
    }

    #[test]
    fn theta_values() {
        let c = cfg(8);
        assert_eq!(theta(0, &c).unwrap(), 1.0);
        assert!((theta(1, &c).unwrap() - 0.1).abs() < 1e-15);
        assert!((theta(3, &c).unwrap() - 0.001).abs() < 1e-15);
        assert!(theta(4, &c).is_err());
    }

    #[test]
    fn rotate_at_zero_is_identity() {
        let x = vec![0.3, -1.2, 4.5, 0.0];
        assert_eq!(rope_rotate(&x, 0, &cfg(4)).unwrap(), x);
    }

    #[test]
    fn rotate_unit_vector_by_one_radian() {
        // head_dim=2 has a single pair with θ₀ = 1.
        let y = rope_rotate(&[1.0, 0.0], 1, &cfg(2)).unwrap();
        assert!((y[0] - 0.540_302_31).abs() < 1e-8);
        assert!((y[1] - 0.841_470_98).abs() < 1e-8);
    }

    #[test]
    fn rotation_preserves_norm() {
        let c = cfg(8);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for p in [0usize, 1, 17, 400] {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rope_rotate(&x, p, &c).unwrap();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nx - ny).abs() < 1e-12, "p={p}: {nx} vs {ny}");
        }
    }

    #[test]
    fn relative_position_property() {
        // ⟨R(q,m), R(k,n)⟩ depends only on m−n.
        let c = cfg(8);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let base = dot(&rope_rotate(&q, 11, &c).unwrap(), &rope_rotate(&k, 4, &c).unwrap());
        for s in [1usize, 9, 100] {
            let shifted =
                dot(&rope_rotate(&q, 11 + s, &c).unwrap(), &rope_rotate(&k, 4 + s, &c).unwrap());
            assert!((base - shifted).abs() < 1e-9, "shift {s}: {base} vs {shifted}");
        }
    }

    #[test]
    fn distinct_ids_examples() {
        assert_eq!(distinct_ids(4, 2, 3), vec![1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!(distinct_ids(0, 0, 0).is_empty());
        assert_eq!(distinct_ids(1, 1, 1), vec![1, 2, 3]);
    }

    #[test]
    fn balanced_ids_examples() {
        assert_eq!(balanced_ids(4, 2, 3).unwrap(), vec![3, 4, 1, 2, 3, 4, 5, 6, 7]);
        // M = N forces identical temporal and spatial ranges.
        let ids = balanced_ids(3, 3, 0).unwrap();
        assert_eq!(&ids[..3], &ids[3..6]);
        assert!(balanced_ids(4, 5, 0).is_err());
    }

    #[test]
    fn balanced_last_temporal_equals_last_spatial() {
        let ids = PositionIds::build(6, 4, 2).unwrap();
        // Both visual streams end at ID N, so their even-pair angles match.
        assert_eq!(ids.balanced[3], 6);
        assert_eq!(ids.balanced[3 + 6], 6);
    }

    #[test]
    fn harmonic_angles_follow_pair_parity() {
        let c = cfg(4);
        let ids = PositionIds { distinct: vec![9], balanced: vec![5] };
        let a = rotation_angles(&ids, &c, RopeScheme::Harmonic).unwrap();
        assert_eq!(a.get(0, 0), 5.0 * theta(0, &c).unwrap());
        assert_eq!(a.get(0, 1), 9.0 * theta(1, &c).unwrap());
    }

    #[test]
    fn harmonic_interleaves_pure_schemes_bitwise() {
        let c = cfg(8);
        let ids = PositionIds::build(4, 2, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = Matrix::from_fn(ids.len(), 8, |_, _| rng.random_range(-1.0..1.0));
        let h = harmonic_rotate(&x, &ids, &c, RopeScheme::Harmonic).unwrap();
        let b = harmonic_rotate(&x, &ids, &c, RopeScheme::Balanced).unwrap();
        let d = harmonic_rotate(&x, &ids, &c, RopeScheme::Distinct).unwrap();
        for i in 0..x.rows() {
            for k in 0..4 {
                let reference = if k % 2 == 0 { &b } else { &d };
                for off in 0..2 {
                    let j = 2 * k + off;
                    assert_eq!(h.get(i, j).to_bits(), reference.get(i, j).to_bits());
                }
            }
        }
    }

    #[test]
    fn identical_tracks_collapse_to_distinct() {
        let c = cfg(4);
        let ids = PositionIds { distinct: vec![2, 7], balanced: vec![2, 7] };
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 0.0, 2.0]]);
        let h = harmonic_rotate(&x, &ids, &c, RopeScheme::Harmonic).unwrap();
        let d = harmonic_rotate(&x, &ids, &c, RopeScheme::Distinct).unwrap();
        assert!(h.bits_eq(&d));
    }

    #[test]
    fn push_generated_extends_both_tracks() {
        let mut ids = PositionIds::build(4, 2, 3).unwrap();
        ids.push_generated();
        assert_eq!(*ids.distinct.last().unwrap(), 10);
        assert_eq!(*ids.balanced.last().unwrap(), 8);
        // Without any text yet, the first generated token directly follows
        // the spatial range on the balanced track.
        let mut fresh = PositionIds::build(4, 2, 0).unwrap();
        fresh.push_generated();
        assert_eq!(*fresh.balanced.last().unwrap(), 5);
    }
}
