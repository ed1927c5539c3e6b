//! Deterministic data corruptions used to measure detection power.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam::{BeamData, Provenance};
use crate::phantom::ScalarField;
use crate::vector::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    /// `value * (1 + ε sin(ω a_1))`
    Multiplicative,
    /// `value + ε * scale * ξ`, `ξ` uniform in `[-1, 1]`, keyed by the sample
    /// coordinates and the seed.
    Additive,
    /// Cone data resampled at `s + ε` (cone data only).
    SShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub amplitude: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_frequency() -> f64 {
    3.0
}

impl Corruption {
    pub fn multiplicative(amplitude: f64, frequency: f64) -> Self {
        Self {
            kind: CorruptionKind::Multiplicative,
            amplitude,
            frequency,
            seed: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Applies a pointwise corruption to `value` sampled at vertex `a` with
    /// auxiliary coordinates `aux`. `scale` sets the additive noise level.
    pub fn apply(&self, value: f64, a: &Point, aux: &[f64], scale: f64) -> f64 {
        match self.kind {
            CorruptionKind::Multiplicative => value * (1.0 + self.amplitude * (self.frequency * a[0]).sin()),
            CorruptionKind::Additive => value + self.amplitude * scale * hash_uniform(self.seed, a, aux),
            CorruptionKind::SShift => value,
        }
    }
}

/// Uniform value in `[-1, 1]` derived from the seed and the coordinate bits.
pub fn hash_uniform(seed: u64, a: &Point, aux: &[f64]) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for x in a.iter().chain(aux) {
        h.update(x.to_bits().to_le_bytes());
    }
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    let u = (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}

/// Pointwise-corrupted view of another beam evaluator, with `v` as the
/// auxiliary coordinates. `SShift` has no beam analogue and passes through.
pub struct CorruptedBeam<'a, B: ?Sized> {
    pub inner: &'a B,
    pub corruption: Corruption,
    /// Additive noise level.
    pub scale: f64,
}

impl<B: BeamData + ?Sized> BeamData for CorruptedBeam<'_, B> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn provenance(&self) -> Provenance {
        Provenance::External
    }
    fn eval(&self, a: &Point, v: &Point) -> f64 {
        let n = self.inner.dim();
        self.corruption.apply(self.inner.eval(a, v), a, &v[..n], self.scale)
    }
    fn contains(&self, a: &Point) -> bool {
        self.inner.contains(a)
    }
    fn support_hint(&self) -> Option<&ScalarField> {
        if self.corruption.is_identity() {
            self.inner.support_hint()
        } else {
            None
        }
    }
}

/// Resamples a row on a uniform grid at `x + shift` (in grid units of the
/// row's spacing `dx`) by 4-point Lagrange interpolation, clamped at the ends.
pub fn shift_row(row: &[f64], shift_in_cells: f64) -> Vec<f64> {
    let n = row.len();
    (0..n)
        .map(|i| {
            let x = (i as f64 + shift_in_cells).clamp(0.0, (n - 1) as f64);
            let i0 = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
            let t = x - i0 as f64;
            let mut acc = 0.0;
            for a in 0..4 {
                let mut w = 1.0;
                for b in 0..4 {
                    if a != b {
                        w *= (t - b as f64) / (a as f64 - b as f64);
                    }
                }
                acc += w * row[i0 + a];
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_identity() {
        let c = Corruption::multiplicative(0.0, 3.0);
        assert_eq!(c.apply(1.25, &[0.3, 0.0, 0.0], &[], 1.0), 1.25);
    }

    #[test]
    fn noise_is_deterministic_and_bounded() {
        let a = [0.1, 0.2, 0.0];
        let x = hash_uniform(7, &a, &[0.5]);
        assert_eq!(x, hash_uniform(7, &a, &[0.5]));
        assert_ne!(x, hash_uniform(8, &a, &[0.5]));
        assert!((-1.0..=1.0).contains(&x));
    }

    #[test]
    fn shift_reproduces_cubics() {
        let row: Vec<f64> = (0..12).map(|i| (i as f64).powi(3) - 2.0 * i as f64).collect();
        let s = shift_row(&row, 0.4);
        for i in 1..9 {
            let x = i as f64 + 0.4;
            assert!((s[i] - (x.powi(3) - 2.0 * x)).abs() < 1e-9);
        }
    }
}
