//! Smooth compactly supported test densities built from bump terms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::{dot, norm, sub, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    #[inline]
    pub fn eval(&self, x: &Point) -> f64 {
        let d = sub(x, &self.center);
        let rho2 = dot(&d, &d) / (self.radius * self.radius);
        if rho2 >= 1.0 {
            return 0.0;
        }
        self.amplitude * (1.0 - 1.0 / (1.0 - rho2)).exp()
    }

    /// Parameter interval `[r0, r1]` (clipped to `r >= 0`) where the ray
    /// `a + r v` lies inside the closed ball, or `None` when it misses.
    pub fn ray_interval(&self, a: &Point, v: &Point) -> Option<(f64, f64)> {
        let d = sub(a, &self.center);
        let vv = dot(v, v);
        let b = dot(&d, v) / vv;
        let c = (dot(&d, &d) - self.radius * self.radius) / vv;
        let disc = b * b - c;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let r0 = (-b - sq).max(0.0);
        let r1 = -b + sq;
        if r1 <= 0.0 {
            return None;
        }
        Some((r0, r1))
    }
}

/// A sum of bump terms in dimension 2 or 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub dim: usize,
    pub terms: Vec<Bump>,
}

/// Axis-aligned hull of the support: `|x̄| <= xbar_radius`,
/// `xn_min <= x_n <= xn_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub xbar_radius: f64,
    pub xn_min: f64,
    pub xn_max: f64,
}

impl SupportBox {
    /// Constants `(m0, M0, R)` of the support cone of `h` under
    /// `t = -1/x_n`, `p̄ = x̄ / x_n`.
    pub fn cone_constants(&self) -> (f64, f64, f64) {
        (1.0 / self.xn_max, 1.0 / self.xn_min, self.xbar_radius)
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

pub fn make_bump(center: &[f64], radius: f64, amplitude: f64, n: usize) -> Result<ScalarField> {
    check_dim(n)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    if center.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: center.len(),
        });
    }
    if !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
        return Err(invalid("bump", "non-finite center or amplitude"));
    }
    Ok(ScalarField {
        dim: n,
        terms: vec![Bump {
            center: crate::vector::from_slice(center),
            radius,
            amplitude,
        }],
    })
}

/// Pointwise sum. An empty list is rejected because its dimension is unknown;
/// use [`ScalarField::zero`] for the zero field.
pub fn make_sum(fields: &[ScalarField]) -> Result<ScalarField> {
    let first = fields
        .first()
        .ok_or_else(|| invalid("fields", "empty list has no dimension"))?;
    let mut terms = Vec::new();
    for f in fields {
        if f.dim != first.dim {
            return Err(Error::DimensionMismatch {
                expected: first.dim,
                found: f.dim,
            });
        }
        terms.extend_from_slice(&f.terms);
    }
    Ok(ScalarField {
        dim: first.dim,
        terms,
    })
}

impl ScalarField {
    pub fn zero(n: usize) -> Self {
        Self {
            dim: n,
            terms: Vec::new(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &Point) -> f64 {
        // fixed summation order keeps evaluation bit-reproducible
        self.terms.iter().map(|b| b.eval(x)).sum()
    }

    pub fn negate(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.amplitude *= c;
        }
        out
    }

    pub fn translated(&self, shift: &Point) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.center = crate::vector::add(&t.center, shift);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    /// `true` when `x` lies in no closed term ball, which forces `eval(x) == 0`.
    pub fn outside_support(&self, x: &Point) -> bool {
        self.terms
            .iter()
            .all(|b| norm(&sub(x, &b.center)) >= b.radius)
    }

    /// Hull of all term balls. With `planar` set, any ball reaching
    /// `x_n <= 0` is an error.
    pub fn support_box(&self, planar: bool) -> Result<SupportBox> {
        let n = self.dim;
        if self.terms.is_empty() {
            return Err(invalid("field", "no terms, support is empty"));
        }
        let mut rbar: f64 = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.terms {
            let cbar = norm(&bar(&t.center, n));
            rbar = rbar.max(cbar + t.radius);
            lo = lo.min(t.center[n - 1] - t.radius);
            hi = hi.max(t.center[n - 1] + t.radius);
            if planar && t.center[n - 1] - t.radius <= 0.0 {
                return Err(Error::NotPlanarValid);
            }
        }
        Ok(SupportBox {
            xbar_radius: rbar,
            xn_min: lo,
            xn_max: hi,
        })
    }

    /// Per-axis bounding box `[lo, hi]` of the support.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in &self.terms {
            for i in 0..self.dim {
                lo[i] = lo[i].min(t.center[i] - t.radius);
                hi[i] = hi[i].max(t.center[i] + t.radius);
            }
        }
        for i in self.dim..3 {
            lo[i] = 0.0;
            hi[i] = 0.0;
        }
        (lo, hi)
    }
}

/// Tangential part `x̄` (first `n-1` coordinates) with the rest zeroed.
#[inline]
pub fn bar(x: &Point, n: usize) -> Point {
    let mut out = *x;
    for c in out.iter_mut().skip(n - 1) {
        *c = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_values() {
        let f = make_bump(&[0.2, -0.1], 0.5, 3.0, 2).unwrap();
        assert_eq!(f.eval(&[0.2, -0.1, 0.0]), 3.0);
        assert_eq!(f.eval(&[0.7, -0.1, 0.0]), 0.0);
        let r = 0.5 / 2f64.sqrt();
        let v = f.eval(&[0.2 + r, -0.1, 0.0]);
        assert!((v - 3.0 * (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_radius_and_dim() {
        assert!(make_bump(&[0.0, 0.0], 0.0, 1.0, 2).is_err());
        assert!(make_bump(&[0.0, 0.0], -1.0, 1.0, 2).is_err());
        assert!(make_bump(&[0.0, 0.0, 0.0], 1.0, 1.0, 2).is_err());
        assert!(make_bump(&[0.0; 4], 1.0, 1.0, 4).is_err());
    }

    #[test]
    fn sums() {
        let f = make_bump(&[0.0, 1.5], 0.5, 2.0, 2).unwrap();
        let g = make_bump(&[1.0, -1.0], 0.3, -1.0, 2).unwrap();
        let s = make_sum(&[f.clone(), g.clone()]).unwrap();
        assert_eq!(s.eval(&[0.0, 1.5, 0.0]), 2.0);
        assert_eq!(s.eval(&[1.0, -1.0, 0.0]), -1.0);
        let z = make_sum(&[f.clone(), f.negate()]).unwrap();
        for x in [[0.0, 1.5, 0.0], [0.1, 1.3, 0.0], [0.3, 1.7, 0.0]] {
            assert_eq!(z.eval(&x), 0.0);
        }
        let h = make_bump(&[0.0, 0.0, 0.0], 1.0, 1.0, 3).unwrap();
        assert!(make_sum(&[f, h]).is_err());
        assert_eq!(make_sum(&[ScalarField::zero(2)]).unwrap().eval(&[0.0; 3]), 0.0);
    }

    #[test]
    fn support_box_of_reference_bump() {
        let f = make_bump(&[0.0, 1.5], 0.5, 1.0, 2).unwrap();
        let sb = f.support_box(true).unwrap();
        assert_eq!(sb.xbar_radius, 0.5);
        assert_eq!(sb.xn_min, 1.0);
        assert_eq!(sb.xn_max, 2.0);
        assert_eq!(sb.cone_constants(), (0.5, 1.0, 0.5));
        let touching = make_bump(&[0.0, 0.5], 0.5, 1.0, 2).unwrap();
        assert!(matches!(touching.support_box(true), Err(Error::NotPlanarValid)));
        assert!(touching.support_box(false).is_ok());
    }

    #[test]
    fn ray_interval_matches_geometry() {
        let b = Bump {
            center: [2.0, 0.0, 0.0],
            radius: 0.5,
            amplitude: 1.0,
        };
        let (r0, r1) = b.ray_interval(&[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert!((r0 - 1.5).abs() < 1e-15 && (r1 - 2.5).abs() < 1e-15);
        assert!(b.ray_interval(&[0.0; 3], &[-1.0, 0.0, 0.0]).is_none());
        assert!(b.ray_interval(&[0.0; 3], &[0.0, 1.0, 0.0]).is_none());
        let (r0, _) = b.ray_interval(&[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r0, 0.0);
    }
}
