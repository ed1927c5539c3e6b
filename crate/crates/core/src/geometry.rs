//! Convex vertex sets and direction-sphere grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::gauss_legendre;
use crate::vector::{dot, normalize, Point};

/// Boundary membership tolerance in scaled coordinates.
pub const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Ball,
    Ellipsoid,
}

/// Open ball or axis-aligned ellipsoid `{x : Σ ((x_i - c_i)/r_i)^2 < 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexVertexSet {
    pub dim: usize,
    pub kind: SetKind,
    pub center: Point,
    pub radii: Point,
}

impl ConvexVertexSet {
    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        let n = center.len();
        Self::build(SetKind::Ball, center, &vec![radius; n])
    }

    pub fn ellipsoid(center: &[f64], radii: &[f64]) -> Result<Self> {
        Self::build(SetKind::Ellipsoid, center, radii)
    }

    pub fn unit_ball(n: usize) -> Self {
        Self::ball(&vec![0.0; n], 1.0).expect("unit ball is valid")
    }

    fn build(kind: SetKind, center: &[f64], radii: &[f64]) -> Result<Self> {
        let n = center.len();
        if n != 2 && n != 3 {
            return Err(Error::UnsupportedDimension(n));
        }
        if radii.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: radii.len(),
            });
        }
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(invalid("radii", "must be positive and finite"));
        }
        let mut r = [1.0; 3];
        r[..n].copy_from_slice(radii);
        Ok(Self {
            dim: n,
            kind,
            center: crate::vector::from_slice(center),
            radii: r,
        })
    }

    /// Validates a deserialized set.
    pub fn validate(&self) -> Result<()> {
        Self::build(self.kind, &self.center[..self.dim], &self.radii[..self.dim]).map(|_| ())
    }

    #[inline]
    fn scaled(&self, x: &Point) -> Point {
        let mut y = [0.0; 3];
        for i in 0..self.dim {
            y[i] = (x[i] - self.center[i]) / self.radii[i];
        }
        y
    }

    /// `|y|^2 - 1` in scaled coordinates: negative inside, zero on the boundary.
    #[inline]
    pub fn level(&self, x: &Point) -> f64 {
        let y = self.scaled(x);
        dot(&y, &y) - 1.0
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radii[..self.dim].iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.radii[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn contains_point(&self, x: &Point) -> bool {
        self.level(x) < 0.0
    }

    /// Closed set membership with the boundary tolerance.
    pub fn contains_closed(&self, x: &Point) -> bool {
        self.level(x) <= BOUNDARY_TOL
    }

    pub fn on_boundary(&self, x: &Point) -> bool {
        self.level(x).abs() <= BOUNDARY_TOL
    }

    pub fn normal(&self, x: &Point) -> Point {
        let y = self.scaled(x);
        let mut g = [0.0; 3];
        for i in 0..self.dim {
            g[i] = y[i] / self.radii[i];
        }
        normalize(&g)
    }

    /// Boundary point `c + r ⊙ u` for a unit vector `u`.
    pub fn boundary_point(&self, u: &Point) -> Point {
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            x[i] = self.center[i] + self.radii[i] * u[i];
        }
        x
    }

    /// Forward exit time `inf{t > 0 : a + t v ∉ A}` for `a` in the closure.
    pub fn exit_time(&self, a: &Point, v: &Point) -> Result<f64> {
        let y = self.scaled(a);
        let mut w = [0.0; 3];
        for i in 0..self.dim {
            w[i] = v[i] / self.radii[i];
        }
        let c = dot(&y, &y) - 1.0;
        if c > BOUNDARY_TOL {
            return Err(Error::OutsideDomain);
        }
        let qa = dot(&w, &w);
        let qb = dot(&y, &w);
        let disc = (qb * qb - qa * c).max(0.0);
        // larger root of qa t^2 + 2 qb t + c = 0, in a cancellation-free form
        let t = if qb <= 0.0 {
            (-qb + disc.sqrt()) / qa
        } else {
            -c / (qb + disc.sqrt())
        };
        Ok(t.max(0.0))
    }

    /// `v · n(a) > 0` for a boundary point `a`.
    pub fn is_outflow(&self, a: &Point, v: &Point) -> Result<bool> {
        let lv = self.level(a);
        if lv.abs() > BOUNDARY_TOL {
            return Err(Error::NotOnBoundary(lv));
        }
        Ok(dot(v, &self.normal(a)) > 0.0)
    }

    /// Scaled distance proxy `1 - |y|`, positive inside.
    pub fn depth(&self, x: &Point) -> f64 {
        let y = self.scaled(x);
        1.0 - dot(&y, &y).sqrt()
    }

    /// Lower bound on the Euclidean distance from an interior `x` to `∂A`.
    pub fn boundary_distance_lower(&self, x: &Point) -> f64 {
        (self.depth(x) * self.min_radius()).max(0.0)
    }
}

/// Quadrature grid on `S^{n-1}`.
///
/// For `n = 2` node `j` has angle `π j / L`, `j < 2L`. For `n = 3` nodes are
/// stored polar-major: index `i * 2L + m` holds polar cosine `x_i`
/// (Gauss–Legendre, ascending) and azimuth `π m / L`. The pole axis is `e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub dim: usize,
    pub resolution: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

pub fn sphere_grid(n: usize, l: usize) -> Result<SphereGrid> {
    if l < 4 {
        return Err(invalid("resolution", format!("L >= 4 required, got {l}")));
    }
    match n {
        2 => {
            let m = 2 * l;
            let nodes = (0..m)
                .map(|j| {
                    let th = PI * j as f64 / l as f64;
                    [th.cos(), th.sin(), 0.0]
                })
                .collect();
            Ok(SphereGrid {
                dim: 2,
                resolution: l,
                nodes,
                weights: vec![PI / l as f64; m],
            })
        }
        3 => {
            let (x, w) = gauss_legendre(l);
            let m = 2 * l;
            let mut nodes = Vec::with_capacity(l * m);
            let mut weights = Vec::with_capacity(l * m);
            for i in 0..l {
                let st = (1.0 - x[i] * x[i]).sqrt();
                for j in 0..m {
                    let ph = PI * j as f64 / l as f64;
                    nodes.push([st * ph.cos(), st * ph.sin(), x[i]]);
                    weights.push(w[i] * PI / l as f64);
                }
            }
            Ok(SphereGrid {
                dim: 3,
                resolution: l,
                nodes,
                weights,
            })
        }
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node `-v_j`.
    pub fn antipode(&self, j: usize) -> usize {
        let l = self.resolution;
        let m = 2 * l;
        match self.dim {
            2 => (j + l) % m,
            _ => {
                let (i, az) = (j / m, j % m);
                (l - 1 - i) * m + (az + l) % m
            }
        }
    }

    /// Checks that the antipode map matches node coordinates.
    pub fn is_antipodal(&self) -> bool {
        (0..self.len()).all(|j| {
            let a = self.nodes[j];
            let b = self.nodes[self.antipode(j)];
            (0..3).all(|c| (a[c] + b[c]).abs() < 1e-12)
        })
    }

    /// Index of the node equal to `v` within `1e-12`, if any.
    pub fn locate(&self, v: &Point) -> Option<usize> {
        let l = self.resolution;
        let m = 2 * l;
        let az = |x: f64, y: f64| {
            let t = y.atan2(x).rem_euclid(2.0 * PI) * l as f64 / PI;
            (t.round() as usize) % m
        };
        let cand = match self.dim {
            2 => az(v[0], v[1]),
            _ => {
                // rings ascend in polar cosine
                let ring = (0..l).min_by(|&a, &b| {
                    let da = (self.nodes[a * m][2] - v[2]).abs();
                    let db = (self.nodes[b * m][2] - v[2]).abs();
                    da.total_cmp(&db)
                })?;
                ring * m + az(v[0], v[1])
            }
        };
        let p = self.nodes[cand];
        let d = (0..3).map(|c| (p[c] - v[c]).abs()).fold(0.0, f64::max);
        (d < 1e-12).then_some(cand)
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Indices of a well-separated subset of `count` nodes, spread by index so
    /// the choice is deterministic.
    pub fn spread_subset(&self, count: usize) -> Vec<usize> {
        let l = self.resolution;
        match self.dim {
            2 => {
                let m = 2 * l;
                (0..count.min(m)).map(|q| q * m / count.min(m)).collect()
            }
            _ => {
                // alternate between two latitude bands, rotating azimuth
                let m = 2 * l;
                let bands = [l / 4, (3 * l) / 4];
                (0..count)
                    .map(|q| {
                        let i = bands[q % 2].min(l - 1);
                        let az = (q * m / count + (q % 2) * m / (2 * count)) % m;
                        i * m + az
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_time_examples() {
        let a = ConvexVertexSet::unit_ball(2);
        for th in [0.0, 1.0, 2.5] {
            let v = [f64::cos(th), f64::sin(th), 0.0];
            assert!((a.exit_time(&[0.0; 3], &v).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((a.exit_time(&[0.5, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(a.exit_time(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            a.exit_time(&[1.5, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::OutsideDomain)
        ));
        // inflow boundary point traverses the whole chord
        let t = a.exit_time(&[-1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((t - 2.0).abs() < 1e-15);
    }

    #[test]
    fn outflow_examples() {
        let a = ConvexVertexSet::unit_ball(2);
        let p = [1.0, 0.0, 0.0];
        assert!(a.is_outflow(&p, &[1.0, 0.0, 0.0]).unwrap());
        assert!(!a.is_outflow(&p, &[0.0, 1.0, 0.0]).unwrap());
        assert!(!a.is_outflow(&p, &[-1.0, 0.0, 0.0]).unwrap());
        assert!(matches!(
            a.is_outflow(&[0.5, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::NotOnBoundary(_))
        ));
    }

    #[test]
    fn ellipsoid_exit_time() {
        let e = ConvexVertexSet::ellipsoid(&[1.0, 0.0, -1.0], &[2.0, 1.0, 0.5]).unwrap();
        let t = e.exit_time(&[1.0, 0.0, -1.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
        let t = e.exit_time(&[1.0, 0.0, -1.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((t - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_grid_weights_and_moments() {
        for l in [4, 7, 16] {
            let g2 = sphere_grid(2, l).unwrap();
            assert!((g2.weights.iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
            let g3 = sphere_grid(3, l).unwrap();
            assert!((g3.weights.iter().sum::<f64>() / (4.0 * PI) - 1.0).abs() < 1e-12);
            assert!(g2.is_antipodal() && g3.is_antipodal());
            for v in &g3.nodes {
                assert!((crate::vector::norm(v) - 1.0).abs() < 1e-14);
            }
        }
        let g = sphere_grid(3, 8).unwrap();
        let e = normalize(&[0.3, -0.5, 0.8]);
        let vals: Vec<f64> = g.nodes.iter().map(|v| dot(v, &e).powi(2)).collect();
        assert!((g.integrate(&vals) - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(sphere_grid(3, 3).is_err());
        for j in [0, 5, 77, 127] {
            assert_eq!(g.locate(&g.nodes[j]), Some(j));
        }
        assert_eq!(g.locate(&normalize(&[0.3, 0.2, 0.1])), None);
    }
}
