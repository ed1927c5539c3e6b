//! Spherical section transform and its range conditions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::SphereGrid;
use crate::harmonics::{Coeffs, SphereSpectral};
use crate::par;
use crate::report::ConsistencyReport;
use crate::vector::{axpy, scale, sphere_area, Point};

/// A function on `S^{n-1}`. Implementations must be pure and thread-safe.
pub trait SphereFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, v: &Point) -> f64;
}

pub struct FnSphere<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&Point) -> f64 + Sync> SphereFunction for FnSphere<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, v: &Point) -> f64 {
        (self.f)(v)
    }
}

/// Grid samples with a band-limited interpolant. Grid nodes return their
/// stored value exactly.
pub struct GridFunction<'a> {
    grid: &'a SphereGrid,
    spectral: &'a SphereSpectral,
    values: Vec<f64>,
    coeffs: Coeffs,
}

impl<'a> GridFunction<'a> {
    pub fn new(grid: &'a SphereGrid, spectral: &'a SphereSpectral, values: Vec<f64>) -> Self {
        let coeffs = spectral.analyze(&values);
        Self {
            grid,
            spectral,
            values,
            coeffs,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coeffs(&self) -> &Coeffs {
        &self.coeffs
    }
}

impl SphereFunction for GridFunction<'_> {
    fn dim(&self) -> usize {
        self.grid.dim
    }
    fn eval(&self, v: &Point) -> f64 {
        match self.grid.locate(v) {
            Some(j) => self.values[j],
            None => self.spectral.eval_at(&self.coeffs, v),
        }
    }
}

/// Orthonormal basis `(e1, e2)` of `β^⊥` in three dimensions: the images
/// of `e_1, e_2` under the Householder reflection taking `e_3` to `±β`,
/// with the sign chosen so that `frame(-β) = -frame(β)`.
pub fn section_frame(beta: &Point) -> (Point, Point) {
    let sign = if beta[2] != 0.0 {
        beta[2].signum()
    } else if beta[1] != 0.0 {
        beta[1].signum()
    } else {
        beta[0].signum()
    };
    let b = scale(beta, sign);
    // H = I - 2 w w^T / |w|^2 with w = e3 - b; H e3 = b.
    let w = [-b[0], -b[1], 1.0 - b[2]];
    let ww = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let reflect = |e: Point| -> Point {
        if ww < 1e-300 {
            return e;
        }
        let c = 2.0 * (w[0] * e[0] + w[1] * e[1] + w[2] * e[2]) / ww;
        [e[0] - c * w[0], e[1] - c * w[1], e[2] - c * w[2]]
    };
    let e1 = reflect([1.0, 0.0, 0.0]);
    let e2 = reflect([0.0, 1.0, 0.0]);
    (scale(&e1, sign), scale(&e2, sign))
}

/// `Sg(β, s) = (1-s²)^{(n-2)/2} ∫_{S^{n-2}} g(sβ + √(1-s²) ω) dω` over unit
/// `ω ⊥ β`. Two-point sum for `n = 2`, `m`-point circle rule for `n = 3`.
pub fn spherical_section(g: &(impl SphereFunction + ?Sized), beta: &Point, s: f64, m: usize) -> Result<f64> {
    if !(s.abs() < 1.0) {
        return Err(invalid("s", format!("|s| < 1 required, got {s}")));
    }
    let c = (1.0 - s * s).sqrt();
    let base = scale(beta, s);
    match g.dim() {
        2 => {
            let perp = [-beta[1], beta[0], 0.0];
            Ok(g.eval(&axpy(&base, c, &perp)) + g.eval(&axpy(&base, -c, &perp)))
        }
        3 => {
            if m < 2 || m % 2 == 1 {
                return Err(invalid("m", "circle rule needs an even node count"));
            }
            let (e1, e2) = section_frame(beta);
            let mut acc = 0.0;
            for j in 0..m {
                let ph = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                let om = axpy(&scale(&e1, ph.cos()), ph.sin(), &e2);
                acc += g.eval(&axpy(&base, c, &om));
            }
            Ok(c * acc * 2.0 * std::f64::consts::PI / m as f64)
        }
        n => Err(Error::UnsupportedDimension(n)),
    }
}

/// `s_i = s_max (2i - (N-1)) / (N-1)`; exactly antisymmetric under `i ↦ N-1-i`.
pub fn s_grid(ns: usize, s_max: f64) -> Vec<f64> {
    let d = (ns - 1) as f64;
    (0..ns)
        .map(|i| s_max * (2.0 * i as f64 - d) / d)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SstParams {
    pub ns: usize,
    pub s_max: f64,
    /// PDE residual is evaluated at `|s| <= pde_s_max`.
    pub pde_s_max: f64,
    /// Circle rule nodes for `n = 3`.
    pub circle_nodes: usize,
    pub evenness_tol: f64,
    pub pde_tol: f64,
    /// Spectral tail fraction allowed in the extracted limit function.
    pub tail_tol: f64,
}

impl Default for SstParams {
    fn default() -> Self {
        Self {
            ns: 96,
            s_max: 0.95,
            pde_s_max: 0.9,
            circle_nodes: 64,
            evenness_tol: 1e-10,
            pde_tol: 1e-4,
            tail_tol: 1e-3,
        }
    }
}

/// Values `g(β_j, s_i)` stored at `j * ns + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionData {
    pub grid: SphereGrid,
    pub s: Vec<f64>,
    pub s_max: f64,
    pub values: Vec<f64>,
}

impl SectionData {
    pub fn new(grid: SphereGrid, ns: usize, s_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(s_max > 0.0 && s_max < 1.0) {
            return Err(invalid("s_max", "must lie in (0, 1)"));
        }
        if values.len() != grid.len() * ns {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * ns,
                found: values.len(),
            });
        }
        Ok(Self {
            s: s_grid(ns, s_max),
            grid,
            s_max,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn ns(&self) -> usize {
        self.s.len()
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.s.len() + i]
    }

    pub fn from_fn(grid: SphereGrid, ns: usize, s_max: f64, f: impl Fn(&Point, f64) -> f64 + Sync) -> Result<Self> {
        let s = s_grid(ns, s_max);
        let rows = par::map_range(grid.len(), |j| s.iter().map(|&si| f(&grid.nodes[j], si)).collect::<Vec<_>>());
        Self::new(grid, ns, s_max, rows.concat())
    }
}

/// Spherical section transform of `g` sampled on `grid × s_grid(ns, s_max)`.
pub fn forward_sst(
    g: &(impl SphereFunction + ?Sized),
    grid: &SphereGrid,
    ns: usize,
    s_max: f64,
    m: usize,
) -> Result<SectionData> {
    let s = s_grid(ns, s_max);
    let rows = par::try_map_range(grid.len(), |j| {
        s.iter()
            .map(|&si| spherical_section(g, &grid.nodes[j], si, m))
            .collect::<Result<Vec<_>>>()
    })?;
    SectionData::new(grid.clone(), ns, s_max, rows.concat())
}

fn weight_exponent(n: usize) -> f64 {
    (n as f64 - 2.0) / 2.0
}

/// Normalized ratio `g / (|S^{n-2}| (1-s²)^{(n-2)/2})` at the four largest
/// `s`, extrapolated to `s = 1` by a least-squares quadratic in `1 - s`.
pub fn sst_limit_at(gdata: &SectionData, j: usize) -> Result<f64> {
    let ns = gdata.ns();
    limit_from_row(&gdata.values[j * ns..(j + 1) * ns], &gdata.s, gdata.dim())
}

/// Limit extraction on one `β` row sampled at `s`.
pub fn limit_from_row(row: &[f64], s: &[f64], n: usize) -> Result<f64> {
    let ns = s.len();
    if ns < 4 || s[ns - 1] < 0.9 {
        return Err(invalid("s_max", "limit extraction needs s_max >= 0.9"));
    }
    let area = sphere_area(n - 2);
    let alpha = weight_exponent(n);
    let mut xs = [0.0; 4];
    let mut ys = [0.0; 4];
    for q in 0..4 {
        let i = ns - 1 - q;
        xs[q] = 1.0 - s[i];
        ys[q] = row[i] / (area * (1.0 - s[i] * s[i]).powf(alpha));
        if !ys[q].is_finite() {
            return Err(Error::NonFinite("sst_limit ratio"));
        }
    }
    Ok(quadratic_intercept(&xs, &ys))
}

pub fn sst_limit(gdata: &SectionData, beta: &Point) -> Result<f64> {
    let j = gdata
        .grid
        .locate(beta)
        .ok_or_else(|| invalid("beta", "not a node of the section grid"))?;
    sst_limit_at(gdata, j)
}

/// Least-squares fit `y ≈ c0 + c1 x + c2 x²`, returning `c0`.
fn quadratic_intercept(xs: &[f64], ys: &[f64]) -> f64 {
    // normal equations on centered/scaled abscissae for conditioning
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let sc = xs.iter().map(|x| (x - xm).abs()).fold(0.0, f64::max).max(1e-300);
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (x, y) in xs.iter().zip(ys) {
        let t = (x - xm) / sc;
        let row = [1.0, t, t * t];
        for r in 0..3 {
            b[r] += row[r] * y;
            for c in 0..3 {
                a[r][c] += row[r] * row[c];
            }
        }
    }
    let c = crate::linalg::solve3(a, b);
    let t0 = -xm / sc;
    c[0] + c[1] * t0 + c[2] * t0 * t0
}

/// Derivatives `(g, g_s, g_ss)` at interior index `i` of a row, by 4th-order
/// central differences applied to `q = g / (1-s²)^{(n-2)/2}` and the product
/// rule for the weight.
fn s_derivatives(row: &[f64], s: &[f64], i: usize, n: usize) -> (f64, f64, f64) {
    let alpha = weight_exponent(n);
    let w = |x: f64| (1.0 - x * x).powf(alpha);
    let q = |k: usize| row[k] / w(s[k]);
    let ds = s[1] - s[0];
    let q1 = (-q(i + 2) + 8.0 * q(i + 1) - 8.0 * q(i - 1) + q(i - 2)) / (12.0 * ds);
    let q2 = (-q(i + 2) + 16.0 * q(i + 1) - 30.0 * q(i) + 16.0 * q(i - 1) - q(i - 2)) / (12.0 * ds * ds);
    let x = s[i];
    let u = 1.0 - x * x;
    let w0 = u.powf(alpha);
    let w1 = -2.0 * alpha * x * u.powf(alpha - 1.0);
    let w2 = -2.0 * alpha * u.powf(alpha - 1.0) + 4.0 * alpha * (alpha - 1.0) * x * x * u.powf(alpha - 2.0);
    let q0 = q(i);
    (w0 * q0, w1 * q0 + w0 * q1, w2 * q0 + 2.0 * w1 * q1 + w0 * q2)
}

/// Evenness, PDE and limit conditions of the spherical section range.
pub fn check_sst_range(gdata: &SectionData, spectral: &SphereSpectral, params: &SstParams) -> Result<ConsistencyReport> {
    let grid = &gdata.grid;
    if !grid.is_antipodal() {
        return Err(Error::NotAntipodal);
    }
    let n = gdata.dim();
    let ns = gdata.ns();
    let nb = grid.len();
    let sup = gdata.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm = sup.max(1.0);

    let mut even: f64 = 0.0;
    for j in 0..nb {
        let ja = grid.antipode(j);
        for i in 0..ns {
            even = even.max((gdata.at(ja, ns - 1 - i) - gdata.at(j, i)).abs());
        }
    }

    let values = &gdata.values;
    let rows: Vec<usize> = (2..ns - 2)
        .filter(|&i| gdata.s[i].abs() <= params.pde_s_max + 1e-12)
        .collect();
    let pde = par::map_slice(&rows, |&i| {
        let col: Vec<f64> = (0..nb).map(|j| values[j * ns + i]).collect();
        let lap = spectral.laplacian(&col);
        let s = gdata.s[i];
        let mut worst: f64 = 0.0;
        for j in 0..nb {
            let row = &values[j * ns..(j + 1) * ns];
            let (g0, g1, g2) = s_derivatives(row, &gdata.s, i, n);
            let r = (1.0 - s * s) * g2 + (n as f64 - 3.0) * s * g1 + (n as f64 - 2.0) / (1.0 - s * s) * g0 - lap[j];
            worst = worst.max(r.abs());
        }
        worst
    });
    let pde = pde.into_iter().fold(0.0, f64::max);

    let mut rep = ConsistencyReport::new();
    rep.check("evenness", even / norm, params.evenness_tol);
    rep.check("pde", pde / norm, params.pde_tol);

    let limits: Vec<f64> = (0..nb).map(|j| sst_limit_at(gdata, j).unwrap_or(f64::NAN)).collect();
    let bad = limits.iter().filter(|v| !v.is_finite()).count();
    rep.check("limit_finite", bad as f64, 0.0);
    let tail = if bad == 0 { spectral_tail(spectral, &limits) } else { f64::NAN };
    rep.check("limit_smoothness", tail, params.tail_tol).detail =
        Some("heuristic: spectral tail fraction of the extracted limit".into());
    Ok(rep)
}

/// Root-energy fraction of the top quarter of degrees.
pub fn spectral_tail(spectral: &SphereSpectral, values: &[f64]) -> f64 {
    let e = spectral.analyze(values).degree_energy();
    let total: f64 = e.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let cut = (3 * e.len()) / 4;
    (e[cut..].iter().sum::<f64>() / total).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_grid;
    use crate::vector::{dot, normalize};
    use std::f64::consts::PI;

    #[test]
    fn constant_function_sections() {
        let one3 = FnSphere { dim: 3, f: |_: &Point| 1.0 };
        let v = spherical_section(&one3, &[0.0, 0.0, 1.0], 0.0, 64).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-13);
        let one2 = FnSphere { dim: 2, f: |_: &Point| 1.0 };
        for s in [-0.9, 0.0, 0.3] {
            assert_eq!(spherical_section(&one2, &[1.0, 0.0, 0.0], s, 0).unwrap(), 2.0);
        }
        assert!(spherical_section(&one2, &[1.0, 0.0, 0.0], 1.0, 0).is_err());
    }

    #[test]
    fn frame_is_orthonormal_and_odd() {
        for b in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], normalize(&[0.3, -0.4, 0.2]), [1.0, 0.0, 0.0]] {
            let (e1, e2) = section_frame(&b);
            assert!(dot(&e1, &b).abs() < 1e-15 && dot(&e2, &b).abs() < 1e-15);
            assert!((dot(&e1, &e1) - 1.0).abs() < 1e-15 && dot(&e1, &e2).abs() < 1e-15);
            let (f1, f2) = section_frame(&scale(&b, -1.0));
            assert_eq!(f1, scale(&e1, -1.0));
            assert_eq!(f2, scale(&e2, -1.0));
        }
    }

    #[test]
    fn limit_examples() {
        let grid = sphere_grid(3, 8).unwrap();
        let one = FnSphere { dim: 3, f: |_: &Point| 1.0 };
        let d = forward_sst(&one, &grid, 96, 0.95, 64).unwrap();
        for j in [0, 17, 100] {
            assert!((sst_limit_at(&d, j).unwrap() - 1.0).abs() < 1e-8);
        }
        let lin = FnSphere { dim: 3, f: |v: &Point| 1.0 + v[2] };
        let d = forward_sst(&lin, &grid, 96, 0.95, 64).unwrap();
        for j in [0, 17, 100] {
            let b = grid.nodes[j];
            assert!((sst_limit(&d, &b).unwrap() - (1.0 + b[2])).abs() < 1e-4);
        }
        let zero = SectionData::new(grid.clone(), 96, 0.95, vec![0.0; grid.len() * 96]).unwrap();
        assert_eq!(sst_limit_at(&zero, 3).unwrap(), 0.0);
    }

    #[test]
    fn weight_function_annihilated_and_odd_function_flagged() {
        for n in [2, 3] {
            let grid = sphere_grid(n, 8).unwrap();
            let sp = SphereSpectral::new(&grid);
            let a = weight_exponent(n);
            let d = SectionData::from_fn(grid.clone(), 96, 0.95, |_, s| (1.0 - s * s).powf(a)).unwrap();
            let rep = check_sst_range(&d, &sp, &SstParams::default()).unwrap();
            assert!(rep.get("evenness").unwrap().residual < 1e-8);
            assert!(rep.get("pde").unwrap().residual < 1e-8, "n={n}\n{}", rep.table());
            let odd = SectionData::from_fn(grid, 96, 0.95, |_, s| s).unwrap();
            let rep = check_sst_range(&odd, &sp, &SstParams::default()).unwrap();
            let e = rep.get("evenness").unwrap();
            assert!((e.residual - 2.0 * 0.95).abs() < 1e-12 && !e.pass);
        }
    }

    #[test]
    fn forward_data_of_harmonics_passes() {
        for n in [2, 3] {
            let grid = sphere_grid(n, 12).unwrap();
            let sp = SphereSpectral::new(&grid);
            let e = normalize(&[0.3, -0.5, if n == 3 { 0.8 } else { 0.0 }]);
            let h = FnSphere {
                dim: n,
                f: move |v: &Point| 0.5 + dot(v, &e) + 0.3 * (v[0] * v[0] - v[1] * v[1]) + 0.2 * dot(v, &e).powi(3),
            };
            let d = forward_sst(&h, &grid, 96, 0.95, 64).unwrap();
            let rep = check_sst_range(&d, &sp, &SstParams::default()).unwrap();
            assert!(rep.pass(), "n={n}\n{}", rep.table());
        }
    }
}
