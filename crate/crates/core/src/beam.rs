//! Weighted divergent beam transform, directional derivatives and the
//! transport boundary-value checks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{sphere_grid, ConvexVertexSet};
use crate::par;
use crate::phantom::ScalarField;
use crate::quadrature::gl16;
use crate::report::ConsistencyReport;
use crate::vector::{axpy, dot, Point};

pub const MAX_ORDER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ComputedFromField,
    External,
}

/// Beam data `u(a, v)`. Implementations must be pure and safe to call
/// concurrently.
pub trait BeamData: Sync {
    fn dim(&self) -> usize;
    fn order(&self) -> usize;
    fn provenance(&self) -> Provenance;
    fn eval(&self, a: &Point, v: &Point) -> f64;

    /// Whether `a` is inside the evaluator's domain.
    fn contains(&self, _a: &Point) -> bool {
        true
    }

    /// Field whose support bounds the data, when known.
    fn support_hint(&self) -> Option<&ScalarField> {
        None
    }
}

/// `R^k f(a, v) = ∫_0^∞ f(a + r v) r^k dr`, exactly 0 when the ray misses
/// every support ball.
pub fn divergent_beam(field: &ScalarField, a: &Point, v: &Point, k: usize) -> f64 {
    let rule = gl16();
    let mut total = 0.0;
    for b in &field.terms {
        let Some((r0, r1)) = b.ray_interval(a, v) else {
            continue;
        };
        let panel = 2.0 * b.radius / 16.0;
        let np = ((r1 - r0) / panel).ceil().max(1.0) as usize;
        let h = (r1 - r0) / np as f64;
        for p in 0..np {
            let lo = r0 + p as f64 * h;
            total += rule.integrate(lo, lo + h, |r| {
                b.eval(&axpy(a, r, v)) * r.powi(k as i32)
            });
        }
    }
    total
}

/// Beam data computed from an analytic field.
#[derive(Debug, Clone)]
pub struct FieldBeam {
    pub field: ScalarField,
    pub k: usize,
}

impl FieldBeam {
    pub fn new(field: ScalarField, k: usize) -> Result<Self> {
        if k > MAX_ORDER {
            return Err(invalid("k", format!("order {k} exceeds {MAX_ORDER}")));
        }
        Ok(Self { field, k })
    }
}

impl BeamData for FieldBeam {
    fn dim(&self) -> usize {
        self.field.dim
    }
    fn order(&self) -> usize {
        self.k
    }
    fn provenance(&self) -> Provenance {
        Provenance::ComputedFromField
    }
    fn eval(&self, a: &Point, v: &Point) -> f64 {
        divergent_beam(&self.field, a, v, self.k)
    }
    fn support_hint(&self) -> Option<&ScalarField> {
        Some(&self.field)
    }
}

/// Beam data from a closure, for synthetic tests and external models.
pub struct FnBeam<F> {
    pub dim: usize,
    pub k: usize,
    pub f: F,
}

impl<F> BeamData for FnBeam<F>
where
    F: Fn(&Point, &Point) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> usize {
        self.k
    }
    fn provenance(&self) -> Provenance {
        Provenance::External
    }
    fn eval(&self, a: &Point, v: &Point) -> f64 {
        (self.f)(a, v)
    }
}

/// Restricts another evaluator to the closure of a vertex set.
pub struct Restricted<'a, B: ?Sized> {
    pub inner: &'a B,
    pub set: &'a ConvexVertexSet,
}

impl<B: BeamData + ?Sized> BeamData for Restricted<'_, B> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn order(&self) -> usize {
        self.inner.order()
    }
    fn provenance(&self) -> Provenance {
        self.inner.provenance()
    }
    fn eval(&self, a: &Point, v: &Point) -> f64 {
        self.inner.eval(a, v)
    }
    fn contains(&self, a: &Point) -> bool {
        self.set.contains_closed(a) && self.inner.contains(a)
    }
    fn support_hint(&self) -> Option<&ScalarField> {
        self.inner.support_hint()
    }
}

fn central(phi: &dyn Fn(f64) -> f64, j: usize, h: f64) -> f64 {
    match j {
        0 => phi(0.0),
        1 => (phi(h) - phi(-h)) / (2.0 * h),
        2 => (phi(h) - 2.0 * phi(0.0) + phi(-h)) / (h * h),
        3 => (phi(2.0 * h) - 2.0 * phi(h) + 2.0 * phi(-h) - phi(-2.0 * h)) / (2.0 * h * h * h),
        _ => {
            (phi(2.0 * h) - 4.0 * phi(h) + 6.0 * phi(0.0) - 4.0 * phi(-h) + phi(-2.0 * h))
                / (h * h * h * h)
        }
    }
}

/// Reach of the central stencil for derivative order `j` at step `tau`.
pub fn stencil_reach(j: usize, tau: f64) -> f64 {
    if j >= 3 {
        2.0 * tau
    } else {
        tau
    }
}

/// `(D_v)^j u(a, v)` by second-order central differences of
/// `φ(t) = u(a + t v, v)` at steps `τ` and `τ/2`, combined by one Richardson
/// step: `(4 D(τ/2) - D(τ)) / 3`.
pub fn directional_derivative(
    u: &(impl BeamData + ?Sized),
    a: &Point,
    v: &Point,
    j: usize,
    tau: f64,
) -> Result<f64> {
    if j > 4 {
        return Err(invalid("j", format!("derivative order {j} unsupported")));
    }
    if !(tau > 0.0) {
        return Err(invalid("tau", "step must be positive"));
    }
    if j == 0 {
        return Ok(u.eval(a, v));
    }
    let reach = stencil_reach(j, tau);
    for t in [-reach, reach] {
        let p = axpy(a, t, v);
        if !u.contains(&p) {
            return Err(Error::StencilOutsideDomain(p));
        }
    }
    let phi = |t: f64| u.eval(&axpy(a, t, v), v);
    let d1 = central(&phi, j, tau);
    let d2 = central(&phi, j, 0.5 * tau);
    Ok((4.0 * d2 - d1) / 3.0)
}

/// One-sided derivative of order `j <= 2` at `a` from samples
/// `φ(0), φ(-τ), φ(-2τ), φ(-3τ)` stepping against `v`.
pub fn backward_derivative(samples: &[f64; 4], j: usize, tau: f64) -> f64 {
    let [p0, p1, p2, p3] = *samples;
    match j {
        0 => p0,
        1 => (11.0 * p0 - 18.0 * p1 + 9.0 * p2 - 2.0 * p3) / (6.0 * tau),
        _ => (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) / (tau * tau),
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `(-1)^{k+1} k!`
pub fn transport_constant(k: usize) -> f64 {
    let s = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
    s * factorial(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BvpParams {
    /// FD step as a fraction of `diam(A)`.
    pub tau_fraction: f64,
    pub interior_points: usize,
    pub boundary_points: usize,
    /// Directions tested per interior point.
    pub directions: usize,
    pub interior_tol: f64,
    pub boundary_tol: f64,
}

impl Default for BvpParams {
    fn default() -> Self {
        Self {
            tau_fraction: 0.01,
            interior_points: 48,
            boundary_points: 32,
            directions: 8,
            interior_tol: 1e-4,
            boundary_tol: 1e-4,
        }
    }
}

/// Deterministic low-discrepancy points in the unit ball of dimension `n`.
pub fn halton_ball(n: usize, count: usize) -> Vec<Point> {
    fn radical_inverse(mut i: usize, base: usize) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    let mut out = Vec::with_capacity(count);
    let mut i = 1;
    while out.len() < count {
        let mut p = [0.0; 3];
        for (d, base) in [2, 3, 5].iter().enumerate().take(n) {
            p[d] = 2.0 * radical_inverse(i, *base) - 1.0;
        }
        if dot(&p, &p) < 1.0 {
            out.push(p);
        }
        i += 1;
    }
    out
}

/// Direction set used by the interior checks: a well-separated subset of a
/// sphere grid.
pub fn test_directions(n: usize, count: usize) -> Vec<Point> {
    match n {
        2 => (0..count)
            .map(|q| {
                let th = std::f64::consts::PI * (2 * q + 1) as f64 / count as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect(),
        _ => {
            let g = sphere_grid(3, 8).expect("valid resolution");
            g.spread_subset(count).into_iter().map(|i| g.nodes[i]).collect()
        }
    }
}

/// Interior points of `A` at least `margin` from the boundary, in scaled
/// Halton order.
pub fn interior_samples(set: &ConvexVertexSet, count: usize, margin: f64) -> Vec<Point> {
    let shrink = (1.0 - margin / set.min_radius()).max(0.0);
    halton_ball(set.dim, count)
        .into_iter()
        .map(|y| {
            let mut u = [0.0; 3];
            for i in 0..set.dim {
                u[i] = y[i] * shrink;
            }
            let mut x = [0.0; 3];
            for i in 0..set.dim {
                x[i] = set.center[i] + set.radii[i] * u[i];
            }
            x
        })
        .collect()
}

/// Boundary points `c + r ⊙ u` for `u` on a sphere grid.
pub fn boundary_samples(set: &ConvexVertexSet, count: usize) -> Vec<Point> {
    let n = set.dim;
    let dirs: Vec<Point> = match n {
        2 => (0..count)
            .map(|q| {
                let th = 2.0 * std::f64::consts::PI * (q as f64 + 0.5) / count as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect(),
        _ => {
            // golden-angle spiral
            let ga = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|q| {
                    let z = 1.0 - 2.0 * (q as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let ph = ga * q as f64;
                    [r * ph.cos(), r * ph.sin(), z]
                })
                .collect()
        }
    };
    dirs.iter().map(|u| set.boundary_point(u)).collect()
}

/// Outflow directions at boundary point `a` whose inward stencil of length
/// `reach` stays in the closed set. Candidates come from `candidates`.
pub fn admissible_outflow(set: &ConvexVertexSet, a: &Point, candidates: &[Point], reach: f64) -> Vec<Point> {
    candidates
        .iter()
        .filter(|v| set.is_outflow(a, v).unwrap_or(false))
        .filter(|v| set.contains_closed(&axpy(a, -reach, v)))
        .copied()
        .collect()
}

/// Checks the transport boundary-value problem for `u`: the interior
/// equation `(D_v)^{k+1} u = (-1)^{k+1} k! f` (or directional independence
/// when `f` is unknown) and vanishing of `(D_v)^j u` on the outflow boundary
/// for `j <= k`.
pub fn check_transport_bvp(
    u: &(impl BeamData + ?Sized),
    set: &ConvexVertexSet,
    k: usize,
    f: Option<&ScalarField>,
    params: &BvpParams,
) -> Result<ConsistencyReport> {
    if u.dim() != set.dim {
        return Err(Error::DimensionMismatch {
            expected: set.dim,
            found: u.dim(),
        });
    }
    if k > MAX_ORDER {
        return Err(invalid("k", format!("order {k} exceeds {MAX_ORDER}")));
    }
    let n = set.dim;
    let tau = params.tau_fraction * set.diameter();
    let restricted = Restricted { inner: u, set };
    let reach = stencil_reach(k + 1, tau);
    let pts = interior_samples(set, params.interior_points, reach * 1.01);
    let dirs = test_directions(n, params.directions);
    let c = transport_constant(k);

    // (point, sup|u|, max |D^{k+1}u - c f|, spread)
    let interior = par::try_map_range(pts.len(), |i| -> Result<(f64, f64, f64)> {
        let a = &pts[i];
        let fa = f.map(|f| f.eval(a));
        let mut sup: f64 = 0.0;
        let mut eq: f64 = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &dirs {
            sup = sup.max(u.eval(a, v).abs());
            let d = directional_derivative(&restricted, a, v, k + 1, tau)?;
            if let Some(fa) = fa {
                eq = eq.max((d - c * fa).abs());
            }
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Ok((sup, eq, hi - lo))
    })?;

    let bpts = boundary_samples(set, params.boundary_points);
    let cand = match n {
        2 => test_directions(2, 32),
        _ => sphere_grid(3, 8)?.nodes,
    };
    let one_sided_reach = 3.0 * tau;
    let boundary = par::map_range(bpts.len(), |i| {
        let a = &bpts[i];
        let mut res = vec![0.0f64; k + 1];
        let mut sup: f64 = 0.0;
        let mut used = 0usize;
        for v in admissible_outflow(set, a, &cand, one_sided_reach) {
            let s = [0.0, 1.0, 2.0, 3.0].map(|m| u.eval(&axpy(a, -m * tau, &v), &v));
            sup = sup.max(s[0].abs());
            for (j, r) in res.iter_mut().enumerate() {
                *r = r.max(backward_derivative(&s, j, tau).abs());
            }
            used += 1;
        }
        (res, sup, used)
    });

    let sup_u = interior
        .iter()
        .map(|r| r.0)
        .chain(boundary.iter().map(|b| b.1))
        .fold(0.0, f64::max);
    let norm = sup_u.max(1.0);
    let mut rep = ConsistencyReport::new();
    if f.is_some() {
        let eq = interior.iter().map(|r| r.1).fold(0.0, f64::max);
        rep.check("interior_equation", eq / norm, params.interior_tol);
    }
    let spread = interior.iter().map(|r| r.2).fold(0.0, f64::max);
    rep.check("directional_independence", spread / norm, params.interior_tol);
    for j in 0..=k {
        let r = boundary.iter().map(|b| b.0[j]).fold(0.0, f64::max);
        rep.check(format!("outflow_d{j}"), r / norm, params.boundary_tol);
    }
    let used: usize = boundary.iter().map(|b| b.2).sum();
    rep.note(format!(
        "tau={tau:.4e}; {} interior points x {} directions; {used} outflow pairs",
        pts.len(),
        dirs.len()
    ));
    Ok(rep)
}

/// Uniform tensor grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputGrid {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
    pub counts: [usize; 3],
}

impl OutputGrid {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], count: usize) -> Self {
        let mut c = [1usize; 3];
        for x in c.iter_mut().take(dim) {
            *x = count;
        }
        Self {
            dim,
            lo: crate::vector::from_slice(lo),
            hi: crate::vector::from_slice(hi),
            counts: c,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, d: usize) -> Vec<f64> {
        let m = self.counts[d];
        if m == 1 {
            return vec![0.5 * (self.lo[d] + self.hi[d])];
        }
        (0..m)
            .map(|i| self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (m - 1) as f64)
            .collect()
    }

    /// Node `idx` in row-major order, first axis slowest.
    pub fn node(&self, idx: usize) -> Point {
        let mut p = [0.0; 3];
        let mut rem = idx;
        for d in (0..self.dim).rev() {
            let m = self.counts[d];
            let i = rem % m;
            rem /= m;
            p[d] = if m == 1 {
                0.5 * (self.lo[d] + self.hi[d])
            } else {
                self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (m - 1) as f64
            };
        }
        p
    }

    pub fn shape(&self) -> Vec<usize> {
        self.counts[..self.dim].to_vec()
    }
}

/// A field sampled on an [`OutputGrid`]; `valid[i]` is false where the node
/// was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    pub grid: OutputGrid,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GriddedField {
    pub fn skipped(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Relative L² and sup errors against `f` over valid nodes.
    pub fn errors_against(&self, f: &ScalarField) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut sup_e: f64 = 0.0;
        let mut sup_f: f64 = 0.0;
        for (i, (&val, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if !ok {
                continue;
            }
            let exact = f.eval(&self.grid.node(i));
            num += (val - exact).powi(2);
            den += exact * exact;
            sup_e = sup_e.max((val - exact).abs());
            sup_f = sup_f.max(exact.abs());
        }
        let rel = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        let sup = if sup_f > 0.0 { sup_e / sup_f } else { sup_e };
        (rel, sup)
    }

    /// Relative L² difference over nodes valid in both.
    pub fn relative_difference(&self, other: &GriddedField) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.values.len() {
            if self.valid[i] && other.valid[i] {
                num += (self.values[i] - other.values[i]).powi(2);
                den += self.values[i].powi(2);
            }
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    }
}

/// `f(a) = ((-1)^{k+1} / k!) (D_v)^{k+1} u(a, v)` on grid nodes whose
/// stencil fits in the closed set. Other nodes are skipped and flagged.
pub fn reconstruct_from_beam(
    u: &(impl BeamData + ?Sized),
    set: &ConvexVertexSet,
    k: usize,
    v: &Point,
    grid: &OutputGrid,
    tau: f64,
) -> GriddedField {
    let restricted = Restricted { inner: u, set };
    let c = transport_constant(k);
    let out = par::map_range(grid.len(), |i| {
        let a = grid.node(i);
        match directional_derivative(&restricted, &a, v, k + 1, tau) {
            Ok(d) if d.is_finite() => (d / c, true),
            _ => (0.0, false),
        }
    });
    GriddedField {
        grid: grid.clone(),
        values: out.iter().map(|o| o.0).collect(),
        valid: out.iter().map(|o| o.1).collect(),
    }
}
