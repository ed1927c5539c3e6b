//! Conical Radon and Compton transforms: forward model by composition,
//! a volumetric mollified-delta oracle, and the convex-geometry range check
//! with reconstruction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::beam::{
    check_transport_bvp, directional_derivative, halton_ball, reconstruct_from_beam, stencil_reach,
    test_directions, BeamData, BvpParams, FieldBeam, GriddedField, OutputGrid, Provenance, Restricted,
    MAX_ORDER,
};
use crate::corruption::{shift_row, Corruption, CorruptionKind};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ConvexVertexSet, SphereGrid};
use crate::harmonics::{Coeffs, SphereSpectral};
use crate::par;
use crate::phantom::ScalarField;
use crate::planar::{check_planar, projective_data, PlanarGrids, PlanarParams};
use crate::report::ConsistencyReport;
use crate::spherical::{check_sst_range, limit_from_row, s_grid, spherical_section, SectionData, SphereFunction, SstParams};
use crate::vector::{dot, norm, sub, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryTag {
    Convex,
    Planar,
}

/// `g(a, β, s)` stored at `(vertex * nβ + β) * ns + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeData {
    pub geometry: GeometryTag,
    pub dim: usize,
    pub k: usize,
    pub vertices: Vec<Point>,
    pub grid: SphereGrid,
    pub s: Vec<f64>,
    pub s_max: f64,
    pub values: Vec<f64>,
}

impl ConeData {
    pub fn ns(&self) -> usize {
        self.s.len()
    }

    pub fn row(&self, vertex: usize, beta: usize) -> &[f64] {
        let ns = self.ns();
        let off = (vertex * self.grid.len() + beta) * ns;
        &self.values[off..off + ns]
    }

    pub fn section(&self, vertex: usize) -> SectionData {
        let block = self.grid.len() * self.ns();
        SectionData {
            grid: self.grid.clone(),
            s: self.s.clone(),
            s_max: self.s_max,
            values: self.values[vertex * block..(vertex + 1) * block].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.vertices.len() * self.grid.len() * self.ns();
        if self.values.len() != expect {
            return Err(Error::DimensionMismatch {
                expected: expect,
                found: self.values.len(),
            });
        }
        if !self.grid.is_antipodal() {
            return Err(Error::NotAntipodal);
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cone data"));
        }
        if self.geometry == GeometryTag::Planar && self.vertices.iter().any(|a| a[self.dim - 1] != 0.0) {
            return Err(invalid("vertices", "planar vertices must lie on x_n = 0"));
        }
        Ok(())
    }

    /// Applies a corruption to every value. Pointwise kinds use the vertex
    /// and `(β, s)` as keys; the s-shift resamples each row at `s + ε`.
    pub fn corrupted(&self, c: &Corruption) -> ConeData {
        let mut out = self.clone();
        if c.is_identity() {
            return out;
        }
        let ns = self.ns();
        let nb = self.grid.len();
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ds = self.s[1] - self.s[0];
        for vi in 0..self.vertices.len() {
            for j in 0..nb {
                let off = (vi * nb + j) * ns;
                let row = &mut out.values[off..off + ns];
                match c.kind {
                    CorruptionKind::SShift => {
                        let shifted = shift_row(row, c.amplitude / ds);
                        row.copy_from_slice(&shifted);
                    }
                    _ => {
                        let b = self.grid.nodes[j];
                        for (i, x) in row.iter_mut().enumerate() {
                            *x = c.apply(*x, &self.vertices[vi], &[b[0], b[1], b[2], self.s[i]], scale);
                        }
                    }
                }
            }
        }
        out
    }
}

/// `v ↦ u(a, v)` for a fixed vertex.
pub struct VertexBeam<'a, B: ?Sized> {
    pub u: &'a B,
    pub a: Point,
}

impl<B: BeamData + ?Sized> SphereFunction for VertexBeam<'_, B> {
    fn dim(&self) -> usize {
        self.u.dim()
    }
    fn eval(&self, v: &Point) -> f64 {
        self.u.eval(&self.a, v)
    }
}

/// `C^k f(a, β, s) = S(R^k_a f)(β, s)`.
pub fn cone_composed(field: &ScalarField, a: &Point, beta: &Point, s: f64, k: usize, circle_nodes: usize) -> Result<f64> {
    let u = FieldBeam::new(field.clone(), k)?;
    spherical_section(&VertexBeam { u: &u, a: *a }, beta, s, circle_nodes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOpts {
    /// Cell size of the volumetric grid.
    pub spacing: f64,
    /// Include the `|x - a|^{k-n+2}` weight.
    pub with_weight: bool,
    /// Gaussian cutoff in units of `ε`.
    pub cutoff: f64,
}

impl OracleOpts {
    pub fn for_eps(eps: f64) -> Self {
        Self {
            spacing: eps,
            with_weight: true,
            cutoff: 8.0,
        }
    }
}

/// `√(1-s²) ∫ f(x) δ_ε((x-a)·β - |x-a| s) |x-a|^{k-n+2} dx` with a Gaussian
/// `δ_ε` of standard deviation `ε`.
pub fn cone_direct_oracle(field: &ScalarField, a: &Point, beta: &Point, s: f64, k: usize, eps: f64) -> f64 {
    cone_direct_oracle_multi(field, a, beta, s, k, &[eps], &OracleOpts::for_eps(eps))[0]
}

/// Oracle values for several widths from one pass over a midpoint grid.
/// Cells farther than `cutoff * max(eps)` from the cone in the defining
/// function are skipped using its Lipschitz bound `1 + |s|`.
pub fn cone_direct_oracle_multi(
    field: &ScalarField,
    a: &Point,
    beta: &Point,
    s: f64,
    k: usize,
    eps: &[f64],
    opts: &OracleOpts,
) -> Vec<f64> {
    let n = field.dim;
    let mut acc = vec![0.0; eps.len()];
    if field.terms.is_empty() {
        return acc;
    }
    let h = opts.spacing;
    let emax = eps.iter().cloned().fold(0.0, f64::max);
    let band = opts.cutoff * emax;
    let lip = 1.0 + s.abs();
    let expo = k as i32 + 2 - n as i32;
    let (lo, hi) = field.bounding_box();
    let cells: Vec<usize> = (0..n).map(|d| ((hi[d] - lo[d]) / h).ceil() as usize).collect();
    let last = n - 1;
    let ncols: usize = cells[..last].iter().product();
    let norms: Vec<f64> = eps.iter().map(|e| 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * e)).collect();

    let per_col = par::map_range(ncols, |col| {
        let mut out = vec![0.0; eps.len()];
        let mut x = [0.0; 3];
        let mut rem = col;
        for d in (0..last).rev() {
            let i = rem % cells[d];
            rem /= cells[d];
            x[d] = lo[d] + (i as f64 + 0.5) * h;
        }
        // union of chords of the column through the support balls
        let mut chords: Vec<(f64, f64)> = field
            .terms
            .iter()
            .filter_map(|b| {
                let mut r2 = b.radius * b.radius;
                for d in 0..last {
                    r2 -= (x[d] - b.center[d]).powi(2);
                }
                (r2 > 0.0).then(|| (b.center[last] - r2.sqrt(), b.center[last] + r2.sqrt()))
            })
            .collect();
        chords.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for c in chords {
            match merged.last_mut() {
                Some(m) if c.0 <= m.1 => m.1 = m.1.max(c.1),
                _ => merged.push(c),
            }
        }
        let mut last_idx: isize = -1;
        for (c0, c1) in merged {
            let mut i = (((c0 - lo[last]) / h) - 0.5).ceil().max(0.0) as isize;
            i = i.max(last_idx + 1);
            let imax = (((c1 - lo[last]) / h) - 0.5).floor() as isize;
            while i <= imax {
                x[last] = lo[last] + (i as f64 + 0.5) * h;
                let d = sub(&x, a);
                let r = norm(&d);
                let phi = dot(&d, beta) - r * s;
                if phi.abs() > band {
                    let skip = ((phi.abs() - band) / (lip * h)).floor().max(1.0);
                    i += skip as isize;
                    continue;
                }
                let fx = field.eval(&x);
                if fx != 0.0 {
                    let w = if opts.with_weight { r.powi(expo) } else { 1.0 };
                    for (q, e) in eps.iter().enumerate() {
                        let z = phi / e;
                        out[q] += fx * w * norms[q] * (-0.5 * z * z).exp();
                    }
                }
                last_idx = i;
                i += 1;
            }
        }
        out
    });
    for col in per_col {
        for (q, v) in col.iter().enumerate() {
            acc[q] += v;
        }
    }
    let scale = h.powi(n as i32) * (1.0 - s * s).sqrt();
    acc.iter().map(|v| v * scale).collect()
}

/// Cone data of arbitrary beam data `u` by the composition identity.
pub fn forward_cone_from_beam(
    u: &(impl BeamData + ?Sized),
    geometry: GeometryTag,
    vertices: &[Point],
    grid: &SphereGrid,
    ns: usize,
    s_max: f64,
    circle_nodes: usize,
) -> Result<ConeData> {
    if !(s_max > 0.0 && s_max < 1.0) {
        return Err(invalid("s_max", "must lie in (0, 1)"));
    }
    let s = s_grid(ns, s_max);
    let nb = grid.len();
    let blocks = par::try_map_range(vertices.len() * nb, |q| {
        let (vi, j) = (q / nb, q % nb);
        let g = VertexBeam { u, a: vertices[vi] };
        s.iter()
            .map(|&si| spherical_section(&g, &grid.nodes[j], si, circle_nodes))
            .collect::<Result<Vec<f64>>>()
    })?;
    let data = ConeData {
        geometry,
        dim: u.dim(),
        k: u.order(),
        vertices: vertices.to_vec(),
        grid: grid.clone(),
        s,
        s_max,
        values: blocks.concat(),
    };
    data.validate()?;
    Ok(data)
}

pub fn forward_cone(
    field: &ScalarField,
    geometry: GeometryTag,
    vertices: &[Point],
    grid: &SphereGrid,
    ns: usize,
    s_max: f64,
    k: usize,
    circle_nodes: usize,
) -> Result<ConeData> {
    let u = FieldBeam::new(field.clone(), k)?;
    forward_cone_from_beam(&u, geometry, vertices, grid, ns, s_max, circle_nodes)
}

/// Beam data tabulated at vertices and sphere-grid directions. Off-grid
/// directions use the band-limited interpolant; unknown vertices yield NaN.
pub struct TabulatedBeam {
    dim: usize,
    k: usize,
    grid: SphereGrid,
    spectral: SphereSpectral,
    vertices: Vec<Point>,
    values: Vec<f64>,
    coeffs: Vec<Coeffs>,
    index: HashMap<[i64; 3], usize>,
}

const KEY_QUANTUM: f64 = 1e-9;

fn key_of(x: &Point) -> [i64; 3] {
    [0, 1, 2].map(|d| (x[d] / KEY_QUANTUM).round() as i64)
}

impl TabulatedBeam {
    pub fn new(dim: usize, k: usize, grid: SphereGrid, vertices: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        let nb = grid.len();
        if values.len() != vertices.len() * nb {
            return Err(Error::DimensionMismatch {
                expected: vertices.len() * nb,
                found: values.len(),
            });
        }
        let spectral = SphereSpectral::new(&grid);
        let coeffs = par::map_range(vertices.len(), |vi| spectral.analyze(&values[vi * nb..(vi + 1) * nb]));
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            index.entry(key_of(v)).or_insert(i);
        }
        Ok(Self {
            dim,
            k,
            grid,
            spectral,
            vertices,
            values,
            coeffs,
            index,
        })
    }

    pub fn lookup(&self, a: &Point) -> Option<usize> {
        let k = key_of(a);
        if let Some(&i) = self.index.get(&k) {
            return Some(i);
        }
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if let Some(&i) = self.index.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    /// Values at vertex `vi` over the sphere grid.
    pub fn row(&self, vi: usize) -> &[f64] {
        let nb = self.grid.len();
        &self.values[vi * nb..(vi + 1) * nb]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl BeamData for TabulatedBeam {
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
        let Some(vi) = self.lookup(a) else {
            return f64::NAN;
        };
        match self.grid.locate(v) {
            Some(j) => self.values[vi * self.grid.len() + j],
            None => self.spectral.eval_at(&self.coeffs[vi], v),
        }
    }
    fn contains(&self, a: &Point) -> bool {
        self.lookup(a).is_some()
    }
}

/// Beam data `u(a, β)` recovered from cone data by the endpoint limit.
pub fn extract_beam(g: &ConeData) -> Result<TabulatedBeam> {
    let nb = g.grid.len();
    let vals = par::try_map_range(g.vertices.len() * nb, |q| limit_from_row(g.row(q / nb, q % nb), &g.s, g.dim))?;
    TabulatedBeam::new(g.dim, g.k, g.grid.clone(), g.vertices.clone(), vals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrtParams {
    /// Transport checks on the extracted beam data; thresholds apply to the
    /// directional independence and outflow entries.
    pub bvp: BvpParams,
    /// Points sampled in the shell between `K` and `∂A`.
    pub shell_points: usize,
    /// `K = {x : dist(x, ∂A) >= margin_fraction * diam(A)}`.
    pub margin_fraction: f64,
    pub shell_tol: f64,
    /// Reconstruction grid nodes per axis; 0 leaves the grid out of the plan.
    pub recon_points: usize,
    /// Reconstruction grid half-width as a fraction of each semi-axis.
    pub recon_extent: f64,
    pub sst: SstParams,
}

impl Default for CrtParams {
    fn default() -> Self {
        Self {
            bvp: BvpParams {
                tau_fraction: 0.01,
                interior_points: 12,
                boundary_points: 8,
                directions: 8,
                interior_tol: 1e-3,
                boundary_tol: 1e-3,
            },
            shell_points: 8,
            margin_fraction: 0.1,
            shell_tol: 1e-3,
            recon_points: 21,
            recon_extent: 0.65,
            // the k = 1 reconstruction differentiates the endpoint-extracted beam
            sst: SstParams {
                ns: 256,
                s_max: 0.999,
                ..SstParams::default()
            },
        }
    }
}

/// Records every vertex a computation queries.
struct Recorder<'a> {
    dim: usize,
    set: &'a ConvexVertexSet,
    seen: std::sync::Mutex<Vec<Point>>,
}

impl BeamData for Recorder<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn order(&self) -> usize {
        0
    }
    fn provenance(&self) -> Provenance {
        Provenance::External
    }
    fn eval(&self, a: &Point, _v: &Point) -> f64 {
        self.seen.lock().expect("recorder lock").push(*a);
        0.0
    }
    fn contains(&self, a: &Point) -> bool {
        self.set.contains_closed(a)
    }
}

/// Sorted, deduplicated (up to the lookup quantum) copy of `pts`.
fn dedup_points(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|p, q| key_of(p).cmp(&key_of(q)));
    let mut keys: std::collections::HashSet<[i64; 3]> = std::collections::HashSet::new();
    let mut out = Vec::new();
    'outer: for p in pts {
        let k = key_of(&p);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if keys.contains(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        continue 'outer;
                    }
                }
            }
        }
        keys.insert(k);
        out.push(p);
    }
    out
}

/// Vertex layout for convex-geometry cone data: exactly the vertices queried
/// by the transport checks, the shell test and the reconstruction stencils.
#[derive(Debug, Clone, PartialEq)]
pub struct CrtPlan {
    pub k: usize,
    pub tau: f64,
    pub margin: f64,
    pub shell: Vec<Point>,
    pub directions: Vec<Point>,
    pub recon_grid: Option<OutputGrid>,
    pub recon_directions: Vec<Point>,
    vertices: Vec<Point>,
}

/// Halton points of `A` with `dist(·, ∂A) < margin` whose stencils of reach
/// `reach` stay inside `A`.
fn shell_samples(set: &ConvexVertexSet, count: usize, margin: f64, reach: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(count);
    let mut batch = 4 * count.max(1);
    while out.len() < count && batch < 1 << 20 {
        out.clear();
        for y in halton_ball(set.dim, batch) {
            let mut x = set.center;
            for d in 0..set.dim {
                x[d] += set.radii[d] * y[d];
            }
            let dist = set.boundary_distance_lower(&x);
            if dist < margin && dist > reach * 1.01 {
                out.push(x);
                if out.len() == count {
                    break;
                }
            }
        }
        batch *= 2;
    }
    out
}

impl CrtPlan {
    pub fn new(set: &ConvexVertexSet, k: usize, params: &CrtParams) -> Result<Self> {
        if k > MAX_ORDER {
            return Err(invalid("k", format!("order {k} exceeds {MAX_ORDER}")));
        }
        let n = set.dim;
        let diam = set.diameter();
        let tau = params.bvp.tau_fraction * diam;
        let margin = params.margin_fraction * diam;
        let reach = stencil_reach(k + 1, tau);
        let shell = shell_samples(set, params.shell_points, margin, reach);
        let directions = test_directions(n, params.bvp.directions);
        let rec = Recorder {
            dim: n,
            set,
            seen: std::sync::Mutex::new(Vec::new()),
        };
        check_transport_bvp(&rec, set, k, None, &params.bvp)?;
        let rs = Restricted { inner: &rec, set };
        for a in &shell {
            for v in &directions {
                directional_derivative(&rs, a, v, k + 1, tau)?;
            }
        }
        let (recon_grid, recon_directions) = if params.recon_points > 0 {
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            for d in 0..n {
                lo[d] = set.center[d] - params.recon_extent * set.radii[d];
                hi[d] = set.center[d] + params.recon_extent * set.radii[d];
            }
            let grid = OutputGrid::new(n, &lo[..n], &hi[..n], params.recon_points);
            let dirs: Vec<Point> = (0..2).map(|d| {
                let mut e = [0.0; 3];
                e[d] = 1.0;
                e
            }).collect();
            for v in &dirs {
                reconstruct_from_beam(&rec, set, k, v, &grid, recon_tau(&grid));
            }
            (Some(grid), dirs)
        } else {
            (None, Vec::new())
        };
        let vertices = dedup_points(rec.seen.into_inner().expect("recorder lock"));
        Ok(Self {
            k,
            tau,
            margin,
            shell,
            directions,
            recon_grid,
            recon_directions,
            vertices,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
}

/// Reconstruction step: twice the smallest grid spacing, so every stencil
/// point is a node of the grid extended by its reach.
fn recon_tau(grid: &OutputGrid) -> f64 {
    (0..grid.dim)
        .filter(|&d| grid.counts[d] > 1)
        .map(|d| 2.0 * (grid.hi[d] - grid.lo[d]) / (grid.counts[d] - 1) as f64)
        .fold(f64::INFINITY, f64::min)
}

fn require_convex(g: &ConeData, set: &ConvexVertexSet) -> Result<()> {
    if g.geometry != GeometryTag::Convex {
        return Err(Error::GeometryMismatch {
            expected: "convex".into(),
            found: "planar".into(),
        });
    }
    if g.dim != set.dim {
        return Err(Error::DimensionMismatch {
            expected: set.dim,
            found: g.dim,
        });
    }
    g.validate()
}

/// Range check of convex-geometry cone data: per-vertex spherical section
/// conditions, then the transport conditions on the extracted beam data
/// (outflow vanishing, directional independence, vanishing outside `K`).
pub fn check_crt_range(g: &ConeData, set: &ConvexVertexSet, k: usize, params: &CrtParams) -> Result<ConsistencyReport> {
    require_convex(g, set)?;
    let plan = CrtPlan::new(set, k, params)?;
    let spectral = SphereSpectral::new(&g.grid);
    let per_vertex = par::try_map_range(g.vertices.len(), |vi| check_sst_range(&g.section(vi), &spectral, &params.sst))?;
    let mut rep = ConsistencyReport::new();
    rep.merge("sst.", ConsistencyReport::worst_of(&per_vertex));

    let u = extract_beam(g)?;
    let missing = plan.vertices().iter().filter(|p| u.lookup(p).is_none()).count();
    rep.check("stencil_coverage", missing as f64, 0.0).detail =
        Some(format!("{missing} of {} planned vertices absent", plan.vertices().len()));

    let bvp = check_transport_bvp(&u, set, k, None, &params.bvp)?;
    for e in &bvp.entries {
        rep.entries.push(e.clone());
    }
    rep.notes.extend(bvp.notes.iter().cloned());

    let norm_u = u.sup_abs().max(1.0);
    let restricted = Restricted { inner: &u, set };
    let shell = par::map_range(plan.shell.len(), |i| {
        plan.directions
            .iter()
            .map(|v| match directional_derivative(&restricted, &plan.shell[i], v, k + 1, plan.tau) {
                Ok(d) => d.abs(),
                Err(_) => f64::NAN,
            })
            .fold(0.0, |m: f64, d| if d.is_nan() || m.is_nan() { f64::NAN } else { m.max(d) })
    });
    let worst = shell.iter().fold(0.0, |m: f64, d| if d.is_nan() || m.is_nan() { f64::NAN } else { m.max(*d) });
    if plan.shell.is_empty() {
        rep.vacuous("support_vanishing", "no shell point admits a full stencil");
    } else {
        rep.check("support_vanishing", worst / norm_u, params.shell_tol);
    }
    rep.note(format!(
        "{} vertices; {} shell points; margin={:.3e}; tau={:.3e}",
        g.vertices.len(),
        plan.shell.len(),
        plan.margin,
        plan.tau
    ));
    Ok(rep)
}

/// `f = ((-1)^{k+1}/k!) (D_v)^{k+1} u` on the plan reconstruction grid, with
/// `u` extracted from cone data. `v` must be one of the plan's
/// reconstruction directions.
pub fn reconstruct_from_crt(g: &ConeData, set: &ConvexVertexSet, k: usize, v: &Point, params: &CrtParams) -> Result<GriddedField> {
    require_convex(g, set)?;
    let plan = CrtPlan::new(set, k, params)?;
    let grid = plan
        .recon_grid
        .ok_or_else(|| invalid("recon_points", "plan has no reconstruction grid"))?;
    if !plan.recon_directions.iter().any(|d| norm(&sub(d, v)) < 1e-12) {
        return Err(invalid("v", "reconstruction direction must be a coordinate axis"));
    }
    let u = extract_beam(g)?;
    Ok(reconstruct_from_beam(&u, set, k, v, &grid, recon_tau(&grid)))
}

/// Forward cone data on the vertex layout of [`CrtPlan`].
pub fn forward_crt(
    u: &(impl BeamData + ?Sized),
    set: &ConvexVertexSet,
    grid: &SphereGrid,
    params: &CrtParams,
) -> Result<ConeData> {
    let plan = CrtPlan::new(set, u.order(), params)?;
    forward_cone_from_beam(
        u,
        GeometryTag::Convex,
        plan.vertices(),
        grid,
        params.sst.ns,
        params.sst.s_max,
        params.sst.circle_nodes,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComptonParams {
    pub sst: SstParams,
    /// Threshold for `max_{v_n <= 0} |u| / max |u|`.
    pub lower_tol: f64,
    /// The `ā` grid of the planar stage is also the vertex grid.
    pub planar: PlanarParams,
}

impl Default for ComptonParams {
    fn default() -> Self {
        Self {
            // the k = 1 reconstruction differentiates the endpoint-extracted beam
            sst: SstParams {
                ns: 256,
                s_max: 0.999,
                ..SstParams::default()
            },
            lower_tol: 1e-3,
            planar: PlanarParams::default(),
        }
    }
}

/// Detector vertices `(ā, 0)` in the `ā` order of [`crate::planar::ProjectiveData`].
pub fn compton_vertices(n: usize, grids: &PlanarGrids) -> Vec<Point> {
    let ax = grids.a_axis();
    match n {
        2 => ax.iter().map(|&a| [a, 0.0, 0.0]).collect(),
        _ => ax.iter().flat_map(|&a| ax.iter().map(move |&b| [a, b, 0.0])).collect(),
    }
}

pub fn forward_compton(u: &(impl BeamData + ?Sized), grid: &SphereGrid, params: &ComptonParams) -> Result<ConeData> {
    let verts = compton_vertices(u.dim(), &params.planar.grids_for(u.dim()));
    forward_cone_from_beam(
        u,
        GeometryTag::Planar,
        &verts,
        grid,
        params.sst.ns,
        params.sst.s_max,
        params.sst.circle_nodes,
    )
}

/// Range check of planar-geometry cone data: per-vertex spherical section
/// conditions, vanishing of the extracted `u` on `v_n <= 0`, then the
/// projective-data conditions on `w` built from the extracted `u`. The
/// support of `h` needs `w` at off-grid `ā`, which tabulated data cannot
/// supply; that condition is carried by the moment form.
pub fn check_compton_range(g: &ConeData, k: usize, params: &ComptonParams) -> Result<ConsistencyReport> {
    if g.geometry != GeometryTag::Planar {
        return Err(Error::GeometryMismatch {
            expected: "planar".into(),
            found: "convex".into(),
        });
    }
    g.validate()?;
    let grids = params.planar.grids_for(g.dim);
    let want = compton_vertices(g.dim, &grids);
    if want.len() != g.vertices.len() || want.iter().zip(&g.vertices).any(|(p, q)| norm(&sub(p, q)) > 1e-9) {
        return Err(invalid("vertices", "planar cone data must sit on the a-grid of the planar parameters"));
    }
    let spectral = SphereSpectral::new(&g.grid);
    let per_vertex = par::try_map_range(g.vertices.len(), |vi| check_sst_range(&g.section(vi), &spectral, &params.sst))?;
    let mut rep = ConsistencyReport::new();
    rep.merge("sst.", ConsistencyReport::worst_of(&per_vertex));

    let u = extract_beam(g)?;
    let n = g.dim;
    let nb = g.grid.len();
    let mut lower: f64 = 0.0;
    let mut upper: f64 = 0.0;
    for vi in 0..g.vertices.len() {
        for (j, x) in u.row(vi).iter().enumerate() {
            if g.grid.nodes[j][n - 1] <= 0.0 {
                lower = lower.max(x.abs());
            } else {
                upper = upper.max(x.abs());
            }
        }
    }
    let sup = lower.max(upper);
    let lower_res = if sup > 0.0 { lower / sup } else { 0.0 };
    rep.check("lower_hemisphere", lower_res, params.lower_tol).detail =
        Some(format!("{} vertices x {} directions", g.vertices.len(), nb));

    let w = projective_data(&u, &grids, k)?;
    let planar = check_planar(&w, None, None, &params.planar)?;
    rep.merge("planar.", planar);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_grid;
    use crate::phantom::make_bump;
    use crate::vector::normalize;

    #[test]
    fn cone_missing_support_is_zero() {
        let f = make_bump(&[0.0, 2.0], 0.5, 1.0, 2).unwrap();
        // vertex below, cone opening downward
        let v = cone_composed(&f, &[0.0, 0.0, 0.0], &[0.0, -1.0, 0.0], 0.8, 0, 0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(cone_direct_oracle(&ScalarField::zero(2), &[0.0; 3], &[1.0, 0.0, 0.0], 0.2, 0, 1e-2), 0.0);
    }

    #[test]
    fn composed_matches_oracle_in_2d() {
        let f = make_bump(&[0.2, 1.0], 0.5, 1.0, 2).unwrap();
        let a = [-0.3, -0.2, 0.0];
        let b = normalize(&[0.3, 1.0, 0.0]);
        for k in 0..=1 {
            let c = cone_composed(&f, &a, &b, 0.9, k, 0).unwrap();
            let o = cone_direct_oracle(&f, &a, &b, 0.9, k, 1e-3);
            assert!((c - o).abs() / c.abs().max(1.0) < 1e-3, "k={k} {c} {o}");
        }
    }

    #[test]
    fn forward_is_linear_and_deterministic() {
        let f = make_bump(&[0.1, 0.0], 0.5, 1.0, 2).unwrap();
        let grid = sphere_grid(2, 8).unwrap();
        let verts = [[0.0, 0.0, 0.0], [0.5, -0.2, 0.0]];
        let g = forward_cone(&f, GeometryTag::Convex, &verts, &grid, 16, 0.95, 1, 0).unwrap();
        let g2 = forward_cone(&f.scaled(2.5), GeometryTag::Convex, &verts, &grid, 16, 0.95, 1, 0).unwrap();
        for (x, y) in g.values.iter().zip(&g2.values) {
            assert!((2.5 * x - y).abs() <= 1e-14 * y.abs().max(1.0));
        }
        let j = 5;
        let i = 3;
        let fresh = cone_composed(&f, &verts[1], &grid.nodes[j], g.s[i], 1, 0).unwrap();
        assert_eq!(g.row(1, j)[i], fresh);
        let z = forward_cone(&ScalarField::zero(2), GeometryTag::Convex, &verts, &grid, 16, 0.95, 0, 0).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tabulated_lookup_tolerates_rounding() {
        let grid = sphere_grid(2, 4).unwrap();
        let verts = vec![[0.1, 0.2, 0.0], [0.3, 0.0, 0.0]];
        let vals: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let t = TabulatedBeam::new(2, 0, grid.clone(), verts, vals).unwrap();
        assert_eq!(t.lookup(&[0.1 + 1e-16, 0.2, 0.0]), Some(0));
        assert_eq!(t.lookup(&[0.3, 1e-12, 0.0]), Some(1));
        assert!(t.lookup(&[0.3, 1e-6, 0.0]).is_none());
        assert_eq!(t.eval(&[0.3, 0.0, 0.0], &grid.nodes[2]), 10.0);
        assert!(t.eval(&[0.9, 0.0, 0.0], &grid.nodes[2]).is_nan());
    }

    fn compton_small() -> ComptonParams {
        let mut p = ComptonParams::default();
        p.planar.grids = Some(PlanarGrids {
            a_max: 1.0,
            n_a: 17,
            p_max: 4.0,
            n_p: 64,
            sigma_max: 8.0,
            n_sigma: 32,
        });
        p
    }

    #[test]
    fn compton_zero_data_passes() {
        let p = compton_small();
        let grid = sphere_grid(2, 16).unwrap();
        let u = FieldBeam::new(ScalarField::zero(2), 0).unwrap();
        let g = forward_compton(&u, &grid, &p).unwrap();
        let rep = check_compton_range(&g, 0, &p).unwrap();
        assert!(rep.pass(), "{}", rep.table());
    }

    #[test]
    fn compton_flags_support_below_detector() {
        let p = compton_small();
        let grid = sphere_grid(2, 32).unwrap();
        let f = make_bump(&[0.0, -0.6], 0.25, 1.0, 2).unwrap();
        let g = forward_compton(&FieldBeam::new(f, 0).unwrap(), &grid, &p).unwrap();
        let rep = check_compton_range(&g, 0, &p).unwrap();
        let e = rep.get("lower_hemisphere").unwrap();
        assert!(!e.pass && e.residual > 0.5, "{}", rep.table());
    }

    #[test]
    fn compton_rejects_foreign_vertices() {
        let p = compton_small();
        let grid = sphere_grid(2, 8).unwrap();
        let u = FieldBeam::new(ScalarField::zero(2), 0).unwrap();
        let mut g = forward_compton(&u, &grid, &p).unwrap();
        g.vertices[3][0] += 0.01;
        assert!(check_compton_range(&g, 0, &p).is_err());
        g.geometry = GeometryTag::Convex;
        assert!(matches!(check_compton_range(&g, 0, &p), Err(Error::GeometryMismatch { .. })));
    }
}
