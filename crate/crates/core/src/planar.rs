//! Planar-detector pipeline: scaled projective data `w`, its Fourier
//! transform `W`, the factor `H`, the inverse transform `h`, support and
//! moment tests, and reconstruction from `h`.
//!
//! Grids (per axis, `N` even):
//! `p_j = (j - N_p/2) Δp` with `Δp = 2 P_max / N_p`;
//! `ξ_m = (m - N_p/2 + 1/2) Δξ` with `Δξ = π / P_max` (half-shifted, so
//! `ξ = 0` is never sampled);
//! `σ_i = (i - N_σ/2) Δσ` with `Δσ = 2Σ / N_σ`;
//! `t_q = (q - N_σ/2) Δt` with `Δt = π / Σ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::beam::{BeamData, GriddedField, OutputGrid, MAX_ORDER};
use crate::corruption::Corruption;
use crate::error::{invalid, Error, Result};
use crate::linalg::lstsq;
use crate::par;
use crate::phantom::{ScalarField, SupportBox};
use crate::quadrature::gl16;
use crate::report::ConsistencyReport;
use crate::vector::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarGrids {
    pub a_max: f64,
    pub n_a: usize,
    pub p_max: f64,
    pub n_p: usize,
    pub sigma_max: f64,
    pub n_sigma: usize,
}

impl PlanarGrids {
    pub fn for_dim(n: usize) -> Self {
        match n {
            2 => Self {
                a_max: 2.0,
                n_a: 65,
                p_max: 4.0,
                n_p: 256,
                sigma_max: 64.0,
                n_sigma: 512,
            },
            // Same dp as n = 2 on a smaller window; building h at this size
            // is expensive and is meant for explicit small grids.
            _ => Self {
                a_max: 1.0,
                n_a: 9,
                p_max: 2.0,
                n_p: 128,
                sigma_max: 8.0,
                n_sigma: 32,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_a < 2 {
            return Err(invalid("n_a", "need at least 2 points per axis"));
        }
        for (name, v) in [("n_p", self.n_p), ("n_sigma", self.n_sigma)] {
            if v < 4 || v % 2 != 0 {
                return Err(invalid(name, "must be even and at least 4"));
            }
        }
        for (name, v) in [("a_max", self.a_max), ("p_max", self.p_max), ("sigma_max", self.sigma_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        Ok(())
    }

    /// One refinement step: `Δp` and `Δt` halve; `Δξ` and `Δσ` are kept.
    pub fn refined(&self) -> Self {
        Self {
            n_p: 2 * self.n_p,
            n_sigma: 2 * self.n_sigma,
            sigma_max: 2.0 * self.sigma_max,
            ..*self
        }
    }

    pub fn a_axis(&self) -> Vec<f64> {
        (0..self.n_a)
            .map(|i| -self.a_max + 2.0 * self.a_max * i as f64 / (self.n_a - 1) as f64)
            .collect()
    }
    pub fn dp(&self) -> f64 {
        2.0 * self.p_max / self.n_p as f64
    }
    pub fn p_axis(&self) -> Vec<f64> {
        let dp = self.dp();
        (0..self.n_p).map(|j| (j as f64 - (self.n_p / 2) as f64) * dp).collect()
    }
    pub fn dxi(&self) -> f64 {
        PI / self.p_max
    }
    pub fn xi_axis(&self) -> Vec<f64> {
        let d = self.dxi();
        (0..self.n_p).map(|m| (m as f64 - (self.n_p / 2) as f64 + 0.5) * d).collect()
    }
    pub fn dsigma(&self) -> f64 {
        2.0 * self.sigma_max / self.n_sigma as f64
    }
    pub fn sigma_axis(&self) -> Vec<f64> {
        let d = self.dsigma();
        (0..self.n_sigma).map(|i| (i as f64 - (self.n_sigma / 2) as f64) * d).collect()
    }
    pub fn dt(&self) -> f64 {
        PI / self.sigma_max
    }
    pub fn t_axis(&self) -> Vec<f64> {
        let d = self.dt();
        (0..self.n_sigma).map(|q| (q as f64 - (self.n_sigma / 2) as f64) * d).collect()
    }
    /// Unaliased length of the `t` axis, `2π / Δσ`.
    pub fn t_period(&self) -> f64 {
        2.0 * PI / self.dsigma()
    }
}

fn axes(n: usize) -> usize {
    n - 1
}

fn pow_len(m: usize, d: usize) -> usize {
    m.pow(d as u32)
}

/// Row-major multi-index (first axis slowest) of `flat` over `d` axes of
/// length `m`.
fn unflatten(flat: usize, m: usize, d: usize) -> [usize; 2] {
    match d {
        1 => [flat, 0],
        _ => [flat / m, flat % m],
    }
}

/// Detector point `(ā, 0)`.
fn detector_point(abar: &[f64]) -> Point {
    let mut a = [0.0; 3];
    a[..abar.len()].copy_from_slice(abar);
    a
}

/// Unit direction `(p̄, 1)/√(1+|p̄|²)` and its last component `v_n`.
fn direction_of(p: &[f64]) -> (Point, f64) {
    let vn = 1.0 / (1.0 + p.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let mut v = [0.0; 3];
    for (d, x) in p.iter().enumerate() {
        v[d] = x * vn;
    }
    v[p.len()] = vn;
    (v, vn)
}

/// `w(ā, p̄) = v_n^{k+1} u((ā, 0), v)`.
#[inline]
fn scaled_projective(u: &(impl BeamData + ?Sized), abar: &[f64], p: &[f64], k: usize) -> f64 {
    let (v, vn) = direction_of(p);
    vn.powi(k as i32 + 1) * u.eval(&detector_point(abar), &v)
}

/// `w(ā_i, p̄_j)` stored at `ā_flat * N_p^{n-1} + p̄_flat`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveData {
    pub dim: usize,
    pub k: usize,
    pub grids: PlanarGrids,
    pub values: Vec<f64>,
}

impl ProjectiveData {
    pub fn n_abar(&self) -> usize {
        pow_len(self.grids.n_a, axes(self.dim))
    }
    pub fn n_pbar(&self) -> usize {
        pow_len(self.grids.n_p, axes(self.dim))
    }
    pub fn abar(&self, flat: usize) -> Vec<f64> {
        let ax = self.grids.a_axis();
        let d = axes(self.dim);
        let idx = unflatten(flat, self.grids.n_a, d);
        (0..d).map(|q| ax[idx[q]]).collect()
    }
    pub fn pbar(&self, flat: usize) -> Vec<f64> {
        let ax = self.grids.p_axis();
        let d = axes(self.dim);
        let idx = unflatten(flat, self.grids.n_p, d);
        (0..d).map(|q| ax[idx[q]]).collect()
    }
    pub fn row(&self, a_flat: usize) -> &[f64] {
        let np = self.n_pbar();
        &self.values[a_flat * np..(a_flat + 1) * np]
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        self.grids.validate()?;
        let want = self.n_abar() * self.n_pbar();
        if self.values.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                found: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projective data"));
        }
        Ok(())
    }

    /// Pointwise corruption keyed by the detector point `(ā, 0)` and `p̄`;
    /// the additive level is `max |w|`.
    pub fn corrupted(&self, c: &Corruption) -> ProjectiveData {
        let scale = self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let np = self.n_pbar();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| c.apply(x, &detector_point(&self.abar(i / np)), &self.pbar(i % np), scale))
            .collect();
        ProjectiveData {
            values,
            ..self.clone()
        }
    }

    /// Max of `|w|` on the outer ring of the `p̄` grid relative to `max |w|`.
    pub fn leakage(&self) -> f64 {
        let d = axes(self.dim);
        let m = self.grids.n_p;
        let mut ring: f64 = 0.0;
        let mut all: f64 = 0.0;
        for a in 0..self.n_abar() {
            for (j, &x) in self.row(a).iter().enumerate() {
                all = all.max(x.abs());
                let idx = unflatten(j, m, d);
                if (0..d).any(|q| idx[q] == 0 || idx[q] == m - 1) {
                    ring = ring.max(x.abs());
                }
            }
        }
        if all > 0.0 {
            ring / all
        } else {
            0.0
        }
    }
}

fn check_dim_order(n: usize, k: usize) -> Result<()> {
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    if k > MAX_ORDER {
        return Err(invalid("k", format!("order {k} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

/// Samples `w` on the `(ā, p̄)` grid from a planar beam evaluator.
pub fn projective_data(u: &(impl BeamData + ?Sized), grids: &PlanarGrids, k: usize) -> Result<ProjectiveData> {
    let n = u.dim();
    check_dim_order(n, k)?;
    grids.validate()?;
    let shell = ProjectiveData {
        dim: n,
        k,
        grids: *grids,
        values: Vec::new(),
    };
    let np = shell.n_pbar();
    let rows = par::map_range(shell.n_abar(), |a| {
        let abar = shell.abar(a);
        (0..np).map(|j| scaled_projective(u, &abar, &shell.pbar(j), k)).collect::<Vec<f64>>()
    });
    let values = rows.concat();
    let w = ProjectiveData { values, ..shell };
    w.validate()?;
    Ok(w)
}

/// Centered transform along one axis of length `m` of a row-major block:
/// `X_r = Σ_j x_j exp(∓ 2πi (j - m/2)(r - m/2) / m)`, sign by `direction`.
fn centered_dft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, direction: FftDirection) {
    let m = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = FftPlanner::new().plan_fft(m, direction);
    let half_sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for o in 0..outer {
        for i in 0..inner {
            for j in 0..m {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                buf[j] = data[(o * m + j) * inner + i] * s;
            }
            fft.process(&mut buf);
            for r in 0..m {
                let s = if r % 2 == 0 { half_sign } else { -half_sign };
                data[(o * m + r) * inner + i] = buf[r] * s;
            }
        }
    }
}

/// `W(ā, ξ̄)` on the `ā` grid times the dual `ξ̄` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub dim: usize,
    pub k: usize,
    pub grids: PlanarGrids,
    /// Stored at `ā_flat * N_p^{n-1} + ξ̄_flat`.
    pub w_hat: Vec<Complex64>,
}

impl SpectralData {
    pub fn xi(&self, flat: usize) -> Vec<f64> {
        let ax = self.grids.xi_axis();
        let d = axes(self.dim);
        let idx = unflatten(flat, self.grids.n_p, d);
        (0..d).map(|q| ax[idx[q]]).collect()
    }
}

/// Riemann-sum Fourier transform in `p̄` with the half-cell phase
/// correction: `W(ā, ξ̄_m) = Δp^{n-1} Σ_j w(ā, p̄_j) e^{-i p̄_j·ξ̄_m}`.
pub fn fourier_w(w: &ProjectiveData) -> Result<SpectralData> {
    w.validate()?;
    let d = axes(w.dim);
    let g = &w.grids;
    let np = w.n_pbar();
    let shape = vec![g.n_p; d];
    let half = 0.5 * g.dxi();
    let scale = g.dp().powi(d as i32);
    let rows = par::map_range(w.n_abar(), |a| {
        let mut buf: Vec<Complex64> = w
            .row(a)
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let ph: f64 = w.pbar(j).iter().map(|p| -p * half).sum();
                Complex64::from_polar(x, ph)
            })
            .collect();
        for ax in 0..d {
            centered_dft_axis(&mut buf, &shape, ax, FftDirection::Forward);
        }
        buf.iter().map(|z| z * scale).collect::<Vec<_>>()
    });
    debug_assert!(rows.iter().all(|r| r.len() == np));
    Ok(SpectralData {
        dim: w.dim,
        k: w.k,
        grids: *g,
        w_hat: rows.concat(),
    })
}

/// Direct evaluation of the Riemann sum at an arbitrary `ξ̄`.
pub fn fourier_w_at(w: &ProjectiveData, a_flat: usize, xi: &[f64]) -> Complex64 {
    let d = axes(w.dim);
    let scale = w.grids.dp().powi(d as i32);
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &x) in w.row(a_flat).iter().enumerate() {
        let ph: f64 = w.pbar(j).iter().zip(xi).map(|(p, q)| -p * q).sum();
        acc += Complex64::from_polar(x, ph);
    }
    acc * scale
}

/// Odd integer `2m - N + 1`, proportional to the half-shifted `ξ_m`.
fn xi_odd(m: usize, n: usize) -> i64 {
    2 * m as i64 - n as i64 + 1
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `W(ā₁, ξ̄) = W(ā₂, ξ̄)` whenever `(ā₁ - ā₂)·ξ̄ = 0`. For `n = 2` the
/// condition is vacuous.
pub fn check_factorization(spectral: &SpectralData, tol: f64) -> ConsistencyReport {
    let mut rep = ConsistencyReport::new();
    if spectral.dim == 2 {
        rep.vacuous("factorization", "n = 2: no nonzero b orthogonal to a nonzero xi");
        return rep;
    }
    let g = &spectral.grids;
    let (na, np) = (g.n_a as i64, g.n_p);
    let nxi = np * np;
    let scale = spectral.w_hat.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1.0);
    let worst = par::map_range(nxi, |x| {
        let [m1, m2] = unflatten(x, np, 2);
        let (o1, o2) = (xi_odd(m1, np), xi_odd(m2, np));
        let gg = gcd(o1, o2);
        let step = (o2 / gg, -o1 / gg);
        let mut worst: f64 = 0.0;
        for i1 in 0..na {
            for i2 in 0..na {
                let w0 = spectral.w_hat[((i1 * na + i2) as usize) * nxi + x];
                let mut c = 1;
                loop {
                    let (j1, j2) = (i1 + c * step.0, i2 + c * step.1);
                    if !(0..na).contains(&j1) || !(0..na).contains(&j2) {
                        break;
                    }
                    let w1 = spectral.w_hat[((j1 * na + j2) as usize) * nxi + x];
                    worst = worst.max((w1 - w0).norm());
                    c += 1;
                }
            }
        }
        worst
    });
    let r = worst.into_iter().fold(0.0, f64::max) / scale;
    rep.check("factorization", r, tol);
    rep
}

/// `H(σ, ξ̄)` on the `σ × ξ̄` grid and its inverse transform `h(t, p̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HData {
    pub dim: usize,
    pub k: usize,
    pub grids: PlanarGrids,
    /// `H` at `σ_i * N_p^{n-1} + ξ̄_flat`.
    pub h_sigma: Vec<Complex64>,
    /// `h` at `t_q * N_p^{n-1} + p̄_flat`.
    pub h: Vec<Complex64>,
}

impl HData {
    pub fn n_pbar(&self) -> usize {
        pow_len(self.grids.n_p, axes(self.dim))
    }
    /// `max |Im h| / max |h|`.
    pub fn imaginary_residue(&self) -> f64 {
        let re = self.h.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let im = self.h.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        if re > 0.0 {
            im / re
        } else {
            0.0
        }
    }
    pub fn sup(&self) -> f64 {
        self.h.iter().fold(0.0f64, |m, z| m.max(z.re.abs()))
    }
}

/// Conservative `p̄` box containing `supp w(ā, ·)` for data of a field
/// inside `support`: `|ā + x p̄| <= R`, `x ∈ [xn_min, xn_max]`.
fn p_box(abar: &[f64], support: &SupportBox) -> Vec<(f64, f64)> {
    abar.iter()
        .map(|&a| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for x in [support.xn_min, support.xn_max] {
                for c in [-support.xbar_radius, support.xbar_radius] {
                    let p = (c - a) / x;
                    lo = lo.min(p);
                    hi = hi.max(p);
                }
            }
            (lo, hi)
        })
        .collect()
}

/// Gauss–Legendre panels for `∫ e^{-ipξ} w dp` over an interval of length
/// `len`: at least 6, and at most two oscillation periods per panel.
fn panels(len: f64, freq: f64) -> usize {
    let by_osc = (len * freq.abs() / (4.0 * PI)).ceil() as usize;
    by_osc.max(6)
}

/// `W(ā, ξ̄) = ∫ e^{-i p̄·ξ̄} w(ā, p̄) dp̄` by Gauss–Legendre panels over the
/// support box, with `w` evaluated from the beam.
fn w_hat_exact(u: &(impl BeamData + ?Sized), abar: &[f64], xi: &[f64], k: usize, support: &SupportBox) -> Complex64 {
    let rule = gl16();
    let bx = p_box(abar, support);
    let nodes: Vec<Vec<(f64, f64)>> = bx
        .iter()
        .zip(xi)
        .map(|(&(lo, hi), &q)| {
            let np = panels(hi - lo, q);
            let h = (hi - lo) / np as f64;
            let mut out = Vec::with_capacity(np * 16);
            for p in 0..np {
                let a = lo + p as f64 * h;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    out.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
                }
            }
            out
        })
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    match nodes.len() {
        1 => {
            for &(p, wt) in &nodes[0] {
                let val = scaled_projective(u, abar, &[p], k);
                if val != 0.0 {
                    acc += Complex64::from_polar(val * wt, -p * xi[0]);
                }
            }
        }
        _ => {
            for &(p1, w1) in &nodes[0] {
                for &(p2, w2) in &nodes[1] {
                    let val = scaled_projective(u, abar, &[p1, p2], k);
                    if val != 0.0 {
                        acc += Complex64::from_polar(val * w1 * w2, -(p1 * xi[0] + p2 * xi[1]));
                    }
                }
            }
        }
    }
    acc
}

/// Samples `H(σ, ξ̄) = W(σ ξ̄/|ξ̄|², ξ̄)` with `w` recomputed from the beam at
/// each off-grid `ā`, then transforms back:
/// `h(t, p̄) = (2π)^{-n} Δσ Δξ^{n-1} Σ H e^{i(tσ + p̄·ξ̄)}`.
/// `support` bounds the field that generated `u`; `ā` is unrestricted.
pub fn build_h(u: &(impl BeamData + ?Sized), support: &SupportBox, grids: &PlanarGrids, k: usize) -> Result<HData> {
    let n = u.dim();
    check_dim_order(n, k)?;
    grids.validate()?;
    if !(support.xn_min > 0.0) {
        return Err(Error::NotPlanarValid);
    }
    let d = axes(n);
    let nxi = pow_len(grids.n_p, d);
    let ns = grids.n_sigma;
    let sig = grids.sigma_axis();
    let xi_ax = grids.xi_axis();
    let xi_of = |flat: usize| -> Vec<f64> {
        let idx = unflatten(flat, grids.n_p, d);
        (0..d).map(|q| xi_ax[idx[q]]).collect()
    };
    // (σ_i, ξ_x) and (-σ_i, -ξ_x) are conjugate; compute ξ with first index
    // in the upper half, plus the σ_0 row whose negative is off-grid.
    let upper = |x: usize| unflatten(x, grids.n_p, d)[0] >= grids.n_p / 2;
    let tasks: Vec<(usize, usize)> = (0..ns)
        .flat_map(|i| (0..nxi).map(move |x| (i, x)))
        .filter(|&(i, x)| upper(x) || i == 0)
        .collect();
    let vals = par::map_slice(&tasks, |&(i, x)| {
        let xi = xi_of(x);
        let r2: f64 = xi.iter().map(|q| q * q).sum();
        let abar: Vec<f64> = xi.iter().map(|q| sig[i] * q / r2).collect();
        w_hat_exact(u, &abar, &xi, k, support)
    });
    let mut hs = vec![Complex64::new(0.0, 0.0); ns * nxi];
    for (&(i, x), v) in tasks.iter().zip(&vals) {
        hs[i * nxi + x] = *v;
    }
    let neg_xi = |x: usize| -> usize {
        let idx = unflatten(x, grids.n_p, d);
        let m = grids.n_p;
        match d {
            1 => m - 1 - idx[0],
            _ => (m - 1 - idx[0]) * m + (m - 1 - idx[1]),
        }
    };
    for i in 1..ns {
        for x in 0..nxi {
            if !upper(x) {
                hs[i * nxi + x] = hs[(ns - i) * nxi + neg_xi(x)].conj();
            }
        }
    }
    let h = inverse_h(&hs, grids, d, 1)?;
    Ok(HData {
        dim: n,
        k,
        grids: *grids,
        h_sigma: hs,
        h,
    })
}

/// Inverse transform of `H` after zero-padding by `up` in `σ` and every
/// `ξ` axis (same `Δσ`, `Δξ`), giving `h` on a grid `up` times finer in
/// `t` and `p̄` over the same period.
fn inverse_h(hs: &[Complex64], grids: &PlanarGrids, d: usize, up: usize) -> Result<Vec<Complex64>> {
    let (ns, np) = (grids.n_sigma, grids.n_p);
    let (ns2, np2) = (ns * up, np * up);
    let nxi = pow_len(np, d);
    let nxi2 = pow_len(np2, d);
    let (os, op) = ((ns2 - ns) / 2, (np2 - np) / 2);
    let mut buf = vec![Complex64::new(0.0, 0.0); ns2 * nxi2];
    for i in 0..ns {
        for x in 0..nxi {
            let idx = unflatten(x, np, d);
            let x2 = match d {
                1 => idx[0] + op,
                _ => (idx[0] + op) * np2 + idx[1] + op,
            };
            buf[(i + os) * nxi2 + x2] = hs[i * nxi + x];
        }
    }
    let mut shape = vec![ns2];
    shape.extend(std::iter::repeat(np2).take(d));
    for ax in 0..=d {
        centered_dft_axis(&mut buf, &shape, ax, FftDirection::Inverse);
    }
    let scale = grids.dsigma() * grids.dxi().powi(d as i32) / (2.0 * PI).powi(d as i32 + 1);
    let dp2 = grids.dp() / up as f64;
    let half = 0.5 * grids.dxi();
    for q in 0..ns2 {
        for x in 0..nxi2 {
            let idx = unflatten(x, np2, d);
            let ph: f64 = (0..d).map(|a| (idx[a] as f64 - (np2 / 2) as f64) * dp2 * half).sum();
            buf[q * nxi2 + x] *= Complex64::from_polar(scale, ph);
        }
    }
    Ok(buf)
}

/// `(-t)^{-k-2} f(-p̄/t, -1/t)` for `t < 0`, else 0.
pub fn h_closed_form(field: &ScalarField, k: usize, t: f64, p: &[f64]) -> f64 {
    if t >= 0.0 {
        return 0.0;
    }
    let mut x = [0.0; 3];
    for (d, q) in p.iter().enumerate() {
        x[d] = -q / t;
    }
    x[p.len()] = -1.0 / t;
    (-t).powi(-(k as i32) - 2) * field.eval(&x)
}

/// Support cone `t ∈ [-M₀, -m₀]`, `|p̄| <= -R t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportCone {
    pub m0: f64,
    pub big_m0: f64,
    pub r: f64,
}

impl SupportCone {
    pub fn from_box(b: &SupportBox) -> Self {
        let (m0, big_m0, r) = b.cone_constants();
        Self { m0, big_m0, r }
    }

    /// Membership with a dilation of `dt` in `t` and `dp` in `|p̄|`.
    fn contains(&self, t: f64, pnorm: f64, dt: f64, dp: f64) -> bool {
        t >= -self.big_m0 - dt && t <= -self.m0 + dt && pnorm <= self.r * (-t).max(0.0) + dp
    }
}

/// Smallest cone holding `1 - 1e-4` of `Σ|h|²`: the `t` interval trims equal
/// tails from the `t` marginal; `R` is the energy quantile of `|p̄|/(-t)`.
/// `None` when `h ≡ 0`.
pub fn estimate_cone(h: &HData) -> Option<SupportCone> {
    let g = &h.grids;
    let d = axes(h.dim);
    let np = h.n_pbar();
    let t = g.t_axis();
    let p = g.p_axis();
    let e: Vec<f64> = h.h.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = e.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let marg: Vec<f64> = (0..g.n_sigma).map(|q| e[q * np..(q + 1) * np].iter().sum()).collect();
    let tail = 0.5e-4 * total;
    let mut acc = 0.0;
    let mut lo = 0;
    while lo + 1 < marg.len() && acc + marg[lo] <= tail {
        acc += marg[lo];
        lo += 1;
    }
    acc = 0.0;
    let mut hi = marg.len() - 1;
    while hi > lo && acc + marg[hi] <= tail {
        acc += marg[hi];
        hi -= 1;
    }
    let mut ratios: Vec<(f64, f64)> = Vec::new();
    for q in lo..=hi {
        if t[q] >= 0.0 {
            continue;
        }
        for x in 0..np {
            let idx = unflatten(x, g.n_p, d);
            let pn = (0..d).map(|a| p[idx[a]] * p[idx[a]]).sum::<f64>().sqrt();
            ratios.push((pn / -t[q], e[q * np + x]));
        }
    }
    ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inside: f64 = ratios.iter().map(|r| r.1).sum();
    let mut acc = 0.0;
    let mut r = 0.0;
    for (ratio, w) in &ratios {
        acc += w;
        r = *ratio;
        if acc >= inside - 1e-4 * total {
            break;
        }
    }
    Some(SupportCone {
        m0: -t[hi],
        big_m0: -t[lo],
        r,
    })
}

/// Fraction of `Σ|h|²` outside the support cone dilated by one grid cell.
/// With `cone = None` the cone is estimated and must lie in `t < 0`.
pub fn check_h_support(h: &HData, cone: Option<SupportCone>, tol: f64) -> ConsistencyReport {
    let mut rep = ConsistencyReport::new();
    let g = &h.grids;
    let d = axes(h.dim);
    let np = h.n_pbar();
    let total: f64 = h.h.iter().map(|z| z.norm_sqr()).sum();
    if total <= 0.0 {
        rep.check("h_support", 0.0, tol).detail = Some("PW (via h-support); h = 0".into());
        return rep;
    }
    let cone = match cone {
        Some(c) => c,
        None => {
            let c = estimate_cone(h).expect("nonzero h");
            rep.check("h_cone_negative_t", (-c.m0).max(0.0), 0.0).detail =
                Some(format!("estimated m0={:.4} M0={:.4} R={:.4}; t >= 0 is forbidden", c.m0, c.big_m0, c.r));
            c
        }
    };
    let t = g.t_axis();
    let p = g.p_axis();
    let mut outside = 0.0;
    for q in 0..g.n_sigma {
        for x in 0..np {
            let idx = unflatten(x, g.n_p, d);
            let pn = (0..d).map(|a| p[idx[a]] * p[idx[a]]).sum::<f64>().sqrt();
            if !cone.contains(t[q], pn, g.dt(), g.dp()) {
                outside += h.h[q * np + x].norm_sqr();
            }
        }
    }
    rep.check("h_support", outside / total, tol).detail = Some(format!(
        "PW (via h-support); cone m0={:.4} M0={:.4} R={:.4}",
        cone.m0, cone.big_m0, cone.r
    ));
    rep
}

/// Keys cubic convolution weights (`a = -1/2`) for fractional offset `f`.
fn cubic_weights(f: f64) -> [f64; 4] {
    let w = |x: f64| {
        let x = x.abs();
        if x < 1.0 {
            1.5 * x * x * x - 2.5 * x * x + 1.0
        } else if x < 2.0 {
            -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
        } else {
            0.0
        }
    };
    [w(1.0 + f), w(f), w(1.0 - f), w(2.0 - f)]
}

/// `h` resampled `up` times finer by spectral zero-padding, ready for cubic
/// interpolation.
pub struct HInterpolant {
    d: usize,
    n_t: usize,
    n_p: usize,
    t0: f64,
    dt: f64,
    p0: f64,
    dp: f64,
    values: Vec<f64>,
}

impl HInterpolant {
    pub fn new(h: &HData, up: usize) -> Result<Self> {
        if up == 0 {
            return Err(invalid("upsample", "must be at least 1"));
        }
        let g = &h.grids;
        let d = axes(h.dim);
        let fine = inverse_h(&h.h_sigma, g, d, up)?;
        let (n_t, n_p) = (g.n_sigma * up, g.n_p * up);
        let dt = g.dt() / up as f64;
        let dp = g.dp() / up as f64;
        Ok(Self {
            d,
            n_t,
            n_p,
            t0: -((n_t / 2) as f64) * dt,
            dt,
            p0: -((n_p / 2) as f64) * dp,
            dp,
            values: fine.iter().map(|z| z.re).collect(),
        })
    }

    fn at(&self, q: i64, x: &[i64]) -> f64 {
        if q < 0 || q >= self.n_t as i64 || x.iter().any(|&j| j < 0 || j >= self.n_p as i64) {
            return 0.0;
        }
        let flat = match self.d {
            1 => x[0] as usize,
            _ => x[0] as usize * self.n_p + x[1] as usize,
        };
        self.values[q as usize * self.n_p.pow(self.d as u32) + flat]
    }

    pub fn eval(&self, t: f64, p: &[f64]) -> f64 {
        let ft = (t - self.t0) / self.dt;
        let qt = ft.floor();
        let wt = cubic_weights(ft - qt);
        let fp: Vec<f64> = p.iter().map(|x| (x - self.p0) / self.dp).collect();
        let qp: Vec<f64> = fp.iter().map(|f| f.floor()).collect();
        let wp: Vec<[f64; 4]> = fp.iter().zip(&qp).map(|(f, q)| cubic_weights(f - q)).collect();
        let mut acc = 0.0;
        for a in 0..4 {
            let q = qt as i64 + a as i64 - 1;
            match self.d {
                1 => {
                    for b in 0..4 {
                        acc += wt[a] * wp[0][b] * self.at(q, &[qp[0] as i64 + b as i64 - 1]);
                    }
                }
                _ => {
                    for b in 0..4 {
                        for c in 0..4 {
                            let x = [qp[0] as i64 + b as i64 - 1, qp[1] as i64 + c as i64 - 1];
                            acc += wt[a] * wp[0][b] * wp[1][c] * self.at(q, &x);
                        }
                    }
                }
            }
        }
        acc
    }
}

/// `f(x̄, x_n) = x_n^{-k-2} h(-1/x_n, x̄/x_n)` for `x_n > 0`, else 0.
pub fn reconstruct_from_h(h: &HData, k: usize, grid: &OutputGrid, upsample: usize) -> Result<GriddedField> {
    if grid.dim != h.dim {
        return Err(Error::DimensionMismatch {
            expected: h.dim,
            found: grid.dim,
        });
    }
    let interp = HInterpolant::new(h, upsample)?;
    let n = h.dim;
    let values = par::map_range(grid.len(), |i| {
        let x = grid.node(i);
        let xn = x[n - 1];
        if xn <= 0.0 {
            return 0.0;
        }
        let p: Vec<f64> = (0..n - 1).map(|d| x[d] / xn).collect();
        xn.powi(-(k as i32) - 2) * interp.eval(-1.0 / xn, &p)
    });
    Ok(GriddedField {
        grid: grid.clone(),
        valid: vec![true; values.len()],
        values,
    })
}

/// `J_m(ā, ξ̄) = Δp^{n-1} Σ (p̄·ξ̄)^m w(ā, p̄)` over the `ā` grid.
pub fn moments(w: &ProjectiveData, xi: &[f64], m: usize) -> Result<Vec<f64>> {
    if m > 8 {
        return Err(invalid("m", "moment order above 8"));
    }
    if xi.len() != axes(w.dim) {
        return Err(Error::DimensionMismatch {
            expected: axes(w.dim),
            found: xi.len(),
        });
    }
    let scale = w.grids.dp().powi(axes(w.dim) as i32);
    let ps: Vec<f64> = (0..w.n_pbar())
        .map(|j| w.pbar(j).iter().zip(xi).map(|(p, q)| p * q).sum::<f64>().powi(m as i32))
        .collect();
    Ok((0..w.n_abar())
        .map(|a| w.row(a).iter().zip(&ps).map(|(x, p)| x * p).sum::<f64>() * scale)
        .collect())
}

/// Unit `ξ̄` directions used by the moment test.
pub fn moment_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        2 => vec![vec![1.0]],
        _ => (0..count.max(1))
            .map(|q| {
                let th = PI * q as f64 / count.max(1) as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Per direction and `m <= m_max`: least-squares fit of `J_m` by a degree-`m`
/// polynomial in `σ = ā·ξ̄`; residual is fit RMS over data RMS. Also the
/// spread of `J_0` over `ā`, invariance along `ā·ξ̄ = const` (`n >= 3`) and
/// the `λ`-scaling sanity identity.
pub fn check_moment_condition(
    w: &ProjectiveData,
    m_max: usize,
    directions: &[Vec<f64>],
    tol: f64,
    j0_tol: f64,
) -> Result<ConsistencyReport> {
    w.validate()?;
    let na = w.n_abar();
    let mut rep = ConsistencyReport::new();
    let mut fit_worst = vec![0.0f64; m_max + 1];
    let mut inv_worst: f64 = 0.0;
    let mut scaling: f64 = 0.0;
    let mut j0_spread: f64 = 0.0;
    for xi in directions {
        let sigma: Vec<f64> = (0..na).map(|a| w.abar(a).iter().zip(xi).map(|(x, y)| x * y).sum()).collect();
        let mut distinct: Vec<i64> = sigma.iter().map(|s| (s * 1e9).round() as i64).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 * m_max + 2 {
            return Err(Error::RankDeficient(format!(
                "{} distinct a.xi values, need {}",
                distinct.len(),
                2 * m_max + 2
            )));
        }
        let smax = sigma.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-300);
        for m in 0..=m_max {
            let j = moments(w, xi, m)?;
            let data_rms = rms(&j);
            if m == 0 {
                let lo = j.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mag = j.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if mag > 0.0 {
                    j0_spread = j0_spread.max((hi - lo) / mag);
                }
            }
            if data_rms > 0.0 {
                let cols = m + 1;
                let mut a = Vec::with_capacity(na * cols);
                for s in &sigma {
                    for c in 0..cols {
                        a.push((s / smax).powi(c as i32));
                    }
                }
                let coef = lstsq(&a, na, cols, &j).ok_or_else(|| Error::RankDeficient(format!("moment fit m={m}")))?;
                let res: Vec<f64> = (0..na)
                    .map(|r| j[r] - (0..cols).map(|c| a[r * cols + c] * coef[c]).sum::<f64>())
                    .collect();
                fit_worst[m] = fit_worst[m].max(rms(&res) / data_rms);
                let j2: Vec<f64> = moments(w, &xi.iter().map(|x| 2.0 * x).collect::<Vec<_>>(), m)?;
                let lam = 2f64.powi(m as i32);
                let mag = j.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                scaling = scaling.max(j2.iter().zip(&j).map(|(x, y)| (x - lam * y).abs()).fold(0.0, f64::max) / (lam * mag));
            }
            if w.dim >= 3 {
                let mag = j.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if mag > 0.0 {
                    let mut groups: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
                    for (s, v) in sigma.iter().zip(&j) {
                        let e = groups.entry((s * 1e9).round() as i64).or_insert((f64::INFINITY, f64::NEG_INFINITY));
                        e.0 = e.0.min(*v);
                        e.1 = e.1.max(*v);
                    }
                    for (lo, hi) in groups.values() {
                        inv_worst = inv_worst.max((hi - lo) / mag);
                    }
                }
            }
        }
    }
    rep.check("moment_j0_spread", j0_spread, j0_tol);
    for (m, r) in fit_worst.iter().enumerate() {
        rep.check(format!("moment_fit_m{m}"), *r, tol);
    }
    if w.dim >= 3 {
        rep.check("moment_invariance", inv_worst, tol);
    }
    rep.check("moment_scaling", scaling, 1e-12).detail = Some("sanity: J_m(a, 2 xi) = 2^m J_m(a, xi)".into());
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanarParams {
    pub grids: Option<PlanarGrids>,
    pub leakage_tol: f64,
    pub factorization_tol: f64,
    pub support_tol: f64,
    pub moment_tol: f64,
    pub j0_tol: f64,
    pub m_max: usize,
    pub moment_directions: usize,
    pub upsample: usize,
}

impl Default for PlanarParams {
    fn default() -> Self {
        Self {
            grids: None,
            leakage_tol: 1e-10,
            factorization_tol: 1e-4,
            support_tol: 1e-4,
            moment_tol: 1e-4,
            j0_tol: 1e-6,
            m_max: 4,
            moment_directions: 6,
            upsample: 4,
        }
    }
}

impl PlanarParams {
    pub fn grids_for(&self, n: usize) -> PlanarGrids {
        self.grids.unwrap_or_else(|| PlanarGrids::for_dim(n))
    }
}

/// Projective-data conditions: compact support of `w`, factorization of
/// `W`, the moment form, and (when `h` is given) the support of `h`.
pub fn check_planar(
    w: &ProjectiveData,
    h: Option<&HData>,
    cone: Option<SupportCone>,
    params: &PlanarParams,
) -> Result<ConsistencyReport> {
    w.validate()?;
    let mut rep = ConsistencyReport::new();
    rep.check("support_leakage", w.leakage(), params.leakage_tol);
    let spectral = fourier_w(w)?;
    for e in check_factorization(&spectral, params.factorization_tol).entries {
        rep.entries.push(e);
    }
    let dirs = moment_directions(w.dim, params.moment_directions);
    let m = check_moment_condition(w, params.m_max, &dirs, params.moment_tol, params.j0_tol)?;
    rep.entries.extend(m.entries);
    match h {
        Some(h) => {
            rep.entries.extend(check_h_support(h, cone, params.support_tol).entries);
        }
        None => rep.vacuous("h_support", "no off-grid beam evaluator; support tested through the moment form"),
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::FieldBeam;
    use crate::phantom::make_bump;

    #[test]
    fn centered_dft_matches_direct_sum() {
        let m = 8;
        let x: Vec<Complex64> = (0..m).map(|j| Complex64::new(j as f64 * 0.3 - 1.0, (j * j) as f64 * 0.1)).collect();
        let mut y = x.clone();
        centered_dft_axis(&mut y, &[m], 0, FftDirection::Forward);
        for r in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..m {
                let ph = -2.0 * PI * (j as f64 - 4.0) * (r as f64 - 4.0) / m as f64;
                acc += x[j] * Complex64::from_polar(1.0, ph);
            }
            assert!((acc - y[r]).norm() < 1e-12);
        }
    }

    #[test]
    fn grids_are_dual() {
        let g = PlanarGrids::for_dim(2);
        assert!((g.dp() * g.dxi() * g.n_p as f64 - 2.0 * PI).abs() < 1e-12);
        assert!((g.t_period() - 2.0 * PI / g.dsigma()).abs() < 1e-12);
        assert!(g.xi_axis().iter().all(|x| x.abs() > 0.0));
        assert!((g.t_period() - 8.0 * PI).abs() < 1e-9);
    }

    fn small(n: usize) -> PlanarGrids {
        PlanarGrids {
            a_max: 1.0,
            n_a: 9,
            p_max: 4.0,
            n_p: 64,
            sigma_max: 8.0,
            n_sigma: 32,
        }
        .with_dim(n)
    }

    impl PlanarGrids {
        fn with_dim(self, n: usize) -> Self {
            if n == 2 {
                Self { n_a: 33, ..self }
            } else {
                self
            }
        }
    }

    fn reference(n: usize, k: usize) -> (ScalarField, FieldBeam) {
        let c: Vec<f64> = (0..n).map(|d| if d + 1 == n { 1.5 } else { 0.0 }).collect();
        let f = make_bump(&c, 0.5, 1.0, n).unwrap();
        (f.clone(), FieldBeam::new(f, k).unwrap())
    }

    /// `∫ f(ā + x p̄, x) x^k dx` by composite Gauss–Legendre over `[1, 2]`.
    fn w_oracle(f: &ScalarField, abar: &[f64], p: &[f64], k: usize) -> f64 {
        let rule = gl16();
        let panels = 64;
        let h = 1.0 / panels as f64;
        let mut acc = 0.0;
        for q in 0..panels {
            acc += rule.integrate(1.0 + q as f64 * h, 1.0 + (q + 1) as f64 * h, |x| {
                let mut y = [0.0; 3];
                for (d, (a, pp)) in abar.iter().zip(p).enumerate() {
                    y[d] = a + x * pp;
                }
                y[abar.len()] = x;
                f.eval(&y) * x.powi(k as i32)
            });
        }
        acc
    }

    #[test]
    fn projective_data_matches_line_integral() {
        let (f, u) = reference(2, 1);
        let g = small(2);
        let w = projective_data(&u, &g, 1).unwrap();
        for (a, j) in [(16, 32), (10, 27), (20, 40), (0, 50)] {
            let want = w_oracle(&f, &w.abar(a), &w.pbar(j), 1);
            assert!((w.row(a)[j] - want).abs() < 1e-8, "{} vs {want}", w.row(a)[j]);
        }
        assert_eq!(w.leakage(), 0.0);
    }

    #[test]
    fn projective_data_shifts_with_the_field() {
        let g = small(2);
        let (f, u) = reference(2, 0);
        let b = 2.0 * g.a_max / (g.n_a - 1) as f64 * 3.0;
        let moved = FieldBeam::new(f.translated(&[b, 0.0, 0.0]), 0).unwrap();
        let w0 = projective_data(&u, &g, 0).unwrap();
        let w1 = projective_data(&moved, &g, 0).unwrap();
        for a in 3..g.n_a {
            for (x, y) in w1.row(a).iter().zip(w0.row(a - 3)) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fft_transform_matches_direct_sum_and_parseval() {
        let (_, u) = reference(2, 0);
        let w = projective_data(&u, &small(2), 0).unwrap();
        let spectral = fourier_w(&w).unwrap();
        let np = w.n_pbar();
        for a in [4, 16] {
            for m in [0, 17, 32, 63] {
                let direct = fourier_w_at(&w, a, &spectral.xi(m));
                assert!((direct - spectral.w_hat[a * np + m]).norm() < 1e-12);
            }
            let dp = w.grids.dp();
            let lhs: f64 = dp * w.row(a).iter().map(|x| x * x).sum::<f64>();
            let rhs: f64 = w.grids.dxi() / (2.0 * PI) * spectral.w_hat[a * np..(a + 1) * np].iter().map(|z| z.norm_sqr()).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs);
            let zero = fourier_w_at(&w, a, &[0.0]);
            assert!((zero.re - dp * w.row(a).iter().sum::<f64>()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_gives_zero_everywhere() {
        let f = make_bump(&[0.0, 1.5], 0.5, 0.0, 2).unwrap();
        let sb = f.support_box(true).unwrap();
        let u = FieldBeam::new(f, 0).unwrap();
        let g = small(2);
        let w = projective_data(&u, &g, 0).unwrap();
        assert!(fourier_w(&w).unwrap().w_hat.iter().all(|z| z.norm() == 0.0));
        let h = build_h(&u, &sb, &g, 0).unwrap();
        assert!(h.h.iter().all(|z| z.norm() == 0.0));
        let rep = check_h_support(&h, None, 1e-4);
        assert_eq!(rep.get("h_support").unwrap().residual, 0.0);
        let grid = OutputGrid::new(2, &[-0.5, 1.0], &[0.5, 2.0], 5);
        assert!(reconstruct_from_h(&h, 0, &grid, 2).unwrap().values.iter().all(|v| *v == 0.0));
        assert!(moments(&w, &[1.0], 3).unwrap().iter().all(|v| *v == 0.0));
        let m = check_moment_condition(&w, 4, &[vec![1.0]], 1e-4, 1e-6).unwrap();
        assert!(m.pass(), "{}", m.table());
    }

    #[test]
    fn factorization_holds_for_forward_data_in_3d() {
        let (_, u) = reference(3, 0);
        let g = PlanarGrids::for_dim(3);
        let w = projective_data(&u, &g, 0).unwrap();
        let rep = check_factorization(&fourier_w(&w).unwrap(), 1e-4);
        let e = rep.get("factorization").unwrap();
        assert!(e.pass && !e.is_vacuous(), "{}", rep.table());
    }

    #[test]
    fn factorization_rejects_xi_independent_data() {
        let g = PlanarGrids {
            n_p: 8,
            ..small(3)
        };
        let nxi = 64;
        let mut w_hat = Vec::new();
        for a in 0..g.n_a * g.n_a {
            let a1 = g.a_axis()[a / g.n_a];
            w_hat.extend(std::iter::repeat(Complex64::new(a1, 0.0)).take(nxi));
        }
        let spectral = SpectralData {
            dim: 3,
            k: 0,
            grids: g,
            w_hat,
        };
        assert!(!check_factorization(&spectral, 1e-4).pass());
    }

    #[test]
    fn factorization_is_vacuous_in_2d() {
        let (_, u) = reference(2, 0);
        let w = projective_data(&u, &small(2), 0).unwrap();
        let rep = check_factorization(&fourier_w(&w).unwrap(), 1e-4);
        assert!(rep.pass() && rep.get("factorization").unwrap().is_vacuous());
    }

    #[test]
    fn spike_at_positive_t_fails_support() {
        let g = small(2);
        let np = g.n_p;
        let mut h = vec![Complex64::new(0.0, 0.0); g.n_sigma * np];
        let t = g.t_axis();
        let q_neg = t.iter().position(|x| (x + 0.8).abs() < g.dt() / 2.0).unwrap();
        let q_pos = t.iter().position(|x| (x - 0.5).abs() < g.dt() / 2.0).unwrap();
        h[q_neg * np + np / 2] = Complex64::new(1.0, 0.0);
        let clean = HData {
            dim: 2,
            k: 0,
            grids: g,
            h_sigma: Vec::new(),
            h: h.clone(),
        };
        let cone = SupportCone {
            m0: 0.5,
            big_m0: 1.0,
            r: 0.5,
        };
        assert!(check_h_support(&clean, Some(cone), 1e-4).pass());
        h[q_pos * np + np / 2] = Complex64::new(1.0, 0.0);
        let spiked = HData { h, ..clean };
        assert!(!check_h_support(&spiked, Some(cone), 1e-4).pass());
        assert!(!check_h_support(&spiked, None, 1e-4).pass());
    }

    #[test]
    fn moments_scale_and_detect_corruption() {
        let (_, u) = reference(2, 0);
        let g = PlanarGrids {
            n_p: 512,
            ..PlanarGrids::for_dim(2)
        };
        let w = projective_data(&u, &g, 0).unwrap();
        let j1 = moments(&w, &[1.0], 3).unwrap();
        let j3 = moments(&w, &[3.0], 3).unwrap();
        let mag = j3.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in j1.iter().zip(&j3) {
            assert!((27.0 * a - b).abs() <= 1e-13 * mag);
        }
        let clean = check_moment_condition(&w, 4, &[vec![1.0]], 1e-4, 1e-6).unwrap();
        assert!(clean.pass(), "{}", clean.table());
        let bad = w.corrupted(&Corruption::multiplicative(0.05, 3.0));
        let dirty = check_moment_condition(&bad, 4, &[vec![1.0]], 1e-4, 1e-6).unwrap();
        assert!(!dirty.pass());
        let ratio = dirty
            .entries
            .iter()
            .zip(&clean.entries)
            .map(|(d, c)| d.residual / c.residual.max(1e-300))
            .fold(0.0, f64::max);
        assert!(ratio >= 10.0);
    }

    #[test]
    fn too_few_projections_is_rank_deficient() {
        let (_, u) = reference(2, 0);
        let g = PlanarGrids {
            n_a: 5,
            ..small(2)
        };
        let w = projective_data(&u, &g, 0).unwrap();
        assert!(matches!(
            check_moment_condition(&w, 4, &[vec![1.0]], 1e-4, 1e-6),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn closed_form_vanishes_for_nonnegative_t() {
        let (f, _) = reference(2, 0);
        assert_eq!(h_closed_form(&f, 0, 0.3, &[0.0]), 0.0);
        assert!((h_closed_form(&f, 1, -1.0 / 1.5, &[0.0]) - 1.5f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn build_h_requires_positive_depth() {
        let f = make_bump(&[0.0, 0.4], 0.5, 1.0, 2).unwrap();
        let sb = SupportBox {
            xbar_radius: 0.5,
            xn_min: -0.1,
            xn_max: 0.9,
        };
        let u = FieldBeam::new(f, 0).unwrap();
        assert!(matches!(build_h(&u, &sb, &small(2), 0), Err(Error::NotPlanarValid)));
    }

    #[test]
    fn cubic_weights_partition_unity() {
        for f in [0.0, 0.25, 0.5, 0.9] {
            let w = cubic_weights(f);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert_eq!(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }
}
