//! Spectral analysis on the direction grids of [`crate::geometry`]:
//! Fourier series on the circle and spherical harmonics on `S^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::geometry::SphereGrid;
use crate::quadrature::gauss_legendre;
use crate::vector::Point;

/// Coefficients of a real function. For `n = 2` entry `m` is the Fourier
/// coefficient of `e^{imθ}`, `0 <= m <= L`. For `n = 3` entry
/// `l(l+1)/2 + m` is the coefficient of `P̄_l^m(cos θ) e^{imφ}`, `0 <= m <= l < L`.
/// Negative orders follow from conjugate symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs {
    pub dim: usize,
    pub resolution: usize,
    pub data: Vec<Complex64>,
}

impl Coeffs {
    pub fn degree_of(&self, idx: usize) -> usize {
        match self.dim {
            2 => idx,
            _ => {
                let mut l = 0;
                while (l + 1) * (l + 2) / 2 <= idx {
                    l += 1;
                }
                l
            }
        }
    }

    /// Sum of squared magnitudes per degree, counting both signs of the order.
    pub fn degree_energy(&self) -> Vec<f64> {
        let lmax = match self.dim {
            2 => self.resolution + 1,
            _ => self.resolution,
        };
        let mut e = vec![0.0; lmax];
        for (idx, c) in self.data.iter().enumerate() {
            let (l, m) = match self.dim {
                2 => (idx, idx),
                _ => {
                    let l = self.degree_of(idx);
                    (l, idx - l * (l + 1) / 2)
                }
            };
            let mult = if m == 0 || (self.dim == 2 && m == self.resolution) { 1.0 } else { 2.0 };
            e[l] += mult * c.norm_sqr();
        }
        e
    }

    pub fn map_degree(&mut self, f: impl Fn(usize) -> f64) {
        for idx in 0..self.data.len() {
            let l = self.degree_of(idx);
            self.data[idx] *= f(l);
        }
    }
}

/// Precomputed transforms for one grid.
pub struct SphereSpectral {
    dim: usize,
    l: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// n = 3: polar cosines and Gauss weights of the rings.
    x: Vec<f64>,
    w: Vec<f64>,
    /// n = 3: `plm[i][l(l+1)/2 + m]` at ring `i`.
    plm: Vec<Vec<f64>>,
}

/// Normalized associated Legendre values `P̄_l^m(x)` for `0 <= m <= l < lmax`,
/// packed at `l(l+1)/2 + m`, with `∫ |P̄_l^m e^{imφ}|^2 dΩ = 1`.
pub fn normalized_legendre(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax * (lmax + 1) / 2];
    let st = (1.0 - x * x).max(0.0).sqrt();
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..lmax {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        p[idx(m, m)] = pmm;
        if m + 1 < lmax {
            p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * pmm;
        }
        for l in (m + 2)..lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[idx(l, m)] = a * (x * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
        }
    }
    p
}

impl SphereSpectral {
    pub fn new(grid: &SphereGrid) -> Self {
        let l = grid.resolution;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * l);
        let ifft = planner.plan_fft_inverse(2 * l);
        let (x, w, plm) = if grid.dim == 3 {
            let (x, w) = gauss_legendre(l);
            let plm = x.iter().map(|&xi| normalized_legendre(l, xi)).collect();
            (x, w, plm)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        Self {
            dim: grid.dim,
            l,
            fft,
            ifft,
            x,
            w,
            plm,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn ring_fft(&self, vals: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf
    }

    pub fn analyze(&self, values: &[f64]) -> Coeffs {
        let l = self.l;
        let m2 = 2 * l;
        match self.dim {
            2 => {
                let f = self.ring_fft(values);
                let data = (0..=l).map(|m| f[m] / m2 as f64).collect();
                Coeffs {
                    dim: 2,
                    resolution: l,
                    data,
                }
            }
            _ => {
                let mut data = vec![Complex64::new(0.0, 0.0); l * (l + 1) / 2];
                let dphi = PI / l as f64;
                for i in 0..l {
                    let f = self.ring_fft(&values[i * m2..(i + 1) * m2]);
                    let wi = self.w[i] * dphi;
                    for ll in 0..l {
                        for m in 0..=ll {
                            let k = ll * (ll + 1) / 2 + m;
                            data[k] += f[m] * (wi * self.plm[i][k]);
                        }
                    }
                }
                Coeffs {
                    dim: 3,
                    resolution: l,
                    data,
                }
            }
        }
    }

    pub fn synthesize(&self, c: &Coeffs) -> Vec<f64> {
        let l = self.l;
        let m2 = 2 * l;
        match self.dim {
            2 => {
                let mut buf = vec![Complex64::new(0.0, 0.0); m2];
                buf[0] = c.data[0];
                for m in 1..l {
                    buf[m] = c.data[m];
                    buf[m2 - m] = c.data[m].conj();
                }
                buf[l] = Complex64::new(c.data[l].re, 0.0);
                self.ifft.process(&mut buf);
                buf.iter().map(|z| z.re).collect()
            }
            _ => {
                let mut out = vec![0.0; l * m2];
                for i in 0..l {
                    let mut buf = vec![Complex64::new(0.0, 0.0); m2];
                    for m in 0..l {
                        let mut g = Complex64::new(0.0, 0.0);
                        for ll in m..l {
                            let k = ll * (ll + 1) / 2 + m;
                            g += c.data[k] * self.plm[i][k];
                        }
                        if m == 0 {
                            buf[0] = Complex64::new(g.re, 0.0);
                        } else {
                            buf[m] = g;
                            buf[m2 - m] = g.conj();
                        }
                    }
                    self.ifft.process(&mut buf);
                    for (j, z) in buf.iter().enumerate() {
                        out[i * m2 + j] = z.re;
                    }
                }
                out
            }
        }
    }

    /// Spherical Laplacian by multiplying each degree by `-l(l+1)` (`-m^2` on the circle).
    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let mut c = self.analyze(values);
        match self.dim {
            2 => c.map_degree(|m| -((m * m) as f64)),
            _ => c.map_degree(|l| -((l * (l + 1)) as f64)),
        }
        self.synthesize(&c)
    }

    /// Evaluates the band-limited interpolant at an arbitrary unit vector.
    pub fn eval_at(&self, c: &Coeffs, v: &Point) -> f64 {
        let l = self.l;
        match self.dim {
            2 => {
                let th = v[1].atan2(v[0]);
                let mut acc = c.data[0].re;
                for m in 1..l {
                    let e = Complex64::from_polar(1.0, m as f64 * th);
                    acc += 2.0 * (c.data[m] * e).re;
                }
                acc + c.data[l].re * (l as f64 * th).cos()
            }
            _ => {
                let x = v[2].clamp(-1.0, 1.0);
                let ph = v[1].atan2(v[0]);
                let p = normalized_legendre(l, x);
                let mut acc = 0.0;
                for ll in 0..l {
                    for m in 0..=ll {
                        let k = ll * (ll + 1) / 2 + m;
                        let term = c.data[k] * Complex64::from_polar(p[k], m as f64 * ph);
                        acc += if m == 0 { term.re } else { 2.0 * term.re };
                    }
                }
                acc
            }
        }
    }

    pub fn ring_cosines(&self) -> &[f64] {
        &self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sphere_grid;
    use crate::vector::dot;

    #[test]
    fn circle_round_trip_and_laplacian() {
        let g = sphere_grid(2, 8).unwrap();
        let sp = SphereSpectral::new(&g);
        let f: Vec<f64> = g
            .nodes
            .iter()
            .map(|v| {
                let th = v[1].atan2(v[0]);
                1.0 + (3.0 * th).cos() - 0.5 * (2.0 * th).sin()
            })
            .collect();
        let back = sp.synthesize(&sp.analyze(&f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        let lap = sp.laplacian(&f);
        for (v, l) in g.nodes.iter().zip(&lap) {
            let th = v[1].atan2(v[0]);
            let exact = -9.0 * (3.0 * th).cos() + 2.0 * (2.0 * th).sin();
            assert!((l - exact).abs() < 1e-12);
        }
        let c = sp.analyze(&f);
        let th: f64 = 0.37;
        let val = sp.eval_at(&c, &[th.cos(), th.sin(), 0.0]);
        assert!((val - (1.0 + (3.0 * th).cos() - 0.5 * (2.0 * th).sin())).abs() < 1e-13);
    }

    #[test]
    fn sphere_round_trip_and_laplacian() {
        let g = sphere_grid(3, 10).unwrap();
        let sp = SphereSpectral::new(&g);
        let e = crate::vector::normalize(&[0.2, -0.7, 0.4]);
        // degree-3 polynomial: (v·e)^3 = Y_3 part + Y_1 part
        let f: Vec<f64> = g.nodes.iter().map(|v| dot(v, &e).powi(3) + v[0] * v[1]).collect();
        let back = sp.synthesize(&sp.analyze(&f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        // Δ_S of x·y (degree-2 harmonic) = -6 x y;
        // (v·e)^3 = P3 part + (3/5)(v·e): Δ = -12 (v·e)^3 + (36/5 - 6/5)(v·e)
        let lap = sp.laplacian(&f);
        for (v, l) in g.nodes.iter().zip(&lap) {
            let t = dot(v, &e);
            let exact = -12.0 * t.powi(3) + 6.0 * t - 6.0 * v[0] * v[1];
            assert!((l - exact).abs() < 1e-11, "{l} vs {exact}");
        }
        let c = sp.analyze(&f);
        let v = crate::vector::normalize(&[0.3, 0.1, -0.9]);
        assert!((sp.eval_at(&c, &v) - (dot(&v, &e).powi(3) + v[0] * v[1])).abs() < 1e-12);
    }
}
