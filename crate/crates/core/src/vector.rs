//! Fixed-size vector helpers. Points in two dimensions keep a zero third
//! component so that both supported dimensions share one representation.

pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// `a + t * v`
#[inline]
pub fn axpy(a: &Point, t: f64, v: &Point) -> Point {
    [a[0] + t * v[0], a[1] + t * v[1], a[2] + t * v[2]]
}

#[inline]
pub fn neg(a: &Point) -> Point {
    [-a[0], -a[1], -a[2]]
}

pub fn normalize(a: &Point) -> Point {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// Builds a point from a slice of length 2 or 3.
pub fn from_slice(xs: &[f64]) -> Point {
    let mut p = ORIGIN;
    for (dst, src) in p.iter_mut().zip(xs) {
        *dst = *src;
    }
    p
}

/// Surface measure of the unit sphere `S^{d}` embedded in `R^{d+1}`.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 2.0,
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        3 => 2.0 * PI * PI,
        _ => {
            // |S^d| = 2 pi^{(d+1)/2} / Gamma((d+1)/2), via the recursion |S^d| = 2 pi |S^{d-2}| / (d-1)
            2.0 * PI * sphere_area(d - 2) / (d as f64 - 1.0)
        }
    }
}
