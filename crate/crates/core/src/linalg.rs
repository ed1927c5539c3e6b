//! Small dense solvers.

/// Solves a 3x3 system by Gaussian elimination with partial pivoting.
/// A singular system yields non-finite entries.
pub fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap_or(c);
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut acc = b[r];
        for k in (r + 1)..3 {
            acc -= a[r][k] * x[k];
        }
        x[r] = acc / a[r][r];
    }
    x
}

/// Least squares `min |A x - y|` for a tall `rows x cols` matrix stored row
/// major, via Householder QR. Returns `None` when a column is (numerically)
/// dependent on the previous ones.
pub fn lstsq(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), rows * cols);
    if rows < cols {
        return None;
    }
    let mut r = a.to_vec();
    let mut qty = y.to_vec();
    let scale0 = (0..rows * cols).map(|i| r[i].abs()).fold(0.0, f64::max).max(1e-300);
    for c in 0..cols {
        let norm = (c..rows).map(|i| r[i * cols + c].powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-13 * scale0 * (rows as f64).sqrt() {
            return None;
        }
        let alpha = if r[c * cols + c] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (c..rows).map(|i| r[i * cols + c]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for k in c..cols {
            let d: f64 = (c..rows).map(|i| v[i - c] * r[i * cols + k]).sum::<f64>() * 2.0 / vv;
            for i in c..rows {
                r[i * cols + k] -= d * v[i - c];
            }
        }
        let d: f64 = (c..rows).map(|i| v[i - c] * qty[i]).sum::<f64>() * 2.0 / vv;
        for i in c..rows {
            qty[i] -= d * v[i - c];
        }
    }
    let mut x = vec![0.0; cols];
    for rr in (0..cols).rev() {
        let mut acc = qty[rr];
        for k in (rr + 1)..cols {
            acc -= r[rr * cols + k] * x[k];
        }
        x[rr] = acc / r[rr * cols + rr];
    }
    Some(x)
}
