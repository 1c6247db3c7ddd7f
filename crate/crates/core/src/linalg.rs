//! Row-major helpers for the tiny dense blocks that appear per path and step.
//!
//! Every matrix is a flat slice `a[r * cols + c]`.

use alloc::vec;
use alloc::vec::Vec;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `out += scale * a * v` for an `rows x cols` matrix.
pub fn gemv_acc(a: &[f64], rows: usize, cols: usize, v: &[f64], scale: f64, out: &mut [f64]) {
    for r in 0..rows {
        out[r] += scale * dot(&a[r * cols..(r + 1) * cols], v);
    }
}

/// `out += scale * a^T * v` for an `rows x cols` matrix.
pub fn gemv_t_acc(a: &[f64], rows: usize, cols: usize, v: &[f64], scale: f64, out: &mut [f64]) {
    for r in 0..rows {
        let s = scale * v[r];
        if s == 0.0 {
            continue;
        }
        for c in 0..cols {
            out[c] += s * a[r * cols + c];
        }
    }
}

/// `a * b` for `(m x k) * (k x n)`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += a_il * b[l * n + j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    out
}

/// Kronecker product of `(ar x ac)` and `(br x bc)`.
pub fn kron(a: &[f64], ar: usize, ac: usize, b: &[f64], br: usize, bc: usize) -> Vec<f64> {
    let cols = ac * bc;
    let mut out = vec![0.0; ar * br * cols];
    for i in 0..ar {
        for j in 0..ac {
            let s = a[i * ac + j];
            if s == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k) * cols + j * bc + l] = s * b[k * bc + l];
                }
            }
        }
    }
    out
}

/// The `n^2 x n^2` permutation sending the column-stacked `vec(M)` to `vec(M^T)`.
pub fn commutation(n: usize) -> Vec<f64> {
    let nn = n * n;
    let mut out = vec![0.0; nn * nn];
    for r in 0..n {
        for c in 0..n {
            // vec index of M[r][c] is c * n + r; of M^T[r][c] = M[c][r] is c * n + r too,
            // but it reads M at r * n + c.
            out[(c * n + r) * nn + (r * n + c)] = 1.0;
        }
    }
    out
}

/// Column-stacking of a row-major square matrix.
pub fn vec_columns(a: &[f64], n: usize) -> Vec<f64> {
    transpose(a, n, n)
}

/// Inverse of [`vec_columns`].
pub fn unvec_columns(v: &[f64], n: usize) -> Vec<f64> {
    transpose(v, n, n)
}

/// Replaces a square matrix by its symmetric part and returns the max-abs asymmetry seen.
pub fn symmetrize(a: &mut [f64], n: usize) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..n {
        for c in (r + 1)..n {
            let (x, y) = (a[r * n + c], a[c * n + r]);
            worst = worst.max((x - y).abs());
            let m = 0.5 * (x + y);
            a[r * n + c] = m;
            a[c * n + r] = m;
        }
    }
    worst
}
