//! Central finite differences used as the fallback for undeclared derivatives
//! and as the reference in [`check_derivatives`](super::check_derivatives).
//!
//! Steps are relative: `h = step * max(1, |w_c|)`. Second derivatives use
//! `sqrt(step)` so that round-off stays below truncation error.

use alloc::vec;
use alloc::vec::Vec;

use super::Problem;

fn rel_step(step: f64, w: f64) -> f64 {
    step * libm::fabs(w).max(1.0)
}

/// Jacobian of an `m`-valued map: `out[r * len + c] = d f_r / d w_c`.
pub fn jacobian(f: impl Fn(&[f64], &mut [f64]), m: usize, w: &[f64], step: f64, out: &mut [f64]) {
    let len = w.len();
    let mut wp = w.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for c in 0..len {
        let h = rel_step(step, w[c]);
        wp[c] = w[c] + h;
        f(&wp, &mut fp);
        wp[c] = w[c] - h;
        f(&wp, &mut fm);
        wp[c] = w[c];
        for r in 0..m {
            out[r * len + c] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
}

/// Stacked Hessians of an `m`-valued map: `out[r * len * len + a * len + b]`.
pub fn hessians(f: impl Fn(&[f64], &mut [f64]), m: usize, w: &[f64], step: f64, out: &mut [f64]) {
    let len = w.len();
    let step = libm::sqrt(step);
    let mut wp = w.to_vec();
    let mut buf = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
    for a in 0..len {
        let ha = rel_step(step, w[a]);
        for b in a..len {
            let hb = rel_step(step, w[b]);
            for (slot, (sa, sb)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .into_iter()
                .enumerate()
            {
                wp.copy_from_slice(w);
                wp[a] += sa * ha;
                wp[b] += sb * hb;
                f(&wp, &mut buf[slot]);
            }
            for r in 0..m {
                let v = (buf[0][r] - buf[1][r] - buf[2][r] + buf[3][r]) / (4.0 * ha * hb);
                out[r * len * len + a * len + b] = v;
                out[r * len * len + b * len + a] = v;
            }
        }
    }
}

pub fn gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], step: f64, out: &mut [f64]) {
    jacobian(|w, o| o[0] = f(w), 1, w, step, out)
}

pub fn hessian(f: impl Fn(&[f64]) -> f64, w: &[f64], step: f64, out: &mut [f64]) {
    hessians(|w, o| o[0] = f(w), 1, w, step, out)
}

/// Packs `(x, y, z)` into one argument vector.
pub fn pack_xyz(x: &[f64], y: f64, z: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(x.len() + 1 + z.len());
    w.extend_from_slice(x);
    w.push(y);
    w.extend_from_slice(z);
    w
}

pub fn drift_x<P: Problem + ?Sized>(
    p: &P,
    step: f64,
    t: f64,
    x: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    let n = p.dims().n;
    jacobian(|w, o| p.drift(t, w, u, o), n, x, step, out);
}

/// `out[i * n * n + r * n + c] = d sigma^{r i} / d x_c`.
pub fn diffusion_x<P: Problem + ?Sized>(
    p: &P,
    step: f64,
    t: f64,
    x: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    let dims = p.dims();
    let (n, d) = (dims.n, dims.d);
    let mut jac = vec![0.0; n * d * n];
    // rows of `jac` follow the row-major layout of sigma: row r * d + i
    jacobian(|w, o| p.diffusion(t, w, u, o), n * d, x, step, &mut jac);
    for i in 0..d {
        for r in 0..n {
            for c in 0..n {
                out[i * n * n + r * n + c] = jac[(r * d + i) * n + c];
            }
        }
    }
}

pub fn drift_xx<P: Problem + ?Sized>(
    p: &P,
    step: f64,
    t: f64,
    x: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    let n = p.dims().n;
    hessians(|w, o| p.drift(t, w, u, o), n, x, step, out);
}

/// `out[(i * n + j) * n * n + a * n + b]` is the Hessian of `sigma^{j i}`.
pub fn diffusion_xx<P: Problem + ?Sized>(
    p: &P,
    step: f64,
    t: f64,
    x: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    let dims = p.dims();
    let (n, d) = (dims.n, dims.d);
    let mut hs = vec![0.0; n * d * n * n];
    hessians(|w, o| p.diffusion(t, w, u, o), n * d, x, step, &mut hs);
    for i in 0..d {
        for j in 0..n {
            let src = (j * d + i) * n * n;
            let dst = (i * n + j) * n * n;
            out[dst..dst + n * n].copy_from_slice(&hs[src..src + n * n]);
        }
    }
}

pub fn driver_grad<P: Problem + ?Sized>(
    p: &P,
    step: f64,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    let n = x.len();
    let w = pack_xyz(x, y, z);
    gradient(
        |w| p.driver(t, &w[..n], w[n], &w[n + 1..], u),
        &w,
        step,
        out,
    );
}

pub fn driver_hessian<P: Problem + ?Sized>(
    p: &P,
    step: f64,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    let n = x.len();
    let w = pack_xyz(x, y, z);
    hessian(
        |w| p.driver(t, &w[..n], w[n], &w[n + 1..], u),
        &w,
        step,
        out,
    );
}

pub fn terminal_x<P: Problem + ?Sized>(p: &P, step: f64, x: &[f64], out: &mut [f64]) {
    gradient(|w| p.terminal(w), x, step, out);
}

pub fn terminal_xx<P: Problem + ?Sized>(p: &P, step: f64, x: &[f64], out: &mut [f64]) {
    hessian(|w| p.terminal(w), x, step, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_quadratic() {
        let mut g = [0.0; 2];
        gradient(
            |w| w[0] * w[0] + 3.0 * w[0] * w[1],
            &[1.0, 2.0],
            1e-6,
            &mut g,
        );
        assert!((g[0] - 8.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn hessian_of_cubic_is_symmetric_and_accurate() {
        let mut h = [0.0; 4];
        hessian(
            |w| w[0] * w[0] * w[1] + libm::sin(w[1]),
            &[0.5, 1.0],
            1e-6,
            &mut h,
        );
        assert_eq!(h[1], h[2]);
        assert!((h[0] - 2.0).abs() < 1e-5);
        assert!((h[1] - 1.0).abs() < 1e-5);
        assert!((h[3] + libm::sin(1.0)).abs() < 1e-5);
    }
}
