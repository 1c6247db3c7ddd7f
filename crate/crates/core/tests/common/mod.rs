#![allow(dead_code)]

use msa_core::model::{Derivatives, Dims, Problem};

/// `dX = dW`, `f = alpha y`, `Phi = x`. `Y_t = exp(alpha (T - t)) X_t`.
pub struct LinearValue {
    pub alpha: f64,
    pub x0: [f64; 1],
}

impl Problem for LinearValue {
    fn dims(&self) -> Dims {
        Dims::new(1, 1, 1)
    }
    fn initial_state(&self) -> &[f64] {
        &self.x0
    }
    fn horizon(&self) -> f64 {
        1.0
    }
    fn drift(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn diffusion(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn driver(&self, _t: f64, _x: &[f64], y: f64, _z: &[f64], _u: &[f64]) -> f64 {
        self.alpha * y
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        x[0]
    }
}

/// Two-dimensional problem with constant Jacobians:
/// `b = B x + b0 u`, `sigma = S x + s0 u`, `f = 1/2 x^T A x + fy y + c z + 1/2 u^2`,
/// `Phi = 1/2 x^T G x`.
pub struct Frozen;

pub const FROZEN_B: [f64; 4] = [0.3, -0.2, 0.1, 0.4];
pub const FROZEN_S: [f64; 4] = [0.2, 0.1, -0.3, 0.25];
pub const FROZEN_A: [f64; 4] = [1.0, 0.2, 0.2, 0.5];
pub const FROZEN_G: [f64; 4] = [2.0, 0.3, 0.3, 1.0];
pub const FROZEN_FY: f64 = 0.3;
pub const FROZEN_C: f64 = 0.4;
const B0: [f64; 2] = [0.5, -1.0];
const S0: [f64; 2] = [1.0, 0.5];

fn mv(m: &[f64; 4], x: &[f64]) -> [f64; 2] {
    [m[0] * x[0] + m[1] * x[1], m[2] * x[0] + m[3] * x[1]]
}

impl Problem for Frozen {
    fn dims(&self) -> Dims {
        Dims::new(2, 1, 1)
    }
    fn initial_state(&self) -> &[f64] {
        &[0.5, -0.25]
    }
    fn horizon(&self) -> f64 {
        1.0
    }
    fn drift(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let v = mv(&FROZEN_B, x);
        out[0] = v[0] + B0[0] * u[0];
        out[1] = v[1] + B0[1] * u[0];
    }
    fn diffusion(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let v = mv(&FROZEN_S, x);
        out[0] = v[0] + S0[0] * u[0];
        out[1] = v[1] + S0[1] * u[0];
    }
    fn driver(&self, _t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64]) -> f64 {
        let ax = mv(&FROZEN_A, x);
        0.5 * (x[0] * ax[0] + x[1] * ax[1]) + FROZEN_FY * y + FROZEN_C * z[0] + 0.5 * u[0] * u[0]
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        let gx = mv(&FROZEN_G, x);
        0.5 * (x[0] * gx[0] + x[1] * gx[1])
    }
    fn closed_forms(&self) -> Derivatives {
        Derivatives::all()
    }
    fn drift_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&FROZEN_B);
    }
    fn diffusion_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&FROZEN_S);
    }
    fn drift_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn driver_grad(&self, _t: f64, x: &[f64], _y: f64, _z: &[f64], _u: &[f64], out: &mut [f64]) {
        let ax = mv(&FROZEN_A, x);
        out[0] = ax[0];
        out[1] = ax[1];
        out[2] = FROZEN_FY;
        out[3] = FROZEN_C;
    }
    fn driver_hessian(
        &self,
        _t: f64,
        _x: &[f64],
        _y: f64,
        _z: &[f64],
        _u: &[f64],
        out: &mut [f64],
    ) {
        out.fill(0.0);
        out[0] = FROZEN_A[0];
        out[1] = FROZEN_A[1];
        out[4] = FROZEN_A[2];
        out[5] = FROZEN_A[3];
    }
    fn terminal_x(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&mv(&FROZEN_G, x));
    }
    fn terminal_xx(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&FROZEN_G);
    }
}

/// `P_j = P_{j+1} + [fy P + K^T P + P K + S^T P S + A] dt`, `K = B + c S`,
/// `P_N = G`; the martingale part vanishes for a single path.
pub fn frozen_direct_p(steps: usize) -> Vec<[f64; 4]> {
    let dt = 1.0 / steps as f64;
    let k: [f64; 4] = core::array::from_fn(|i| FROZEN_B[i] + FROZEN_C * FROZEN_S[i]);
    let mul = |a: &[f64; 4], b: &[f64; 4]| -> [f64; 4] {
        [
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ]
    };
    let tr = |a: &[f64; 4]| [a[0], a[2], a[1], a[3]];
    let mut out = vec![[0.0; 4]; steps + 1];
    out[steps] = FROZEN_G;
    for j in (0..steps).rev() {
        let p = out[j + 1];
        let ktp = mul(&tr(&k), &p);
        let pk = mul(&p, &k);
        let sps = mul(&mul(&tr(&FROZEN_S), &p), &FROZEN_S);
        out[j] = core::array::from_fn(|i| {
            p[i] + (FROZEN_FY * p[i] + ktp[i] + pk[i] + sps[i] + FROZEN_A[i]) * dt
        });
    }
    out
}
