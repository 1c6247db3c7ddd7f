//! Ready-made problems and the binomial-tree oracle.

mod tree;

pub use tree::{
    evaluate_policy, tree_bruteforce, TreeMode, TreeSolution, TreeValues, DEFAULT_POLICY_BUDGET,
};

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::LinearAdjointData;
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianPoint;
use crate::linalg;
use crate::model::{ControlDomain, DerivativeBounds, Derivatives, Dims, Problem};

/// A problem with its control domain and penalty weight.
#[derive(Debug)]
pub struct Benchmark<P> {
    pub problem: P,
    pub domain: ControlDomain,
    pub rho: f64,
}

/// `dX = u dW`, `f = sin(L z)`, `Phi = L x`, `U = {0, 1}`, `T = 1`, `x0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example41 {
    pub l: f64,
    x0: [f64; 1],
}

impl Example41 {
    /// `10 L^4 [1 + (1 + L^2)(1 + 8 L^2 e^{8 L^2})]`.
    pub fn recommended_rho(l: f64) -> f64 {
        let l2 = l * l;
        10.0 * l2 * l2 * (1.0 + (1.0 + l2) * (1.0 + 8.0 * l2 * libm::exp(8.0 * l2)))
    }
}

/// Builds the sine-driver benchmark; `0 < L <= sqrt(pi)`.
pub fn example41(l: f64) -> Result<Benchmark<Example41>> {
    if !(l > 0.0 && l <= libm::sqrt(core::f64::consts::PI)) {
        return Err(Error::config("L must lie in (0, sqrt(pi)]"));
    }
    Ok(Benchmark {
        problem: Example41 { l, x0: [0.0] },
        domain: ControlDomain::scalars(&[0.0, 1.0])?,
        rho: Example41::recommended_rho(l),
    })
}

impl Problem for Example41 {
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

    fn diffusion(&self, _t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = u[0];
    }

    fn driver(&self, _t: f64, _x: &[f64], _y: f64, z: &[f64], _u: &[f64]) -> f64 {
        libm::sin(self.l * z[0])
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        self.l * x[0]
    }

    fn closed_forms(&self) -> Derivatives {
        Derivatives::all()
    }

    fn drift_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn diffusion_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn drift_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn diffusion_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn driver_grad(&self, _t: f64, _x: &[f64], _y: f64, z: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 0.0;
        out[2] = self.l * libm::cos(self.l * z[0]);
    }

    fn driver_hessian(&self, _t: f64, _x: &[f64], _y: f64, z: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[8] = -self.l * self.l * libm::sin(self.l * z[0]);
    }

    fn terminal_x(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = self.l;
    }

    fn terminal_xx(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn bounds(&self) -> DerivativeBounds {
        DerivativeBounds {
            b_x: Some(0.0),
            sigma_x: Some(0.0),
            phi_x: Some(self.l),
            df: Some(self.l),
            d2f: Some(self.l * self.l),
            f_y: Some(0.0),
        }
    }

    fn second_order_vanishes(&self) -> bool {
        true
    }

    fn penalty_override(&self, point: &HamiltonianPoint<'_>, v: &[f64]) -> Option<f64> {
        let du = v[0] - point.u_prev[0];
        Some(du * du)
    }
}

/// Diffusion of the quadratic problem: `(t, u, out)` writes the `n x d` matrix.
pub type LqDiffusion = Box<dyn Fn(f64, &[f64], &mut [f64])>;

/// `dX = (b1 X + b2) dt + sigma(t, u) dW`, `f = 1/2 (x^T A x + u^T B u)`,
/// `Phi = 1/2 x^T Gamma x`.
pub struct LqProblem {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub gamma: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub sigma: LqDiffusion,
    pub x0: Vec<f64>,
    pub horizon: f64,
}

impl core::fmt::Debug for LqProblem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LqProblem")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("k", &self.k)
            .field("gamma", &self.gamma)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("b1", &self.b1)
            .field("b2", &self.b2)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

fn is_symmetric(m: &[f64], n: usize) -> bool {
    (0..n).all(|r| (0..n).all(|c| m[r * n + c] == m[c * n + r]))
}

fn quad(m: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for r in 0..n {
        acc += v[r] * linalg::dot(&m[r * n..(r + 1) * n], v);
    }
    acc
}

impl LqProblem {
    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n, self.k);
        if n == 0 || k == 0 || self.d == 0 {
            return Err(Error::config("dimensions must be positive"));
        }
        let shapes = [
            (self.gamma.len(), n * n),
            (self.a.len(), n * n),
            (self.b.len(), k * k),
            (self.b1.len(), n * n),
            (self.b2.len(), n),
            (self.x0.len(), n),
        ];
        if shapes.iter().any(|(a, b)| a != b) {
            return Err(Error::config(
                "quadratic problem coefficient has the wrong shape",
            ));
        }
        if !is_symmetric(&self.gamma, n) || !is_symmetric(&self.a, n) || !is_symmetric(&self.b, k) {
            return Err(Error::config("Gamma, A and B must be symmetric"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::config("horizon must be positive"));
        }
        Ok(())
    }

    /// RK4 solution of `P' = -(b1^T P + P b1 + A)`, `P_T = Gamma`, sampled on
    /// the grid `t_j = j T / N` as `[(N+1) x n x n]`.
    pub fn riccati_p(&self, steps: usize, substeps: usize) -> Vec<f64> {
        let n = self.n;
        let nn = n * n;
        let sub = substeps.max(1);
        let h = self.horizon / (steps * sub) as f64;
        let rhs = |p: &[f64]| -> Vec<f64> {
            let b1t = linalg::transpose(&self.b1, n, n);
            let mut out = linalg::matmul(&b1t, p, n, n, n);
            let pb = linalg::matmul(p, &self.b1, n, n, n);
            for i in 0..nn {
                out[i] += pb[i] + self.a[i];
            }
            out
        };
        let mut out = vec![0.0; (steps + 1) * nn];
        let mut cur = self.gamma.clone();
        out[steps * nn..].copy_from_slice(&cur);
        for j in (0..steps).rev() {
            for _ in 0..sub {
                let k1 = rhs(&cur);
                let t1: Vec<f64> = cur.iter().zip(&k1).map(|(c, k)| c + 0.5 * h * k).collect();
                let k2 = rhs(&t1);
                let t2: Vec<f64> = cur.iter().zip(&k2).map(|(c, k)| c + 0.5 * h * k).collect();
                let k3 = rhs(&t2);
                let t3: Vec<f64> = cur.iter().zip(&k3).map(|(c, k)| c + h * k).collect();
                let k4 = rhs(&t3);
                for i in 0..nn {
                    cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            out[j * nn..(j + 1) * nn].copy_from_slice(&cur);
        }
        out
    }
}

impl Problem for LqProblem {
    fn dims(&self) -> Dims {
        Dims::new(self.n, self.d, self.k)
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn drift(&self, _t: f64, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b2);
        linalg::gemv_acc(&self.b1, self.n, self.n, x, 1.0, out);
    }

    fn diffusion(&self, t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.sigma)(t, u, out);
    }

    fn driver(&self, _t: f64, x: &[f64], _y: f64, _z: &[f64], u: &[f64]) -> f64 {
        0.5 * (quad(&self.a, x) + quad(&self.b, u))
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        0.5 * quad(&self.gamma, x)
    }

    fn closed_forms(&self) -> Derivatives {
        Derivatives::all()
    }

    fn drift_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b1);
    }

    fn diffusion_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn drift_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn diffusion_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn driver_grad(&self, _t: f64, x: &[f64], _y: f64, _z: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        linalg::gemv_acc(&self.a, self.n, self.n, x, 1.0, &mut out[..self.n]);
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
        let n = self.n;
        let w = n + 1 + self.d;
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..n {
            out[r * w..r * w + n].copy_from_slice(&self.a[r * n..(r + 1) * n]);
        }
    }

    fn terminal_x(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        linalg::gemv_acc(&self.gamma, self.n, self.n, x, 1.0, out);
    }

    fn terminal_xx(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.gamma);
    }

    fn bounds(&self) -> DerivativeBounds {
        let sup = |m: &[f64]| m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        DerivativeBounds {
            b_x: Some(sup(&self.b1)),
            sigma_x: Some(0.0),
            phi_x: None,
            df: None,
            d2f: Some(sup(&self.a)),
            f_y: Some(0.0),
        }
    }
}

/// Quadratic benchmark with `rho = 0`. Quadratic costs grow faster than
/// linearly, so no growth bound is declared.
#[allow(clippy::too_many_arguments)]
pub fn lq_problem(
    gamma: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    d: usize,
    sigma: LqDiffusion,
    x0: Vec<f64>,
    domain: ControlDomain,
) -> Result<Benchmark<LqProblem>> {
    let n = x0.len();
    let k = domain.dim();
    let problem = LqProblem {
        n,
        d,
        k,
        gamma,
        a,
        b,
        b1,
        b2,
        sigma,
        x0,
        horizon: 1.0,
    };
    problem.validate()?;
    domain.validate()?;
    Ok(Benchmark {
        problem,
        domain,
        rho: 0.0,
    })
}

/// `n = d = k = 1`, `Gamma = A = B = 1`, `b1 = b2 = 0`, `sigma = u`, `x0 = 0`, `U = {-1, 0, 1}`.
pub fn lq_desk() -> Benchmark<LqProblem> {
    let sigma: LqDiffusion = Box::new(|_t: f64, u: &[f64], out: &mut [f64]| out[0] = u[0]);
    let domain = ControlDomain::FiniteSet(vec![vec![-1.0], vec![0.0], vec![1.0]]);
    lq_problem(
        vec![1.0],
        vec![1.0],
        vec![1.0],
        vec![0.0],
        vec![0.0],
        1,
        sigma,
        vec![0.0],
        domain,
    )
    .expect("desk coefficients are valid")
}

/// Constant coefficients of the linear recursive family
///
/// ```text
/// dX = (b1 X + b2 u + b3) dt + sum_i (sigma1_i X + sigma2_i u + sigma3_i) dW^i
/// f  = f1^T x + f2 y + f3(t, u),   Phi = alpha^T x + gamma
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRecursiveParams {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// `n x n`
    pub b1: Vec<f64>,
    /// `n x k`
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
    /// `d` blocks of `n x n`
    pub sigma1: Vec<f64>,
    /// `d` blocks of `n x k`
    pub sigma2: Vec<f64>,
    /// `d` blocks of length `n`
    pub sigma3: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: f64,
    pub alpha: Vec<f64>,
    pub gamma: f64,
}

impl LinearRecursiveParams {
    pub fn zeros(n: usize, d: usize, k: usize) -> Self {
        LinearRecursiveParams {
            n,
            d,
            k,
            x0: vec![0.0; n],
            horizon: 1.0,
            b1: vec![0.0; n * n],
            b2: vec![0.0; n * k],
            b3: vec![0.0; n],
            sigma1: vec![0.0; d * n * n],
            sigma2: vec![0.0; d * n * k],
            sigma3: vec![0.0; d * n],
            f1: vec![0.0; n],
            f2: 0.0,
            alpha: vec![0.0; n],
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d, k) = (self.n, self.d, self.k);
        if n == 0 || d == 0 || k == 0 {
            return Err(Error::config("dimensions must be positive"));
        }
        let shapes = [
            (self.x0.len(), n),
            (self.b1.len(), n * n),
            (self.b2.len(), n * k),
            (self.b3.len(), n),
            (self.sigma1.len(), d * n * n),
            (self.sigma2.len(), d * n * k),
            (self.sigma3.len(), d * n),
            (self.f1.len(), n),
            (self.alpha.len(), n),
        ];
        if shapes.iter().any(|(a, b)| a != b) {
            return Err(Error::config(
                "linear recursive coefficient has the wrong shape",
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon must be positive"));
        }
        Ok(())
    }

    /// Data of the deterministic adjoint ODE.
    pub fn adjoint_data(&self) -> LinearAdjointData<'_> {
        LinearAdjointData {
            n: self.n,
            b1: &self.b1,
            f1: &self.f1,
            f2: self.f2,
            alpha: &self.alpha,
            horizon: self.horizon,
        }
    }
}

/// Linear recursive problem with control cost `f3(t, u)`.
pub struct LinearRecursive<F> {
    pub params: LinearRecursiveParams,
    pub f3: F,
}

impl<F> core::fmt::Debug for LinearRecursive<F> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LinearRecursive")
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// The linear recursive family with `rho = 0`; the second-order adjoint vanishes.
pub fn linear_recursive<F>(
    params: LinearRecursiveParams,
    f3: F,
    domain: ControlDomain,
) -> Result<Benchmark<LinearRecursive<F>>>
where
    F: Fn(f64, &[f64]) -> f64,
{
    params.validate()?;
    domain.validate()?;
    if domain.dim() != params.k {
        return Err(Error::config("control domain dimension differs from k"));
    }
    Ok(Benchmark {
        problem: LinearRecursive { params, f3 },
        domain,
        rho: 0.0,
    })
}

fn half_square(_t: f64, u: &[f64]) -> f64 {
    0.5 * linalg::norm_sq(u)
}

/// Control-cost function of [`linear_recursive_desk`].
pub type DeskCost = fn(f64, &[f64]) -> f64;

/// Scalar instance: `x0 = 0.5`, `b1 = 0.1`, `b2 = 1`, `sigma3 = 0.3`,
/// `f1 = f2 = 0.2`, `f3 = u^2 / 2`, `alpha = 1`, `U = [-1, 1]` on three points.
pub fn linear_recursive_desk() -> Benchmark<LinearRecursive<DeskCost>> {
    let mut params = LinearRecursiveParams::zeros(1, 1, 1);
    params.x0 = vec![0.5];
    params.b1 = vec![0.1];
    params.b2 = vec![1.0];
    params.sigma3 = vec![0.3];
    params.f1 = vec![0.2];
    params.f2 = 0.2;
    params.alpha = vec![1.0];
    let domain = ControlDomain::Box {
        lower: vec![-1.0],
        upper: vec![1.0],
        resolution: vec![3],
    };
    linear_recursive(params, half_square as DeskCost, domain).expect("desk coefficients are valid")
}

impl<F: Fn(f64, &[f64]) -> f64> Problem for LinearRecursive<F> {
    fn dims(&self) -> Dims {
        Dims::new(self.params.n, self.params.d, self.params.k)
    }

    fn initial_state(&self) -> &[f64] {
        &self.params.x0
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn drift(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        out.copy_from_slice(&p.b3);
        linalg::gemv_acc(&p.b1, p.n, p.n, x, 1.0, out);
        linalg::gemv_acc(&p.b2, p.n, p.k, u, 1.0, out);
    }

    fn diffusion(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (n, d, k) = (p.n, p.d, p.k);
        let mut col = vec![0.0; n];
        for i in 0..d {
            col.copy_from_slice(&p.sigma3[i * n..(i + 1) * n]);
            linalg::gemv_acc(
                &p.sigma1[i * n * n..(i + 1) * n * n],
                n,
                n,
                x,
                1.0,
                &mut col,
            );
            linalg::gemv_acc(
                &p.sigma2[i * n * k..(i + 1) * n * k],
                n,
                k,
                u,
                1.0,
                &mut col,
            );
            for r in 0..n {
                out[r * d + i] = col[r];
            }
        }
    }

    fn driver(&self, t: f64, x: &[f64], y: f64, _z: &[f64], u: &[f64]) -> f64 {
        linalg::dot(&self.params.f1, x) + self.params.f2 * y + (self.f3)(t, u)
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.params.alpha, x) + self.params.gamma
    }

    fn closed_forms(&self) -> Derivatives {
        Derivatives::all()
    }

    fn drift_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params.b1);
    }

    fn diffusion_x(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params.sigma1);
    }

    fn drift_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn diffusion_xx(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn driver_grad(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64], _u: &[f64], out: &mut [f64]) {
        let n = self.params.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        out[..n].copy_from_slice(&self.params.f1);
        out[n] = self.params.f2;
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
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn terminal_x(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params.alpha);
    }

    fn terminal_xx(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn bounds(&self) -> DerivativeBounds {
        let sup = |m: &[f64]| m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        DerivativeBounds {
            b_x: Some(sup(&self.params.b1)),
            sigma_x: Some(sup(&self.params.sigma1)),
            phi_x: Some(sup(&self.params.alpha)),
            df: None,
            d2f: Some(0.0),
            f_y: Some(self.params.f2.abs()),
        }
    }

    fn second_order_vanishes(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_derivatives;

    #[test]
    fn rho_formula() {
        let small = Example41::recommended_rho(0.1);
        assert!((small - 2.0975e-3).abs() < 1e-7, "{small}");
        let one = Example41::recommended_rho(1.0);
        let expect = 10.0 * (1.0 + 2.0 * (1.0 + 8.0 * libm::exp(8.0)));
        assert!((one - expect).abs() < 1e-9 * expect);
        assert!((one - 4.768e5).abs() < 1e3);
    }

    #[test]
    fn example41_range() {
        assert!(example41(0.0).unwrap_err().is_config());
        assert!(example41(1.8).is_err());
        assert!(example41(libm::sqrt(core::f64::consts::PI)).is_ok());
        let bench = example41(0.1).unwrap();
        assert_eq!(bench.domain.enumerate(), vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn closed_forms_agree_with_differences() {
        let e = example41(0.7).unwrap();
        let report = check_derivatives(&e.problem, 50, 1e-5, 1e-6, 3);
        assert!(report.passed(), "{report:?}");
        assert!(report.get("f_z").unwrap().declared);
        let lq = lq_desk();
        assert!(check_derivatives(&lq.problem, 50, 1e-5, 1e-6, 3).passed());
        let lr = linear_recursive_desk();
        assert!(check_derivatives(&lr.problem, 50, 1e-5, 1e-6, 3).passed());
    }

    #[test]
    fn lq_rejects_asymmetric_input() {
        let sigma: LqDiffusion = Box::new(|_t: f64, u: &[f64], out: &mut [f64]| {
            out[0] = u[0];
            out[1] = 0.0;
        });
        let domain = ControlDomain::scalars(&[0.0, 1.0]).unwrap();
        let err = lq_problem(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.5, 0.0, 1.0],
            vec![1.0],
            vec![0.0; 4],
            vec![0.0; 2],
            1,
            sigma,
            vec![0.0, 0.0],
            domain,
        );
        assert!(err.is_err());
    }

    #[test]
    fn riccati_p_is_psd_and_matches_closed_form() {
        let lq = lq_desk();
        let p = lq.problem.riccati_p(20, 4);
        for j in 0..=20 {
            assert!((p[j] - (2.0 - j as f64 / 20.0)).abs() < 1e-12);
            assert!(p[j] >= 0.0);
        }
    }

    #[test]
    fn linear_recursive_shapes() {
        let mut params = LinearRecursiveParams::zeros(1, 1, 1);
        params.b1 = vec![0.0, 0.0];
        let domain = ControlDomain::scalars(&[0.0]).unwrap();
        assert!(linear_recursive(params, |_, _| 0.0, domain).is_err());
    }
}
