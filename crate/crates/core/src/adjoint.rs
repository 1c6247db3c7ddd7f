//! First- and second-order adjoint equations along a solved trajectory.
//!
//! First order, with `(f_x, f_y, f_z)` taken at `(t, X, Y, Z, u)`:
//!
//! ```text
//! dp = -[A^T p + sum_i B_i^T q^i + f_x] dt + sum_i q^i dW^i,   p_T = Phi_x(X_T)
//! A   = sum_i f_{z_i} sigma_x^i + f_y I + b_x
//! B_i = f_{z_i} I + sigma_x^i
//! ```
//!
//! Second order, for symmetric `P`:
//!
//! ```text
//! dP = -[ f_y P + b_x^T P + P b_x + sum_i f_{z_i} (sigma_x^i^T P + P sigma_x^i)
//!         + sum_i sigma_x^i^T P sigma_x^i
//!         + sum_i (f_{z_i} Q^i + sigma_x^i^T Q^i + Q^i sigma_x^i) + Psi ] dt + sum_i Q^i dW^i
//! Psi = sum_j b_xx^j p^j + sum_{i,j} sigma_xx^{ji} (f_{z_i} p^j + q^{ji}) + [I, p, Ups] D^2 f [I, p, Ups]^T
//! ```
//!
//! where column `i` of `Ups` is `sigma_x^i^T p + q^i`. The matrix equation is
//! solved in column-stacked form through `vec(A X B) = (B^T kron A) vec X`.

use alloc::vec;
use alloc::vec::Vec;

use crate::bsde::{
    solve_linear_bsde, BackwardPaths, ConditionalExpectation, LinearSolution, LinearStep,
    StepContext,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dims, Problem};
use crate::stats::Estimate;
use crate::stochastics::{BrownianBatch, ControlField, ForwardPaths};

/// `(p, q)` with `p` of length `n` and `q` an `n x d` block per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderAdjoint {
    pub solution: LinearSolution,
}

impl FirstOrderAdjoint {
    pub fn p(&self, path: usize, j: usize) -> &[f64] {
        self.solution.p(path, j)
    }

    pub fn q(&self, path: usize, j: usize) -> &[f64] {
        self.solution.q(path, j)
    }

    pub fn p0(&self) -> &[Estimate] {
        &self.solution.initial
    }

    pub fn sup_norm(&self) -> f64 {
        self.solution.p.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `(P, Q)` with `P` an `n x n` symmetric block per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderAdjoint {
    pub n: usize,
    pub solution: LinearSolution,
    /// Largest `|P_ab - P_ba|` seen before each symmetrization.
    pub asymmetry: f64,
}

impl SecondOrderAdjoint {
    /// Identically zero field, used when the problem declares it vanishes.
    pub fn zeros(n_paths: usize, steps: usize, n: usize, d: usize) -> Self {
        let r = n * n;
        SecondOrderAdjoint {
            n,
            solution: LinearSolution {
                r,
                d,
                n_paths,
                steps,
                p: vec![0.0; n_paths * (steps + 1) * r],
                q: vec![0.0; n_paths * steps * r * d],
                initial: vec![Estimate::ZERO; r],
            },
            asymmetry: 0.0,
        }
    }

    /// The `n x n` matrix at `(path, j)`; row-major and column-stacked agree.
    pub fn pp(&self, path: usize, j: usize) -> &[f64] {
        self.solution.p(path, j)
    }

    pub fn sup_norm(&self) -> f64 {
        self.solution.p.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Derivatives at one node, with reusable storage.
struct NodeDerivs {
    dims: Dims,
    grad: Vec<f64>,
    bx: Vec<f64>,
    sx: Vec<f64>,
}

impl NodeDerivs {
    fn new(dims: Dims) -> Self {
        NodeDerivs {
            dims,
            grad: vec![0.0; dims.xyz()],
            bx: vec![0.0; dims.n * dims.n],
            sx: vec![0.0; dims.d * dims.n * dims.n],
        }
    }

    fn load<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
        u: &[f64],
    ) -> Result<()> {
        problem.driver_grad(t, x, y, z, u, &mut self.grad);
        problem.drift_x(t, x, u, &mut self.bx);
        problem.diffusion_x(t, x, u, &mut self.sx);
        let finite = self
            .grad
            .iter()
            .chain(&self.bx)
            .chain(&self.sx)
            .all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Evaluation {
                coefficient: "derivative",
                t,
            })
        }
    }

    fn f_y(&self) -> f64 {
        self.grad[self.dims.n]
    }

    fn f_z(&self, i: usize) -> f64 {
        self.grad[self.dims.n + 1 + i]
    }

    fn sigma_x(&self, i: usize) -> &[f64] {
        let nn = self.dims.n * self.dims.n;
        &self.sx[i * nn..(i + 1) * nn]
    }

    /// `A = sum_i f_{z_i} sigma_x^i + f_y I + b_x`.
    fn first_a(&self, out: &mut [f64]) {
        let n = self.dims.n;
        out.copy_from_slice(&self.bx);
        for r in 0..n {
            out[r * n + r] += self.f_y();
        }
        for i in 0..self.dims.d {
            let fz = self.f_z(i);
            for (o, s) in out.iter_mut().zip(self.sigma_x(i)) {
                *o += fz * s;
            }
        }
    }

    /// `B_i = f_{z_i} I + sigma_x^i`.
    fn first_b(&self, i: usize, out: &mut [f64]) {
        let n = self.dims.n;
        out.copy_from_slice(self.sigma_x(i));
        for r in 0..n {
            out[r * n + r] += self.f_z(i);
        }
    }
}

fn check_backward(backward: &BackwardPaths, batch: &BrownianBatch) -> Result<()> {
    if backward.n_paths() != batch.n_paths() {
        return Err(Error::config(
            "backward paths and noise batch differ in paths",
        ));
    }
    Ok(())
}

pub fn first_order_adjoint<P, B>(
    problem: &P,
    forward: &ForwardPaths,
    backward: &BackwardPaths,
    control: &ControlField,
    batch: &BrownianBatch,
    backend: &B,
) -> Result<FirstOrderAdjoint>
where
    P: Problem + ?Sized,
    B: ConditionalExpectation + ?Sized,
{
    check_backward(backward, batch)?;
    let dims = problem.dims();
    let (n, d) = (dims.n, dims.d);
    let (m, steps) = (batch.n_paths(), batch.grid().steps());
    let mut terminal = vec![0.0; m * n];
    for path in 0..m {
        problem.terminal_x(
            forward.x(path, steps),
            &mut terminal[path * n..(path + 1) * n],
        );
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            coefficient: "terminal_x",
            t: batch.grid().horizon(),
        });
    }
    let mut nd = NodeDerivs::new(dims);
    let grid = *batch.grid();
    let solution = solve_linear_bsde(
        &terminal,
        n,
        forward,
        control,
        batch,
        backend,
        |j, step: &mut LinearStep| {
            let t = grid.t(j);
            for path in 0..m {
                nd.load(
                    problem,
                    t,
                    forward.x(path, j),
                    backward.y(path, j),
                    backward.z(path, j),
                    control.get(path, j),
                )?;
                nd.first_a(step.a(path));
                for i in 0..d {
                    nd.first_b(i, step.b(path, i));
                }
                step.c(path).copy_from_slice(&nd.grad[..n]);
            }
            Ok(())
        },
        |_, _| {},
    )?;
    Ok(FirstOrderAdjoint { solution })
}

/// Columns `sigma_x^i(t, x, u)^T p + q^i`, returned as an `n x d` block.
pub fn upsilon<P: Problem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    p: &[f64],
    q: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let Dims { n, d, .. } = problem.dims();
    let mut sx = vec![0.0; d * n * n];
    problem.diffusion_x(t, x, u, &mut sx);
    upsilon_from(&sx, n, d, p, q)
}

fn upsilon_from(sx: &[f64], n: usize, d: usize, p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = q.to_vec();
    for i in 0..d {
        let s = &sx[i * n * n..(i + 1) * n * n];
        for r in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += s[k * n + r] * p[k];
            }
            out[r * d + i] += acc;
        }
    }
    out
}

/// Column-stacked operators of the second-order equation: returns `(A, [B_i])`
/// with the generator `A vec P + sum_i B_i vec Q^i`.
pub fn second_order_operators(
    n: usize,
    d: usize,
    f_y: f64,
    f_z: &[f64],
    bx: &[f64],
    sx: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nn = n * n;
    let bxt = linalg::transpose(bx, n, n);
    let sxt: Vec<f64> = (0..d)
        .flat_map(|i| linalg::transpose(&sx[i * nn..(i + 1) * nn], n, n))
        .collect();
    let mut a = vec![0.0; nn * nn];
    let mut b = vec![0.0; d * nn * nn];
    operators_from(
        n,
        d,
        f_y,
        f_z,
        &bxt,
        &sxt,
        &linalg::identity(n),
        &mut a,
        &mut b,
    );
    (a, b.chunks(nn * nn).map(|c| c.to_vec()).collect())
}

/// Accumulates `s (a kron b)` into `out` for `n x n` factors.
fn add_kron(out: &mut [f64], a: &[f64], b: &[f64], n: usize, s: f64) {
    let nn = n * n;
    for ar in 0..n {
        for ac in 0..n {
            let av = a[ar * n + ac] * s;
            if av == 0.0 {
                continue;
            }
            for br in 0..n {
                let row = &mut out[(ar * n + br) * nn + ac * n..(ar * n + br) * nn + ac * n + n];
                for (o, bv) in row.iter_mut().zip(&b[br * n..(br + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// Writes the operators built from factors `g` (for `b_x`) and `h_i` (for
/// `sigma_x^i`): `f_y I + I(x)g + g(x)I + sum_i f_zi (I(x)h_i + h_i(x)I) + h_i(x)h_i`
/// and `f_zi I + I(x)h_i + h_i(x)I`. Passing transposed Jacobians gives the
/// operators themselves, passing the Jacobians gives their transposes.
#[allow(clippy::too_many_arguments)]
fn operators_from(
    n: usize,
    d: usize,
    f_y: f64,
    f_z: &[f64],
    g: &[f64],
    h: &[f64],
    id: &[f64],
    a: &mut [f64],
    b: &mut [f64],
) {
    let nn = n * n;
    let big = nn * nn;
    a.fill(0.0);
    b.fill(0.0);
    for r in 0..nn {
        a[r * nn + r] = f_y;
    }
    add_kron(a, id, g, n, 1.0);
    add_kron(a, g, id, n, 1.0);
    for i in 0..d {
        let hi = &h[i * nn..(i + 1) * nn];
        let bi = &mut b[i * big..(i + 1) * big];
        add_kron(bi, id, hi, n, 1.0);
        add_kron(bi, hi, id, n, 1.0);
        for (o, v) in a.iter_mut().zip(bi.iter()) {
            *o += f_z[i] * v;
        }
        add_kron(a, hi, hi, n, 1.0);
        for r in 0..nn {
            bi[r * nn + r] += f_z[i];
        }
    }
}

/// `Psi` at one node, written column-stacked into `out`.
#[allow(clippy::too_many_arguments)]
fn psi<P: Problem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    u: &[f64],
    p: &[f64],
    q: &[f64],
    sx: &[f64],
    f_z: &[f64],
    scratch: &mut PsiScratch,
    out: &mut [f64],
) {
    let Dims { n, d, .. } = problem.dims();
    let nn = n * n;
    let w = n + 1 + d;
    let acc = &mut scratch.acc;
    acc.fill(0.0);
    problem.drift_xx(t, x, u, &mut scratch.bxx);
    for j in 0..n {
        if p[j] == 0.0 {
            continue;
        }
        for (o, h) in acc.iter_mut().zip(&scratch.bxx[j * nn..(j + 1) * nn]) {
            *o += h * p[j];
        }
    }
    problem.diffusion_xx(t, x, u, &mut scratch.sxx);
    for i in 0..d {
        for j in 0..n {
            let weight = f_z[i] * p[j] + q[j * d + i];
            if weight == 0.0 {
                continue;
            }
            let h = &scratch.sxx[(i * n + j) * nn..(i * n + j + 1) * nn];
            for (o, v) in acc.iter_mut().zip(h) {
                *o += v * weight;
            }
        }
    }
    problem.driver_hessian(t, x, y, z, u, &mut scratch.d2f);
    // M = [I | p | Ups], n x w; acc += M D2f M^T
    let mm = &mut scratch.mm;
    mm.fill(0.0);
    for r in 0..n {
        mm[r * w + r] = 1.0;
        mm[r * w + n] = p[r];
        for i in 0..d {
            let mut v = q[r * d + i];
            for c in 0..n {
                v += sx[i * nn + c * n + r] * p[c];
            }
            mm[r * w + n + 1 + i] = v;
        }
    }
    let md = &mut scratch.md;
    md.fill(0.0);
    for r in 0..n {
        for k in 0..w {
            let v = mm[r * w + k];
            if v == 0.0 {
                continue;
            }
            for c in 0..w {
                md[r * w + c] += v * scratch.d2f[k * w + c];
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            let mut v = 0.0;
            for k in 0..w {
                v += md[r * w + k] * mm[c * w + k];
            }
            acc[r * n + c] += v;
        }
    }
    for r in 0..n {
        for c in 0..n {
            out[c * n + r] = acc[r * n + c];
        }
    }
}

struct PsiScratch {
    bxx: Vec<f64>,
    sxx: Vec<f64>,
    d2f: Vec<f64>,
    acc: Vec<f64>,
    mm: Vec<f64>,
    md: Vec<f64>,
}

pub fn second_order_adjoint<P, B>(
    problem: &P,
    forward: &ForwardPaths,
    backward: &BackwardPaths,
    control: &ControlField,
    first: &FirstOrderAdjoint,
    batch: &BrownianBatch,
    backend: &B,
) -> Result<SecondOrderAdjoint>
where
    P: Problem + ?Sized,
    B: ConditionalExpectation + ?Sized,
{
    check_backward(backward, batch)?;
    let dims = problem.dims();
    let (n, d) = (dims.n, dims.d);
    let nn = n * n;
    let (m, steps) = (batch.n_paths(), batch.grid().steps());
    let mut terminal = vec![0.0; m * nn];
    let mut hess = vec![0.0; nn];
    for path in 0..m {
        problem.terminal_xx(forward.x(path, steps), &mut hess);
        let v = linalg::vec_columns(&hess, n);
        terminal[path * nn..(path + 1) * nn].copy_from_slice(&v);
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            coefficient: "terminal_xx",
            t: batch.grid().horizon(),
        });
    }
    let mut asym = 0.0_f64;
    for path in 0..m {
        asym = asym.max(linalg::symmetrize(
            &mut terminal[path * nn..(path + 1) * nn],
            n,
        ));
    }
    let mut nd = NodeDerivs::new(dims);
    let mut scratch = PsiScratch {
        bxx: vec![0.0; n * nn],
        sxx: vec![0.0; d * n * nn],
        d2f: vec![0.0; dims.xyz() * dims.xyz()],
        acc: vec![0.0; nn],
        mm: vec![0.0; n * dims.xyz()],
        md: vec![0.0; n * dims.xyz()],
    };
    let id = linalg::identity(n);
    let mut ops_a = vec![0.0; nn * nn];
    let mut ops_b = vec![0.0; d * nn * nn];
    let grid = *batch.grid();
    let mut f_z = vec![0.0; d];
    let solution = solve_linear_bsde(
        &terminal,
        nn,
        forward,
        control,
        batch,
        backend,
        |j, step: &mut LinearStep| {
            let t = grid.t(j);
            for path in 0..m {
                let (x, y, z, u) = (
                    forward.x(path, j),
                    backward.y(path, j),
                    backward.z(path, j),
                    control.get(path, j),
                );
                nd.load(problem, t, x, y, z, u)?;
                for (i, fz) in f_z.iter_mut().enumerate() {
                    *fz = nd.f_z(i);
                }
                // the solver applies the transpose, so build the transposed operators
                operators_from(
                    n,
                    d,
                    nd.f_y(),
                    &f_z,
                    &nd.bx,
                    &nd.sx,
                    &id,
                    &mut ops_a,
                    &mut ops_b,
                );
                step.a(path).copy_from_slice(&ops_a);
                for i in 0..d {
                    step.b(path, i)
                        .copy_from_slice(&ops_b[i * nn * nn..(i + 1) * nn * nn]);
                }
                psi(
                    problem,
                    t,
                    x,
                    y,
                    z,
                    u,
                    first.p(path, j),
                    first.q(path, j),
                    &nd.sx,
                    &f_z,
                    &mut scratch,
                    step.c(path),
                );
                if step.c(path).iter().any(|v| !v.is_finite()) {
                    return Err(Error::Evaluation {
                        coefficient: "psi",
                        t,
                    });
                }
            }
            Ok(())
        },
        |_, pj: &mut [f64]| {
            for block in pj.chunks_mut(nn) {
                asym = asym.max(linalg::symmetrize(block, n));
            }
        },
    )?;
    Ok(SecondOrderAdjoint {
        n,
        solution,
        asymmetry: asym,
    })
}

/// Constant-coefficient data of the linear recursive family.
#[derive(Debug, Clone, Copy)]
pub struct LinearAdjointData<'a> {
    pub n: usize,
    /// `n x n`
    pub b1: &'a [f64],
    pub f1: &'a [f64],
    pub f2: f64,
    pub alpha: &'a [f64],
    pub horizon: f64,
}

/// Deterministic `p` and `Gamma` on the grid `t_j = j T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointOde {
    pub times: Vec<f64>,
    /// `[(N+1) x n]`
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl AdjointOde {
    pub fn p_at(&self, j: usize, n: usize) -> &[f64] {
        &self.p[j * n..(j + 1) * n]
    }
}

/// Classical RK4 for `p' = -[(f_2 I + b_1^T) p + f_1]`, `p_T = alpha`, backward,
/// and `Gamma' = f_2 Gamma`, `Gamma_0 = 1`, forward. `substeps` RK4 steps per interval.
pub fn ode_adjoint_linear(
    data: &LinearAdjointData<'_>,
    steps: usize,
    substeps: usize,
) -> AdjointOde {
    let n = data.n;
    let h = data.horizon / (steps * substeps.max(1)) as f64;
    let rhs = |p: &[f64], out: &mut [f64]| {
        for c in 0..n {
            let mut v = data.f2 * p[c] + data.f1[c];
            for r in 0..n {
                v += data.b1[r * n + c] * p[r];
            }
            // time runs backward, so the sign flips
            out[c] = v;
        }
    };
    let mut p = vec![0.0; (steps + 1) * n];
    p[steps * n..].copy_from_slice(data.alpha);
    let mut cur = data.alpha.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for j in (0..steps).rev() {
        for _ in 0..substeps.max(1) {
            rhs(&cur, &mut k1);
            for c in 0..n {
                tmp[c] = cur[c] + 0.5 * h * k1[c];
            }
            rhs(&tmp, &mut k2);
            for c in 0..n {
                tmp[c] = cur[c] + 0.5 * h * k2[c];
            }
            rhs(&tmp, &mut k3);
            for c in 0..n {
                tmp[c] = cur[c] + h * k3[c];
            }
            rhs(&tmp, &mut k4);
            for c in 0..n {
                cur[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        p[j * n..(j + 1) * n].copy_from_slice(&cur);
    }
    let mut gamma = vec![1.0; steps + 1];
    let mut g = 1.0;
    let f2 = data.f2;
    for item in gamma.iter_mut().skip(1) {
        for _ in 0..substeps.max(1) {
            let k1 = f2 * g;
            let k2 = f2 * (g + 0.5 * h * k1);
            let k3 = f2 * (g + 0.5 * h * k2);
            let k4 = f2 * (g + h * k3);
            g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        *item = g;
    }
    let grid_times = (0..=steps)
        .map(|j| {
            if j == steps {
                data.horizon
            } else {
                j as f64 * data.horizon / steps as f64
            }
        })
        .collect();
    AdjointOde {
        times: grid_times,
        p,
        gamma,
    }
}

/// Monte Carlo estimate of `p_0 = E[Gamma_T^T Phi_x(X_T) + int Gamma^T f_x dt]`
/// with `dGamma = A Gamma dt + sum_i B_i Gamma dW^i`, `Gamma_0 = I`, by Euler
/// alongside the forward path. `Y` and `Z` come from a state solve on `batch`.
pub fn explicit_p0_oracle<P, B>(
    problem: &P,
    control: &ControlField,
    batch: &BrownianBatch,
    backend: &B,
) -> Result<Vec<Estimate>>
where
    P: Problem + ?Sized,
    B: ConditionalExpectation + ?Sized,
{
    let dims = problem.dims();
    let (n, d) = (dims.n, dims.d);
    let nn = n * n;
    let forward = crate::stochastics::simulate_forward(problem, control, batch)?;
    let backward =
        crate::bsde::solve_state_bsde(problem, &forward, control, batch, backend, false)?;
    let grid = batch.grid();
    let (m, steps, dt) = (batch.n_paths(), grid.steps(), grid.dt());
    let mut nd = NodeDerivs::new(dims);
    let mut a = vec![0.0; nn];
    let mut b = vec![0.0; nn];
    let mut samples = vec![vec![0.0; m]; n];
    let mut phi_x = vec![0.0; n];
    for path in 0..m {
        let mut gamma = linalg::identity(n);
        let mut acc = vec![0.0; n];
        for j in 0..steps {
            let t = grid.t(j);
            nd.load(
                problem,
                t,
                forward.x(path, j),
                backward.y(path, j),
                backward.z(path, j),
                control.get(path, j),
            )?;
            // Gamma^T f_x
            linalg::gemv_t_acc(&gamma, n, n, &nd.grad[..n], dt, &mut acc);
            nd.first_a(&mut a);
            let mut next = gamma.clone();
            let ag = linalg::matmul(&a, &gamma, n, n, n);
            for (o, v) in next.iter_mut().zip(&ag) {
                *o += v * dt;
            }
            let dw = batch.dw(path, j);
            for i in 0..d {
                nd.first_b(i, &mut b);
                let bg = linalg::matmul(&b, &gamma, n, n, n);
                for (o, v) in next.iter_mut().zip(&bg) {
                    *o += v * dw[i];
                }
            }
            gamma = next;
        }
        problem.terminal_x(forward.x(path, steps), &mut phi_x);
        linalg::gemv_t_acc(&gamma, n, n, &phi_x, 1.0, &mut acc);
        for r in 0..n {
            if !acc[r].is_finite() {
                return Err(Error::Simulation { path, step: steps });
            }
            samples[r][path] = acc[r];
        }
    }
    Ok(samples.iter().map(|s| Estimate::from_samples(s)).collect())
}

/// Largest regressed value over paths and steps of `E_j[sum_{l >= j} |q_l|^2 dt]`.
/// `q` is `[M x N x w]` for any per-node width `w`.
pub fn empirical_knorm<B: ConditionalExpectation + ?Sized>(
    q: &[f64],
    forward: &ForwardPaths,
    control: &ControlField,
    batch: &BrownianBatch,
    backend: &B,
) -> Result<f64> {
    let (m, steps, dt) = (batch.n_paths(), batch.grid().steps(), batch.grid().dt());
    if !q.len().is_multiple_of(m * steps) {
        return Err(Error::config("q grid does not match the batch"));
    }
    let w = q.len() / (m * steps);
    let mut tail = vec![0.0; m];
    let mut proj = vec![0.0; m];
    let mut best = 0.0_f64;
    for j in (0..steps).rev() {
        for path in 0..m {
            let at = (path * steps + j) * w;
            tail[path] += linalg::norm_sq(&q[at..at + w]) * dt;
        }
        let ctx = StepContext {
            step: j,
            forward,
            control,
            batch,
        };
        backend.project(&ctx, &tail, 1, &mut proj)?;
        best = proj.iter().fold(best, |a, &v| a.max(v));
    }
    Ok(best)
}
