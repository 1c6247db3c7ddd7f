//! Backward Euler solvers for the cost equation and for linear vector BSDEs.

mod condexp;
mod regression;

pub use condexp::{Backend, ConditionalExpectation, FiltrationBackend, StepContext};
pub use regression::{basis_size, condexp_fit, fit_columns, Predictor, RegressionBackend};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Problem;
use crate::stats::Estimate;
use crate::stochastics::{BrownianBatch, ControlField, ForwardPaths};

/// `(Y, Z)` on the grid with the cost estimate `J = mean Y_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPaths {
    n_paths: usize,
    steps: usize,
    d: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    /// Mean of `Y_0`; the standard error comes from the pathwise sum
    /// `Phi(X_T) + sum_j f_j dt`, whose sample mean is the same number.
    pub cost: Estimate,
}

impl BackwardPaths {
    pub fn y(&self, path: usize, j: usize) -> f64 {
        self.y[path * (self.steps + 1) + j]
    }

    pub fn z(&self, path: usize, j: usize) -> &[f64] {
        let at = (path * self.steps + j) * self.d;
        &self.z[at..at + self.d]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
}

fn check_consistent(
    forward: &ForwardPaths,
    control: &ControlField,
    batch: &BrownianBatch,
) -> Result<()> {
    let (m, n) = (batch.n_paths(), batch.grid().steps());
    if forward.n_paths() != m
        || control.n_paths() != m
        || forward.steps() != n
        || control.steps() != n
    {
        return Err(Error::config(
            "forward paths, control and noise batch disagree in shape",
        ));
    }
    Ok(())
}

/// Projects `[M x r]` values onto time `t_j` and estimates
/// `E_j[(V - E_j V) dW^i]` into `[M x d x r]`. Centring leaves the
/// conditional expectation unchanged and removes the sampling noise that a
/// constant `V` would otherwise carry into the martingale part.
fn project_step<B: ConditionalExpectation + ?Sized>(
    backend: &B,
    ctx: &StepContext<'_>,
    values: &[f64],
    r: usize,
    mean: &mut [f64],
    mart: &mut [f64],
) -> Result<()> {
    let m = ctx.batch.n_paths();
    let d = ctx.batch.d();
    backend.project(ctx, values, r, mean)?;
    let mut targets = vec![0.0; m * r * d];
    for path in 0..m {
        let dw = ctx.batch.dw(path, ctx.step);
        for i in 0..d {
            for a in 0..r {
                let at = path * r + a;
                targets[(path * d + i) * r + a] = (values[at] - mean[at]) * dw[i];
            }
        }
    }
    backend.project(ctx, &targets, r * d, mart)
}

/// Explicit backward Euler for `dY = -f dt + Z^T dW`, `Y_N = Phi(X_N)`:
///
/// ```text
/// Z_j = E_j[(Y_{j+1} - E_j[Y_{j+1}]) dW_j] / dt
/// Y_j = E_j[Y_{j+1}] + f(t_j, X_j, E_j[Y_{j+1}], Z_j, u_j) dt
/// ```
///
/// With `picard` the driver is re-evaluated once at the first `Y_j`.
pub fn solve_state_bsde<P, B>(
    problem: &P,
    forward: &ForwardPaths,
    control: &ControlField,
    batch: &BrownianBatch,
    backend: &B,
    picard: bool,
) -> Result<BackwardPaths>
where
    P: Problem + ?Sized,
    B: ConditionalExpectation + ?Sized,
{
    check_consistent(forward, control, batch)?;
    let d = problem.dims().d;
    let grid = batch.grid();
    let (m, steps, dt) = (batch.n_paths(), grid.steps(), grid.dt());
    let mut y = vec![0.0; m * (steps + 1)];
    let mut z = vec![0.0; m * steps * d];
    let mut xi = vec![0.0; m];
    for path in 0..m {
        let v = problem.terminal(forward.x(path, steps));
        if !v.is_finite() {
            return Err(Error::Evaluation {
                coefficient: "terminal",
                t: grid.horizon(),
            });
        }
        y[path * (steps + 1) + steps] = v;
        xi[path] = v;
    }

    let mut next = vec![0.0; m];
    let mut ey_all = vec![0.0; m];
    let mut ez_all = vec![0.0; m * d];
    for j in (0..steps).rev() {
        let t = grid.t(j);
        for path in 0..m {
            next[path] = y[path * (steps + 1) + j + 1];
        }
        let ctx = StepContext {
            step: j,
            forward,
            control,
            batch,
        };
        project_step(backend, &ctx, &next, 1, &mut ey_all, &mut ez_all)?;
        for path in 0..m {
            let ey = ey_all[path];
            let zj = &mut z[(path * steps + j) * d..(path * steps + j + 1) * d];
            for i in 0..d {
                zj[i] = ez_all[path * d + i] / dt;
            }
            let x = forward.x(path, j);
            let u = control.get(path, j);
            let mut f = problem.driver(t, x, ey, zj, u);
            if picard {
                f = problem.driver(t, x, ey + f * dt, zj, u);
            }
            if !f.is_finite() {
                return Err(Error::Evaluation {
                    coefficient: "driver",
                    t,
                });
            }
            y[path * (steps + 1) + j] = ey + f * dt;
            xi[path] += f * dt;
        }
    }

    let y0: Vec<f64> = (0..m).map(|p| y[p * (steps + 1)]).collect();
    let cost = Estimate {
        mean: crate::stats::mean(&y0),
        stderr: Estimate::from_samples(&xi).stderr,
    };
    Ok(BackwardPaths {
        n_paths: m,
        steps,
        d,
        y,
        z,
        cost,
    })
}

/// Per-path coefficients of one step of a linear BSDE in `r` unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    pub r: usize,
    pub d: usize,
    /// `[M x r x r]`
    pub a: Vec<f64>,
    /// `[M x d x r x r]`
    pub b: Vec<f64>,
    /// `[M x r]`
    pub c: Vec<f64>,
}

impl LinearStep {
    pub fn zeros(m: usize, r: usize, d: usize) -> Self {
        LinearStep {
            r,
            d,
            a: vec![0.0; m * r * r],
            b: vec![0.0; m * d * r * r],
            c: vec![0.0; m * r],
        }
    }

    fn clear(&mut self) {
        self.a.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
        self.c.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn a(&mut self, path: usize) -> &mut [f64] {
        let rr = self.r * self.r;
        &mut self.a[path * rr..(path + 1) * rr]
    }

    pub fn b(&mut self, path: usize, i: usize) -> &mut [f64] {
        let rr = self.r * self.r;
        let at = (path * self.d + i) * rr;
        &mut self.b[at..at + rr]
    }

    pub fn c(&mut self, path: usize) -> &mut [f64] {
        &mut self.c[path * self.r..(path + 1) * self.r]
    }
}

/// Solution `(p, q)` of a linear BSDE.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub r: usize,
    pub d: usize,
    pub n_paths: usize,
    pub steps: usize,
    /// `[M x (N+1) x r]`
    pub p: Vec<f64>,
    /// `[M x N x r x d]`, column `i` of the `r x d` block is `q^i`.
    pub q: Vec<f64>,
    /// Mean of each component of `p_0`, standard errors from the pathwise sums.
    pub initial: Vec<Estimate>,
}

impl LinearSolution {
    pub fn p(&self, path: usize, j: usize) -> &[f64] {
        let at = (path * (self.steps + 1) + j) * self.r;
        &self.p[at..at + self.r]
    }

    /// The `r x d` block at `(path, j)`.
    pub fn q(&self, path: usize, j: usize) -> &[f64] {
        let len = self.r * self.d;
        let at = (path * self.steps + j) * len;
        &self.q[at..at + len]
    }
}

/// Explicit-in-q backward Euler for
/// `dp = -[A^T p + sum_i B_i^T q^i + c] dt + sum_i q^i dW^i`:
///
/// ```text
/// q^i_j = E_j[(p_{j+1} - E_j[p_{j+1}]) dW^i_j] / dt
/// p_j   = E_j[p_{j+1}] + (A^T E_j[p_{j+1}] + sum_i B_i^T q^i_j + c) dt
/// ```
///
/// `coefficients(j, step)` fills the coefficients at `t_j`; `post(j, p_j)` may
/// modify the freshly computed `[M x r]` slice (used for symmetrization).
#[allow(clippy::too_many_arguments)]
pub fn solve_linear_bsde<B, C, H>(
    terminal: &[f64],
    r: usize,
    forward: &ForwardPaths,
    control: &ControlField,
    batch: &BrownianBatch,
    backend: &B,
    mut coefficients: C,
    mut post: H,
) -> Result<LinearSolution>
where
    B: ConditionalExpectation + ?Sized,
    C: FnMut(usize, &mut LinearStep) -> Result<()>,
    H: FnMut(usize, &mut [f64]),
{
    check_consistent(forward, control, batch)?;
    let d = batch.d();
    let grid = batch.grid();
    let (m, steps, dt) = (batch.n_paths(), grid.steps(), grid.dt());
    if r == 0 || terminal.len() != m * r {
        return Err(Error::config("terminal value must be [M x r] with r > 0"));
    }
    let mut p = vec![0.0; m * (steps + 1) * r];
    let mut q = vec![0.0; m * steps * r * d];
    let mut xi = terminal.to_vec();
    for path in 0..m {
        let at = (path * (steps + 1) + steps) * r;
        p[at..at + r].copy_from_slice(&terminal[path * r..(path + 1) * r]);
    }

    let mut coef = LinearStep::zeros(m, r, d);
    let mut next = vec![0.0; m * r];
    let mut ep_all = vec![0.0; m * r];
    let mut eq_all = vec![0.0; m * r * d];
    let mut pj = vec![0.0; m * r];
    let mut drift = vec![0.0; r];
    let mut qi = vec![0.0; r];
    for j in (0..steps).rev() {
        coef.clear();
        coefficients(j, &mut coef)?;
        for path in 0..m {
            let at = (path * (steps + 1) + j + 1) * r;
            next[path * r..(path + 1) * r].copy_from_slice(&p[at..at + r]);
        }
        let ctx = StepContext {
            step: j,
            forward,
            control,
            batch,
        };
        project_step(backend, &ctx, &next, r, &mut ep_all, &mut eq_all)?;
        let rr = r * r;
        for path in 0..m {
            let ep = &ep_all[path * r..(path + 1) * r];
            let row = &eq_all[path * r * d..(path + 1) * r * d];
            let qj = &mut q[(path * steps + j) * r * d..(path * steps + j + 1) * r * d];
            for i in 0..d {
                for a in 0..r {
                    qj[a * d + i] = row[i * r + a] / dt;
                }
            }
            drift.copy_from_slice(&coef.c[path * r..(path + 1) * r]);
            linalg::gemv_t_acc(
                &coef.a[path * rr..(path + 1) * rr],
                r,
                r,
                ep,
                1.0,
                &mut drift,
            );
            for i in 0..d {
                for (a, v) in qi.iter_mut().enumerate() {
                    *v = qj[a * d + i];
                }
                let bi = &coef.b[(path * d + i) * rr..(path * d + i + 1) * rr];
                linalg::gemv_t_acc(bi, r, r, &qi, 1.0, &mut drift);
            }
            for a in 0..r {
                let v = ep[a] + drift[a] * dt;
                if !v.is_finite() {
                    return Err(Error::Backend {
                        step: j,
                        reason: "non-finite adjoint value".into(),
                    });
                }
                pj[path * r + a] = v;
                xi[path * r + a] += drift[a] * dt;
            }
        }
        post(j, &mut pj);
        for path in 0..m {
            let at = (path * (steps + 1) + j) * r;
            p[at..at + r].copy_from_slice(&pj[path * r..(path + 1) * r]);
        }
    }

    let initial = (0..r)
        .map(|a| {
            let p0: Vec<f64> = (0..m).map(|path| p[path * (steps + 1) * r + a]).collect();
            let pathwise: Vec<f64> = (0..m).map(|path| xi[path * r + a]).collect();
            Estimate {
                mean: crate::stats::mean(&p0),
                stderr: Estimate::from_samples(&pathwise).stderr,
            }
        })
        .collect();
    Ok(LinearSolution {
        r,
        d,
        n_paths: m,
        steps,
        p,
        q,
        initial,
    })
}
