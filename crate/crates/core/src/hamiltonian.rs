//! `G`, the Hamiltonian `H`, its penalized form and the pointwise control update.
//!
//! With `du = sigma(v) - sigma(u)` column by column:
//!
//! ```text
//! Delta_i = (sigma^i(v) - sigma^i(u))^T p
//! G       = p^T b(v) + sum_i (q^i)^T sigma^i(v) + f(t, x, y, z + Delta, v)
//! H       = G + 1/2 sum_i du_i^T P du_i
//! H_rho   = H + rho/2 [ |b(v)-b(u)|^2 + |sigma(v)-sigma(u)|^2 + (f(z,v)-f(z,u))^2
//!                      + |G_x(v,u)-G_x(u,u)|^2 + |G_y(v,u)-G_y(u,u)|^2 + |G_z(v,u)-G_z(u,u)|^2 ]
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{ControlDomain, Dims, Problem};

/// Everything the Hamiltonian depends on at one `(path, step)`.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianPoint<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub p: &'a [f64],
    /// `n x d`, column `i` is `q^i`.
    pub q: &'a [f64],
    /// `n x n` second-order adjoint.
    pub pp: &'a [f64],
    pub u_prev: &'a [f64],
}

/// Outcome of the pointwise minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    /// Candidate index, or `None` when the previous control is kept.
    pub index: Option<usize>,
    pub value: f64,
}

/// Evaluator with reusable buffers.
pub struct Hamiltonian<'p, P: ?Sized> {
    problem: &'p P,
    dims: Dims,
    rho: f64,
    b_v: Vec<f64>,
    b_u: Vec<f64>,
    s_v: Vec<f64>,
    s_u: Vec<f64>,
    delta: Vec<f64>,
    z_shift: Vec<f64>,
    grad_v: Vec<f64>,
    grad_u: Vec<f64>,
    bx_v: Vec<f64>,
    bx_u: Vec<f64>,
    sx_v: Vec<f64>,
    sx_u: Vec<f64>,
    gx_v: Vec<f64>,
    gx_u: Vec<f64>,
}

impl<'p, P: Problem + ?Sized> Hamiltonian<'p, P> {
    pub fn new(problem: &'p P, rho: f64) -> Self {
        let dims = problem.dims();
        let (n, d) = (dims.n, dims.d);
        Hamiltonian {
            problem,
            dims,
            rho,
            b_v: vec![0.0; n],
            b_u: vec![0.0; n],
            s_v: vec![0.0; n * d],
            s_u: vec![0.0; n * d],
            delta: vec![0.0; d],
            z_shift: vec![0.0; d],
            grad_v: vec![0.0; dims.xyz()],
            grad_u: vec![0.0; dims.xyz()],
            bx_v: vec![0.0; n * n],
            bx_u: vec![0.0; n * n],
            sx_v: vec![0.0; d * n * n],
            sx_u: vec![0.0; d * n * n],
            gx_v: vec![0.0; n],
            gx_u: vec![0.0; n],
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Fills `b(v), b(u), sigma(v), sigma(u), Delta` and `z + Delta`.
    fn load(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) {
        let (n, d) = (self.dims.n, self.dims.d);
        let pr = self.problem;
        pr.drift(pt.t, pt.x, v, &mut self.b_v);
        pr.drift(pt.t, pt.x, pt.u_prev, &mut self.b_u);
        pr.diffusion(pt.t, pt.x, v, &mut self.s_v);
        pr.diffusion(pt.t, pt.x, pt.u_prev, &mut self.s_u);
        for i in 0..d {
            let mut acc = 0.0;
            for r in 0..n {
                acc += (self.s_v[r * d + i] - self.s_u[r * d + i]) * pt.p[r];
            }
            self.delta[i] = acc;
            self.z_shift[i] = pt.z[i] + acc;
        }
    }

    fn g_loaded(&self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        let mut g = 0.0;
        for (p, b) in pt.p.iter().zip(&self.b_v) {
            g += p * b;
        }
        for (q, s) in pt.q.iter().zip(&self.s_v) {
            g += q * s;
        }
        g + self.problem.driver(pt.t, pt.x, pt.y, &self.z_shift, v)
    }

    fn second_order_term(&self, pt: &HamiltonianPoint<'_>) -> f64 {
        let (n, d) = (self.dims.n, self.dims.d);
        let mut acc = 0.0;
        for i in 0..d {
            for r in 0..n {
                let dr = self.s_v[r * d + i] - self.s_u[r * d + i];
                if dr == 0.0 {
                    continue;
                }
                for c in 0..n {
                    acc += dr * pt.pp[r * n + c] * (self.s_v[c * d + i] - self.s_u[c * d + i]);
                }
            }
        }
        0.5 * acc
    }

    /// `Delta` with components `(sigma^i(v) - sigma^i(u))^T p`.
    pub fn delta_tilde(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> Vec<f64> {
        self.load(pt, v);
        self.delta.clone()
    }

    pub fn g(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        self.load(pt, v);
        self.g_loaded(pt, v)
    }

    pub fn h(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        self.load(pt, v);
        self.g_loaded(pt, v) + self.second_order_term(pt)
    }

    /// The penalized Hamiltonian, using the problem's own penalty bracket when it supplies one.
    pub fn h_aug(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        self.load(pt, v);
        let h = self.g_loaded(pt, v) + self.second_order_term(pt);
        if self.rho == 0.0 {
            return h;
        }
        let pen = match self.problem.penalty_override(pt, v) {
            Some(pen) => pen,
            None => self.penalty_loaded(pt, v),
        };
        h + 0.5 * self.rho * pen
    }

    /// The penalized Hamiltonian from the generic bracket, ignoring overrides.
    pub fn h_aug_general(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        self.load(pt, v);
        let h = self.g_loaded(pt, v) + self.second_order_term(pt);
        if self.rho == 0.0 {
            return h;
        }
        h + 0.5 * self.rho * self.penalty_loaded(pt, v)
    }

    /// The generic bracket multiplying `rho / 2`.
    pub fn penalty(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        self.load(pt, v);
        self.penalty_loaded(pt, v)
    }

    fn penalty_loaded(&mut self, pt: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
        let Dims { n, d, .. } = self.dims;
        let pr = self.problem;
        let u = pt.u_prev;
        let mut pen = 0.0;
        for (a, b) in self.b_v.iter().zip(&self.b_u) {
            pen += (a - b) * (a - b);
        }
        for (a, b) in self.s_v.iter().zip(&self.s_u) {
            pen += (a - b) * (a - b);
        }
        let df = pr.driver(pt.t, pt.x, pt.y, pt.z, v) - pr.driver(pt.t, pt.x, pt.y, pt.z, u);
        pen += df * df;

        pr.driver_grad(pt.t, pt.x, pt.y, &self.z_shift, v, &mut self.grad_v);
        pr.driver_grad(pt.t, pt.x, pt.y, pt.z, u, &mut self.grad_u);
        pr.drift_x(pt.t, pt.x, v, &mut self.bx_v);
        pr.drift_x(pt.t, pt.x, u, &mut self.bx_u);
        pr.diffusion_x(pt.t, pt.x, v, &mut self.sx_v);
        pr.diffusion_x(pt.t, pt.x, u, &mut self.sx_u);

        self.gx_v.copy_from_slice(&self.grad_v[..n]);
        self.gx_u.copy_from_slice(&self.grad_u[..n]);
        for c in 0..n {
            for r in 0..n {
                self.gx_v[c] += self.bx_v[r * n + c] * pt.p[r];
                self.gx_u[c] += self.bx_u[r * n + c] * pt.p[r];
            }
            for i in 0..d {
                let base = i * n * n;
                let fz = self.grad_v[n + 1 + i];
                for r in 0..n {
                    let sv = self.sx_v[base + r * n + c];
                    let su = self.sx_u[base + r * n + c];
                    self.gx_v[c] += sv * pt.q[r * d + i] + fz * (sv - su) * pt.p[r];
                    self.gx_u[c] += su * pt.q[r * d + i];
                }
            }
        }
        for (a, b) in self.gx_v.iter().zip(&self.gx_u) {
            pen += (a - b) * (a - b);
        }
        for w in n..n + 1 + d {
            let diff = self.grad_v[w] - self.grad_u[w];
            pen += diff * diff;
        }
        pen
    }

    /// Lowest penalized value over `candidates`, first index on ties. The
    /// previous control is kept whenever it is at least as good.
    pub fn minimize(&mut self, pt: &HamiltonianPoint<'_>, candidates: &[Vec<f64>]) -> Choice {
        let mut best = Choice {
            index: None,
            value: f64::INFINITY,
        };
        for (i, v) in candidates.iter().enumerate() {
            let value = self.h_aug(pt, v);
            if value < best.value {
                best = Choice {
                    index: Some(i),
                    value,
                };
            }
        }
        let current = self.h_aug(pt, pt.u_prev);
        if current <= best.value || best.index.is_none() {
            return Choice {
                index: None,
                value: current,
            };
        }
        best
    }
}

pub fn delta_tilde<P: Problem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    p: &[f64],
    v: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let dims = problem.dims();
    let zeros = vec![0.0; dims.d.max(dims.n * dims.d).max(dims.n * dims.n)];
    let pt = HamiltonianPoint {
        t,
        x,
        y: 0.0,
        z: &zeros[..dims.d],
        p,
        q: &zeros[..dims.n * dims.d],
        pp: &zeros[..dims.n * dims.n],
        u_prev: u,
    };
    Hamiltonian::new(problem, 0.0).delta_tilde(&pt, v)
}

#[allow(clippy::too_many_arguments)]
pub fn eval_g<P: Problem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    p: &[f64],
    q: &[f64],
    v: &[f64],
    u: &[f64],
) -> f64 {
    let n = problem.dims().n;
    let zeros = vec![0.0; n * n];
    let pt = HamiltonianPoint {
        t,
        x,
        y,
        z,
        p,
        q,
        pp: &zeros,
        u_prev: u,
    };
    Hamiltonian::new(problem, 0.0).g(&pt, v)
}

pub fn eval_h<P: Problem + ?Sized>(problem: &P, point: &HamiltonianPoint<'_>, v: &[f64]) -> f64 {
    Hamiltonian::new(problem, 0.0).h(point, v)
}

pub fn eval_h_aug<P: Problem + ?Sized>(
    problem: &P,
    point: &HamiltonianPoint<'_>,
    v: &[f64],
    rho: f64,
) -> f64 {
    Hamiltonian::new(problem, rho).h_aug(point, v)
}

/// Minimizer over the enumerated domain and the attained value.
pub fn minimize_h_aug<P: Problem + ?Sized>(
    problem: &P,
    point: &HamiltonianPoint<'_>,
    domain: &ControlDomain,
    rho: f64,
) -> (Vec<f64>, f64) {
    let candidates = domain.enumerate();
    let choice = Hamiltonian::new(problem, rho).minimize(point, &candidates);
    match choice.index {
        Some(i) => (candidates[i].clone(), choice.value),
        None => (point.u_prev.to_vec(), choice.value),
    }
}
