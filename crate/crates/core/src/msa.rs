//! The modified method of successive approximations.
//!
//! Each iteration solves the state equation and both adjoints under the
//! current control, minimises the penalized Hamiltonian at every node, and
//! records the new cost together with the Girsanov-weighted Hamiltonian
//! decrease `mu`.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{first_order_adjoint, second_order_adjoint, SecondOrderAdjoint};
use crate::bsde::{solve_state_bsde, Backend, BackwardPaths};
use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, HamiltonianPoint};
use crate::model::{validate, ControlDomain, Problem};
use crate::stats::Estimate;
use crate::stochastics::{
    girsanov_weights, sample_brownian, simulate_forward, BrownianBatch, ControlField, ForwardPaths,
    TimeGrid,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsaConfig {
    pub rho: f64,
    /// Stop once the cost decrease falls below this value.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub backend: Backend,
    pub picard: bool,
    /// Skip the second-order adjoint when the problem declares it zero.
    pub second_order_skip: bool,
}

impl Default for MsaConfig {
    fn default() -> Self {
        MsaConfig {
            rho: 0.0,
            epsilon: None,
            max_iters: 30,
            n_paths: 10_000,
            steps: 20,
            seed: 0,
            backend: Backend::default(),
            picard: false,
            second_order_skip: true,
        }
    }
}

impl MsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho must be finite and non-negative"));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::config("epsilon must be positive"));
            }
        }
        if self.n_paths == 0 || self.steps == 0 {
            return Err(Error::config("paths and steps must be positive"));
        }
        if let Backend::Regression(r) = self.backend {
            r.validate()?;
        }
        Ok(())
    }
}

/// Row `m` compares `u^{m-1}` with the updated `u^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    /// `J(u^{m-1})`
    pub cost: Estimate,
    /// `J(u^m)`
    pub next_cost: Estimate,
    pub mu: Estimate,
    /// `J(u^{m-1}) - J(u^m)`
    pub descent: f64,
    pub wall_ms: f64,
    pub adjoint_sup: f64,
    pub second_order_sup: f64,
    pub second_order_asymmetry: f64,
    /// Largest pointwise `H(u^m) - H(u^{m-1})`; never positive.
    pub hhat_max: f64,
    /// Number of nodes whose control changed.
    pub changed: usize,
}

/// Source of wall-clock time in milliseconds.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Reports zero elapsed time.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialControl {
    /// Adapted draw from the domain's candidate points, seeded by the config.
    Random,
    Field(ControlField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsaResult {
    pub records: Vec<IterationRecord>,
    pub initial_cost: Estimate,
    /// `u^{m-1}` when the stopping rule fired, otherwise the last iterate.
    pub control: ControlField,
    /// The last iterate `u^m`.
    pub last: ControlField,
    pub stopped: bool,
}

/// Runs on a fresh Gaussian batch drawn from `config.seed`.
pub fn run_msa<P: Problem + ?Sized>(
    problem: &P,
    domain: &ControlDomain,
    config: &MsaConfig,
    initial: InitialControl,
    clock: &dyn Clock,
) -> Result<MsaResult> {
    config.validate()?;
    let grid = TimeGrid::new(problem.horizon(), config.steps)?;
    let batch = sample_brownian(grid, config.n_paths, problem.dims().d, config.seed)?;
    run_msa_on(problem, domain, config, initial, &batch, clock)
}

struct State {
    forward: ForwardPaths,
    backward: BackwardPaths,
}

fn solve_state<P: Problem + ?Sized>(
    problem: &P,
    control: &ControlField,
    batch: &BrownianBatch,
    config: &MsaConfig,
) -> Result<State> {
    let forward = simulate_forward(problem, control, batch)?;
    let backward = solve_state_bsde(
        problem,
        &forward,
        control,
        batch,
        &config.backend,
        config.picard,
    )?;
    Ok(State { forward, backward })
}

/// Runs on a given batch; `config.n_paths` and `config.steps` are ignored.
pub fn run_msa_on<P: Problem + ?Sized>(
    problem: &P,
    domain: &ControlDomain,
    config: &MsaConfig,
    initial: InitialControl,
    batch: &BrownianBatch,
    clock: &dyn Clock,
) -> Result<MsaResult> {
    config.validate()?;
    validate(problem)?;
    domain.validate()?;
    let dims = problem.dims();
    if domain.dim() != dims.k {
        return Err(Error::config("control domain dimension differs from k"));
    }
    let candidates = domain.enumerate();
    let mut control = match initial {
        InitialControl::Random => ControlField::random(domain, batch, config.seed),
        InitialControl::Field(f) => f,
    };
    let (n, d) = (dims.n, dims.d);
    let grid = *batch.grid();
    let (m_paths, steps) = (batch.n_paths(), grid.steps());

    let mut state = solve_state(problem, &control, batch, config).map_err(|e| e.at_iteration(0))?;
    let initial_cost = state.backward.cost;
    let mut records = Vec::new();
    let mut ham = Hamiltonian::new(problem, config.rho);
    let mut grad = vec![0.0; dims.xyz()];
    let mut hhat = vec![0.0; m_paths * steps];
    let mut fz = vec![0.0; m_paths * steps * d];
    let mut cached = None;

    for m in 1..=config.max_iters {
        let started = clock.now_ms();
        let step = |e: Error| e.at_iteration(m);
        let backend = &config.backend;
        // an unchanged control reproduces the previous adjoints exactly
        let (first, second) = match cached.take() {
            Some(pair) => pair,
            None => {
                let first = first_order_adjoint(
                    problem,
                    &state.forward,
                    &state.backward,
                    &control,
                    batch,
                    backend,
                )
                .map_err(step)?;
                let second = if config.second_order_skip && problem.second_order_vanishes() {
                    SecondOrderAdjoint::zeros(m_paths, steps, n, d)
                } else {
                    second_order_adjoint(
                        problem,
                        &state.forward,
                        &state.backward,
                        &control,
                        &first,
                        batch,
                        backend,
                    )
                    .map_err(step)?
                };
                (first, second)
            }
        };

        let mut next = control.clone();
        let mut changed = 0;
        let mut hhat_max = f64::NEG_INFINITY;
        for path in 0..m_paths {
            for j in 0..steps {
                let t = grid.t(j);
                let x = state.forward.x(path, j);
                let y = state.backward.y(path, j);
                let z = state.backward.z(path, j);
                let u_prev = control.get(path, j);
                let pt = HamiltonianPoint {
                    t,
                    x,
                    y,
                    z,
                    p: first.p(path, j),
                    q: first.q(path, j),
                    pp: second.pp(path, j),
                    u_prev,
                };
                let choice = ham.minimize(&pt, &candidates);
                let h = match choice.index {
                    Some(i) => {
                        changed += 1;
                        next.set(path, j, &candidates[i]);
                        ham.h(&pt, &candidates[i]) - ham.h(&pt, u_prev)
                    }
                    None => 0.0,
                };
                if !h.is_finite() {
                    return Err(step(Error::Evaluation {
                        coefficient: "hamiltonian",
                        t,
                    }));
                }
                hhat[path * steps + j] = h;
                hhat_max = hhat_max.max(h);
                problem.driver_grad(t, x, y, z, u_prev, &mut grad);
                fz[(path * steps + j) * d..(path * steps + j + 1) * d]
                    .copy_from_slice(&grad[n + 1..n + 1 + d]);
            }
        }
        let mu = compute_mu(&hhat, &fz, batch).map_err(step)?;
        let next_state = if changed == 0 {
            None
        } else {
            Some(solve_state(problem, &next, batch, config).map_err(step)?)
        };
        let cost = state.backward.cost;
        let next_cost = next_state.as_ref().map_or(cost, |s| s.backward.cost);
        let descent = cost.mean - next_cost.mean;
        records.push(IterationRecord {
            m,
            cost,
            next_cost,
            mu,
            descent,
            wall_ms: clock.now_ms() - started,
            adjoint_sup: first.sup_norm(),
            second_order_sup: second.sup_norm(),
            second_order_asymmetry: second.asymmetry,
            hhat_max,
            changed,
        });
        if let Some(eps) = config.epsilon {
            if descent < eps {
                return Ok(MsaResult {
                    records,
                    initial_cost,
                    control,
                    last: next,
                    stopped: true,
                });
            }
        }
        match next_state {
            Some(ns) => {
                control = next;
                state = ns;
            }
            None => cached = Some((first, second)),
        }
    }
    Ok(MsaResult {
        records,
        initial_cost,
        last: control.clone(),
        control,
        stopped: false,
    })
}

/// `mean_m [ w_m sum_j hhat_{m,j} dt ]` with Girsanov weights `w_m` built
/// from `fz` (`[M x N x d]`); `hhat` is `[M x N]`.
pub fn compute_mu(hhat: &[f64], fz: &[f64], batch: &BrownianBatch) -> Result<Estimate> {
    let (m, steps) = (batch.n_paths(), batch.grid().steps());
    if hhat.len() != m * steps {
        return Err(Error::config(
            "Hamiltonian decrease grid does not match the batch",
        ));
    }
    let dt = batch.grid().dt();
    let weights = girsanov_weights(fz, batch)?;
    let samples: Vec<f64> = (0..m)
        .map(|path| weights[path] * hhat[path * steps..(path + 1) * steps].iter().sum::<f64>() * dt)
        .collect();
    Ok(Estimate::from_samples(&samples))
}

/// Stopping-rule summary against a known optimal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct NearOptimality {
    pub epsilon: f64,
    /// First iteration whose descent falls below `epsilon`.
    pub m_eps: Option<usize>,
    /// `J(u^{m_eps - 1}) - J*`
    pub gap: Option<f64>,
    /// `gap / sqrt(epsilon)`
    pub ratio: Option<f64>,
    /// `exp(-|f_y| T)`, the factor relating cost descent to Hamiltonian descent.
    pub descent_factor: f64,
    /// Iterations where the cost rose by more than three combined standard errors.
    pub violations: Vec<usize>,
}

pub fn near_optimality_gap(
    records: &[IterationRecord],
    epsilon: f64,
    optimal_cost: f64,
    f_y_bound: f64,
    horizon: f64,
) -> NearOptimality {
    let m_eps = records.iter().find(|r| r.descent < epsilon).map(|r| r.m);
    let gap = m_eps.map(|m| records[m - 1].cost.mean - optimal_cost);
    let violations = records
        .iter()
        .filter(|r| -r.descent > 3.0 * r.cost.combined_stderr(&r.next_cost))
        .map(|r| r.m)
        .collect();
    NearOptimality {
        epsilon,
        m_eps,
        gap,
        ratio: gap.map(|g| g / libm::sqrt(epsilon)),
        descent_factor: libm::exp(-f_y_bound.abs() * horizon),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example41, lq_desk, tree_bruteforce, TreeMode, DEFAULT_POLICY_BUDGET};
    use crate::bsde::RegressionBackend;
    use crate::stochastics::binomial_batch;

    fn small(rho: f64) -> MsaConfig {
        MsaConfig {
            rho,
            max_iters: 5,
            n_paths: 2000,
            steps: 10,
            seed: 7,
            ..MsaConfig::default()
        }
    }

    #[test]
    fn example41_reaches_zero_control() {
        let bench = example41(0.1).unwrap();
        let res = run_msa(
            &bench.problem,
            &bench.domain,
            &small(bench.rho),
            InitialControl::Random,
            &NoClock,
        )
        .unwrap();
        assert!(res.initial_cost.mean > 0.0);
        let last = res.records.last().unwrap();
        assert!(res.last.values().iter().all(|&u| u == 0.0));
        assert_eq!(last.next_cost.mean, 0.0);
        for r in &res.records {
            assert!(r.hhat_max <= 0.0);
            assert!(r.mu.mean <= 3.0 * r.mu.stderr + 1e-15);
        }
    }

    #[test]
    fn zero_iterations_return_the_initial_control() {
        let bench = lq_desk();
        let cfg = MsaConfig {
            max_iters: 0,
            ..small(0.0)
        };
        let res = run_msa(
            &bench.problem,
            &bench.domain,
            &cfg,
            InitialControl::Random,
            &NoClock,
        )
        .unwrap();
        assert!(res.records.is_empty());
        assert!(res.control.within(&bench.domain));
    }

    #[test]
    fn stopping_rule_returns_previous_iterate() {
        let bench = example41(0.1).unwrap();
        let cfg = MsaConfig {
            epsilon: Some(1e-12),
            max_iters: 10,
            ..small(bench.rho)
        };
        let res = run_msa(
            &bench.problem,
            &bench.domain,
            &cfg,
            InitialControl::Random,
            &NoClock,
        )
        .unwrap();
        assert!(res.stopped);
        let m = res.records.len();
        assert!(res.records[m - 1].descent < 1e-12);
        assert!(m < 10);
    }

    #[test]
    fn tree_run_matches_the_oracle() {
        let bench = lq_desk();
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let batch = binomial_batch(grid).unwrap();
        let cfg = MsaConfig {
            backend: Backend::Filtration,
            max_iters: 10,
            ..MsaConfig::default()
        };
        let res = run_msa_on(
            &bench.problem,
            &bench.domain,
            &cfg,
            InitialControl::Random,
            &batch,
            &NoClock,
        )
        .unwrap();
        let oracle = tree_bruteforce(
            &bench.problem,
            &bench.domain,
            3,
            TreeMode::NonRecombining,
            DEFAULT_POLICY_BUDGET,
        )
        .unwrap();
        let best = res.records.last().unwrap().next_cost.mean;
        assert!((best - oracle.jstar).abs() < 1e-10);
    }

    #[test]
    fn shape_errors_are_tagged_with_the_iteration() {
        let bench = lq_desk();
        let cfg = MsaConfig {
            backend: Backend::Regression(RegressionBackend {
                degree: 4,
                ..RegressionBackend::default()
            }),
            n_paths: 3,
            ..small(0.0)
        };
        let err = run_msa(
            &bench.problem,
            &bench.domain,
            &cfg,
            InitialControl::Random,
            &NoClock,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Iteration { iteration: 0, .. }));
    }

    #[test]
    fn gap_report() {
        let rec = |m: usize, j: f64, next: f64| IterationRecord {
            m,
            cost: Estimate {
                mean: j,
                stderr: 0.0,
            },
            next_cost: Estimate {
                mean: next,
                stderr: 0.0,
            },
            mu: Estimate::ZERO,
            descent: j - next,
            wall_ms: 0.0,
            adjoint_sup: 0.0,
            second_order_sup: 0.0,
            second_order_asymmetry: 0.0,
            hhat_max: 0.0,
            changed: 0,
        };
        let records = [rec(1, 1.0, 0.5), rec(2, 0.5, 0.6), rec(3, 0.6, 0.59)];
        let rep = near_optimality_gap(&records, 0.05, 0.5, 0.0, 1.0);
        assert_eq!(rep.m_eps, Some(2));
        assert_eq!(rep.gap, Some(0.0));
        assert_eq!(rep.violations, vec![2]);
        assert_eq!(rep.descent_factor, 1.0);
    }
}
