use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{validate, ControlDomain, Problem};
use crate::stochastics::TimeGrid;

/// Default cap on the number of policies the oracle may enumerate.
pub const DEFAULT_POLICY_BUDGET: f64 = 1e7;

const MAX_ORACLE_STEPS: usize = 6;

/// Which policies the oracle ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    /// One control per node of the full binary tree (every adapted policy).
    NonRecombining,
    /// One control per lattice node `(j, number of up moves)`.
    Recombining,
}

/// Forward and backward values of one policy on the binary tree.
///
/// Nodes use heap order: time `j`, prefix `p` sits at `2^j - 1 + p`, the
/// down move appends bit 0 and the up move bit 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeValues {
    pub steps: usize,
    pub n: usize,
    /// `[(2^{J+1} - 1) x n]`
    pub x: Vec<f64>,
    /// `[2^{J+1} - 1]`
    pub y: Vec<f64>,
    /// `[2^J - 1]`, decision nodes only
    pub z: Vec<f64>,
}

impl TreeValues {
    pub fn cost(&self) -> f64 {
        self.y[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSolution {
    pub jstar: f64,
    pub mode: TreeMode,
    /// Optimal control per decision node: heap order, or lattice order
    /// `j (j + 1) / 2 + ups` in recombining mode.
    pub policy: Vec<Vec<f64>>,
    pub evaluated: usize,
}

impl TreeSolution {
    /// `(j, label, control)` rows, label being the prefix bits or the up count.
    pub fn table(&self) -> Vec<(usize, usize, &[f64])> {
        let mut rows = Vec::with_capacity(self.policy.len());
        let mut idx = 0;
        let mut j = 0;
        while idx < self.policy.len() {
            let width = match self.mode {
                TreeMode::NonRecombining => 1usize << j,
                TreeMode::Recombining => j + 1,
            };
            for label in 0..width {
                rows.push((j, label, self.policy[idx].as_slice()));
                idx += 1;
            }
            j += 1;
        }
        rows
    }
}

/// Runs the explicit scheme on the exact `+-sqrt(dt)` tree for a policy
/// given in heap order as `[(2^J - 1) x k]`.
pub fn evaluate_policy<P: Problem + ?Sized>(
    problem: &P,
    steps: usize,
    policy: &[f64],
) -> Result<TreeValues> {
    let dims = problem.dims();
    if dims.d != 1 {
        return Err(Error::config(
            "the tree oracle needs one Brownian component",
        ));
    }
    let grid = TimeGrid::new(problem.horizon(), steps)?;
    let decisions = (1usize << steps) - 1;
    if policy.len() != decisions * dims.k {
        return Err(Error::config("policy does not cover every decision node"));
    }
    let (n, k) = (dims.n, dims.k);
    let total = (1usize << (steps + 1)) - 1;
    let dt = grid.dt();
    let sd = libm::sqrt(dt);
    let mut x = vec![0.0; total * n];
    x[..n].copy_from_slice(problem.initial_state());
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n];
    for node in 0..decisions {
        let j = level(node);
        let t = grid.t(j);
        let u = &policy[node * k..(node + 1) * k];
        let (head, tail) = x.split_at_mut((2 * node + 1) * n);
        let here = &head[node * n..(node + 1) * n];
        problem.drift(t, here, u, &mut b);
        problem.diffusion(t, here, u, &mut s);
        for (child, dw) in [(0usize, -sd), (1, sd)] {
            let out = &mut tail[child * n..(child + 1) * n];
            for r in 0..n {
                let v = here[r] + b[r] * dt + s[r] * dw;
                if !v.is_finite() {
                    return Err(Error::Simulation {
                        path: node,
                        step: j + 1,
                    });
                }
                out[r] = v;
            }
        }
    }

    let mut y = vec![0.0; total];
    let mut z = vec![0.0; decisions];
    for node in decisions..total {
        let v = problem.terminal(&x[node * n..(node + 1) * n]);
        if !v.is_finite() {
            return Err(Error::Evaluation {
                coefficient: "terminal",
                t: grid.horizon(),
            });
        }
        y[node] = v;
    }
    for node in (0..decisions).rev() {
        let t = grid.t(level(node));
        let (down, up) = (y[2 * node + 1], y[2 * node + 2]);
        let ey = (down + up) / 2.0;
        let zj = ((down - ey) * -sd + (up - ey) * sd) / 2.0 / dt;
        let f = problem.driver(
            t,
            &x[node * n..(node + 1) * n],
            ey,
            &[zj],
            &policy[node * k..(node + 1) * k],
        );
        if !f.is_finite() {
            return Err(Error::Evaluation {
                coefficient: "driver",
                t,
            });
        }
        y[node] = ey + f * dt;
        z[node] = zj;
    }
    Ok(TreeValues { steps, n, x, y, z })
}

fn level(node: usize) -> usize {
    (usize::BITS - 1 - (node + 1).leading_zeros()) as usize
}

fn lattice_index(node: usize) -> usize {
    let j = level(node);
    let prefix = node + 1 - (1usize << j);
    j * (j + 1) / 2 + prefix.count_ones() as usize
}

/// Minimises the tree cost over every policy of the chosen class by
/// exhaustive enumeration. Ties keep the first policy found.
pub fn tree_bruteforce<P: Problem + ?Sized>(
    problem: &P,
    domain: &ControlDomain,
    steps: usize,
    mode: TreeMode,
    budget: f64,
) -> Result<TreeSolution> {
    validate(problem)?;
    domain.validate()?;
    let k = problem.dims().k;
    if domain.dim() != k {
        return Err(Error::config("control domain dimension differs from k"));
    }
    if steps == 0 || steps > MAX_ORACLE_STEPS {
        return Err(Error::config("the tree oracle supports 1 to 6 steps"));
    }
    let candidates = domain.enumerate();
    let decisions = (1usize << steps) - 1;
    let slots = match mode {
        TreeMode::NonRecombining => decisions,
        TreeMode::Recombining => steps * (steps + 1) / 2,
    };
    let required = libm::pow(candidates.len() as f64, slots as f64);
    if required > budget {
        return Err(Error::Budget {
            required,
            limit: budget,
        });
    }
    let slot_of: Vec<usize> = (0..decisions)
        .map(|node| match mode {
            TreeMode::NonRecombining => node,
            TreeMode::Recombining => lattice_index(node),
        })
        .collect();

    let mut digits = vec![0usize; slots];
    let mut policy = vec![0.0; decisions * k];
    let mut best = f64::INFINITY;
    let mut best_digits = digits.clone();
    let mut evaluated = 0usize;
    loop {
        for (node, &slot) in slot_of.iter().enumerate() {
            policy[node * k..(node + 1) * k].copy_from_slice(&candidates[digits[slot]]);
        }
        let cost = evaluate_policy(problem, steps, &policy)?.cost();
        evaluated += 1;
        if cost < best {
            best = cost;
            best_digits.copy_from_slice(&digits);
        }
        let mut pos = 0;
        while pos < slots {
            digits[pos] += 1;
            if digits[pos] < candidates.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        if pos == slots {
            break;
        }
    }
    Ok(TreeSolution {
        jstar: best,
        mode,
        policy: best_digits.iter().map(|&i| candidates[i].clone()).collect(),
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example41, lq_desk};

    #[test]
    fn node_levels() {
        let levels: Vec<usize> = (0..7).map(level).collect();
        assert_eq!(levels, vec![0, 1, 1, 2, 2, 2, 2]);
        let lat: Vec<usize> = (0..7).map(lattice_index).collect();
        assert_eq!(lat, vec![0, 1, 2, 3, 4, 4, 5]);
    }

    #[test]
    fn martingale_recursion_holds_at_every_node() {
        let bench = lq_desk();
        let policy = [1.0, -1.0, 0.0, 1.0, 1.0, -1.0, 0.0];
        let vals = evaluate_policy(&bench.problem, 3, &policy).unwrap();
        let dt = 1.0 / 3.0;
        for node in 0..7 {
            let x = vals.x[node];
            let u = policy[node];
            let ey = (vals.y[2 * node + 1] + vals.y[2 * node + 2]) / 2.0;
            assert_eq!(vals.y[node], ey + 0.5 * (x * x + u * u) * dt);
        }
    }

    #[test]
    fn example41_optimum_is_zero_control() {
        let bench = example41(0.1).unwrap();
        let sol = tree_bruteforce(
            &bench.problem,
            &bench.domain,
            3,
            TreeMode::NonRecombining,
            DEFAULT_POLICY_BUDGET,
        )
        .unwrap();
        assert_eq!(sol.evaluated, 128);
        assert_eq!(sol.jstar, 0.0);
        assert!(sol.policy.iter().all(|u| u[0] == 0.0));
        assert_eq!(sol.table().len(), 7);
    }

    #[test]
    fn lq_optimum_is_zero() {
        let bench = lq_desk();
        for mode in [TreeMode::NonRecombining, TreeMode::Recombining] {
            let sol = tree_bruteforce(
                &bench.problem,
                &bench.domain,
                3,
                mode,
                DEFAULT_POLICY_BUDGET,
            )
            .unwrap();
            assert_eq!(sol.jstar, 0.0);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let bench = lq_desk();
        let err = tree_bruteforce(
            &bench.problem,
            &bench.domain,
            5,
            TreeMode::NonRecombining,
            DEFAULT_POLICY_BUDGET,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
        assert!(tree_bruteforce(
            &bench.problem,
            &bench.domain,
            7,
            TreeMode::Recombining,
            1e30
        )
        .is_err());
    }

    #[test]
    fn recombining_never_beats_the_full_class() {
        let bench = crate::benchmarks::linear_recursive_desk();
        let full = tree_bruteforce(
            &bench.problem,
            &bench.domain,
            3,
            TreeMode::NonRecombining,
            DEFAULT_POLICY_BUDGET,
        )
        .unwrap();
        let lat = tree_bruteforce(
            &bench.problem,
            &bench.domain,
            3,
            TreeMode::Recombining,
            DEFAULT_POLICY_BUDGET,
        )
        .unwrap();
        assert!(full.jstar <= lat.jstar);
    }
}
