//! Time grid, Brownian increments, controls and forward Euler paths.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{ControlDomain, Problem};

/// Largest exponent magnitude accepted for a density weight.
pub const MAX_EXPONENT: f64 = 700.0;

/// Largest tree depth for the enumerated binomial batch.
pub const MAX_TREE_STEPS: usize = 24;

const CONTROL_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Uniform grid `t_j = j T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("horizon must be positive and finite"));
        }
        if steps == 0 {
            return Err(Error::config("number of time steps must be at least 1"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        if j >= self.steps {
            self.horizon
        } else {
            j as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.t(j)).collect()
    }
}

/// How the increments of a batch were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Independent `N(0, dt)` draws.
    Gaussian { seed: u64 },
    /// All `2^N` sign sequences of `+-sqrt(dt)` (d = 1). Path `m` takes the
    /// sign of bit `N - 1 - j` at step `j`, so paths sharing the first `j`
    /// increments form contiguous blocks of length `2^(N - j)`.
    Binomial,
}

/// Brownian increments `dW[m, j, i]` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBatch {
    grid: TimeGrid,
    n_paths: usize,
    d: usize,
    kind: NoiseKind,
    dw: Vec<f64>,
}

impl BrownianBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn increments(&self) -> &[f64] {
        &self.dw
    }

    pub fn dw(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.grid.steps + step) * self.d;
        &self.dw[at..at + self.d]
    }

    /// Sum of the increments of one path up to step `j`.
    pub fn w(&self, path: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for step in 0..j {
            for (o, v) in out.iter_mut().zip(self.dw(path, step)) {
                *o += v;
            }
        }
        out
    }

    /// Tree node reached by `path` at time index `step` as `2^step - 1 + prefix`,
    /// the heap index of the decision node. `None` for Gaussian batches.
    pub fn node_index(&self, path: usize, step: usize) -> Option<usize> {
        match self.kind {
            NoiseKind::Binomial => Some((1usize << step) - 1 + (path >> (self.grid.steps - step))),
            NoiseKind::Gaussian { .. } => None,
        }
    }

    /// Builds a batch from explicit increments laid out as `[M x N x d]`.
    pub fn from_increments(grid: TimeGrid, n_paths: usize, d: usize, dw: Vec<f64>) -> Result<Self> {
        if n_paths == 0 || d == 0 {
            return Err(Error::config(
                "batch needs at least one path and one component",
            ));
        }
        if dw.len() != n_paths * grid.steps * d {
            return Err(Error::config("increment grid has the wrong length"));
        }
        Ok(BrownianBatch {
            grid,
            n_paths,
            d,
            kind: NoiseKind::Gaussian { seed: 0 },
            dw,
        })
    }
}

/// Draws `M x N x d` independent `N(0, dt)` increments.
///
/// Path `m` uses ChaCha stream `m` under `seed`, so growing `n_paths` leaves
/// earlier paths unchanged.
pub fn sample_brownian(
    grid: TimeGrid,
    n_paths: usize,
    d: usize,
    seed: u64,
) -> Result<BrownianBatch> {
    if n_paths == 0 || d == 0 {
        return Err(Error::config(
            "batch needs at least one path and one component",
        ));
    }
    let sd = libm::sqrt(grid.dt());
    let mut dw = Vec::with_capacity(n_paths * grid.steps * d);
    for path in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        for _ in 0..grid.steps * d {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw.push(z * sd);
        }
    }
    Ok(BrownianBatch {
        grid,
        n_paths,
        d,
        kind: NoiseKind::Gaussian { seed },
        dw,
    })
}

/// All `2^N` paths of the `+-sqrt(dt)` coin-flip walk, one Brownian component.
pub fn binomial_batch(grid: TimeGrid) -> Result<BrownianBatch> {
    let steps = grid.steps;
    if steps > MAX_TREE_STEPS {
        return Err(Error::config(
            "binomial enumeration supports at most 24 steps",
        ));
    }
    let n_paths = 1usize << steps;
    let sd = libm::sqrt(grid.dt());
    let mut dw = Vec::with_capacity(n_paths * steps);
    for path in 0..n_paths {
        for j in 0..steps {
            let up = (path >> (steps - 1 - j)) & 1 == 1;
            dw.push(if up { sd } else { -sd });
        }
    }
    Ok(BrownianBatch {
        grid,
        n_paths,
        d: 1,
        kind: NoiseKind::Binomial,
        dw,
    })
}

/// Control values `u[m, j]` held on `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    n_paths: usize,
    steps: usize,
    k: usize,
    values: Vec<f64>,
}

impl ControlField {
    pub fn constant(n_paths: usize, steps: usize, u: &[f64]) -> Self {
        let mut values = Vec::with_capacity(n_paths * steps * u.len());
        for _ in 0..n_paths * steps {
            values.extend_from_slice(u);
        }
        ControlField {
            n_paths,
            steps,
            k: u.len(),
            values,
        }
    }

    pub fn from_values(n_paths: usize, steps: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_paths * steps * k || k == 0 {
            return Err(Error::config("control grid has the wrong length"));
        }
        Ok(ControlField {
            n_paths,
            steps,
            k,
            values,
        })
    }

    /// Uniform i.i.d. choices from the enumerated domain.
    ///
    /// On a binomial batch one draw is made per tree node, so paths sharing a
    /// history share the control.
    pub fn random(domain: &ControlDomain, batch: &BrownianBatch, seed: u64) -> Self {
        let points = domain.enumerate();
        let k = domain.dim();
        let (n_paths, steps) = (batch.n_paths(), batch.grid().steps());
        let mut values = Vec::with_capacity(n_paths * steps * k);
        let base = seed ^ CONTROL_SEED_SALT;
        match batch.kind() {
            NoiseKind::Gaussian { .. } => {
                for path in 0..n_paths {
                    let mut rng = ChaCha8Rng::seed_from_u64(base);
                    rng.set_stream(path as u64);
                    for _ in 0..steps {
                        values.extend_from_slice(&points[rng.random_range(0..points.len())]);
                    }
                }
            }
            NoiseKind::Binomial => {
                for path in 0..n_paths {
                    for j in 0..steps {
                        let node = batch.node_index(path, j).unwrap_or(0);
                        let mut rng = ChaCha8Rng::seed_from_u64(base);
                        rng.set_stream(node as u64);
                        values.extend_from_slice(&points[rng.random_range(0..points.len())]);
                    }
                }
            }
        }
        ControlField {
            n_paths,
            steps,
            k,
            values,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, path: usize, step: usize) -> &[f64] {
        let at = (path * self.steps + step) * self.k;
        &self.values[at..at + self.k]
    }

    pub fn set(&mut self, path: usize, step: usize, u: &[f64]) {
        let at = (path * self.steps + step) * self.k;
        self.values[at..at + self.k].copy_from_slice(u);
    }

    /// True when every value lies in the domain.
    pub fn within(&self, domain: &ControlDomain) -> bool {
        self.values.chunks(self.k).all(|u| domain.contains(u))
    }
}

/// Euler paths `X[m, j]` for `j = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPaths {
    n_paths: usize,
    steps: usize,
    n: usize,
    x: Vec<f64>,
}

impl ForwardPaths {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x(&self, path: usize, j: usize) -> &[f64] {
        let at = (path * (self.steps + 1) + j) * self.n;
        &self.x[at..at + self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }
}

fn check_shapes<P: Problem + ?Sized>(
    problem: &P,
    control: &ControlField,
    batch: &BrownianBatch,
) -> Result<()> {
    let dims = problem.dims();
    if control.n_paths() != batch.n_paths() || control.steps() != batch.grid().steps() {
        return Err(Error::config(
            "control and noise batch differ in paths or steps",
        ));
    }
    if control.k() != dims.k || batch.d() != dims.d {
        return Err(Error::config(
            "control or noise dimension differs from the problem",
        ));
    }
    if (batch.grid().horizon() - problem.horizon()).abs() > 1e-12 * problem.horizon() {
        return Err(Error::config(
            "time grid horizon differs from the problem horizon",
        ));
    }
    Ok(())
}

/// `X_{j+1} = X_j + b(t_j, X_j, u_j) dt + sigma(t_j, X_j, u_j) dW_j`.
pub fn simulate_forward<P: Problem + ?Sized>(
    problem: &P,
    control: &ControlField,
    batch: &BrownianBatch,
) -> Result<ForwardPaths> {
    check_shapes(problem, control, batch)?;
    let (n, d) = (problem.dims().n, problem.dims().d);
    let grid = batch.grid();
    let (m_paths, steps, dt) = (batch.n_paths(), grid.steps(), grid.dt());
    let x0 = problem.initial_state();
    let mut x = vec![0.0; m_paths * (steps + 1) * n];
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * d];
    for path in 0..m_paths {
        let row = path * (steps + 1) * n;
        x[row..row + n].copy_from_slice(x0);
        for j in 0..steps {
            let (head, tail) = x[row + j * n..row + (j + 2) * n].split_at_mut(n);
            let u = control.get(path, j);
            let t = grid.t(j);
            problem.drift(t, head, u, &mut b);
            problem.diffusion(t, head, u, &mut sigma);
            let dw = batch.dw(path, j);
            for r in 0..n {
                let mut v = head[r] + b[r] * dt;
                for i in 0..d {
                    v += sigma[r * d + i] * dw[i];
                }
                if !v.is_finite() {
                    return Err(Error::Simulation { path, step: j + 1 });
                }
                tail[r] = v;
            }
        }
    }
    Ok(ForwardPaths {
        n_paths: m_paths,
        steps,
        n,
        x,
    })
}

/// `exp(sum_j fz_j . dW_j - 1/2 sum_j |fz_j|^2 dt)` per path, left-point rule.
/// `fz` is laid out as `[M x N x d]`.
pub fn girsanov_weights(fz: &[f64], batch: &BrownianBatch) -> Result<Vec<f64>> {
    let (m_paths, steps, d) = (batch.n_paths(), batch.grid().steps(), batch.d());
    if fz.len() != m_paths * steps * d {
        return Err(Error::config("f_z grid does not match the noise batch"));
    }
    let dt = batch.grid().dt();
    let mut out = Vec::with_capacity(m_paths);
    for path in 0..m_paths {
        let mut expo = 0.0;
        for j in 0..steps {
            let g = &fz[(path * steps + j) * d..(path * steps + j + 1) * d];
            let dw = batch.dw(path, j);
            for i in 0..d {
                expo += g[i] * dw[i] - 0.5 * g[i] * g[i] * dt;
            }
        }
        if !expo.is_finite() || expo.abs() > MAX_EXPONENT {
            return Err(Error::Overflow { path });
        }
        out.push(libm::exp(expo));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::example41;
    use crate::stats::Estimate;

    fn grid20() -> TimeGrid {
        TimeGrid::new(1.0, 20).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = grid20();
        let nodes = g.nodes();
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[20], 1.0);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 3).is_err());
    }

    #[test]
    fn brownian_is_deterministic() {
        let a = sample_brownian(grid20(), 2, 1, 42).unwrap();
        let b = sample_brownian(grid20(), 2, 1, 42).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = sample_brownian(grid20(), 2, 1, 43).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn growing_the_batch_keeps_earlier_paths() {
        let small = sample_brownian(grid20(), 3, 2, 5).unwrap();
        let large = sample_brownian(grid20(), 10, 2, 5).unwrap();
        assert_eq!(
            small.increments(),
            &large.increments()[..small.increments().len()]
        );
    }

    #[test]
    fn brownian_moments() {
        let m = 100_000;
        let g = grid20();
        let batch = sample_brownian(g, m, 2, 11).unwrap();
        let dt = g.dt();
        for j in [0, 7, 19] {
            let s: Vec<f64> = (0..m).map(|p| batch.dw(p, j)[0]).collect();
            let mean = crate::stats::mean(&s);
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 5.0 * libm::sqrt(dt) / libm::sqrt(m as f64));
            assert!((var / dt - 1.0).abs() < 0.05, "variance {var} vs {dt}");
            let cross: f64 = (0..m)
                .map(|p| batch.dw(p, j)[0] * batch.dw(p, j)[1])
                .sum::<f64>()
                / m as f64;
            assert!((cross / dt).abs() < 0.05);
        }
        // dX = dW is exact in law
        let xt: Vec<f64> = (0..m).map(|p| batch.w(p, 20)[0]).collect();
        let e = Estimate::from_samples(&xt);
        let var = e.stderr * e.stderr * m as f64;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn binomial_layout() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        let batch = binomial_batch(g).unwrap();
        assert_eq!(batch.n_paths(), 8);
        let s = libm::sqrt(g.dt());
        assert_eq!(batch.dw(0, 0)[0], -s);
        assert_eq!(batch.dw(4, 0)[0], s);
        assert_eq!(batch.dw(5, 2)[0], s);
        assert_eq!(batch.node_index(5, 0), Some(0));
        assert_eq!(batch.node_index(5, 1), Some(2));
        assert_eq!(batch.node_index(5, 2), Some(5));
        assert_eq!(batch.node_index(4, 2), Some(5));
    }

    #[test]
    fn random_control_is_adapted_on_the_tree() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let batch = binomial_batch(g).unwrap();
        let domain = ControlDomain::scalars(&[0.0, 1.0]).unwrap();
        let u = ControlField::random(&domain, &batch, 3);
        for p in 0..batch.n_paths() {
            for q in 0..batch.n_paths() {
                for j in 0..4 {
                    if batch.node_index(p, j) == batch.node_index(q, j) {
                        assert_eq!(u.get(p, j), u.get(q, j));
                    }
                }
            }
        }
        assert!(u.within(&domain));
    }

    #[test]
    fn frozen_dynamics_and_example41_paths() {
        let bench = example41(0.1).unwrap();
        let batch = sample_brownian(grid20(), 50, 1, 9).unwrap();
        let zero = ControlField::constant(50, 20, &[0.0]);
        let fwd = simulate_forward(&bench.problem, &zero, &batch).unwrap();
        assert!(fwd.values().iter().all(|&x| x == 0.0));

        let one = ControlField::constant(50, 20, &[1.0]);
        let fwd = simulate_forward(&bench.problem, &one, &batch).unwrap();
        for p in 0..50 {
            let mut w = 0.0;
            for j in 0..20 {
                w += batch.dw(p, j)[0];
                assert_eq!(fwd.x(p, j + 1)[0], w);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let bench = example41(0.1).unwrap();
        let batch = sample_brownian(grid20(), 5, 1, 9).unwrap();
        let wrong = ControlField::constant(4, 20, &[0.0]);
        assert!(matches!(
            simulate_forward(&bench.problem, &wrong, &batch),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn girsanov_constant_drift() {
        let m = 20_000;
        let batch = sample_brownian(grid20(), m, 1, 17).unwrap();
        let ones = vec![1.0; m];
        assert_eq!(girsanov_weights(&vec![0.0; m * 20], &batch).unwrap(), ones);

        let c = 0.1;
        let w = girsanov_weights(&vec![c; m * 20], &batch).unwrap();
        for p in [0, 1, 999] {
            let wt = batch.w(p, 20)[0];
            let expect = libm::exp(c * wt - 0.5 * c * c);
            assert!((w[p] - expect).abs() < 1e-12 * expect);
        }
        let e = Estimate::from_samples(&w);
        assert!((e.mean - 1.0).abs() < 5.0 * e.stderr);
    }

    #[test]
    fn girsanov_overflow_names_path() {
        let batch = binomial_batch(TimeGrid::new(1.0, 2).unwrap()).unwrap();
        let mut fz = vec![0.0; 8];
        fz[6] = 2000.0;
        fz[7] = 2000.0;
        assert_eq!(
            girsanov_weights(&fz, &batch),
            Err(Error::Overflow { path: 3 })
        );
    }
}
