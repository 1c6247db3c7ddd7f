use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fd, Derivatives, Problem};

/// Worst relative error of one derivative against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub name: &'static str,
    /// Supplied in closed form rather than by the fallback.
    pub declared: bool,
    pub worst: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub entries: Vec<DerivativeCheck>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&DerivativeCheck> {
        self.entries.iter().find(|e| e.name == name)
    }
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let e = (x - y).abs() / y.abs().max(1.0);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

/// Compares every derivative method of `problem` with central differences of
/// the base functions at `sample_count` random points.
///
/// Points are drawn with `t` uniform on `[0, T]`, `x` within one unit of the
/// initial state and `y`, `z`, `u` uniform on `[-1, 1]`. The error measure is
/// `|a - b| / max(1, |b|)`; the driver gradient is reported per block so a
/// wrong `f_y` is named on its own.
pub fn check_derivatives<P: Problem + ?Sized>(
    problem: &P,
    sample_count: usize,
    step: f64,
    tol: f64,
    seed: u64,
) -> DerivativeReport {
    let dims = problem.dims();
    let (n, d, k) = (dims.n, dims.d, dims.k);
    let w = dims.xyz();
    let declared = problem.closed_forms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let names: [(&'static str, Derivatives); 10] = [
        ("b_x", Derivatives::DRIFT_X),
        ("sigma_x", Derivatives::DIFFUSION_X),
        ("b_xx", Derivatives::DRIFT_XX),
        ("sigma_xx", Derivatives::DIFFUSION_XX),
        ("f_x", Derivatives::DRIVER_GRAD),
        ("f_y", Derivatives::DRIVER_GRAD),
        ("f_z", Derivatives::DRIVER_GRAD),
        ("D2f", Derivatives::DRIVER_HESSIAN),
        ("Phi_x", Derivatives::TERMINAL_X),
        ("Phi_xx", Derivatives::TERMINAL_XX),
    ];
    let mut errs = [0.0_f64; 10];

    let mut a = vec![0.0; d * n * n * n];
    let mut b = vec![0.0; d * n * n * n];
    for _ in 0..sample_count.max(1) {
        let t = rng.random_range(0.0..=problem.horizon());
        let x: Vec<f64> = problem
            .initial_state()
            .iter()
            .map(|x0| x0 + rng.random_range(-1.0..=1.0))
            .collect();
        let y = rng.random_range(-1.0..=1.0);
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let u: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();

        let mut record =
            |slot: usize, a: &[f64], b: &[f64]| errs[slot] = errs[slot].max(worst(a, b));

        problem.drift_x(t, &x, &u, &mut a[..n * n]);
        fd::drift_x(problem, step, t, &x, &u, &mut b[..n * n]);
        record(0, &a[..n * n], &b[..n * n]);

        let len = d * n * n;
        problem.diffusion_x(t, &x, &u, &mut a[..len]);
        fd::diffusion_x(problem, step, t, &x, &u, &mut b[..len]);
        record(1, &a[..len], &b[..len]);

        let len = n * n * n;
        problem.drift_xx(t, &x, &u, &mut a[..len]);
        fd::drift_xx(problem, step, t, &x, &u, &mut b[..len]);
        record(2, &a[..len], &b[..len]);

        let len = d * n * n * n;
        problem.diffusion_xx(t, &x, &u, &mut a[..len]);
        fd::diffusion_xx(problem, step, t, &x, &u, &mut b[..len]);
        record(3, &a[..len], &b[..len]);

        let mut ga = vec![0.0; w];
        let mut gb = vec![0.0; w];
        problem.driver_grad(t, &x, y, &z, &u, &mut ga);
        fd::driver_grad(problem, step, t, &x, y, &z, &u, &mut gb);
        record(4, &ga[..n], &gb[..n]);
        record(5, &ga[n..n + 1], &gb[n..n + 1]);
        record(6, &ga[n + 1..], &gb[n + 1..]);

        let mut ha = vec![0.0; w * w];
        let mut hb = vec![0.0; w * w];
        problem.driver_hessian(t, &x, y, &z, &u, &mut ha);
        fd::driver_hessian(problem, step, t, &x, y, &z, &u, &mut hb);
        record(7, &ha, &hb);

        problem.terminal_x(&x, &mut a[..n]);
        fd::terminal_x(problem, step, &x, &mut b[..n]);
        record(8, &a[..n], &b[..n]);

        problem.terminal_xx(&x, &mut a[..n * n]);
        fd::terminal_xx(problem, step, &x, &mut b[..n * n]);
        record(9, &a[..n * n], &b[..n * n]);
    }

    let entries = names
        .iter()
        .zip(errs)
        .map(|(&(name, flag), worst)| DerivativeCheck {
            name,
            declared: declared.contains(flag),
            worst,
            pass: worst <= tol,
        })
        .collect();
    DerivativeReport { entries }
}
