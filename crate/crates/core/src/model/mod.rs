//! Problem definitions: coefficient functions, their derivatives and the control domain.
//!
//! Layout conventions used throughout the crate (all row-major, flat):
//!
//! | quantity       | shape            | index                                   |
//! |----------------|------------------|-----------------------------------------|
//! | `sigma`        | `n x d`          | `sigma[r * d + i]`, column `i` = `sigma^i` |
//! | `b_x`          | `n x n`          | `d b^r / d x_c` at `r * n + c`          |
//! | `sigma_x`      | `d x n x n`      | `d sigma^{r i} / d x_c` at `i*n*n + r*n + c` |
//! | `b_xx`         | `n x n x n`      | Hessian of `b^j` at `j*n*n + ..`        |
//! | `sigma_xx`     | `d x n x n x n`  | Hessian of `sigma^{j i}` at `(i*n + j)*n*n + ..` |
//! | `Df`           | `n + 1 + d`      | ordered `(f_x, f_y, f_z)`               |
//! | `D^2 f`        | `(n+1+d)^2`      | same ordering                           |
//! | `q`            | `n x d`          | column `i` = `q^i`                      |

mod check;
pub mod fd;

use alloc::vec;
use alloc::vec::Vec;

pub use check::{check_derivatives, DerivativeCheck, DerivativeReport};

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianPoint;

/// State, Brownian and control dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub d: usize,
    pub k: usize,
}

impl Dims {
    pub const fn new(n: usize, d: usize, k: usize) -> Self {
        Dims { n, d, k }
    }

    /// Length of the packed `(x, y, z)` argument of the driver.
    pub const fn xyz(&self) -> usize {
        self.n + 1 + self.d
    }
}

bitflags::bitflags! {
    /// Which derivatives a problem supplies in closed form.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct Derivatives: u16 {
        const DRIFT_X = 1 << 0;
        const DIFFUSION_X = 1 << 1;
        const DRIFT_XX = 1 << 2;
        const DIFFUSION_XX = 1 << 3;
        const DRIVER_GRAD = 1 << 4;
        const DRIVER_HESSIAN = 1 << 5;
        const TERMINAL_X = 1 << 6;
        const TERMINAL_XX = 1 << 7;
    }
}

/// Declared sup-norm bounds, reported as guidance for choosing `rho`. Never verified.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerivativeBounds {
    pub b_x: Option<f64>,
    pub sigma_x: Option<f64>,
    pub phi_x: Option<f64>,
    pub df: Option<f64>,
    pub d2f: Option<f64>,
    /// `||f_y||_inf`, which enters the descent factor `exp(-||f_y|| T)`.
    pub f_y: Option<f64>,
}

/// A decoupled forward-backward control system
///
/// ```text
/// dX = b(t, X, u) dt + sigma(t, X, u) dW,             X_0 = x0
/// dY = -f(t, X, Y, Z, u) dt + Z^T dW,                  Y_T = Phi(X_T)
/// ```
///
/// with cost `J(u) = Y_0`. Derivative methods default to central finite
/// differences; implementors override them with closed forms and list the
/// overridden ones in [`closed_forms`](Problem::closed_forms).
pub trait Problem {
    fn dims(&self) -> Dims;
    fn initial_state(&self) -> &[f64];
    fn horizon(&self) -> f64;

    fn drift(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);
    /// Writes the `n x d` diffusion matrix.
    fn diffusion(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);
    fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64]) -> f64;
    fn terminal(&self, x: &[f64]) -> f64;

    fn closed_forms(&self) -> Derivatives {
        Derivatives::empty()
    }

    /// Relative step of the finite-difference fallback.
    fn fd_step(&self) -> f64 {
        1e-6
    }

    fn drift_x(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        fd::drift_x(self, self.fd_step(), t, x, u, out)
    }

    fn diffusion_x(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        fd::diffusion_x(self, self.fd_step(), t, x, u, out)
    }

    fn drift_xx(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        fd::drift_xx(self, self.fd_step(), t, x, u, out)
    }

    fn diffusion_xx(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        fd::diffusion_xx(self, self.fd_step(), t, x, u, out)
    }

    fn driver_grad(&self, t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64], out: &mut [f64]) {
        fd::driver_grad(self, self.fd_step(), t, x, y, z, u, out)
    }

    fn driver_hessian(&self, t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64], out: &mut [f64]) {
        fd::driver_hessian(self, self.fd_step(), t, x, y, z, u, out)
    }

    fn terminal_x(&self, x: &[f64], out: &mut [f64]) {
        fd::terminal_x(self, self.fd_step(), x, out)
    }

    fn terminal_xx(&self, x: &[f64], out: &mut [f64]) {
        fd::terminal_xx(self, self.fd_step(), x, out)
    }

    fn bounds(&self) -> DerivativeBounds {
        DerivativeBounds::default()
    }

    /// Declares that the second-order adjoint is identically zero for every
    /// control, so its solve may be skipped.
    fn second_order_vanishes(&self) -> bool {
        false
    }

    /// Problem-specific replacement for the bracket that multiplies `rho / 2`
    /// in the penalized Hamiltonian. Must vanish at `v = u_prev` and be nonnegative.
    fn penalty_override(&self, _point: &HamiltonianPoint<'_>, _v: &[f64]) -> Option<f64> {
        None
    }
}

/// Checks dimensions, horizon and initial state.
pub fn validate<P: Problem + ?Sized>(problem: &P) -> Result<()> {
    let dims = problem.dims();
    if dims.n == 0 || dims.d == 0 || dims.k == 0 {
        return Err(Error::config("dimensions n, d, k must be positive"));
    }
    if problem.initial_state().len() != dims.n {
        return Err(Error::config("initial state length differs from n"));
    }
    if problem.initial_state().iter().any(|v| !v.is_finite()) {
        return Err(Error::config("initial state is not finite"));
    }
    let horizon = problem.horizon();
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config("horizon must be positive and finite"));
    }
    Ok(())
}

fn check_args<P: Problem + ?Sized>(problem: &P, t: f64, x: &[f64], u: &[f64]) -> Result<Dims> {
    let dims = problem.dims();
    if x.len() != dims.n || u.len() != dims.k {
        return Err(Error::config("state or control dimension mismatch"));
    }
    let horizon = problem.horizon();
    if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::config("time outside [0, T]"));
    }
    Ok(dims)
}

fn finite(values: &[f64], coefficient: &'static str, t: f64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evaluation { coefficient, t })
    }
}

/// Drift and diffusion at one point, validated.
pub fn eval_coefficients<P: Problem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dims = check_args(problem, t, x, u)?;
    let mut b = vec![0.0; dims.n];
    let mut sigma = vec![0.0; dims.n * dims.d];
    problem.drift(t, x, u, &mut b);
    finite(&b, "drift", t)?;
    problem.diffusion(t, x, u, &mut sigma);
    finite(&sigma, "diffusion", t)?;
    Ok((b, sigma))
}

pub fn eval_driver<P: Problem + ?Sized>(
    problem: &P,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    u: &[f64],
) -> Result<f64> {
    let dims = check_args(problem, t, x, u)?;
    if z.len() != dims.d {
        return Err(Error::config("z dimension differs from d"));
    }
    let f = problem.driver(t, x, y, z, u);
    finite(&[f], "driver", t)?;
    Ok(f)
}

/// The admissible control values.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlDomain {
    /// Explicit points, enumerated in stored order.
    FiniteSet(Vec<Vec<f64>>),
    /// Axis-aligned box, enumerated on a uniform grid.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        resolution: Vec<usize>,
    },
}

impl ControlDomain {
    pub fn finite(points: Vec<Vec<f64>>) -> Result<Self> {
        let domain = ControlDomain::FiniteSet(points);
        domain.validate()?;
        Ok(domain)
    }

    /// Scalar finite set, e.g. `{0, 1}`.
    pub fn scalars(values: &[f64]) -> Result<Self> {
        Self::finite(values.iter().map(|v| vec![*v]).collect())
    }

    pub fn grid(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let domain = ControlDomain::Box {
            lower,
            upper,
            resolution,
        };
        domain.validate()?;
        Ok(domain)
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlDomain::FiniteSet(points) => points.first().map_or(0, Vec::len),
            ControlDomain::Box { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlDomain::FiniteSet(points) => {
                let Some(first) = points.first() else {
                    return Err(Error::config("finite control set is empty"));
                };
                let k = first.len();
                if k == 0 {
                    return Err(Error::config("control points must have positive dimension"));
                }
                for (i, p) in points.iter().enumerate() {
                    if p.len() != k || p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::config(
                            "control points must be finite and share one dimension",
                        ));
                    }
                    if points[..i].iter().any(|q| q == p) {
                        return Err(Error::config("duplicate control point"));
                    }
                }
                Ok(())
            }
            ControlDomain::Box {
                lower,
                upper,
                resolution,
            } => {
                if lower.is_empty() || lower.len() != upper.len() || lower.len() != resolution.len()
                {
                    return Err(Error::config(
                        "box bounds and resolution must share a positive dimension",
                    ));
                }
                if lower
                    .iter()
                    .zip(upper)
                    .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
                {
                    return Err(Error::config("box requires finite lower <= upper"));
                }
                if resolution.iter().any(|&r| r < 2) {
                    return Err(Error::config("box resolution must be at least 2 per axis"));
                }
                Ok(())
            }
        }
    }

    /// Candidate controls in deterministic order; argmin ties resolve to the first.
    pub fn enumerate(&self) -> Vec<Vec<f64>> {
        match self {
            ControlDomain::FiniteSet(points) => points.clone(),
            ControlDomain::Box {
                lower,
                upper,
                resolution,
            } => {
                let k = lower.len();
                let total: usize = resolution.iter().product();
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; k];
                for _ in 0..total {
                    let point = (0..k)
                        .map(|a| {
                            let r = resolution[a];
                            if idx[a] == r - 1 {
                                upper[a]
                            } else {
                                lower[a] + (upper[a] - lower[a]) * idx[a] as f64 / (r - 1) as f64
                            }
                        })
                        .collect();
                    out.push(point);
                    // first axis is the slowest
                    for a in (0..k).rev() {
                        idx[a] += 1;
                        if idx[a] < resolution[a] {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                out
            }
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        match self {
            ControlDomain::FiniteSet(points) => points.iter().any(|p| p.as_slice() == u),
            ControlDomain::Box { lower, upper, .. } => {
                u.len() == lower.len()
                    && u.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(v, (l, h))| l <= v && v <= h)
            }
        }
    }
}

/// Same as [`ControlDomain::enumerate`].
pub fn enumerate_controls(domain: &ControlDomain) -> Vec<Vec<f64>> {
    domain.enumerate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example41, linear_recursive, lq_desk, LinearRecursiveParams};

    #[test]
    fn example41_coefficients() {
        let bench = example41(0.1).unwrap();
        let (b, sigma) = eval_coefficients(&bench.problem, 0.5, &[3.0], &[1.0]).unwrap();
        assert_eq!(b, vec![0.0]);
        assert_eq!(sigma, vec![1.0]);
    }

    #[test]
    fn lq_drift_is_affine() {
        let mut lq = lq_desk().problem;
        lq.b1 = vec![0.5];
        lq.b2 = vec![0.1];
        let (b, _) = eval_coefficients(&lq, 0.0, &[2.0], &[0.0]).unwrap();
        assert!((b[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn example41_driver() {
        let bench = example41(1.0).unwrap();
        let f = eval_driver(
            &bench.problem,
            0.0,
            &[0.0],
            0.0,
            &[core::f64::consts::FRAC_PI_2],
            &[0.0],
        )
        .unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_recursive_driver() {
        let mut params = LinearRecursiveParams::zeros(1, 1, 1);
        params.f1 = vec![1.0];
        params.f2 = 2.0;
        let domain = ControlDomain::grid(vec![-1.0], vec![1.0], vec![3]).unwrap();
        let zero = linear_recursive(params.clone(), |_, _| 0.0, domain.clone()).unwrap();
        assert_eq!(
            eval_driver(&zero.problem, 0.0, &[1.0], 1.0, &[0.0], &[0.5]).unwrap(),
            3.0
        );
        let quad = linear_recursive(params, |_, u| u[0] * u[0], domain).unwrap();
        assert_eq!(
            eval_driver(&quad.problem, 0.0, &[1.0], 1.0, &[0.0], &[0.5]).unwrap(),
            3.25
        );
    }

    #[test]
    fn driver_with_zero_coefficients_vanishes() {
        let params = LinearRecursiveParams::zeros(1, 1, 1);
        let domain = ControlDomain::scalars(&[0.0]).unwrap();
        let bench = linear_recursive(params, |_, _| 0.0, domain).unwrap();
        assert_eq!(
            eval_driver(&bench.problem, 0.3, &[4.0], -2.0, &[1.0], &[0.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn coefficient_errors() {
        let bench = example41(0.1).unwrap();
        assert!(matches!(
            eval_coefficients(&bench.problem, 0.5, &[0.0, 1.0], &[0.0]),
            Err(Error::Config(_))
        ));
        assert!(eval_coefficients(&bench.problem, 2.0, &[0.0], &[0.0]).is_err());
        assert!(matches!(
            eval_coefficients(&bench.problem, 0.5, &[0.0], &[f64::NAN]),
            Err(Error::Evaluation {
                coefficient: "diffusion",
                ..
            })
        ));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let lq = lq_desk().problem;
        let a = eval_coefficients(&lq, 0.25, &[0.7], &[1.0]).unwrap();
        let b = eval_coefficients(&lq, 0.25, &[0.7], &[1.0]).unwrap();
        assert_eq!(a, b);
        let fa = eval_driver(&lq, 0.25, &[0.7], 0.1, &[0.2], &[1.0]).unwrap();
        let fb = eval_driver(&lq, 0.25, &[0.7], 0.1, &[0.2], &[1.0]).unwrap();
        assert_eq!(fa.to_bits(), fb.to_bits());
    }

    #[test]
    fn enumeration_orders() {
        assert_eq!(
            ControlDomain::scalars(&[0.0, 1.0]).unwrap().enumerate(),
            vec![vec![0.0], vec![1.0]]
        );
        let grid = ControlDomain::grid(vec![-1.0], vec![1.0], vec![3]).unwrap();
        assert_eq!(grid.enumerate(), vec![vec![-1.0], vec![0.0], vec![1.0]]);
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(ControlDomain::finite(pts.clone()).unwrap().enumerate(), pts);
        let square = ControlDomain::grid(vec![0.0, 0.0], vec![1.0, 2.0], vec![2, 3]).unwrap();
        assert_eq!(
            square.enumerate(),
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 2.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![1.0, 2.0]
            ]
        );
    }

    #[test]
    fn invalid_domains() {
        assert!(ControlDomain::finite(vec![]).is_err());
        assert!(ControlDomain::scalars(&[1.0, 1.0]).is_err());
        assert!(ControlDomain::grid(vec![1.0], vec![0.0], vec![3]).is_err());
        assert!(ControlDomain::grid(vec![0.0], vec![1.0], vec![1]).is_err());
    }
}
