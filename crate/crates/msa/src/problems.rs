//! Built-in benchmarks and TOML problem spec files.
//!
//! A spec file names its family with `kind` and lists coefficients as flat
//! row-major arrays. Omitted coefficients are zero.
//!
//! ```toml
//! kind = "linear-recursive"   # or "lq"
//! x0 = [0.5]
//! b1 = [0.1]
//! b2 = [1.0]
//! sigma3 = [0.3]
//! f1 = [0.2]
//! f2 = 0.2
//! alpha = [1.0]
//! control_quadratic = [1.0]   # f3(u) = u^T R u / 2 + c^T u
//!
//! [domain]
//! lower = [-1.0]
//! upper = [1.0]
//! resolution = [3]            # or: points = [[-1.0], [0.0], [1.0]]
//! ```

use std::path::Path;

use msa_core::benchmarks::{
    example41, linear_recursive, linear_recursive_desk, lq_desk, lq_problem, Example41,
    LinearRecursiveParams, LqDiffusion,
};
use msa_core::{ControlDomain, Problem};
use serde::Deserialize;

use crate::config::ProblemSelector;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Example41,
    Lq,
    LinearRecursive,
}

/// A problem ready to be solved.
pub struct Loaded {
    pub problem: Box<dyn Problem>,
    pub domain: ControlDomain,
    pub rho: f64,
    pub family: Family,
    /// Known optimal cost, when there is one.
    pub jstar: Option<f64>,
}

impl std::fmt::Debug for Loaded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Loaded")
            .field("domain", &self.domain)
            .field("rho", &self.rho)
            .field("family", &self.family)
            .field("jstar", &self.jstar)
            .finish_non_exhaustive()
    }
}

pub fn load(selector: &ProblemSelector, l: f64) -> Result<Loaded, CliError> {
    match selector {
        ProblemSelector::Example41 => {
            let bench = example41(l)?;
            Ok(Loaded {
                rho: Example41::recommended_rho(l),
                domain: bench.domain,
                problem: Box::new(bench.problem),
                family: Family::Example41,
                jstar: Some(0.0),
            })
        }
        ProblemSelector::Lq => {
            let bench = lq_desk();
            Ok(Loaded {
                rho: bench.rho,
                domain: bench.domain,
                problem: Box::new(bench.problem),
                family: Family::Lq,
                jstar: Some(0.0),
            })
        }
        ProblemSelector::LinearRecursive => {
            let bench = linear_recursive_desk();
            Ok(Loaded {
                rho: bench.rho,
                domain: bench.domain,
                problem: Box::new(bench.problem),
                family: Family::LinearRecursive,
                jstar: None,
            })
        }
        ProblemSelector::Custom(path) => load_spec(path),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSpec {
    points: Option<Vec<Vec<f64>>>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    resolution: Option<Vec<usize>>,
}

impl DomainSpec {
    fn build(self) -> Result<ControlDomain, CliError> {
        match self {
            DomainSpec {
                points: Some(points),
                lower: None,
                upper: None,
                resolution: None,
            } => Ok(ControlDomain::finite(points)?),
            DomainSpec {
                points: None,
                lower: Some(lower),
                upper: Some(upper),
                resolution: Some(resolution),
            } => Ok(ControlDomain::grid(lower, upper, resolution)?),
            _ => Err(CliError::Config(
                "domain needs either `points` or all of `lower`, `upper`, `resolution`".into(),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearSpec {
    rho: Option<f64>,
    horizon: Option<f64>,
    x0: Vec<f64>,
    d: Option<usize>,
    domain: DomainSpec,
    b1: Option<Vec<f64>>,
    b2: Option<Vec<f64>>,
    b3: Option<Vec<f64>>,
    sigma1: Option<Vec<f64>>,
    sigma2: Option<Vec<f64>>,
    sigma3: Option<Vec<f64>>,
    f1: Option<Vec<f64>>,
    f2: Option<f64>,
    alpha: Option<Vec<f64>>,
    gamma: Option<f64>,
    control_quadratic: Option<Vec<f64>>,
    control_linear: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqSpec {
    rho: Option<f64>,
    horizon: Option<f64>,
    x0: Vec<f64>,
    d: Option<usize>,
    domain: DomainSpec,
    gamma: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    b1: Option<Vec<f64>>,
    b2: Option<Vec<f64>>,
    /// `n x d`
    sigma0: Option<Vec<f64>>,
    /// `k` blocks of `n x d`; the diffusion is `sigma0 + sum_i u_i sigma_u[i]`.
    sigma_u: Option<Vec<f64>>,
    jstar: Option<f64>,
}

fn spec_error(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("problem spec {}: {msg}", path.display()))
}

pub fn load_spec(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| spec_error(path, e))?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| spec_error(path, e))?;
    let kind = match table.remove("kind") {
        Some(toml::Value::String(s)) => s,
        _ => return Err(spec_error(path, "missing string field `kind`")),
    };
    let value = toml::Value::Table(table);
    match kind.as_str() {
        "linear-recursive" => {
            let spec: LinearSpec = value.try_into().map_err(|e| spec_error(path, e))?;
            linear_from_spec(spec)
        }
        "lq" => {
            let spec: LqSpec = value.try_into().map_err(|e| spec_error(path, e))?;
            lq_from_spec(spec)
        }
        other => Err(spec_error(path, format!("unknown kind `{other}`"))),
    }
}

type ControlCost = Box<dyn Fn(f64, &[f64]) -> f64>;

fn linear_from_spec(spec: LinearSpec) -> Result<Loaded, CliError> {
    let domain = spec.domain.build()?;
    let (n, d, k) = (spec.x0.len(), spec.d.unwrap_or(1), domain.dim());
    let mut p = LinearRecursiveParams::zeros(n, d, k);
    p.x0 = spec.x0;
    let fields = [
        (&mut p.b1, spec.b1),
        (&mut p.b2, spec.b2),
        (&mut p.b3, spec.b3),
        (&mut p.sigma1, spec.sigma1),
        (&mut p.sigma2, spec.sigma2),
        (&mut p.sigma3, spec.sigma3),
        (&mut p.f1, spec.f1),
        (&mut p.alpha, spec.alpha),
    ];
    for (slot, given) in fields {
        if let Some(v) = given {
            *slot = v;
        }
    }
    p.f2 = spec.f2.unwrap_or(0.0);
    p.gamma = spec.gamma.unwrap_or(0.0);
    p.horizon = spec.horizon.unwrap_or(1.0);
    let quad = spec.control_quadratic.unwrap_or_else(|| vec![0.0; k * k]);
    let lin = spec.control_linear.unwrap_or_else(|| vec![0.0; k]);
    if quad.len() != k * k || lin.len() != k {
        return Err(CliError::Config("control cost has the wrong shape".into()));
    }
    let f3: ControlCost = Box::new(move |_t, u| {
        let mut acc = 0.0;
        for r in 0..k {
            acc += lin[r] * u[r];
            for c in 0..k {
                acc += 0.5 * u[r] * quad[r * k + c] * u[c];
            }
        }
        acc
    });
    let bench = linear_recursive(p, f3, domain)?;
    Ok(Loaded {
        rho: spec.rho.unwrap_or(bench.rho),
        domain: bench.domain,
        problem: Box::new(bench.problem),
        family: Family::LinearRecursive,
        jstar: None,
    })
}

fn lq_from_spec(spec: LqSpec) -> Result<Loaded, CliError> {
    let domain = spec.domain.build()?;
    let (n, d, k) = (spec.x0.len(), spec.d.unwrap_or(1), domain.dim());
    let sigma0 = spec.sigma0.unwrap_or_else(|| vec![0.0; n * d]);
    let sigma_u = spec.sigma_u.unwrap_or_else(|| vec![0.0; k * n * d]);
    if sigma0.len() != n * d || sigma_u.len() != k * n * d {
        return Err(CliError::Config(
            "diffusion coefficient has the wrong shape".into(),
        ));
    }
    let sigma: LqDiffusion = Box::new(move |_t, u, out| {
        out.copy_from_slice(&sigma0);
        for (i, ui) in u.iter().enumerate() {
            for (o, s) in out.iter_mut().zip(&sigma_u[i * n * d..(i + 1) * n * d]) {
                *o += ui * s;
            }
        }
    });
    let b1 = spec.b1.unwrap_or_else(|| vec![0.0; n * n]);
    let b2 = spec.b2.unwrap_or_else(|| vec![0.0; n]);
    let mut bench = lq_problem(
        spec.gamma, spec.a, spec.b, b1, b2, d, sigma, spec.x0, domain,
    )?;
    bench.problem.horizon = spec.horizon.unwrap_or(1.0);
    bench.problem.validate()?;
    Ok(Loaded {
        rho: spec.rho.unwrap_or(bench.rho),
        domain: bench.domain,
        problem: Box::new(bench.problem),
        family: Family::Lq,
        jstar: spec.jstar,
    })
}
