//! Least-squares projection on global polynomials.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Polynomial regression of targets on per-path features.
///
/// Features are standardized, monomials up to total `degree` are built from
/// them, and every non-constant column is centered and scaled before the
/// ridge-regularized normal equations are solved. The intercept is not
/// penalized, so fitted values average to the target mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionBackend {
    pub degree: usize,
    pub ridge: f64,
    /// Regress on `(X_j, u_j)` rather than on `X_j` alone.
    pub include_control: bool,
}

impl Default for RegressionBackend {
    fn default() -> Self {
        RegressionBackend {
            degree: 2,
            ridge: 1e-8,
            include_control: true,
        }
    }
}

impl RegressionBackend {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::config("ridge must be a finite nonnegative number"));
        }
        if self.degree > 8 {
            return Err(Error::config("polynomial degree above 8 is not supported"));
        }
        Ok(())
    }
}

/// Number of monomials of total degree at most `degree` in `vars` variables.
pub fn basis_size(vars: usize, degree: usize) -> usize {
    // C(vars + degree, degree)
    let mut c = 1usize;
    for i in 1..=degree {
        c = c * (vars + i) / i;
    }
    c
}

/// Exponent tuples of total degree `1..=degree`, graded then lexicographic.
fn exponents(vars: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if vars == 0 {
        return out;
    }
    for total in 1..=degree {
        let mut current = vec![0u8; vars];
        push_exponents(&mut out, &mut current, 0, total);
    }
    out
}

fn push_exponents(out: &mut Vec<Vec<u8>>, current: &mut [u8], var: usize, left: usize) {
    if var + 1 == current.len() {
        current[var] = left as u8;
        out.push(current.to_vec());
        current[var] = 0;
        return;
    }
    for e in (0..=left).rev() {
        current[var] = e as u8;
        push_exponents(out, current, var + 1, left - e);
    }
    current[var] = 0;
}

/// For each exponent tuple, the earlier tuple it extends and the variable
/// it multiplies by (no parent for degree one).
fn parents(exps: &[Vec<u8>]) -> Vec<(Option<usize>, usize)> {
    exps.iter()
        .map(|e| {
            let var = e.iter().position(|&v| v > 0).unwrap_or(0);
            let total: u32 = e.iter().map(|&v| v as u32).sum();
            if total <= 1 {
                return (None, var);
            }
            let mut parent = e.clone();
            parent[var] -= 1;
            (exps.iter().position(|x| *x == parent), var)
        })
        .collect()
}

fn monomial(s: &[f64], exps: &[u8]) -> f64 {
    let mut v = 1.0;
    for (x, &e) in s.iter().zip(exps) {
        for _ in 0..e {
            v *= x;
        }
    }
    v
}

/// A fitted projection for `width` target columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
    /// Indices of the non-constant features.
    features: Vec<usize>,
    exps: Vec<Vec<u8>>,
    col_mean: Vec<f64>,
    col_scale: Vec<f64>,
    /// `[basis x width]`
    coef: Vec<f64>,
    intercept: Vec<f64>,
    width: usize,
}

impl Predictor {
    pub fn width(&self) -> usize {
        self.width
    }

    fn basis_row(&self, x: &[f64], out: &mut Vec<f64>) {
        let s: Vec<f64> = self
            .features
            .iter()
            .map(|&f| (x[f] - self.feature_mean[f]) / self.feature_scale[f])
            .collect();
        out.clear();
        for (k, e) in self.exps.iter().enumerate() {
            out.push((monomial(&s, e) - self.col_mean[k]) / self.col_scale[k]);
        }
    }

    /// Predicted value of every target column at one feature vector.
    pub fn predict_all(&self, x: &[f64], out: &mut [f64]) {
        let mut row = Vec::with_capacity(self.exps.len());
        self.basis_row(x, &mut row);
        for (c, o) in out.iter_mut().enumerate().take(self.width) {
            let mut v = self.intercept[c];
            for (k, r) in row.iter().enumerate() {
                v += self.coef[k * self.width + c] * r;
            }
            *o = v;
        }
    }

    /// Predicted value of the first target column.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.width];
        self.predict_all(x, &mut out);
        out[0]
    }
}

/// Fits `targets` (`[M x width]`) on `features` (`[M x nf]`) and returns the
/// fitted values at the sample points (`[M x width]`) with the predictor.
pub fn fit_columns(
    backend: &RegressionBackend,
    features: &[f64],
    nf: usize,
    targets: &[f64],
    width: usize,
) -> Result<(Predictor, Vec<f64>)> {
    backend.validate()?;
    let m = targets.len() / width.max(1);
    if m == 0 || targets.len() != m * width || features.len() != m * nf {
        return Err(Error::config("regression inputs have inconsistent lengths"));
    }
    let needed = basis_size(nf, backend.degree);
    if m < needed {
        return Err(Error::config(format!(
            "regression needs at least {needed} samples for degree {} in {nf} features, got {m}",
            backend.degree
        )));
    }
    let mf = m as f64;

    let mut feature_mean = vec![0.0; nf];
    let mut feature_scale = vec![1.0; nf];
    let mut kept_features = Vec::new();
    for f in 0..nf {
        let mean = (0..m).map(|i| features[i * nf + f]).sum::<f64>() / mf;
        let var = (0..m)
            .map(|i| {
                let c = features[i * nf + f] - mean;
                c * c
            })
            .sum::<f64>()
            / mf;
        let sd = libm::sqrt(var);
        feature_mean[f] = mean;
        if sd > 1e-13 * mean.abs().max(1.0) {
            feature_scale[f] = sd;
            kept_features.push(f);
        }
    }

    let all_exps = exponents(kept_features.len(), backend.degree);
    let parents = parents(&all_exps);
    let nb = all_exps.len();
    let svars: Vec<Vec<f64>> = kept_features
        .iter()
        .map(|&f| {
            (0..m)
                .map(|i| (features[i * nf + f] - feature_mean[f]) / feature_scale[f])
                .collect()
        })
        .collect();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(nb);
    for &(parent, var) in &parents {
        let col = match parent {
            None => svars[var].clone(),
            Some(p) => cols[p]
                .iter()
                .zip(&svars[var])
                .map(|(a, b)| a * b)
                .collect(),
        };
        cols.push(col);
    }

    // center and scale, dropping constant columns
    let mut exps = Vec::new();
    let mut col_mean = Vec::new();
    let mut col_scale = Vec::new();
    let mut psi: Vec<Vec<f64>> = Vec::new();
    for (k, mut col) in cols.into_iter().enumerate() {
        let mean = col.iter().sum::<f64>() / mf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / mf;
        let sd = libm::sqrt(var);
        if sd > 1e-10 {
            col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            psi.push(col);
            exps.push(all_exps[k].clone());
            col_mean.push(mean);
            col_scale.push(sd);
        }
    }
    let kb = psi.len();

    let mut intercept = vec![0.0; width];
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(width);
    for (c, v) in intercept.iter_mut().enumerate() {
        let col: Vec<f64> = (0..m).map(|i| targets[i * width + c]).collect();
        *v = col.iter().sum::<f64>() / mf;
        centered.push(col.iter().map(|t| t - *v).collect());
    }

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut gram = vec![0.0; kb * kb];
    let mut rhs = vec![0.0; kb * width];
    for a in 0..kb {
        for b in a..kb {
            let g = dot(&psi[a], &psi[b]) / mf;
            gram[a * kb + b] = g;
            gram[b * kb + a] = g;
        }
        for c in 0..width {
            rhs[a * width + c] = dot(&psi[a], &centered[c]) / mf;
        }
    }

    // drop exact duplicates (up to sign) among standardized columns
    let mut active: Vec<usize> = Vec::new();
    for a in 0..kb {
        if active.iter().all(|&b| gram[a * kb + b].abs() < 1.0 - 1e-10) {
            active.push(a);
        }
    }
    let na = active.len();
    let mut coef = vec![0.0; kb * width];
    if na > 0 {
        let g = DMatrix::from_fn(na, na, |r, c| {
            gram[active[r] * kb + active[c]] + if r == c { backend.ridge } else { 0.0 }
        });
        let chol = g.cholesky().ok_or_else(singular)?;
        if backend.ridge == 0.0 {
            let l = chol.l_dirty();
            let smallest = (0..na)
                .map(|i| l[(i, i)] * l[(i, i)])
                .fold(f64::INFINITY, f64::min);
            if smallest < 1e-12 {
                return Err(singular());
            }
        }
        for c in 0..width {
            let b = DVector::from_fn(na, |r, _| rhs[active[r] * width + c]);
            let beta = chol.solve(&b);
            for (r, &a) in active.iter().enumerate() {
                coef[a * width + c] = beta[r];
            }
        }
    }
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }

    let mut fitted = vec![0.0; m * width];
    let mut acc = vec![0.0; m];
    for c in 0..width {
        acc.iter_mut().for_each(|v| *v = intercept[c]);
        for a in 0..kb {
            let w = coef[a * width + c];
            if w != 0.0 {
                acc.iter_mut().zip(&psi[a]).for_each(|(v, p)| *v += w * p);
            }
        }
        for i in 0..m {
            fitted[i * width + c] = acc[i];
        }
    }

    let predictor = Predictor {
        feature_mean,
        feature_scale,
        features: kept_features,
        exps,
        col_mean,
        col_scale,
        coef,
        intercept,
        width,
    };
    Ok((predictor, fitted))
}

fn singular() -> Error {
    Error::Backend {
        step: 0,
        reason: "normal equations are singular; use a positive ridge".into(),
    }
}

/// Least-squares fit of one target column; `features` is `[M x nf]`.
pub fn condexp_fit(
    features: &[f64],
    nf: usize,
    targets: &[f64],
    backend: &RegressionBackend,
) -> Result<Predictor> {
    fit_columns(backend, features, nf, targets, 1).map(|(p, _)| p)
}
