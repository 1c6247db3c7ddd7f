use alloc::vec::Vec;

use super::regression::{fit_columns, RegressionBackend};
use crate::error::{Error, Result};
use crate::stochastics::{BrownianBatch, ControlField, ForwardPaths, NoiseKind};

/// The information available at one time index.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub step: usize,
    pub forward: &'a ForwardPaths,
    pub control: &'a ControlField,
    pub batch: &'a BrownianBatch,
}

/// Estimates `E[target | F_{t_j}]` for every path at once.
pub trait ConditionalExpectation {
    /// `targets` and `out` are `[M x width]`.
    fn project(
        &self,
        ctx: &StepContext<'_>,
        targets: &[f64],
        width: usize,
        out: &mut [f64],
    ) -> Result<()>;
}

/// Exact averages over the paths of a binomial batch that share their first
/// `j` increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FiltrationBackend;

impl ConditionalExpectation for FiltrationBackend {
    fn project(
        &self,
        ctx: &StepContext<'_>,
        targets: &[f64],
        width: usize,
        out: &mut [f64],
    ) -> Result<()> {
        if ctx.batch.kind() != NoiseKind::Binomial {
            return Err(Error::config(
                "the filtration backend needs an enumerated binomial batch",
            ));
        }
        let steps = ctx.batch.grid().steps();
        let block = 1usize << (steps - ctx.step);
        let m = ctx.batch.n_paths();
        let mut sum = alloc::vec![0.0; width];
        for start in (0..m).step_by(block) {
            sum.iter_mut().for_each(|s| *s = 0.0);
            for path in start..start + block {
                for c in 0..width {
                    sum[c] += targets[path * width + c];
                }
            }
            for c in 0..width {
                sum[c] /= block as f64;
            }
            for path in start..start + block {
                out[path * width..(path + 1) * width].copy_from_slice(&sum);
            }
        }
        Ok(())
    }
}

impl ConditionalExpectation for RegressionBackend {
    fn project(
        &self,
        ctx: &StepContext<'_>,
        targets: &[f64],
        width: usize,
        out: &mut [f64],
    ) -> Result<()> {
        let m = ctx.batch.n_paths();
        let n = ctx.forward.n();
        let k = if self.include_control {
            ctx.control.k()
        } else {
            0
        };
        let nf = n + k;
        let mut features = Vec::with_capacity(m * nf);
        for path in 0..m {
            features.extend_from_slice(ctx.forward.x(path, ctx.step));
            if k > 0 {
                features.extend_from_slice(ctx.control.get(path, ctx.step));
            }
        }
        let (_, fitted) =
            fit_columns(self, &features, nf, targets, width).map_err(|e| match e {
                Error::Backend { reason, .. } => Error::Backend {
                    step: ctx.step,
                    reason,
                },
                other => other,
            })?;
        out.copy_from_slice(&fitted);
        Ok(())
    }
}

/// Backend selection carried by the solver configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Regression(RegressionBackend),
    Filtration,
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Regression(RegressionBackend::default())
    }
}

impl ConditionalExpectation for Backend {
    fn project(
        &self,
        ctx: &StepContext<'_>,
        targets: &[f64],
        width: usize,
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            Backend::Regression(r) => r.project(ctx, targets, width, out),
            Backend::Filtration => FiltrationBackend.project(ctx, targets, width, out),
        }
    }
}
