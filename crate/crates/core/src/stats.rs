/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        mean: 0.0,
        stderr: 0.0,
    };

    /// Sample mean and `stddev / sqrt(len)`, accumulated sequentially by index.
    pub fn from_samples(samples: &[f64]) -> Self {
        let m = samples.len();
        if m == 0 {
            return Estimate::ZERO;
        }
        let mean = mean(samples);
        if m == 1 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1) as f64;
        Estimate {
            mean,
            stderr: libm::sqrt(var / m as f64),
        }
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        libm::hypot(self.stderr, other.stderr)
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}
