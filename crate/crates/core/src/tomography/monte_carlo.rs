use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::{mle_reconstruct, CoincidenceTable, McSummaryJson, MleOptions};
use crate::measurement::ProjectorSetting;
use crate::qutrit::DensityMatrix9;
use crate::random::{rng_from_seed, sub_seed};
use crate::{Error, Result};

/// Statistics of a derived quantity over Poisson-resampled reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub n_samples: usize,
    pub n_used: usize,
    /// Samples dropped because the reconstruction did not converge.
    pub n_excluded: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Values from the converged samples, ascending.
    pub values: Vec<f64>,
}

impl McSummary {
    pub fn from_values(mut values: Vec<f64>, n_samples: usize) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "only {} usable Monte-Carlo samples",
                values.len()
            )));
        }
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            n_samples,
            n_used: values.len(),
            n_excluded: n_samples - values.len(),
            mean,
            std: var.sqrt(),
            values,
        })
    }

    pub fn percentile(&self, q: f64) -> f64 {
        percentile(&self.values, q)
    }

    /// Central 95% interval (2.5th to 97.5th percentile).
    pub fn ci95(&self) -> (f64, f64) {
        (self.percentile(2.5), self.percentile(97.5))
    }

    pub fn to_json(&self, quantity: &str) -> McSummaryJson {
        let (ci_low, ci_high) = self.ci95();
        McSummaryJson {
            quantity: quantity.to_string(),
            n_samples: self.n_samples,
            n_used: self.n_used,
            n_excluded: self.n_excluded,
            mean: self.mean,
            std: self.std,
            ci_low,
            ci_high,
        }
    }
}

/// Percentile `q` in `[0, 100]` of ascending `sorted` with linear
/// interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Resamples every count as Poisson with mean equal to the observed count,
/// reconstructs each sample by maximum likelihood and collects `derived` of
/// the result. Sample `s` uses sub-seed `s` of `seed`, so the outcome does not
/// depend on thread scheduling.
pub fn monte_carlo_errors<F>(
    table: &CoincidenceTable,
    settings: &[ProjectorSetting],
    n_samples: usize,
    derived: F,
    seed: u64,
    opts: &MleOptions,
) -> Result<McSummary>
where
    F: Fn(&DensityMatrix9) -> f64 + Sync,
{
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_samples must be at least 2, got {n_samples}"
        )));
    }
    table.validate()?;
    if table.total() == 0 {
        return Err(Error::NoCounts);
    }
    let sample_opts = MleOptions {
        warm_start: true,
        initial: None,
        ..opts.clone()
    };
    let outcomes: Vec<Result<Option<f64>>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = rng_from_seed(sub_seed(seed, s as u64));
            let counts = table
                .counts
                .iter()
                .map(|&c| {
                    if c > 0 {
                        Poisson::new(c as f64)
                            .expect("positive mean")
                            .sample(&mut rng) as u64
                    } else {
                        0
                    }
                })
                .collect();
            let sample = CoincidenceTable {
                counts,
                ..table.clone()
            };
            match mle_reconstruct(&sample, settings, &sample_opts) {
                Ok(r) if r.converged => Ok(Some(derived(&r.rho_hat))),
                Ok(_) | Err(Error::NoCounts) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_samples);
    for o in outcomes {
        if let Some(v) = o? {
            values.push(v);
        }
    }
    McSummary::from_values(values, n_samples)
}
