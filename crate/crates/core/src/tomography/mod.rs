//! Density-matrix reconstruction from the 81 coincidence counts.
//!
//! [`linear_inversion`] solves the linear system directly and may return an
//! unphysical matrix; [`mle_reconstruct`] maximizes the Poisson likelihood
//! over physical states; [`monte_carlo_errors`] propagates counting
//! statistics into any derived quantity.

mod linear;
mod mle;
mod monte_carlo;

pub use linear::{linear_from_frequencies, linear_inversion, LinearEstimate};
pub use mle::{
    mle_from_frequencies, mle_reconstruct, psd_projection, MleObjective, MleOptions, Normalization,
    NUM_PARAMS,
};
pub use monte_carlo::{monte_carlo_errors, percentile, McSummary};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::measurement::{SettingIndex, SETTINGS};
use crate::qutrit::{DensityMatrix9, MatrixJson};
use crate::{Error, Result};

/// Observed coincidences, one count per setting in row-major `(i, j)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTable {
    pub counts: Vec<u64>,
    /// Acquisition time per setting, seconds.
    pub duration_s: f64,
    /// Projection normalization `N` with `E[n_k] = N Tr(Pi_k rho) + b_k`.
    /// `None` profiles `N` out of the likelihood.
    pub total_trials: Option<u64>,
    /// Fixed expected background `b_k` per setting.
    pub background: Vec<f64>,
}

impl CoincidenceTable {
    pub fn new(counts: Vec<u64>, duration_s: f64) -> Result<Self> {
        let table = Self {
            counts,
            duration_s,
            total_trials: None,
            background: vec![0.0; SETTINGS],
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() != SETTINGS {
            return Err(Error::Dimension {
                expected: SETTINGS,
                got: self.counts.len(),
            });
        }
        if self.background.len() != SETTINGS {
            return Err(Error::Dimension {
                expected: SETTINGS,
                got: self.background.len(),
            });
        }
        if self
            .background
            .iter()
            .any(|b| !(b.is_finite() && *b >= 0.0))
        {
            return Err(Error::Malformed(
                "background must be finite and non-negative".into(),
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(Error::Malformed(format!(
                "invalid duration {}",
                self.duration_s
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn normalization(&self) -> Normalization {
        match self.total_trials {
            Some(n) => Normalization::Known(n as f64),
            None => Normalization::Profiled,
        }
    }

    /// Writes the `i,j,counts` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "counts"]).map_err(csv_err)?;
        for (k, c) in self.counts.iter().enumerate() {
            let idx = SettingIndex::from_flat(k)?;
            w.write_record([
                idx.photon().to_string(),
                idx.atom().to_string(),
                c.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(())
    }

    /// Reads an `i,j,counts` CSV with exactly one row per setting (any order)
    /// and attaches the sidecar metadata.
    pub fn read_csv<R: Read>(reader: R, meta: &TableMetadata) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["i", "j", "counts"] {
            return Err(Error::Malformed(format!(
                "expected header `i,j,counts`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut counts: Vec<Option<u64>> = vec![None; SETTINGS];
        let mut rows = 0usize;
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(csv_err)?;
            rows += 1;
            let field = |n: usize| record.get(n).unwrap_or("").to_string();
            let parse = |s: String, what: &str| -> Result<i64> {
                s.parse::<i64>().map_err(|_| {
                    Error::Malformed(format!("row {}: invalid {what} `{s}`", line + 2))
                })
            };
            let (i, j, c) = (
                parse(field(0), "i")?,
                parse(field(1), "j")?,
                parse(field(2), "counts")?,
            );
            if c < 0 {
                return Err(Error::Malformed(format!(
                    "row {}: negative count {c}",
                    line + 2
                )));
            }
            if !(0..9).contains(&i) || !(0..9).contains(&j) {
                return Err(Error::Malformed(format!(
                    "row {}: setting ({i}, {j}) out of range",
                    line + 2
                )));
            }
            let idx = SettingIndex::new(i as usize, j as usize)?;
            if counts[idx.flat()].replace(c as u64).is_some() {
                return Err(Error::Malformed(format!(
                    "row {}: duplicate setting ({i}, {j})",
                    line + 2
                )));
            }
        }
        if rows != SETTINGS {
            return Err(Error::Malformed(format!(
                "expected {SETTINGS} rows, found {rows}"
            )));
        }
        let counts = counts
            .into_iter()
            .map(|c| c.expect("all 81 settings present"))
            .collect();
        let table = Self {
            counts,
            duration_s: meta.duration_s,
            total_trials: meta.total_trials,
            background: meta.background_per_setting.expand()?,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn metadata(&self) -> TableMetadata {
        let first = self.background[0];
        let background_per_setting = if self.background.iter().all(|&b| b == first) {
            Background::Uniform(first)
        } else {
            Background::PerSetting(self.background.clone())
        };
        TableMetadata {
            duration_s: self.duration_s,
            total_trials: self.total_trials,
            background_per_setting,
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(e.to_string())
}

/// Expected background counts: one value for every setting, or 81 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Background {
    Uniform(f64),
    PerSetting(Vec<f64>),
}

impl Default for Background {
    fn default() -> Self {
        Background::Uniform(0.0)
    }
}

impl Background {
    pub fn expand(&self) -> Result<Vec<f64>> {
        match self {
            Background::Uniform(b) => Ok(vec![*b; SETTINGS]),
            Background::PerSetting(v) if v.len() == SETTINGS => Ok(v.clone()),
            Background::PerSetting(v) => Err(Error::Dimension {
                expected: SETTINGS,
                got: v.len(),
            }),
        }
    }
}

/// JSON sidecar of a counts CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMetadata {
    pub duration_s: f64,
    #[serde(default)]
    pub total_trials: Option<u64>,
    #[serde(default)]
    pub background_per_setting: Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Linear,
    Mle,
}

/// Outcome of maximum-likelihood reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    pub rho_hat: DensityMatrix9,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
    /// Objective after each accepted iteration (starting point first).
    pub nll_trace: Vec<f64>,
}

/// JSON layout: the density-matrix schema plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographyResultJson {
    #[serde(flatten)]
    pub matrix: MatrixJson,
    pub method: Method,
    pub neg_log_likelihood: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McSummaryJson>,
}

/// Monte-Carlo block attached to a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummaryJson {
    pub quantity: String,
    pub n_samples: usize,
    pub n_used: usize,
    pub n_excluded: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<&TomographyResult> for TomographyResultJson {
    fn from(r: &TomographyResult) -> Self {
        Self {
            matrix: MatrixJson::from_matrix(r.rho_hat.matrix()),
            method: r.method,
            neg_log_likelihood: Some(r.neg_log_likelihood),
            iterations: Some(r.iterations),
            converged: Some(r.converged),
            min_eigenvalue: None,
            monte_carlo: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CoincidenceTable {
        let mut t =
            CoincidenceTable::new((0..81).map(|k| (k * 7 % 13) as u64).collect(), 100.0).unwrap();
        t.total_trials = Some(500);
        t
    }

    #[test]
    fn csv_round_trip() {
        let t = table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,counts\n0,0,0\n"));
        let back = CoincidenceTable::read_csv(buf.as_slice(), &t.metadata()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_rejects_bad_input() {
        let meta = table().metadata();
        let mut buf = Vec::new();
        table().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let short: String = text.lines().take(81).collect::<Vec<_>>().join("\n");
        assert!(CoincidenceTable::read_csv(short.as_bytes(), &meta).is_err());

        let negative = text.replacen("0,1,7", "0,1,-7", 1);
        assert!(CoincidenceTable::read_csv(negative.as_bytes(), &meta).is_err());

        let dup = text.replacen("0,1,7", "0,0,7", 1);
        assert!(CoincidenceTable::read_csv(dup.as_bytes(), &meta).is_err());

        let header = text.replacen("i,j,counts", "a,b,c", 1);
        assert!(CoincidenceTable::read_csv(header.as_bytes(), &meta).is_err());
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(CoincidenceTable::new(vec![1; 80], 1.0).is_err());
    }

    #[test]
    fn metadata_json() {
        let meta: TableMetadata = serde_json::from_str(
            r#"{"duration_s": 100, "total_trials": null, "background_per_setting": 0.5}"#,
        )
        .unwrap();
        assert_eq!(meta.background_per_setting.expand().unwrap(), vec![0.5; 81]);
        assert!(serde_json::from_str::<TableMetadata>(r#"{"duration_s": 1, "extra": 2}"#).is_err());
        let per: TableMetadata = serde_json::from_str(&format!(
            r#"{{"duration_s": 1, "background_per_setting": {:?}}}"#,
            vec![0.1; 81]
        ))
        .unwrap();
        assert!(matches!(
            per.background_per_setting,
            Background::PerSetting(_)
        ));
    }
}
