use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Field, Singularity};
use crate::{Error, Result, C64};

/// Generalized Laguerre polynomial `L_p^a(x)` by the three-term recurrence.
pub fn laguerre(p: u32, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..p {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + a - x) * cur - (k + a) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Laguerre-Gaussian mode at its waist plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LgMode {
    pub p: u32,
    pub m: i32,
    pub w0: f64,
}

impl LgMode {
    pub fn new(p: u32, m: i32, w0: f64) -> Result<Self> {
        let mode = Self { p, m, w0 };
        mode.validate()?;
        Ok(mode)
    }

    /// The fundamental Gaussian `LG_{0,0}`.
    pub fn gaussian(w0: f64) -> Result<Self> {
        Self::new(0, 0, w0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w0 > 0.0 && self.w0.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "waist w0 = {} must be positive",
                self.w0
            )))
        }
    }

    /// Constant making the analytic L2 norm one.
    pub fn normalization(&self) -> f64 {
        let am = self.m.unsigned_abs();
        (2.0 * factorial(self.p) / (PI * factorial(self.p + am))).sqrt() / self.w0
    }
}

impl Field for LgMode {
    fn value(&self, x: f64, y: f64) -> C64 {
        let w = self.w0;
        let am = self.m.unsigned_abs();
        let r2 = (x * x + y * y) / (w * w);
        // (sqrt2 r / w)^|m| e^{i m phi} = (sqrt2 (x +- i y) / w)^|m|
        let sign = if self.m < 0 { -1.0 } else { 1.0 };
        let z = C64::new(x, sign * y) * (2f64.sqrt() / w);
        let angular = z.powu(am);
        let radial = laguerre(self.p, am as f64, 2.0 * r2) * (-r2).exp();
        angular * (self.normalization() * radial)
    }

    fn singularity(&self) -> Singularity {
        Singularity::None
    }
}

/// Coherent superposition of LG modes (amplitudes are not renormalized).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSum {
    pub terms: Vec<(C64, LgMode)>,
}

impl ModeSum {
    pub fn new(terms: Vec<(C64, LgMode)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParameter(
                "superposition needs at least one mode".into(),
            ));
        }
        for (_, mode) in &terms {
            mode.validate()?;
        }
        Ok(Self { terms })
    }
}

impl Field for ModeSum {
    fn value(&self, x: f64, y: f64) -> C64 {
        self.terms
            .iter()
            .map(|(c, mode)| c * mode.value(x, y))
            .sum()
    }

    fn singularity(&self) -> Singularity {
        Singularity::None
    }
}
