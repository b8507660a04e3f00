//! Forward model of the counting experiment.
//!
//! Per pulse a Stokes photon is emitted with probability `p`; the paired
//! atomic excitation is read out as an anti-Stokes photon with efficiency
//! `eta`. Only single-pair terms enter the correlated signal; multi-pair and
//! stray-light contributions are lumped into an accidental product of the two
//! single-side detection probabilities. This is accurate while `p << 1`.

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::entanglement::MesParams;
use crate::measurement::{ProjectorSetting, SETTINGS};
use crate::qutrit::{DensityMatrix9, Matrix3, Matrix9, Subsystem, MAJOR};
use crate::random::{rng_from_seed, sub_seed};
use crate::tomography::CoincidenceTable;
use crate::{Error, Result, C64};

/// Largest excitation probability accepted by [`SourceModel`].
pub const MAX_EXCITATION_PROB: f64 = 0.05;

/// Excitation probability per pulse in the reference configuration.
pub const REFERENCE_EXCITATION_PROB: f64 = 5e-4;
pub const REFERENCE_REP_PERIOD_NS: f64 = 400.0;
pub const REFERENCE_DURATION_S: f64 = 100.0;

/// Retrieval efficiency chosen so that `eta * p * N_trials = 1500`, i.e.
/// about 500 expected coincidences at each zero-total-OAM setting of a
/// maximally entangled state (a 5 per second coincidence rate).
pub const CALIBRATED_RETRIEVAL_EFF: f64 = 0.012;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    pub rho_true: DensityMatrix9,
    /// Stokes emission probability per pulse into the mode of interest.
    pub excitation_prob: f64,
    pub retrieval_eff: f64,
    /// Stray detection probability per pulse on the Stokes arm.
    pub bg_stokes: f64,
    /// Stray detection probability per pulse on the anti-Stokes arm.
    pub bg_antistokes: f64,
    pub rep_period_ns: f64,
    /// Acquisition time per setting.
    pub duration_s: f64,
    /// Per-setting Stokes stray probabilities, replacing `bg_stokes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg_stokes_per_setting: Option<Vec<f64>>,
    /// Per-setting anti-Stokes stray probabilities, replacing `bg_antistokes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bg_antistokes_per_setting: Option<Vec<f64>>,
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {v} must lie in [0, 1)"
        )))
    }
}

impl SourceModel {
    /// Reference timing and rates around the given state, without stray light.
    pub fn reference(rho_true: DensityMatrix9) -> Self {
        Self {
            rho_true,
            excitation_prob: REFERENCE_EXCITATION_PROB,
            retrieval_eff: CALIBRATED_RETRIEVAL_EFF,
            bg_stokes: 0.0,
            bg_antistokes: 0.0,
            rep_period_ns: REFERENCE_REP_PERIOD_NS,
            duration_s: REFERENCE_DURATION_S,
            bg_stokes_per_setting: None,
            bg_antistokes_per_setting: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.excitation_prob;
        if !(p > 0.0 && p < MAX_EXCITATION_PROB) {
            return Err(Error::InvalidParameter(format!(
                "excitation_prob = {p} must lie in (0, {MAX_EXCITATION_PROB})"
            )));
        }
        if !(0.0..=1.0).contains(&self.retrieval_eff) {
            return Err(Error::InvalidParameter(format!(
                "retrieval_eff = {} must lie in [0, 1]",
                self.retrieval_eff
            )));
        }
        check_probability("bg_stokes", self.bg_stokes)?;
        check_probability("bg_antistokes", self.bg_antistokes)?;
        for (name, per) in [
            ("bg_stokes_per_setting", &self.bg_stokes_per_setting),
            ("bg_antistokes_per_setting", &self.bg_antistokes_per_setting),
        ] {
            if let Some(v) = per {
                if v.len() != SETTINGS {
                    return Err(Error::Dimension {
                        expected: SETTINGS,
                        got: v.len(),
                    });
                }
                for &b in v {
                    check_probability(name, b)?;
                }
            }
        }
        if !(self.rep_period_ns > 0.0 && self.rep_period_ns.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rep_period_ns = {} must be positive",
                self.rep_period_ns
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration_s = {} must be positive",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// Pulses per setting.
    pub fn trials(&self) -> f64 {
        self.duration_s / (self.rep_period_ns * 1e-9)
    }

    /// Expected correlated coincidences for a unit-probability projector,
    /// `eta * p * N_trials`.
    pub fn pair_normalization(&self) -> f64 {
        self.retrieval_eff * self.excitation_prob * self.trials()
    }

    fn backgrounds(&self, k: usize) -> (f64, f64) {
        let s = self
            .bg_stokes_per_setting
            .as_ref()
            .map_or(self.bg_stokes, |v| v[k]);
        let a = self
            .bg_antistokes_per_setting
            .as_ref()
            .map_or(self.bg_antistokes, |v| v[k]);
        (s, a)
    }
}

fn marginal_prob(rho: &Matrix3, op: &Matrix3) -> f64 {
    (op * rho).trace().re
}

/// Expected coincidence counts, in the order of `settings`.
pub fn expected_counts(model: &SourceModel, settings: &[ProjectorSetting]) -> Result<Vec<f64>> {
    model.validate()?;
    let n = model.trials();
    let p = model.excitation_prob;
    let eta = model.retrieval_eff;
    let rho_photon = *model.rho_true.partial_trace(Subsystem::Atom).matrix();
    let rho_atom = *model.rho_true.partial_trace(Subsystem::Photon).matrix();
    Ok(settings
        .iter()
        .map(|s| {
            let (bg_s, bg_as) = model.backgrounds(s.index.flat());
            let q_s = marginal_prob(&rho_photon, &s.photon);
            let q_a = marginal_prob(&rho_atom, &s.atom);
            let signal = eta * p * model.rho_true.expectation(&s.op);
            let accidental = (p * q_s + bg_s) * (eta * p * q_a + bg_as);
            (n * (signal + accidental)).max(0.0)
        })
        .collect())
}

/// One Poisson draw per setting; setting `k` uses sub-seed `k` of `seed`.
/// The table carries no normalization or background, so reconstruction
/// profiles the overall rate.
pub fn sample_counts(
    model: &SourceModel,
    settings: &[ProjectorSetting],
    seed: u64,
) -> Result<CoincidenceTable> {
    if settings.len() != SETTINGS {
        return Err(Error::Dimension {
            expected: SETTINGS,
            got: settings.len(),
        });
    }
    let means = expected_counts(model, settings)?;
    let mut counts = vec![0u64; SETTINGS];
    for (s, &mean) in settings.iter().zip(&means) {
        let k = s.index.flat();
        if mean > 0.0 {
            let mut rng = rng_from_seed(sub_seed(seed, k as u64));
            counts[k] = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64;
        }
    }
    CoincidenceTable::new(counts, model.duration_s)
}

fn check_rates(p: f64, eta: f64, bg_s: f64, bg_as: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must lie in (0, 1)"
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must lie in (0, 1]"
        )));
    }
    check_probability("bg_s", bg_s)?;
    check_probability("bg_as", bg_as)
}

/// Normalized Stokes/anti-Stokes cross-correlation,
/// `1 + eta p / ((p + bg_s)(eta p + bg_as))`.
pub fn g2_model(p: f64, eta: f64, bg_s: f64, bg_as: f64) -> Result<f64> {
    check_rates(p, eta, bg_s, bg_as)?;
    // Grouped so that eta cancels exactly without backgrounds.
    let retrieved = eta * p / (eta * p + bg_as);
    Ok(1.0 + retrieved / (p + bg_s))
}

/// How an inferred background is split between the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundSplit {
    /// Equal stray probability on both arms.
    Symmetric,
    /// Stray light on the Stokes arm only.
    StokesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Background {
    pub bg_stokes: f64,
    pub bg_antistokes: f64,
}

impl BackgroundSplit {
    fn apply(self, x: f64) -> G2Background {
        match self {
            BackgroundSplit::Symmetric => G2Background {
                bg_stokes: x,
                bg_antistokes: x,
            },
            BackgroundSplit::StokesOnly => G2Background {
                bg_stokes: x,
                bg_antistokes: 0.0,
            },
        }
    }
}

/// Background level reproducing `target`, found by bisection.
pub fn g2_invert(target: f64, p: f64, eta: f64, split: BackgroundSplit) -> Result<G2Background> {
    let g2_at = |x: f64| {
        let bg = split.apply(x);
        g2_model(p, eta, bg.bg_stokes, bg.bg_antistokes)
    };
    let high = g2_at(0.0)?;
    let x_max = 1.0 - f64::EPSILON;
    let low = g2_at(x_max)?;
    if !(target > low && target <= high) {
        return Err(Error::Unachievable { target, low, high });
    }
    if target == high {
        return Ok(split.apply(0.0));
    }
    let (mut lo, mut hi) = (0.0, x_max);
    while hi - lo > 1e-12 * hi.max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g2_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Finish to full precision; the last few halvings are cheap.
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g2_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = if (g2_at(lo)? - target).abs() <= (g2_at(hi)? - target).abs() {
        lo
    } else {
        hi
    };
    Ok(split.apply(x))
}

/// `c T / (s a)` from raw singles and coincidence counts over `trials` pulses.
pub fn g2_estimate(stokes: u64, antistokes: u64, coincidences: u64, trials: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    if stokes == 0 || antistokes == 0 {
        return Err(Error::InvalidParameter(
            "singles counts must be positive".into(),
        ));
    }
    Ok(coincidences as f64 * trials as f64 / (stokes as f64 * antistokes as f64))
}

/// Singles and coincidence totals of a pulsed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct G2Counts {
    pub stokes: u64,
    pub antistokes: u64,
    pub coincidences: u64,
    pub trials: u64,
}

fn binomial<R: rand::Rng>(rng: &mut R, n: u64, prob: f64) -> u64 {
    if n == 0 || prob <= 0.0 {
        0
    } else {
        Binomial::new(n, prob.min(1.0))
            .expect("valid binomial")
            .sample(rng)
    }
}

/// Pulse-by-pulse Bernoulli model aggregated exactly with binomial draws:
/// a pair is emitted with probability `p`, its anti-Stokes partner retrieved
/// with `eta`, and each arm clicks independently on stray light.
pub fn simulate_g2_counts(
    p: f64,
    eta: f64,
    bg_s: f64,
    bg_as: f64,
    trials: u64,
    seed: u64,
) -> Result<G2Counts> {
    check_rates(p, eta, bg_s, bg_as)?;
    let mut rng = rng_from_seed(seed);
    let pairs = binomial(&mut rng, trials, p);
    let retrieved = binomial(&mut rng, pairs, eta);
    let lost = pairs - retrieved;
    let empty = trials - pairs;

    // Lost pairs: Stokes clicks, anti-Stokes only on stray light.
    let lost_as = binomial(&mut rng, lost, bg_as);
    // Empty pulses: both arms on independent stray light.
    let both = binomial(&mut rng, empty, bg_s * bg_as);
    let s_only = binomial(
        &mut rng,
        empty - both,
        bg_s * (1.0 - bg_as) / (1.0 - bg_s * bg_as),
    );
    let a_only = binomial(
        &mut rng,
        empty - both - s_only,
        (1.0 - bg_s) * bg_as / (1.0 - bg_s * bg_as - bg_s * (1.0 - bg_as)),
    );

    Ok(G2Counts {
        stokes: pairs + both + s_only,
        antistokes: retrieved + lost_as + both + a_only,
        coincidences: retrieved + lost_as + both,
        trials,
    })
}

/// Mixed state resembling the reconstructed source: given zero-total-OAM
/// populations, equal-magnitude coherences tuned to a target MES fidelity
/// at the given phases, and the remaining weight spread evenly over the six
/// other basis states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedState {
    pub diagonals: [f64; 3],
    pub fidelity: f64,
    pub phases: MesParams,
}

impl PlantedState {
    /// Populations 0.25/0.37/0.26, fidelity 0.74, phases (0.019, -0.058).
    pub fn reference() -> Self {
        Self {
            diagonals: [0.25, 0.37, 0.26],
            fidelity: 0.74,
            phases: MesParams::new(0.019, -0.058),
        }
    }

    pub fn residual(&self) -> f64 {
        (1.0 - self.diagonals.iter().sum::<f64>()) / 6.0
    }

    /// Common factor `c` multiplying `sqrt(d_a d_b)` on the coherences.
    pub fn coherence(&self) -> f64 {
        let d = self.diagonals;
        let sum_d: f64 = d.iter().sum();
        let cross = (d[0] * d[1]).sqrt() + (d[0] * d[2]).sqrt() + (d[1] * d[2]).sqrt();
        (3.0 * self.fidelity - sum_d) / (2.0 * cross)
    }
}

pub fn planted_state(target: &PlantedState) -> Result<DensityMatrix9> {
    let d = target.diagonals;
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(
            "populations must be positive".into(),
        ));
    }
    let residual = target.residual();
    if residual < 0.0 {
        return Err(Error::InvalidParameter(
            "populations exceed unit trace".into(),
        ));
    }
    let c = target.coherence();
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!(
            "fidelity {} is not reachable with these populations",
            target.fidelity
        )));
    }
    let phase = [target.phases.alpha, 0.0, target.phases.beta]
        .map(|x| C64::from_polar(1.0, x * std::f64::consts::PI));
    let mut m = Matrix9::identity().scale(residual);
    for (a, &ka) in MAJOR.iter().enumerate() {
        for (b, &kb) in MAJOR.iter().enumerate() {
            m[(ka, kb)] = if a == b {
                C64::new(d[a], 0.0)
            } else {
                phase[a] * phase[b].conj() * (c * (d[a] * d[b]).sqrt())
            };
        }
    }
    DensityMatrix9::new(m)
}
