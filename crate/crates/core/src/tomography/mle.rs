//! Maximum-likelihood reconstruction over physical states.
//!
//! States are parameterized as `rho = T^dag T / Tr(T^dag T)` with `T` lower
//! triangular: 9 real diagonal entries plus 36 complex sub-diagonal entries,
//! i.e. 81 real parameters. Every parameter vector maps to a valid state, so
//! the optimizer never needs a projection step.

use nalgebra::{DMatrix, DVector};

use super::linear;
use super::{CoincidenceTable, Method, TomographyResult};
use crate::measurement::{measurement_matrix, ProjectorSetting, SETTINGS};
use crate::qutrit::{
    from_hermitian_coords, hermitian_coords, hermitian_part, DensityMatrix9, Matrix9,
};
use crate::{Error, Result, C64};

pub const NUM_PARAMS: usize = 81;

/// Floor on predicted rates inside the logarithm.
const RATE_FLOOR: f64 = 1e-12;

/// How expected counts relate to `Tr(Pi_k rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `lambda_k = N Tr(Pi_k rho) + b_k` with known `N`.
    Known(f64),
    /// `N` profiled out (maximized analytically); backgrounds must be zero.
    Profiled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Converged once the relative change of the objective drops below this.
    pub rel_tol: f64,
    /// Start from the PSD-projected linear inversion instead of `I/9`.
    pub warm_start: bool,
    /// Explicit starting state; takes precedence over `warm_start`.
    pub initial: Option<DensityMatrix9>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            rel_tol: 1e-10,
            warm_start: false,
            initial: None,
        }
    }
}

/// Poisson negative log-likelihood as a function of the 81 parameters,
/// measured from the saturated model (zero when every count is fit exactly).
#[derive(Debug, Clone)]
pub struct MleObjective {
    design: DMatrix<f64>,
    counts: Vec<f64>,
    background: Vec<f64>,
    norm: Normalization,
    total: f64,
}

/// Lower-triangular `T` from the parameter vector.
fn unpack(x: &[f64]) -> Matrix9 {
    let mut t = Matrix9::zeros();
    for a in 0..9 {
        t[(a, a)] = C64::new(x[a], 0.0);
    }
    let mut k = 9;
    for a in 1..9 {
        for b in 0..a {
            t[(a, b)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack(t: &Matrix9) -> Vec<f64> {
    let mut x = vec![0.0; NUM_PARAMS];
    for a in 0..9 {
        x[a] = t[(a, a)].re;
    }
    let mut k = 9;
    for a in 1..9 {
        for b in 0..a {
            x[k] = t[(a, b)].re;
            x[k + 1] = t[(a, b)].im;
            k += 2;
        }
    }
    x
}

/// `mu - n - n ln(mu / n)`, the Poisson deviance contribution of one
/// setting, evaluated without cancellation near `mu = n`.
fn excess(n: f64, mu: f64) -> f64 {
    if n <= 0.0 {
        return mu;
    }
    let d = (mu - n) / n;
    if d.abs() < 0.1 {
        // d - ln(1 + d) = sum_{j >= 2} (-d)^j / j
        let mut term = d * d;
        let mut sum = 0.0;
        for j in 2..40 {
            sum += term / j as f64;
            term *= -d;
        }
        n * sum
    } else {
        n * (d - d.ln_1p())
    }
}

impl MleObjective {
    /// Settings are put in canonical `(i, j)` order together with their
    /// counts, so the result does not depend on the order they are supplied in.
    pub fn new(
        counts: &[f64],
        background: &[f64],
        norm: Normalization,
        settings: &[ProjectorSetting],
    ) -> Result<Self> {
        let n = settings.len();
        if counts.len() != n || background.len() != n || n == 0 {
            return Err(Error::Dimension {
                expected: n,
                got: counts.len().min(background.len()),
            });
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Malformed(
                "counts must be finite and non-negative".into(),
            ));
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoCounts);
        }
        match norm {
            Normalization::Known(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "normalization {v} must be positive"
                )));
            }
            Normalization::Profiled if background.iter().any(|&b| b != 0.0) => {
                return Err(Error::InvalidParameter(
                    "a fixed background requires a known normalization (total_trials)".into(),
                ));
            }
            _ => {}
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&k| settings[k].index.flat());
        let sorted: Vec<ProjectorSetting> = order.iter().map(|&k| settings[k].clone()).collect();
        Ok(Self {
            design: measurement_matrix(&sorted),
            counts: order.iter().map(|&k| counts[k]).collect(),
            background: order.iter().map(|&k| background[k]).collect(),
            norm,
            total,
        })
    }

    pub fn rho_from_params(x: &[f64]) -> Matrix9 {
        let t = unpack(x);
        let a = t.adjoint() * t;
        let s = a.trace().re;
        hermitian_part(&a).unscale(s)
    }

    /// Parameters of a full-rank state (`T` from a reversed Cholesky factor).
    pub fn params_from_rho(rho: &DensityMatrix9) -> Result<Vec<f64>> {
        // rho = U U^dag with U upper triangular; T = U^dag is lower and T^dag T = rho.
        let rev = Matrix9::from_fn(|r, c| rho.matrix()[(8 - r, 8 - c)]);
        let chol = nalgebra::Cholesky::new(rev).ok_or_else(|| {
            Error::InvalidParameter("starting state is not positive definite".into())
        })?;
        let l = chol.l();
        let u = Matrix9::from_fn(|r, c| l[(8 - r, 8 - c)]);
        Ok(pack(&u.adjoint()))
    }

    fn probabilities(&self, rho: &Matrix9) -> DVector<f64> {
        let coords = DVector::from_column_slice(hermitian_coords(rho).as_slice());
        &self.design * coords
    }

    /// Objective value and the per-setting weights `d NLL / d p_k`.
    fn value_and_weights(&self, p: &DVector<f64>, want_weights: bool) -> (f64, Vec<f64>) {
        let mut w = if want_weights {
            vec![0.0; p.len()]
        } else {
            Vec::new()
        };
        let mut f = 0.0;
        match self.norm {
            Normalization::Known(n) => {
                for k in 0..p.len() {
                    let lambda = (n * p[k] + self.background[k]).max(RATE_FLOOR);
                    let c = self.counts[k];
                    f += excess(c, lambda);
                    if want_weights {
                        w[k] = n * (1.0 - c / lambda);
                    }
                }
            }
            Normalization::Profiled => {
                let sum_p: f64 = p.iter().sum::<f64>().max(RATE_FLOOR);
                let total = self.total;
                for k in 0..p.len() {
                    let pk = p[k].max(RATE_FLOOR);
                    let c = self.counts[k];
                    f += excess(c, total * pk / sum_p);
                    if want_weights {
                        w[k] = -c / pk + total / sum_p;
                    }
                }
            }
        }
        (f, w)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let rho = Self::rho_from_params(x);
        self.value_and_weights(&self.probabilities(&rho), false).0
    }

    /// Objective and its analytic gradient with respect to the 81 parameters.
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = unpack(x);
        let a = t.adjoint() * t;
        let s = a.trace().re;
        let rho = hermitian_part(&a).unscale(s);
        let p = self.probabilities(&rho);
        let (f, w) = self.value_and_weights(&p, true);

        // dNLL = Tr(G drho) with G = sum_k w_k Pi_k; through rho = A / Tr A
        // this becomes Tr(H dA), H = (G - Tr(G rho) I) / s, and with
        // dA = dT^dag T + T^dag dT, dNLL = 2 Re Tr(H T^dag dT).
        let g_coords = self.design.tr_mul(&DVector::from_vec(w));
        let g = from_hermitian_coords(g_coords.as_slice());
        let g_rho = (g * rho).trace().re;
        let h = (g - Matrix9::identity().scale(g_rho)).unscale(s);
        let k_mat = h * t.adjoint();

        let mut grad = vec![0.0; NUM_PARAMS];
        for a in 0..9 {
            grad[a] = 2.0 * k_mat[(a, a)].re;
        }
        let mut idx = 9;
        for a in 1..9 {
            for b in 0..a {
                grad[idx] = 2.0 * k_mat[(b, a)].re;
                grad[idx + 1] = -2.0 * k_mat[(b, a)].im;
                idx += 2;
            }
        }
        (f, grad)
    }
}

/// Closest state in the eigenvalue-clipping sense: negative eigenvalues set to
/// zero, then renormalized.
pub fn psd_projection(m: &Matrix9) -> Result<DensityMatrix9> {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut out = Matrix9::zeros();
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.adjoint()).scale(ev);
        }
    }
    DensityMatrix9::from_approximate(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn starting_point(
    objective: &MleObjective,
    opts: &MleOptions,
    settings: &[ProjectorSetting],
) -> Vec<f64> {
    let identity = || pack(&Matrix9::identity());
    let interior = |rho: DensityMatrix9| -> Option<Vec<f64>> {
        let mixed = DensityMatrix9::mixture(&[
            (1.0 - 1e-3, rho),
            (1e-3, DensityMatrix9::maximally_mixed()),
        ])
        .ok()?;
        MleObjective::params_from_rho(&mixed).ok()
    };
    if let Some(rho) = opts.initial {
        return interior(rho).unwrap_or_else(identity);
    }
    if opts.warm_start && settings.len() == SETTINGS {
        let est = linear::linear_from_frequencies(
            &objective.counts,
            &objective.background,
            objective.norm,
            &sorted(settings),
        );
        if let Some(x) = est
            .ok()
            .and_then(|e| psd_projection(&e.matrix).ok())
            .and_then(interior)
        {
            return x;
        }
    }
    identity()
}

fn sorted(settings: &[ProjectorSetting]) -> Vec<ProjectorSetting> {
    let mut s = settings.to_vec();
    s.sort_by_key(|p| p.index.flat());
    s
}

/// Quasi-Newton (BFGS) descent with Armijo backtracking.
fn minimize(
    objective: &MleObjective,
    mut x: Vec<f64>,
    opts: &MleOptions,
) -> (Vec<f64>, f64, usize, bool, Vec<f64>) {
    let n = x.len();
    let (mut f, mut g) = objective.value_and_gradient(&x);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut small_steps = 0;

    while iterations < opts.max_iter {
        let mut reset = false;
        let accepted = loop {
            let gv = DVector::from_column_slice(&g);
            let mut d: Vec<f64> = (-(&hinv * &gv)).iter().copied().collect();
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                hinv = DMatrix::identity(n, n);
                d = g.iter().map(|v| -v).collect();
                slope = -dot(&g, &g);
                reset = true;
            }
            if !scaled {
                // First step: keep the parameter change modest.
                let gmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if gmax > 0.1 {
                    let c = 0.1 / gmax;
                    d.iter_mut().for_each(|v| *v *= c);
                    slope *= c;
                }
            }
            let mut t = 1.0;
            let mut found = None;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let fnew = objective.value(&xn);
                if fnew.is_finite() && fnew <= f + 1e-4 * t * slope {
                    found = Some((xn, fnew));
                    break;
                }
                t *= 0.5;
            }
            match found {
                Some(step) => break Some(step),
                None if !reset => {
                    hinv = DMatrix::identity(n, n);
                    reset = true;
                }
                None => break None,
            }
        };

        let Some((xn, fnew)) = accepted else {
            // No decrease possible along the steepest-descent direction:
            // the objective is flat to working precision.
            let gnorm = dot(&g, &g).sqrt() * dot(&x, &x).sqrt();
            converged = gnorm <= 1e-6 * f.abs().max(1.0);
            break;
        };

        let (_, gn) = objective.value_and_gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() {
            if !scaled {
                hinv = DMatrix::identity(n, n).scale(sy / yy);
                scaled = true;
            }
            let sv = DVector::from_vec(s);
            let yv = DVector::from_vec(y);
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            let r = 1.0 / sy;
            hinv += (&sv * sv.transpose()).scale((1.0 + yhy * r) * r);
            hinv -= (&hy * sv.transpose() + &sv * hy.transpose()).scale(r);
        }

        let rel = (f - fnew).abs() / fnew.abs().max(f64::MIN_POSITIVE);
        x = xn;
        f = fnew;
        g = gn;
        trace.push(f);
        iterations += 1;
        if rel < opts.rel_tol {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    (x, f, iterations, converged, trace)
}

/// Reconstruction from (possibly non-integer) expected or observed counts.
pub fn mle_from_frequencies(
    counts: &[f64],
    background: &[f64],
    norm: Normalization,
    settings: &[ProjectorSetting],
    opts: &MleOptions,
) -> Result<TomographyResult> {
    let objective = MleObjective::new(counts, background, norm, settings)?;
    let x0 = starting_point(&objective, opts, settings);
    let (x, f, iterations, converged, nll_trace) = minimize(&objective, x0, opts);
    let rho_hat = DensityMatrix9::new_unchecked(MleObjective::rho_from_params(&x));
    Ok(TomographyResult {
        rho_hat,
        neg_log_likelihood: f,
        iterations,
        converged,
        method: Method::Mle,
        nll_trace,
    })
}

pub fn mle_reconstruct(
    table: &CoincidenceTable,
    settings: &[ProjectorSetting],
    opts: &MleOptions,
) -> Result<TomographyResult> {
    table.validate()?;
    if table.total() == 0 {
        return Err(Error::NoCounts);
    }
    mle_from_frequencies(
        &table.frequencies(),
        &table.background,
        table.normalization(),
        settings,
        opts,
    )
}
