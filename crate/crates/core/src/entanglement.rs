//! Fidelity to the maximally entangled family
//! `(e^{iαπ}|L>|r> + |G>|g> + e^{iβπ}|R>|l>)/√3`, the Schmidt-number-3
//! witness `W = 1 - (3/2)|MES><MES|`, and local-filtering analysis.
//!
//! `Tr(W rho) < 0` holds exactly when the optimal MES fidelity exceeds 2/3, in
//! which case no decomposition of `rho` into pure states of Schmidt rank
//! one or two exists.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::qutrit::{kron, DensityMatrix9, Ket9, Matrix3, GG, LR, MAJOR, RL};
use crate::{Error, Result, C64};

/// Fidelity threshold above which Schmidt number 3 is certified.
pub const SN3_THRESHOLD: f64 = 2.0 / 3.0;

/// Points per axis of the coarse `(α, β)` grid.
pub const GRID_POINTS: usize = 721;

/// Phases of the MES family, in units of π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Maps a phase (units of π) into `(-1, 1]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0);
    if y > 1.0 {
        y -= 2.0;
    }
    if y <= -1.0 {
        y += 2.0;
    }
    y
}

impl MesParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Same phases in the representative range `(-1, 1]`.
    pub fn wrapped(self) -> Self {
        Self::new(wrap_phase(self.alpha), wrap_phase(self.beta))
    }
}

pub fn mes_state(p: MesParams) -> Ket9 {
    let s = 1.0 / 3f64.sqrt();
    let mut amps = [C64::new(0.0, 0.0); 9];
    amps[LR] = C64::from_polar(s, p.alpha * PI);
    amps[GG] = C64::new(s, 0.0);
    amps[RL] = C64::from_polar(s, p.beta * PI);
    Ket9::new(amps).expect("unit-norm MES")
}

/// The six density-matrix entries the MES fidelity depends on.
#[derive(Debug, Clone, Copy)]
struct MesLandscape {
    diag: f64,
    lr_gg: C64,
    gg_rl: C64,
    lr_rl: C64,
}

impl MesLandscape {
    fn new(rho: &DensityMatrix9) -> Self {
        Self {
            diag: MAJOR.iter().map(|&k| rho.entry(k, k).re).sum(),
            lr_gg: rho.entry(LR, GG),
            gg_rl: rho.entry(GG, RL),
            lr_rl: rho.entry(LR, RL),
        }
    }

    fn value(&self, alpha: f64, beta: f64) -> f64 {
        let a = C64::from_polar(1.0, -alpha * PI) * self.lr_gg;
        let b = C64::from_polar(1.0, beta * PI) * self.gg_rl;
        let c = C64::from_polar(1.0, (beta - alpha) * PI) * self.lr_rl;
        (self.diag + 2.0 * (a.re + b.re + c.re)) / 3.0
    }

    /// Gradient and Hessian with respect to `(α, β)` in units of π.
    fn derivatives(&self, alpha: f64, beta: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let a = C64::from_polar(1.0, -alpha * PI) * self.lr_gg;
        let b = C64::from_polar(1.0, beta * PI) * self.gg_rl;
        let c = C64::from_polar(1.0, (beta - alpha) * PI) * self.lr_rl;
        let k = 2.0 * PI / 3.0;
        let k2 = k * PI;
        let grad = [k * (a.im + c.im), -k * (b.im + c.im)];
        let hess = [
            [-k2 * (a.re + c.re), k2 * c.re],
            [k2 * c.re, -k2 * (b.re + c.re)],
        ];
        (grad, hess)
    }
}

/// `<MES(p)|rho|MES(p)>` from the closed form in the six relevant entries.
pub fn mes_fidelity(rho: &DensityMatrix9, p: MesParams) -> f64 {
    MesLandscape::new(rho).value(p.alpha, p.beta)
}

/// Optimal member of the MES family for a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesOptimum {
    pub params: MesParams,
    pub fidelity: f64,
}

fn grid_coord(i: usize) -> f64 {
    -1.0 + 2.0 * (i + 1) as f64 / GRID_POINTS as f64
}

/// Global maximum of the MES fidelity over the phase torus: exhaustive
/// 721x721 grid on `(-1, 1]^2`, then Nelder-Mead and a Newton polish.
pub fn optimize_mes(rho: &DensityMatrix9) -> MesOptimum {
    let land = MesLandscape::new(rho);

    // Row-parallel grid; ties broken towards the lexicographically smaller (α, β).
    let better = |a: (f64, f64, f64), b: (f64, f64, f64)| -> (f64, f64, f64) {
        if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
            b
        } else {
            a
        }
    };
    let phases: Vec<C64> = (0..GRID_POINTS)
        .map(|i| C64::from_polar(1.0, grid_coord(i) * PI))
        .collect();
    let (_, alpha0, beta0) = (0..GRID_POINTS)
        .into_par_iter()
        .map(|i| {
            let alpha = grid_coord(i);
            let ea = phases[i].conj();
            let a = (ea * land.lr_gg).re;
            let z = ea * land.lr_rl;
            phases
                .iter()
                .enumerate()
                .map(|(j, eb)| {
                    let v = (land.diag + 2.0 * (a + (eb * land.gg_rl).re + (eb * z).re)) / 3.0;
                    (v, alpha, grid_coord(j))
                })
                .fold((f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY), better)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY), better);

    let step = 2.0 / GRID_POINTS as f64;
    let (mut x, mut f) = nelder_mead(|p| land.value(p[0], p[1]), [alpha0, beta0], step);

    for _ in 0..8 {
        let (g, h) = land.derivatives(x[0], x[1]);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let curv = 1e-12;
        let dx = if h[0][0] < -curv && det > curv * curv {
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ]
        } else {
            // Degenerate direction (e.g. a vanishing coherence): polish the
            // curved coordinates separately.
            [0, 1].map(|k| {
                if h[k][k] < -curv {
                    -g[k] / h[k][k]
                } else {
                    0.0
                }
            })
        };
        let cand = [x[0] + dx[0], x[1] + dx[1]];
        let fc = land.value(cand[0], cand[1]);
        if fc >= f {
            x = cand;
            f = fc;
        } else {
            break;
        }
        if dx[0].abs().max(dx[1].abs()) < 1e-15 {
            break;
        }
    }

    MesOptimum {
        params: MesParams::new(x[0], x[1]).wrapped(),
        fidelity: f,
    }
}

/// Maximizes `f` over the plane with a Nelder-Mead simplex.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], size: f64) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + size, start[1]],
        [start[0], start[1] + size],
    ];
    let mut vals = simplex.map(&f);
    for _ in 0..20_000 {
        // Sort descending by value (best first).
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        simplex = order.map(|k| simplex[k]);
        vals = order.map(|k| vals[k]);

        let spread = vals[0] - vals[2];
        let diameter = (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| {
                (simplex[a][0] - simplex[b][0])
                    .abs()
                    .max((simplex[a][1] - simplex[b][1]).abs())
            })
            .fold(0.0, f64::max);
        if spread < 1e-12 && diameter < 1e-10 {
            break;
        }

        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };

        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr > vals[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe > fr {
                simplex[2] = expanded;
                vals[2] = fe;
            } else {
                simplex[2] = reflected;
                vals[2] = fr;
            }
            continue;
        }
        if fr > vals[1] {
            simplex[2] = reflected;
            vals[2] = fr;
            continue;
        }
        let contracted = if fr > vals[2] {
            along(-0.5)
        } else {
            along(0.5)
        };
        let fc = f(contracted);
        if fc > vals[2].max(fr) {
            simplex[2] = contracted;
            vals[2] = fc;
            continue;
        }
        for k in 1..3 {
            simplex[k] = [
                simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
            ];
            vals[k] = f(simplex[k]);
        }
    }
    let best = (0..3)
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    (simplex[best], vals[best])
}

/// Two-sided interval on the fidelity, e.g. Monte-Carlo percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessReport {
    pub mes: MesParams,
    pub fidelity: f64,
    /// `Tr(W rho) = 1 - 1.5 F`
    pub witness_value: f64,
    pub certified_sn3: bool,
    pub fidelity_ci: Option<ConfidenceInterval>,
}

/// Flat JSON layout of a [`WitnessReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReportJson {
    pub alpha: f64,
    pub beta: f64,
    pub fidelity: f64,
    pub witness: f64,
    pub certified: bool,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl From<&WitnessReport> for WitnessReportJson {
    fn from(r: &WitnessReport) -> Self {
        Self {
            alpha: r.mes.alpha,
            beta: r.mes.beta,
            fidelity: r.fidelity,
            witness: r.witness_value,
            certified: r.certified_sn3,
            ci_low: r.fidelity_ci.map(|c| c.low),
            ci_high: r.fidelity_ci.map(|c| c.high),
        }
    }
}

/// Value of the witness for a given MES fidelity.
pub fn witness_value(fidelity: f64) -> f64 {
    1.0 - 1.5 * fidelity
}

/// Evaluates the optimal witness. With an interval, certification requires
/// its lower end to exceed 2/3 strictly.
pub fn witness_report(rho: &DensityMatrix9, ci: Option<ConfidenceInterval>) -> WitnessReport {
    let opt = optimize_mes(rho);
    let decisive = ci.map_or(opt.fidelity, |c| c.low);
    WitnessReport {
        mes: opt.params,
        fidelity: opt.fidelity,
        witness_value: witness_value(opt.fidelity),
        certified_sn3: decisive > SN3_THRESHOLD,
        fidelity_ci: ci,
    }
}

/// `1 - (ρ_Lr,Lr + ρ_Gg,Gg + ρ_Rl,Rl)`: population outside zero total OAM.
pub fn residual_weight(rho: &DensityMatrix9) -> f64 {
    1.0 - rho.major_diagonals().iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutcome {
    pub rho: DensityMatrix9,
    /// Photon-side amplitudes `(a_L, a_G, a_R)` with `a_G = 1`.
    pub filter: [f64; 3],
    pub optimum: MesOptimum,
}

/// Applies the photon-side filter `diag(a_L, a_G, a_R) (x) I` that equalizes
/// the three zero-total-OAM populations, and re-optimizes the MES fidelity.
pub fn local_filter_balance(rho: &DensityMatrix9) -> Result<FilterOutcome> {
    let d = rho.major_diagonals();
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "filter undefined: major diagonals {d:?} must be positive"
        )));
    }
    let filter = [(d[1] / d[0]).sqrt(), 1.0, (d[1] / d[2]).sqrt()];
    let a = Matrix3::from_diagonal(&nalgebra::Vector3::from(filter.map(|x| C64::new(x, 0.0))));
    let op = kron(&a, &Matrix3::identity());
    let m = op * rho.matrix() * op.adjoint();
    let filtered = DensityMatrix9::from_approximate(m)?;
    Ok(FilterOutcome {
        rho: filtered,
        filter,
        optimum: optimize_mes(&filtered),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qutrit::DEFAULT_SCHMIDT_TOL;
    use crate::random;

    fn mes_rho(alpha: f64, beta: f64) -> DensityMatrix9 {
        DensityMatrix9::from_pure(&mes_state(MesParams::new(alpha, beta)))
    }

    #[test]
    fn mes_state_examples() {
        let k = mes_state(MesParams::new(0.0, 0.0));
        let s = 1.0 / 3f64.sqrt();
        for idx in MAJOR {
            assert!((k.amplitudes()[idx] - C64::new(s, 0.0)).norm() < 1e-15);
        }
        let k = mes_state(MesParams::new(1.0, 0.0));
        assert!((k.amplitudes()[LR] - C64::new(-s, 0.0)).norm() < 1e-15);
        let mut rng = random::rng_from_seed(1);
        for _ in 0..50 {
            use rand::Rng;
            let p = MesParams::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            assert_eq!(mes_state(p).schmidt_rank(DEFAULT_SCHMIDT_TOL), 3);
        }
    }

    #[test]
    fn mes_fidelity_examples() {
        let p0 = MesParams::new(0.0, 0.0);
        assert!((mes_fidelity(&mes_rho(0.0, 0.0), p0) - 1.0).abs() < 1e-12);
        assert!(
            (mes_fidelity(
                &DensityMatrix9::maximally_mixed(),
                MesParams::new(0.3, -0.7)
            ) - 1.0 / 9.0)
                .abs()
                < 1e-12
        );
        let rho = mes_rho(0.5, 0.0);
        let closed = mes_fidelity(&rho, p0);
        let numeric = rho.fidelity_pure(&mes_state(p0));
        assert!((closed - 5.0 / 9.0).abs() < 1e-12);
        assert!((numeric - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_direct_overlap() {
        use rand::Rng;
        let mut rng = random::rng_from_seed(2024);
        for t in 0..1000 {
            let rho = random::density9(&mut rng, 1 + t % 9);
            let p = MesParams::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let a = mes_fidelity(&rho, p);
            let b = rho.fidelity_pure(&mes_state(p));
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn optimize_recovers_planted_phases() {
        let opt = optimize_mes(&mes_rho(0.019, -0.058));
        assert!((opt.params.alpha - 0.019).abs() < 1e-6);
        assert!((opt.params.beta + 0.058).abs() < 1e-6);
        assert!((opt.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_landscape() {
        let opt = optimize_mes(&DensityMatrix9::maximally_mixed());
        assert!((opt.fidelity - 1.0 / 9.0).abs() < 1e-15);
        assert!(opt.params.alpha > -1.0 && opt.params.alpha <= 1.0);
    }

    #[test]
    fn single_coherence_optimum_matches_dense_grid() {
        // rho = diag part + c |Lr><Gg| + h.c., with c = 0.2 e^{0.7 i}.
        let mut m = *DensityMatrix9::maximally_mixed().matrix();
        let coh = C64::from_polar(0.08, 0.7);
        m[(LR, GG)] = coh;
        m[(GG, LR)] = coh.conj();
        let rho = DensityMatrix9::new(m).unwrap();
        let opt = optimize_mes(&rho);

        // Oracle: brute force over α at 1e-4 resolution (β is irrelevant here).
        let (mut best_a, mut best_f) = (0.0, f64::NEG_INFINITY);
        let mut a = -1.0;
        while a <= 1.0 {
            let f = rho.fidelity_pure(&mes_state(MesParams::new(a, 0.0)));
            if f > best_f {
                best_f = f;
                best_a = a;
            }
            a += 1e-4;
        }
        assert!((opt.params.alpha - best_a).abs() < 1e-4);
        assert!(
            (opt.params.alpha - 0.7 / PI).abs() < 1e-9,
            "alpha {}",
            opt.params.alpha
        );
        assert!(opt.fidelity >= best_f - 1e-12);
    }

    #[test]
    fn optimum_dominates_random_probes() {
        use rand::Rng;
        let mut rng = random::rng_from_seed(5);
        for _ in 0..5 {
            let rho = random::density9(&mut rng, 2);
            let opt = optimize_mes(&rho);
            for _ in 0..2000 {
                let p = MesParams::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                assert!(mes_fidelity(&rho, p) <= opt.fidelity + 1e-14);
            }
        }
    }

    #[test]
    fn local_phase_shifts_alpha() {
        let mut rng = random::rng_from_seed(8);
        let rho = DensityMatrix9::mixture(&[
            (0.8, mes_rho(0.2, -0.4)),
            (0.2, random::density9(&mut rng, 9)),
        ])
        .unwrap();
        let base = optimize_mes(&rho);
        let theta = 0.37;
        let u = Matrix3::from_diagonal(&nalgebra::Vector3::new(
            C64::from_polar(1.0, theta),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
        ));
        let shifted = optimize_mes(&rho.local_unitary(&u, &Matrix3::identity()));
        // diag(e^{iθ},1,1) on the photon multiplies rho_{Lr,*} by e^{iθ}: α moves by +θ/π.
        let delta = wrap_phase(shifted.params.alpha - base.params.alpha);
        assert!((delta - theta / PI).abs() < 1e-8, "delta {delta}");
        assert!((shifted.fidelity - base.fidelity).abs() < 1e-10);
    }

    #[test]
    fn witness_examples() {
        let r = witness_report(&mes_rho(0.0, 0.0), None);
        assert!((r.witness_value + 0.5).abs() < 1e-12);
        assert!(r.certified_sn3);

        let r = witness_report(&DensityMatrix9::maximally_mixed(), None);
        assert!((r.witness_value - 5.0 / 6.0).abs() < 1e-12);
        assert!(!r.certified_sn3);

        assert!((witness_value(0.74) + 0.11).abs() < 1e-12);

        let r = witness_report(
            &mes_rho(0.0, 0.0),
            Some(ConfidenceInterval {
                low: 0.6,
                high: 0.9,
            }),
        );
        assert!(!r.certified_sn3);
    }

    #[test]
    fn residual_weight_examples() {
        assert!(residual_weight(&mes_rho(0.0, 0.0)).abs() < 1e-12);
        assert!((residual_weight(&DensityMatrix9::maximally_mixed()) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn filter_examples() {
        let out = local_filter_balance(&mes_rho(0.0, 0.0)).unwrap();
        for a in out.filter {
            assert!((a - 1.0).abs() < 1e-12);
        }
        assert!((out.optimum.fidelity - 1.0).abs() < 1e-12);

        let mut amps = [C64::new(0.0, 0.0); 9];
        amps[LR] = C64::new(0.25f64.sqrt(), 0.0);
        amps[GG] = C64::new(0.37f64.sqrt(), 0.0);
        amps[RL] = C64::new(0.26f64.sqrt(), 0.0);
        let rho = DensityMatrix9::from_pure(&Ket9::new(amps).unwrap());
        let out = local_filter_balance(&rho).unwrap();
        let d = out.rho.major_diagonals();
        assert!((d[0] - d[1]).abs() < 1e-10 && (d[1] - d[2]).abs() < 1e-10);
        assert!((out.optimum.fidelity - 1.0).abs() < 1e-10);

        // Idempotent on an already balanced state.
        let again = local_filter_balance(&out.rho).unwrap();
        assert!(again.rho.trace_distance(&out.rho) < 1e-10);

        let product = DensityMatrix9::from_pure(&Ket9::basis(0, 0));
        assert!(local_filter_balance(&product).is_err());
    }
}
