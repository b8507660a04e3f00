use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qutrit_oam::entanglement::{
    optimize_mes, witness_report, ConfidenceInterval, WitnessReportJson, SN3_THRESHOLD,
};
use qutrit_oam::measurement::{projector_set, SettingIndex};
use qutrit_oam::optics::{
    apply_mask, peak_normalized, step_scan, vortex_scan, write_field_snapshot, write_scan_csv,
    GratingModel, QuadratureGrid, ScanPoint,
};
use qutrit_oam::qutrit::{DensityMatrix9, MatrixJson};
use qutrit_oam::sim::{
    g2_estimate, g2_invert, g2_model, planted_state, sample_counts, simulate_g2_counts,
    G2Background, G2Counts, SourceModel,
};
use qutrit_oam::tomography::{
    linear_inversion, mle_reconstruct, monte_carlo_errors, CoincidenceTable, McSummaryJson, Method,
    MleOptions, TableMetadata, TomographyResultJson,
};

use crate::config::{
    load, require_file, require_parent, resolve, AnalyzeConfig, FieldConfig, G2Config,
    ReconstructConfig, ReproConfig, ScanMask, SimulateConfig, SlmScanConfig,
};
use crate::error::{CliError, CliResult};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_samples: Option<usize>,
    pub mc_samples: Option<usize>,
}

const FIDELITY: &str = "mes_fidelity";

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn seed_or(config: Option<u64>, ov: &Overrides) -> CliResult<u64> {
    ov.seed
        .or(config)
        .ok_or_else(|| CliError::usage("no seed: set `seed` in the config or pass --seed"))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::output(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}

pub fn sidecar_path(counts: &Path) -> PathBuf {
    counts.with_extension("json")
}

fn write_table(table: &CoincidenceTable, path: &Path) -> CliResult<PathBuf> {
    table
        .write_csv(create(path)?)
        .map_err(|e| CliError::output(path, e))?;
    let meta = sidecar_path(path);
    write_json(&meta, &table.metadata())?;
    Ok(meta)
}

/// Reads a counts CSV, with its sidecar if one is given or sits next to it.
pub fn read_table(counts: &Path, metadata: Option<&Path>) -> CliResult<CoincidenceTable> {
    let meta = match metadata {
        Some(p) => read_json::<TableMetadata>(p)?,
        None => {
            let side = sidecar_path(counts);
            if side.is_file() {
                read_json(&side)?
            } else {
                TableMetadata {
                    duration_s: 0.0,
                    total_trials: None,
                    background_per_setting: Default::default(),
                }
            }
        }
    };
    let file = File::open(counts).map_err(|e| CliError::input(counts, e))?;
    CoincidenceTable::read_csv(file, &meta).map_err(|e| CliError::input(counts, e))
}

fn peak(table: &CoincidenceTable) -> (SettingIndex, u64) {
    let (k, &c) = table
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(k, c)| (*c, std::cmp::Reverse(k)))
        .expect("81 settings");
    (SettingIndex::from_flat(k).expect("flat index in range"), c)
}

fn simulate_table(model: &SourceModel, seed: u64, output: &Path) -> CliResult<CoincidenceTable> {
    let table = sample_counts(model, &projector_set(), seed)?;
    write_table(&table, output)?;
    let (idx, c) = peak(&table);
    println!(
        "simulated {} coincidences over 81 settings (seed {seed}); peak {c} at setting ({}, {})",
        table.total(),
        idx.photon(),
        idx.atom()
    );
    Ok(table)
}

pub fn simulate(config: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg: SimulateConfig = load(config)?;
    let base = base_dir(config);
    let output = resolve(&base, &cfg.output);
    require_parent(&output)?;
    let seed = seed_or(cfg.seed, ov)?;
    let model = cfg.model.build(&base)?;
    simulate_table(&model, seed, &output)?;
    Ok(())
}

struct Reconstruction {
    json: TomographyResultJson,
    state: Option<DensityMatrix9>,
}

fn reconstruct_table(
    table: &CoincidenceTable,
    method: Method,
    opts: &MleOptions,
    mc: Option<(usize, u64)>,
) -> CliResult<Reconstruction> {
    let set = projector_set();
    match method {
        Method::Linear => {
            let est = linear_inversion(table, &set)?;
            let json = TomographyResultJson {
                matrix: MatrixJson::from_matrix(&est.matrix),
                method: Method::Linear,
                neg_log_likelihood: None,
                iterations: None,
                converged: None,
                min_eigenvalue: Some(est.min_eigenvalue),
                monte_carlo: None,
            };
            Ok(Reconstruction {
                json,
                state: est.state().ok(),
            })
        }
        Method::Mle => {
            let fit = mle_reconstruct(table, &set, opts)?;
            let mut json = TomographyResultJson::from(&fit);
            json.min_eigenvalue = fit.rho_hat.eigenvalues().into_iter().reduce(f64::min);
            if let Some((n, seed)) = mc {
                let summary =
                    monte_carlo_errors(table, &set, n, |r| optimize_mes(r).fidelity, seed, opts)?;
                json.monte_carlo = Some(summary.to_json(FIDELITY));
            }
            Ok(Reconstruction {
                json,
                state: Some(fit.rho_hat),
            })
        }
    }
}

fn report_reconstruction(r: &Reconstruction, output: &Path) -> CliResult<()> {
    write_json(output, &r.json)?;
    match (r.json.method, r.json.converged) {
        (Method::Mle, Some(converged)) => println!(
            "mle: {} after {} iterations, NLL {:.6e}",
            if converged {
                "converged"
            } else {
                "NOT converged"
            },
            r.json.iterations.unwrap_or(0),
            r.json.neg_log_likelihood.unwrap_or(f64::NAN)
        ),
        _ => println!(
            "linear inversion: min eigenvalue {:.3e}{}",
            r.json.min_eigenvalue.unwrap_or(f64::NAN),
            if r.state.is_some() {
                ""
            } else {
                " (not a physical state)"
            }
        ),
    }
    if let Some(mc) = &r.json.monte_carlo {
        println!(
            "monte carlo: F = {:.4} +- {:.4}, 95% CI [{:.4}, {:.4}] ({} of {} samples used)",
            mc.mean, mc.std, mc.ci_low, mc.ci_high, mc.n_used, mc.n_samples
        );
    }
    if r.json.converged == Some(false) {
        return Err(CliError::runtime(
            "maximum-likelihood fit did not converge; result written anyway",
        ));
    }
    Ok(())
}

pub fn reconstruct(config: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg: ReconstructConfig = load(config)?;
    let base = base_dir(config);
    let counts = resolve(&base, &cfg.counts);
    let metadata = cfg.metadata.as_ref().map(|p| resolve(&base, p));
    let output = resolve(&base, &cfg.output);
    require_file(&counts)?;
    if let Some(m) = &metadata {
        require_file(m)?;
    }
    require_parent(&output)?;
    let mc_samples = ov.mc_samples.unwrap_or(cfg.mc_samples);
    let mc = match mc_samples {
        0 => None,
        n => Some((n, seed_or(cfg.seed, ov)?)),
    };
    if cfg.method == Method::Linear && mc.is_some() {
        return Err(CliError::usage(
            "Monte-Carlo errors require method = \"mle\"",
        ));
    }
    let table = read_table(&counts, metadata.as_deref())?;
    let opts = MleOptions {
        max_iter: cfg.max_iter,
        rel_tol: cfg.rel_tol,
        warm_start: cfg.warm_start,
        ..MleOptions::default()
    };
    let r = reconstruct_table(&table, cfg.method, &opts, mc)?;
    report_reconstruction(&r, &output)
}

/// A reconstruction file: the matrix schema, optionally with a Monte-Carlo block.
#[derive(Deserialize)]
struct RhoFile {
    #[serde(flatten)]
    matrix: MatrixJson,
    #[serde(default)]
    monte_carlo: Option<McSummaryJson>,
}

fn fidelity_ci(mc: Option<&McSummaryJson>) -> Option<ConfidenceInterval> {
    mc.filter(|m| m.quantity == FIDELITY)
        .map(|m| ConfidenceInterval {
            low: m.ci_low,
            high: m.ci_high,
        })
}

fn analyze_state(
    rho: &DensityMatrix9,
    ci: Option<ConfidenceInterval>,
    output: &Path,
) -> CliResult<WitnessReportJson> {
    let report = witness_report(rho, ci);
    let json = WitnessReportJson::from(&report);
    write_json(output, &json)?;
    let ci_text = ci.map_or(String::new(), |c| {
        format!(", 95% CI [{:.4}, {:.4}]", c.low, c.high)
    });
    println!(
        "MES(alpha = {:.4} pi, beta = {:.4} pi): F = {:.4}{ci_text}, Tr(W rho) = {:.4}; Schmidt number >= 3 {}",
        json.alpha,
        json.beta,
        json.fidelity,
        json.witness,
        if json.certified { "CERTIFIED" } else { "not certified" }
    );
    Ok(json)
}

pub fn analyze(config: &Path, _ov: &Overrides) -> CliResult<()> {
    let cfg: AnalyzeConfig = load(config)?;
    let base = base_dir(config);
    let input = resolve(&base, &cfg.rho);
    let output = resolve(&base, &cfg.output);
    require_file(&input)?;
    require_parent(&output)?;
    let file: RhoFile = read_json(&input)?;
    let rho = file
        .matrix
        .to_matrix()
        .and_then(DensityMatrix9::new)
        .map_err(|e| CliError::input(&input, e))?;
    analyze_state(&rho, fidelity_ci(file.monte_carlo.as_ref()), &output)?;
    Ok(())
}

fn scan(
    cfg: &SlmScanConfig,
    positions: &[f64],
    grid: &QuadratureGrid,
) -> CliResult<Vec<ScanPoint>> {
    Ok(match cfg.mask {
        ScanMask::Vortex => vortex_scan(cfg.w0, cfg.path, positions, grid)?,
        ScanMask::Step => step_scan(cfg.w0, positions, grid)?,
    })
}

pub fn slm_scan(config: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg: SlmScanConfig = load(config)?;
    let output = resolve(&base_dir(config), &cfg.output);
    require_parent(&output)?;
    if !(cfg.w0 > 0.0 && cfg.w0.is_finite()) {
        return Err(CliError::usage(format!("w0 = {} must be positive", cfg.w0)));
    }
    if cfg.points < 2 || !(cfg.s_min < cfg.s_max) {
        return Err(CliError::usage("need points >= 2 and s_min < s_max"));
    }
    let grating = cfg.grating_efficiency.map(GratingModel::new).transpose()?;
    let mut grid = cfg.grid;
    if let Some(n) = ov.grid_samples {
        grid.samples_per_axis = n;
    }
    if grid.half_extent < qutrit_oam::optics::MIN_HALF_EXTENT {
        return Err(CliError::runtime(format!(
            "grid not converged: half extent {} w0 is below {} w0",
            grid.half_extent,
            qutrit_oam::optics::MIN_HALF_EXTENT
        )));
    }
    grid.validate()?;

    let step = (cfg.s_max - cfg.s_min) / (cfg.points - 1) as f64;
    let positions: Vec<f64> = (0..cfg.points)
        .map(|k| (cfg.s_min + k as f64 * step) * cfg.w0)
        .collect();
    let mut curve = scan(&cfg, &positions, &grid)?;
    if cfg.check_convergence {
        let fine = scan(&cfg, &positions, &grid.refined())?;
        let (worst, at) = curve
            .iter()
            .zip(&fine)
            .map(|(a, b)| ((a.gaussian_component - b.gaussian_component).abs(), a.s))
            .fold((0.0, f64::NAN), |m, v| if v.0 > m.0 { v } else { m });
        let report = format!(
            "grid {} samples vs {}: max change {worst:.2e} at s = {at:.4} (tolerance {:.0e})",
            grid.samples_per_axis,
            grid.refined().samples_per_axis,
            cfg.tolerance
        );
        if !(worst <= cfg.tolerance) {
            return Err(CliError::runtime(format!("grid not converged: {report}")));
        }
        println!("{report}");
    }
    if cfg.normalize {
        curve = peak_normalized(&curve)?;
    }
    if let Some(g) = grating {
        for p in &mut curve {
            p.gaussian_component = g.scale(p.gaussian_component.clamp(0.0, 1.0))?;
        }
    }
    write_scan_csv(&curve, create(&output)?).map_err(|e| CliError::output(&output, e))?;
    println!("wrote {} points to {}", curve.len(), output.display());
    Ok(())
}

pub fn field(config: &Path, _ov: &Overrides) -> CliResult<()> {
    let cfg: FieldConfig = load(config)?;
    let output = resolve(&base_dir(config), &cfg.output);
    require_parent(&output)?;
    cfg.mode.validate()?;
    let writer = create(&output)?;
    let result = match cfg.mask {
        None => write_field_snapshot(&cfg.mode, cfg.half_width, cfg.samples, writer),
        Some(mask) => {
            mask.validate()?;
            let masked = apply_mask(cfg.mode, mask);
            match cfg.pixel_pitch {
                Some(pitch) => write_field_snapshot(
                    &masked.quantized(pitch)?,
                    cfg.half_width,
                    cfg.samples,
                    writer,
                ),
                None => write_field_snapshot(&masked, cfg.half_width, cfg.samples, writer),
            }
        }
    };
    result?;
    println!(
        "wrote {0}x{0} field samples to {1}",
        cfg.samples,
        output.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G2Report {
    pub excitation_prob: f64,
    pub retrieval_eff: f64,
    pub bg_stokes: f64,
    pub bg_antistokes: f64,
    pub g2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated: Option<G2Counts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2_estimate: Option<f64>,
}

fn g2_run(cfg: &G2Config, seed: Option<u64>) -> CliResult<G2Report> {
    let (p, eta) = (cfg.excitation_prob, cfg.retrieval_eff);
    let bg = match cfg.target {
        Some(target) => {
            if cfg.bg_stokes.is_some() || cfg.bg_antistokes.is_some() {
                return Err(CliError::usage(
                    "give either `target` or the background levels, not both",
                ));
            }
            g2_invert(target, p, eta, cfg.split)?
        }
        None => G2Background {
            bg_stokes: cfg.bg_stokes.unwrap_or(0.0),
            bg_antistokes: cfg.bg_antistokes.unwrap_or(0.0),
        },
    };
    let g2 = g2_model(p, eta, bg.bg_stokes, bg.bg_antistokes)?;
    let mut report = G2Report {
        excitation_prob: p,
        retrieval_eff: eta,
        bg_stokes: bg.bg_stokes,
        bg_antistokes: bg.bg_antistokes,
        g2,
        target: cfg.target,
        simulated: None,
        g2_estimate: None,
    };
    if let Some(trials) = cfg.trials {
        let seed = seed.ok_or_else(|| {
            CliError::usage("simulated trials need a seed (config `seed` or --seed)")
        })?;
        let counts = simulate_g2_counts(p, eta, bg.bg_stokes, bg.bg_antistokes, trials, seed)?;
        report.g2_estimate = Some(g2_estimate(
            counts.stokes,
            counts.antistokes,
            counts.coincidences,
            counts.trials,
        )?);
        report.simulated = Some(counts);
    }
    Ok(report)
}

pub fn g2(config: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg: G2Config = load(config)?;
    let output = cfg.output.as_ref().map(|p| resolve(&base_dir(config), p));
    if let Some(o) = &output {
        require_parent(o)?;
    }
    let report = g2_run(&cfg, ov.seed.or(cfg.seed))?;
    match report.target {
        Some(t) => println!(
            "target g2 {t}: bg_stokes {:.6e}, bg_antistokes {:.6e} per pulse; round trip g2 = {:.6}",
            report.bg_stokes, report.bg_antistokes, report.g2
        ),
        None => println!("g2 = {:.6}", report.g2),
    }
    if let (Some(est), Some(c)) = (report.g2_estimate, report.simulated) {
        println!(
            "simulated {} pulses: {} Stokes, {} anti-Stokes, {} coincidences; g2 estimate {est:.4}",
            c.trials, c.stokes, c.antistokes, c.coincidences
        );
    }
    if let Some(o) = &output {
        write_json(o, &report)?;
    }
    Ok(())
}

/// Reference values the reproduction run is compared against.
const REFERENCE_FIDELITY: f64 = 0.74;
const REFERENCE_FIDELITY_ERR: f64 = 0.02;
const REFERENCE_DIAGONALS: [f64; 3] = [0.25, 0.37, 0.26];

#[derive(Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub simulated: f64,
    pub reference: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReproSummary {
    pub seed: u64,
    pub planted_fidelity: f64,
    pub total_counts: u64,
    pub peak_count: u64,
    pub converged: bool,
    pub fidelity: f64,
    pub fidelity_ci: Option<[f64; 2]>,
    pub witness: f64,
    pub certified: bool,
    pub diagonals: [f64; 3],
    pub g2_background: G2Report,
    pub comparisons: Vec<Comparison>,
}

pub fn repro(config: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg: ReproConfig = load(config)?;
    let dir = resolve(&base_dir(config), &cfg.output_dir);
    let seed = seed_or(cfg.seed, ov)?;
    let mc_samples = ov.mc_samples.unwrap_or(cfg.mc_samples);
    let planted = planted_state(&cfg.planted)?;
    let g2_cfg = G2Config {
        excitation_prob: qutrit_oam::sim::REFERENCE_EXCITATION_PROB,
        retrieval_eff: qutrit_oam::sim::CALIBRATED_RETRIEVAL_EFF,
        bg_stokes: None,
        bg_antistokes: None,
        target: Some(cfg.g2_target),
        split: cfg.split,
        trials: None,
        seed: None,
        output: None,
    };
    let g2_report = g2_run(&g2_cfg, None)?;
    fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;

    let planted_fidelity = optimize_mes(&planted).fidelity;
    let model = SourceModel::reference(planted);
    let table = simulate_table(&model, seed, &dir.join("counts.csv"))?;
    let opts = MleOptions {
        warm_start: true,
        ..MleOptions::default()
    };
    let mc = (mc_samples > 0).then_some((mc_samples, qutrit_oam::random::sub_seed(seed, 1)));
    let rec = reconstruct_table(&table, Method::Mle, &opts, mc)?;
    report_reconstruction(&rec, &dir.join("rho.json"))?;
    let rho = rec.state.expect("maximum likelihood yields a state");
    let ci = fidelity_ci(rec.json.monte_carlo.as_ref());
    let report = analyze_state(&rho, ci, &dir.join("report.json"))?;

    let diagonals = rho.major_diagonals();
    let mut comparisons = vec![Comparison {
        quantity: "mes_fidelity".into(),
        simulated: report.fidelity,
        reference: REFERENCE_FIDELITY,
    }];
    if let Some(c) = ci {
        comparisons.push(Comparison {
            quantity: "mes_fidelity_ci_half_width".into(),
            simulated: 0.5 * (c.high - c.low),
            reference: REFERENCE_FIDELITY_ERR,
        });
    }
    comparisons.push(Comparison {
        quantity: "witness".into(),
        simulated: report.witness,
        reference: 1.0 - 1.5 * REFERENCE_FIDELITY,
    });
    for (name, (sim, reference)) in ["rho_Lr_Lr", "rho_Gg_Gg", "rho_Rl_Rl"]
        .iter()
        .zip(diagonals.iter().zip(REFERENCE_DIAGONALS))
    {
        comparisons.push(Comparison {
            quantity: (*name).into(),
            simulated: *sim,
            reference,
        });
    }
    comparisons.push(Comparison {
        quantity: "g2_round_trip".into(),
        simulated: g2_report.g2,
        reference: cfg.g2_target,
    });

    let (_, peak_count) = peak(&table);
    let summary = ReproSummary {
        seed,
        planted_fidelity,
        total_counts: table.total(),
        peak_count,
        converged: rec.json.converged.unwrap_or(false),
        fidelity: report.fidelity,
        fidelity_ci: ci.map(|c| [c.low, c.high]),
        witness: report.witness,
        certified: report.certified,
        diagonals,
        g2_background: g2_report,
        comparisons,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    for c in &summary.comparisons {
        println!(
            "{:<28} simulated {:>10.4}  reference {:>10.4}",
            c.quantity, c.simulated, c.reference
        );
    }
    println!(
        "threshold for Schmidt number 3: F > {SN3_THRESHOLD:.4}; summary in {}",
        dir.join("summary.json").display()
    );
    Ok(())
}
