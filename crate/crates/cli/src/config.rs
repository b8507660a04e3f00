//! TOML schemas of the subcommand configs. Unknown keys are rejected and
//! relative paths are resolved against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use qutrit_oam::entanglement::{mes_state, MesParams};
use qutrit_oam::optics::{LgMode, PhaseMask, QuadratureGrid, ScanPath};
use qutrit_oam::qutrit::{DensityMatrix9, MatrixJson};
use qutrit_oam::sim::{
    planted_state, BackgroundSplit, PlantedState, SourceModel, CALIBRATED_RETRIEVAL_EFF,
    REFERENCE_DURATION_S, REFERENCE_EXCITATION_PROB, REFERENCE_REP_PERIOD_NS,
};
use qutrit_oam::tomography::Method;

use crate::error::{CliError, CliResult};

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::input(path, e))
}

/// Resolves `p` against `base` unless it is absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{}: no such file", path.display())))
    }
}

/// The directory an output file will be written into must exist.
pub fn require_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::usage(format!(
            "{}: output directory does not exist",
            path.display()
        ))),
        _ => Ok(()),
    }
}

/// Built-in states selectable by name.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    /// The reference planted state (populations 0.25/0.37/0.26, F = 0.74).
    Planted,
    MaximallyMixed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathState {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub planted: PlantedState,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesSpec {
    pub mes: MesParams,
}

/// `rho_true`: a name, `{ path = ".." }`, `{ planted = {..} }`,
/// `{ mes = { alpha, beta } }` or an inline `{ dim = 9, re, im }` matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Named(NamedState),
    Path(PathState),
    Planted(PlantedSpec),
    Mes(MesSpec),
    Matrix(MatrixJson),
}

impl RhoSpec {
    pub fn resolve(&self, base: &Path) -> CliResult<DensityMatrix9> {
        match self {
            RhoSpec::Named(NamedState::Planted) => Ok(planted_state(&PlantedState::reference())?),
            RhoSpec::Named(NamedState::MaximallyMixed) => Ok(DensityMatrix9::maximally_mixed()),
            RhoSpec::Path(p) => {
                let path = resolve(base, &p.path);
                require_file(&path)?;
                let text = fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?;
                let m: MatrixJson =
                    serde_json::from_str(&text).map_err(|e| CliError::input(&path, e))?;
                DensityMatrix9::new(m.to_matrix()?).map_err(|e| CliError::input(&path, e))
            }
            RhoSpec::Planted(p) => Ok(planted_state(&p.planted)?),
            RhoSpec::Mes(m) => Ok(DensityMatrix9::from_pure(&mes_state(m.mes))),
            RhoSpec::Matrix(m) => Ok(DensityMatrix9::new(m.to_matrix()?)?),
        }
    }
}

fn reference_p() -> f64 {
    REFERENCE_EXCITATION_PROB
}
fn calibrated_eta() -> f64 {
    CALIBRATED_RETRIEVAL_EFF
}
fn reference_period() -> f64 {
    REFERENCE_REP_PERIOD_NS
}
fn reference_duration() -> f64 {
    REFERENCE_DURATION_S
}

/// Source model with the field names of [`SourceModel`]; everything except
/// `rho_true` defaults to the reference regime.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub rho_true: RhoSpec,
    #[serde(default = "reference_p")]
    pub excitation_prob: f64,
    #[serde(default = "calibrated_eta")]
    pub retrieval_eff: f64,
    #[serde(default)]
    pub bg_stokes: f64,
    #[serde(default)]
    pub bg_antistokes: f64,
    #[serde(default = "reference_period")]
    pub rep_period_ns: f64,
    #[serde(default = "reference_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub bg_stokes_per_setting: Option<Vec<f64>>,
    #[serde(default)]
    pub bg_antistokes_per_setting: Option<Vec<f64>>,
}

impl ModelConfig {
    pub fn build(&self, base: &Path) -> CliResult<SourceModel> {
        let model = SourceModel {
            rho_true: self.rho_true.resolve(base)?,
            excitation_prob: self.excitation_prob,
            retrieval_eff: self.retrieval_eff,
            bg_stokes: self.bg_stokes,
            bg_antistokes: self.bg_antistokes,
            rep_period_ns: self.rep_period_ns,
            duration_s: self.duration_s,
            bg_stokes_per_setting: self.bg_stokes_per_setting.clone(),
            bg_antistokes_per_setting: self.bg_antistokes_per_setting.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: Option<u64>,
    /// Counts CSV; the metadata sidecar goes next to it with a `.json` extension.
    pub output: PathBuf,
    pub model: ModelConfig,
}

fn default_max_iter() -> usize {
    5000
}
fn default_rel_tol() -> f64 {
    1e-10
}
fn default_method() -> Method {
    Method::Mle
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub counts: PathBuf,
    /// Sidecar of `counts`; defaults to the same path with a `.json` extension.
    pub metadata: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub warm_start: bool,
    /// Monte-Carlo resamples of the MES fidelity; 0 skips the block.
    #[serde(default)]
    pub mc_samples: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub rho: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMask {
    Vortex,
    Step,
}

fn default_path() -> ScanPath {
    ScanPath::Diagonal
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlmScanConfig {
    pub mask: ScanMask,
    /// Displacement path of the vortex core; ignored for the step.
    #[serde(default = "default_path")]
    pub path: ScanPath,
    pub w0: f64,
    /// Scan range in units of `w0`.
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
    #[serde(default)]
    pub grid: QuadratureGrid,
    /// Recompute on a grid with twice the samples and fail if any point
    /// moves by more than `tolerance`.
    #[serde(default = "default_true")]
    pub check_convergence: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub normalize: bool,
    /// Multiplies the curve by a first-order grating efficiency.
    pub grating_efficiency: Option<f64>,
    pub output: PathBuf,
}

fn default_tolerance() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub mode: LgMode,
    pub mask: Option<PhaseMask>,
    pub pixel_pitch: Option<f64>,
    pub half_width: f64,
    pub samples: usize,
    pub output: PathBuf,
}

fn default_split() -> BackgroundSplit {
    BackgroundSplit::Symmetric
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Config {
    #[serde(default = "reference_p")]
    pub excitation_prob: f64,
    #[serde(default = "calibrated_eta")]
    pub retrieval_eff: f64,
    pub bg_stokes: Option<f64>,
    pub bg_antistokes: Option<f64>,
    /// Measured g2 to invert for the background level.
    pub target: Option<f64>,
    #[serde(default = "default_split")]
    pub split: BackgroundSplit,
    /// Pulses of a simulated run; adds a counting estimate to the report.
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

fn default_mc() -> usize {
    200
}
fn reference_g2() -> f64 {
    74.6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproConfig {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "PlantedState::reference")]
    pub planted: PlantedState,
    #[serde(default = "reference_g2")]
    pub g2_target: f64,
    #[serde(default = "default_split")]
    pub split: BackgroundSplit,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_spec_forms() {
        let named: RhoSpec = toml::from_str::<ModelConfig>("rho_true = \"planted\"")
            .unwrap()
            .rho_true;
        assert!(matches!(named, RhoSpec::Named(NamedState::Planted)));
        let mes: ModelConfig =
            toml::from_str("rho_true = { mes = { alpha = 0.0, beta = 0.0 } }").unwrap();
        assert!(matches!(mes.rho_true, RhoSpec::Mes(_)));
        let path: ModelConfig = toml::from_str("rho_true = { path = \"rho.json\" }").unwrap();
        assert!(matches!(path.rho_true, RhoSpec::Path(_)));
        let planted: ModelConfig = toml::from_str(
            "[rho_true.planted]\ndiagonals = [0.3, 0.3, 0.3]\nfidelity = 0.8\nphases = { alpha = 0.0, beta = 0.0 }",
        )
        .unwrap();
        assert!(matches!(planted.rho_true, RhoSpec::Planted(_)));
        assert!(toml::from_str::<ModelConfig>("rho_true = \"bell\"").is_err());
    }

    #[test]
    fn defaults_follow_reference_regime() {
        let m: ModelConfig = toml::from_str("rho_true = \"maximally_mixed\"").unwrap();
        let model = m.build(Path::new(".")).unwrap();
        assert_eq!(model.excitation_prob, 5e-4);
        assert_eq!(model.duration_s, 100.0);
        assert_eq!(model.bg_stokes, 0.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(
            toml::from_str::<ModelConfig>("rho_true = \"planted\"\nexcitation = 1e-3").is_err()
        );
        assert!(toml::from_str::<AnalyzeConfig>("rho = \"a\"\noutput = \"b\"\nextra = 1").is_err());
        assert!(toml::from_str::<SlmScanConfig>(
            "mask = \"step\"\nw0 = 1\ns_min = 0\ns_max = 1\npoints = 3\noutput = \"x\"\n[grid]\nhalf_extent = 8\nsamples = 64"
        )
        .is_err());
    }

    #[test]
    fn relative_paths_follow_config() {
        assert_eq!(
            resolve(Path::new("/a/b"), Path::new("c.csv")),
            PathBuf::from("/a/b/c.csv")
        );
        assert_eq!(
            resolve(Path::new("/a/b"), Path::new("/c.csv")),
            PathBuf::from("/c.csv")
        );
    }
}
