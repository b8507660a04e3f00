//! The 81 product measurement settings and their crosstalk-perturbed variants.
//!
//! Each side is measured by projecting onto one of nine kets: the three OAM
//! basis states and six equal-weight superpositions covering the real and
//! imaginary parts of every coherence. Settings are ordered row-major in
//! `(photon ket i, atom ket j)`, i.e. setting `k = 9 i + j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::qutrit::{hermitian_coords, kron, Ket3, Matrix3, Matrix9, MatrixJson, Side};
use crate::random::{density3, rng_from_seed, sub_seed};
use crate::{Error, Result, C64};

pub const SETTINGS: usize = 81;

/// Index pair `(i, j)` of a product setting, both in `0..9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SettingIndex {
    i: usize,
    j: usize,
}

impl SettingIndex {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i > 8 || j > 8 {
            return Err(Error::InvalidParameter(format!(
                "setting index ({i}, {j}) out of range 0..9"
            )));
        }
        Ok(Self { i, j })
    }

    pub fn from_flat(k: usize) -> Result<Self> {
        Self::new(k / 9, k % 9)
    }

    pub fn photon(&self) -> usize {
        self.i
    }

    pub fn atom(&self) -> usize {
        self.j
    }

    /// Row-major position `9 i + j`.
    pub fn flat(&self) -> usize {
        9 * self.i + self.j
    }
}

/// One measurement operator `A (x) B` with its single-side factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSetting {
    pub index: SettingIndex,
    pub photon: Matrix3,
    pub atom: Matrix3,
    pub op: Matrix9,
    pub ideal: bool,
}

impl ProjectorSetting {
    fn from_factors(index: SettingIndex, photon: Matrix3, atom: Matrix3, ideal: bool) -> Self {
        Self {
            index,
            op: kron(&photon, &atom),
            photon,
            atom,
            ideal,
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn superposition(side: Side, amps: [C64; 3]) -> Ket3 {
    Ket3::new(side, amps).expect("non-zero superposition")
}

/// Photon kets `|L>, |G>, |R>, (|G>+|L>)/√2, (|G>+|R>)/√2, (|G>+i|L>)/√2,
/// (|G>-i|R>)/√2, (|L>+|R>)/√2, (|L>+i|R>)/√2`, amplitudes in `(L, G, R)` order.
pub fn photon_kets() -> [Ket3; 9] {
    let s = Side::Photon;
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    [
        Ket3::basis(s, 0),
        Ket3::basis(s, 1),
        Ket3::basis(s, 2),
        superposition(s, [o, o, z]),
        superposition(s, [z, o, o]),
        superposition(s, [i, o, z]),
        superposition(s, [z, o, -i]),
        superposition(s, [o, z, o]),
        superposition(s, [o, z, i]),
    ]
}

/// Atom kets `|l>, |g>, |r>, (|g>+|l>)/√2, (|g>+|r>)/√2, (|g>-i|l>)/√2,
/// (|g>+i|r>)/√2, (|l>+|r>)/√2, (|l>-i|r>)/√2`, amplitudes in `(l, g, r)` order.
pub fn atom_kets() -> [Ket3; 9] {
    let s = Side::Atom;
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    [
        Ket3::basis(s, 0),
        Ket3::basis(s, 1),
        Ket3::basis(s, 2),
        superposition(s, [o, o, z]),
        superposition(s, [z, o, o]),
        superposition(s, [-i, o, z]),
        superposition(s, [z, o, i]),
        superposition(s, [o, z, o]),
        superposition(s, [o, z, -i]),
    ]
}

/// All 81 ideal settings, row-major in `(i, j)`.
pub fn projector_set() -> Vec<ProjectorSetting> {
    let photon = photon_kets().map(|k| k.projector());
    let atom = atom_kets().map(|k| k.projector());
    (0..SETTINGS)
        .map(|k| {
            let index = SettingIndex::from_flat(k).expect("k < 81");
            ProjectorSetting::from_factors(index, photon[index.i], atom[index.j], true)
        })
        .collect()
}

/// Mixes each side's projector with a random trace-one PSD operator:
/// `P -> (1 - eps) P + eps N`, with `N` drawn from `seed`.
pub fn perturb_setting(
    setting: &ProjectorSetting,
    eps: f64,
    seed: u64,
) -> Result<ProjectorSetting> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "crosstalk eps {eps} outside [0, 1]"
        )));
    }
    if eps == 0.0 {
        return Ok(setting.clone());
    }
    let mut rng = rng_from_seed(seed);
    let noise_photon = density3(&mut rng);
    let noise_atom = density3(&mut rng);
    let photon = setting.photon.scale(1.0 - eps) + noise_photon.scale(eps);
    let atom = setting.atom.scale(1.0 - eps) + noise_atom.scale(eps);
    Ok(ProjectorSetting::from_factors(
        setting.index,
        photon,
        atom,
        false,
    ))
}

/// The full set with every setting perturbed under a derived per-setting seed.
pub fn perturbed_set(eps: f64, seed: u64) -> Result<Vec<ProjectorSetting>> {
    projector_set()
        .iter()
        .map(|s| perturb_setting(s, eps, sub_seed(seed, s.index.flat() as u64)))
        .collect()
}

/// Real 81x81 matrix whose row `k` holds the Hermitian coordinates of
/// setting `k`, so that `M coords(rho)` lists `Tr(Pi_k rho)`.
pub fn measurement_matrix(settings: &[ProjectorSetting]) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(settings.len(), 81);
    for (row, s) in settings.iter().enumerate() {
        m.row_mut(row)
            .copy_from(&hermitian_coords(&s.op).transpose());
    }
    m
}

/// Singular values of the measurement matrix, descending.
pub fn measurement_singular_values(settings: &[ProjectorSetting]) -> Vec<f64> {
    let mut sv: Vec<f64> = measurement_matrix(settings)
        .singular_values()
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank, counting singular values above `rel_tol` times the largest.
pub fn measurement_rank(settings: &[ProjectorSetting], rel_tol: f64) -> usize {
    let sv = measurement_singular_values(settings);
    let cutoff = rel_tol * sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// JSON form of a setting: `{i, j, ideal, op, photon, atom}` with matrices in
/// the `{dim, re, im}` layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingJson {
    pub i: usize,
    pub j: usize,
    pub ideal: bool,
    pub op: MatrixJson,
    pub photon: MatrixJson,
    pub atom: MatrixJson,
}

impl From<&ProjectorSetting> for SettingJson {
    fn from(s: &ProjectorSetting) -> Self {
        Self {
            i: s.index.i,
            j: s.index.j,
            ideal: s.ideal,
            op: MatrixJson::from_matrix(&s.op),
            photon: MatrixJson::from_matrix3(&s.photon),
            atom: MatrixJson::from_matrix3(&s.atom),
        }
    }
}

impl TryFrom<SettingJson> for ProjectorSetting {
    type Error = Error;

    fn try_from(value: SettingJson) -> Result<Self> {
        let index = SettingIndex::new(value.i, value.j)?;
        let photon = value.photon.to_matrix3()?;
        let atom = value.atom.to_matrix3()?;
        let op = value.op.to_matrix()?;
        if (kron(&photon, &atom) - op).norm() > 1e-9 {
            return Err(Error::Malformed(format!(
                "setting ({}, {}): op is not photon (x) atom",
                value.i, value.j
            )));
        }
        Ok(Self {
            index,
            photon,
            atom,
            op,
            ideal: value.ideal,
        })
    }
}

pub fn settings_to_json(settings: &[ProjectorSetting]) -> Result<String> {
    let list: Vec<SettingJson> = settings.iter().map(SettingJson::from).collect();
    Ok(serde_json::to_string_pretty(&list)?)
}

pub fn settings_from_json(text: &str) -> Result<Vec<ProjectorSetting>> {
    let list: Vec<SettingJson> = serde_json::from_str(text)?;
    list.into_iter().map(ProjectorSetting::try_from).collect()
}
