//! Kets, density matrices and the fixed two-qutrit basis.
//!
//! Photon basis `(|L>, |G>, |R>)` carries OAM `-1, 0, +1`; the atomic basis
//! `(|l>, |g>, |r>)` likewise. Two-qutrit vectors are stored photon-major, so
//! `|L>|r>` sits at index 2, `|G>|g>` at 4 and `|R>|l>` at 6.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

pub type Matrix3 = SMatrix<C64, 3, 3>;
pub type Matrix9 = SMatrix<C64, 9, 9>;

/// Real coordinates of a 9x9 Hermitian operator in an orthonormal basis of
/// the Hilbert-Schmidt space (see [`hermitian_coords`]).
pub type HermitianCoords = SVector<f64, 81>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_SLACK: f64 = 1e-9;
pub const DEFAULT_SCHMIDT_TOL: f64 = 1e-7;

/// Index of `|L>|r>` in the two-qutrit basis.
pub const LR: usize = 2;
/// Index of `|G>|g>` in the two-qutrit basis.
pub const GG: usize = 4;
/// Index of `|R>|l>` in the two-qutrit basis.
pub const RL: usize = 6;
/// The three zero-total-OAM basis states, ordered by photon index.
pub const MAJOR: [usize; 3] = [LR, GG, RL];

/// Which half of the photon-atom pair a single-qutrit object refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Photon,
    Atom,
}

impl Side {
    pub fn labels(self) -> [&'static str; 3] {
        match self {
            Side::Photon => ["L", "G", "R"],
            Side::Atom => ["l", "g", "r"],
        }
    }
}

/// Two-qutrit basis index for `(photon, atom)`.
#[inline]
pub fn pair_index(photon: usize, atom: usize) -> usize {
    3 * photon + atom
}

fn normalize_slice(amps: &mut [C64]) -> Result<()> {
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    for a in amps.iter_mut() {
        *a /= norm;
    }
    Ok(())
}

/// Normalized single-qutrit ket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket3 {
    amps: [C64; 3],
    side: Side,
}

impl Ket3 {
    /// Builds a ket from (possibly unnormalized) amplitudes.
    pub fn new(side: Side, amps: [C64; 3]) -> Result<Self> {
        let mut amps = amps;
        normalize_slice(&mut amps)?;
        Ok(Self { amps, side })
    }

    pub fn basis(side: Side, index: usize) -> Self {
        let mut amps = [C64::new(0.0, 0.0); 3];
        amps[index] = C64::new(1.0, 0.0);
        Self { amps, side }
    }

    pub fn amplitudes(&self) -> &[C64; 3] {
        &self.amps
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Ket3) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|k><k|`
    pub fn projector(&self) -> Matrix3 {
        let v = SVector::<C64, 3>::from_column_slice(&self.amps);
        v * v.adjoint()
    }

    /// Applies a 3x3 operator and renormalizes.
    pub fn transformed(&self, op: &Matrix3) -> Result<Self> {
        let v = op * SVector::<C64, 3>::from_column_slice(&self.amps);
        Self::new(self.side, [v[0], v[1], v[2]])
    }
}

/// Normalized photon-atom ket, photon-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket9 {
    amps: [C64; 9],
}

impl Ket9 {
    pub fn new(amps: [C64; 9]) -> Result<Self> {
        let mut amps = amps;
        normalize_slice(&mut amps)?;
        Ok(Self { amps })
    }

    pub fn basis(photon: usize, atom: usize) -> Self {
        let mut amps = [C64::new(0.0, 0.0); 9];
        amps[pair_index(photon, atom)] = C64::new(1.0, 0.0);
        Self { amps }
    }

    /// Product ket `|photon>|atom>`.
    pub fn tensor(photon: &Ket3, atom: &Ket3) -> Self {
        let mut amps = [C64::new(0.0, 0.0); 9];
        for (a, pa) in photon.amps.iter().enumerate() {
            for (b, ab) in atom.amps.iter().enumerate() {
                amps[pair_index(a, b)] = pa * ab;
            }
        }
        Self { amps }
    }

    pub fn amplitudes(&self) -> &[C64; 9] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Ket9) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn vector(&self) -> SVector<C64, 9> {
        SVector::<C64, 9>::from_column_slice(&self.amps)
    }

    pub fn projector(&self) -> Matrix9 {
        let v = self.vector();
        v * v.adjoint()
    }

    /// Amplitudes reshaped into a 3x3 matrix, rows = photon, columns = atom.
    pub fn amplitude_matrix(&self) -> Matrix3 {
        Matrix3::from_fn(|a, b| self.amps[pair_index(a, b)])
    }

    /// Schmidt coefficients (singular values of the amplitude matrix), descending.
    pub fn schmidt_coefficients(&self) -> [f64; 3] {
        let sv = self.amplitude_matrix().singular_values();
        let mut out = [sv[0], sv[1], sv[2]];
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// Number of Schmidt coefficients above `tol` relative to the largest.
    pub fn schmidt_rank(&self, tol: f64) -> usize {
        let sv = self.schmidt_coefficients();
        let cutoff = tol * sv[0];
        sv.iter().filter(|&&s| s > cutoff).count()
    }

    /// Applies `photon_op (x) atom_op` and renormalizes.
    pub fn local_transform(&self, photon_op: &Matrix3, atom_op: &Matrix3) -> Result<Self> {
        let v = kron(photon_op, atom_op) * self.vector();
        let mut amps = [C64::new(0.0, 0.0); 9];
        amps.copy_from_slice(v.as_slice());
        Self::new(amps)
    }
}

/// Kronecker product of a photon operator and an atom operator.
pub fn kron(photon: &Matrix3, atom: &Matrix3) -> Matrix9 {
    Matrix9::from_fn(|r, c| photon[(r / 3, c / 3)] * atom[(r % 3, c % 3)])
}

/// Largest entry of `|m - m^dag|`.
pub fn hermiticity_error<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..N {
        for c in r..N {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^dag) / 2`
pub fn hermitian_part<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    (m + m.adjoint()).scale(0.5)
}

fn validate<const N: usize>(m: &SMatrix<C64, N, N>) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Malformed("non-finite matrix entry".into()));
    }
    let herm = hermiticity_error(m);
    if herm > HERMITIAN_TOL {
        return Err(Error::NotHermitian(herm));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(Error::InvalidTrace(tr.re));
    }
    let min = hermitian_eigenvalues(m).first().copied().unwrap_or(0.0);
    if min < -PSD_SLACK {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

/// Trace distance `||a - b||_1 / 2` of two Hermitian matrices.
pub fn trace_distance<const N: usize>(a: &SMatrix<C64, N, N>, b: &SMatrix<C64, N, N>) -> f64 {
    hermitian_eigenvalues(&(a - b))
        .iter()
        .map(|e| e.abs())
        .sum::<f64>()
        * 0.5
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<const N: usize>(m: &SMatrix<C64, N, N>) -> Vec<f64> {
    let h = hermitian_part(m);
    let dynamic = nalgebra::DMatrix::from_column_slice(N, N, h.as_slice());
    let mut ev: Vec<f64> = dynamic.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Which subsystem to trace out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Photon,
    Atom,
}

/// Single-qutrit density matrix (a marginal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix3 {
    m: Matrix3,
}

impl DensityMatrix3 {
    pub fn new(m: Matrix3) -> Result<Self> {
        validate(&m)?;
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3 {
        &self.m
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.m)
    }
}

/// Valid two-qutrit state: Hermitian, unit trace, positive semi-definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct DensityMatrix9 {
    m: Matrix9,
}

impl DensityMatrix9 {
    /// Validates and wraps `m`.
    pub fn new(m: Matrix9) -> Result<Self> {
        validate(&m)?;
        Ok(Self { m })
    }

    /// Hermitizes, renormalizes the trace and validates.
    pub fn from_approximate(m: Matrix9) -> Result<Self> {
        let h = hermitian_part(&m);
        let tr = h.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidTrace(tr));
        }
        Self::new(h.unscale(tr))
    }

    pub(crate) fn new_unchecked(m: Matrix9) -> Self {
        Self { m }
    }

    pub fn from_pure(psi: &Ket9) -> Self {
        Self { m: psi.projector() }
    }

    /// `I / 9`
    pub fn maximally_mixed() -> Self {
        Self {
            m: Matrix9::identity().unscale(9.0),
        }
    }

    /// Convex mixture `sum w_i rho_i`; weights are normalized.
    pub fn mixture(parts: &[(f64, DensityMatrix9)]) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || !(total > 0.0) {
            return Err(Error::InvalidParameter(
                "mixture weights must be non-negative".into(),
            ));
        }
        let m = parts.iter().fold(Matrix9::zeros(), |acc, (w, rho)| {
            acc + rho.m.scale(w / total)
        });
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix9 {
        &self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.m)
    }

    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    /// `<psi|rho|psi>`
    pub fn fidelity_pure(&self, psi: &Ket9) -> f64 {
        let v = psi.vector();
        let f = (v.adjoint() * self.m * v)[(0, 0)];
        debug_assert!(f.im.abs() < 1e-12, "imaginary fidelity residual {}", f.im);
        f.re
    }

    /// Expectation value `Tr(op rho)` of a Hermitian operator.
    pub fn expectation(&self, op: &Matrix9) -> f64 {
        (op * self.m).trace().re
    }

    pub fn trace_distance(&self, other: &DensityMatrix9) -> f64 {
        trace_distance(&self.m, &other.m)
    }

    /// Reduced state after tracing out `traced`.
    pub fn partial_trace(&self, traced: Subsystem) -> DensityMatrix3 {
        let m = Matrix3::from_fn(|r, c| match traced {
            Subsystem::Atom => (0..3)
                .map(|b| self.m[(pair_index(r, b), pair_index(c, b))])
                .sum(),
            Subsystem::Photon => (0..3)
                .map(|a| self.m[(pair_index(a, r), pair_index(a, c))])
                .sum(),
        });
        DensityMatrix3 { m }
    }

    /// `(U (x) V) rho (U (x) V)^dag`, unitaries assumed.
    pub fn local_unitary(&self, photon: &Matrix3, atom: &Matrix3) -> Self {
        let u = kron(photon, atom);
        Self {
            m: u * self.m * u.adjoint(),
        }
    }

    /// The three zero-total-OAM populations `(Lr, Gg, Rl)`.
    pub fn major_diagonals(&self) -> [f64; 3] {
        MAJOR.map(|k| self.m[(k, k)].re)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// On-disk layout of a 9x9 complex matrix: `{"dim": 9, "re": [[..]], "im": [[..]]}`,
/// row-major. Floats are written in shortest round-trip form, so reading a
/// file back reproduces every entry bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        Self {
            dim,
            re: (0..dim)
                .map(|r| (0..dim).map(|c| f(r, c).re).collect())
                .collect(),
            im: (0..dim)
                .map(|r| (0..dim).map(|c| f(r, c).im).collect())
                .collect(),
        }
    }

    fn check_shape(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: self.dim,
            });
        }
        let shape_ok =
            |rows: &Vec<Vec<f64>>| rows.len() == dim && rows.iter().all(|r| r.len() == dim);
        if !shape_ok(&self.re) || !shape_ok(&self.im) {
            return Err(Error::Malformed(format!(
                "expected {dim}x{dim} `re` and `im` arrays"
            )));
        }
        Ok(())
    }

    pub fn from_matrix(m: &Matrix9) -> Self {
        Self::from_fn(9, |r, c| m[(r, c)])
    }

    pub fn from_matrix3(m: &Matrix3) -> Self {
        Self::from_fn(3, |r, c| m[(r, c)])
    }

    pub fn to_matrix(&self) -> Result<Matrix9> {
        self.check_shape(9)?;
        Ok(Matrix9::from_fn(|r, c| {
            C64::new(self.re[r][c], self.im[r][c])
        }))
    }

    pub fn to_matrix3(&self) -> Result<Matrix3> {
        self.check_shape(3)?;
        Ok(Matrix3::from_fn(|r, c| {
            C64::new(self.re[r][c], self.im[r][c])
        }))
    }
}

impl TryFrom<MatrixJson> for DensityMatrix9 {
    type Error = Error;

    fn try_from(value: MatrixJson) -> Result<Self> {
        DensityMatrix9::new(value.to_matrix()?)
    }
}

impl From<DensityMatrix9> for MatrixJson {
    fn from(value: DensityMatrix9) -> Self {
        MatrixJson::from_matrix(&value.m)
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Coordinates of a Hermitian 9x9 operator: the 9 diagonal entries, then
/// `sqrt(2) Re h_ab` and `sqrt(2) Im h_ab` for `a < b`. With these,
/// `Tr(A B) = coords(A) . coords(B)` for Hermitian `A`, `B`.
pub fn hermitian_coords(h: &Matrix9) -> HermitianCoords {
    let mut v = HermitianCoords::zeros();
    for a in 0..9 {
        v[a] = h[(a, a)].re;
    }
    let mut k = 9;
    for a in 0..9 {
        for b in (a + 1)..9 {
            v[k] = SQRT2 * h[(a, b)].re;
            v[k + 1] = SQRT2 * h[(a, b)].im;
            k += 2;
        }
    }
    v
}

/// Inverse of [`hermitian_coords`].
pub fn from_hermitian_coords(v: &[f64]) -> Matrix9 {
    debug_assert_eq!(v.len(), 81);
    let mut h = Matrix9::zeros();
    for a in 0..9 {
        h[(a, a)] = C64::new(v[a], 0.0);
    }
    let mut k = 9;
    for a in 0..9 {
        for b in (a + 1)..9 {
            let z = C64::new(v[k], v[k + 1]) / SQRT2;
            h[(a, b)] = z;
            h[(b, a)] = z.conj();
            k += 2;
        }
    }
    h
}
