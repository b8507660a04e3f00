use nalgebra::DVector;

use super::{CoincidenceTable, Normalization};
use crate::measurement::{measurement_matrix, ProjectorSetting, SETTINGS};
use crate::qutrit::{
    from_hermitian_coords, hermitian_eigenvalues, DensityMatrix9, Matrix9, PSD_SLACK,
};
use crate::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

/// Hermitian, unit-trace solution of the linear tomography system. It is not
/// projected onto the physical states; `min_eigenvalue` flags negativity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimate {
    pub matrix: Matrix9,
    pub min_eigenvalue: f64,
}

impl LinearEstimate {
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -PSD_SLACK
    }

    /// The estimate as a validated state, if it is one.
    pub fn state(&self) -> Result<DensityMatrix9> {
        DensityMatrix9::new(self.matrix)
    }
}

pub fn linear_inversion(
    table: &CoincidenceTable,
    settings: &[ProjectorSetting],
) -> Result<LinearEstimate> {
    table.validate()?;
    linear_from_frequencies(
        &table.frequencies(),
        &table.background,
        table.normalization(),
        settings,
    )
}

/// Solves `(n_k - b_k) / N = Tr(Pi_k rho)` in the least-squares sense.
pub fn linear_from_frequencies(
    counts: &[f64],
    background: &[f64],
    norm: Normalization,
    settings: &[ProjectorSetting],
) -> Result<LinearEstimate> {
    if settings.len() != SETTINGS || counts.len() != SETTINGS || background.len() != SETTINGS {
        return Err(Error::Dimension {
            expected: SETTINGS,
            got: settings.len().min(counts.len()).min(background.len()),
        });
    }
    let scale = match norm {
        Normalization::Known(n) if n > 0.0 => n,
        Normalization::Known(n) => {
            return Err(Error::InvalidParameter(format!(
                "normalization {n} must be positive"
            )))
        }
        Normalization::Profiled => 1.0,
    };
    let m = measurement_matrix(settings);
    let svd = m.svd(true, true);
    let max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * max)
        .count();
    if rank < SETTINGS {
        return Err(Error::IllPosed { rank });
    }
    let rhs = DVector::from_iterator(
        SETTINGS,
        counts.iter().zip(background).map(|(n, b)| (n - b) / scale),
    );
    let coords = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let h = from_hermitian_coords(coords.as_slice());
    let tr = h.trace().re;
    if !(tr.abs() > 0.0) || !tr.is_finite() {
        return Err(Error::InvalidTrace(tr));
    }
    let matrix = h.unscale(tr);
    let min_eigenvalue = hermitian_eigenvalues(&matrix)[0];
    Ok(LinearEstimate {
        matrix,
        min_eigenvalue,
    })
}
