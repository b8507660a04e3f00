//! Transverse fields at the beam waist, SLM phase masks and single-mode-fiber
//! overlap integrals.
//!
//! Lengths are in arbitrary but consistent units (the waist `w0` and the mask
//! offsets share them). Overlaps are computed by quadrature; the rule adapts
//! to where the integrand is not smooth: polar coordinates around a vortex
//! core, separate Simpson panels on each side of a step edge.

mod lg;
mod mask;
mod quadrature;
mod scan;

pub use lg::{laguerre, LgMode, ModeSum};
pub use mask::{apply_mask, Masked, PhaseMask};
pub use quadrature::{
    gaussian_component, integrate, norm_squared, overlap, QuadratureGrid, MIN_HALF_EXTENT,
};
pub use scan::{
    conversion_efficiency, peak_normalized, read_scan_csv, step_scan, vortex_scan,
    write_field_snapshot, write_scan_csv, GratingModel, ScanPath, ScanPoint,
    DEFAULT_GRATING_EFFICIENCY,
};

use crate::C64;

/// Where a field fails to be smooth, so quadrature can avoid it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Singularity {
    None,
    /// Phase winding around a point.
    Point {
        x: f64,
        y: f64,
    },
    /// Jump across the line `x = const`.
    VerticalLine {
        x: f64,
    },
    /// Discontinuities along a pixel lattice; no special treatment.
    Pixelated,
}

/// Complex scalar field in the waist plane.
pub trait Field: Sync {
    fn value(&self, x: f64, y: f64) -> C64;

    fn singularity(&self) -> Singularity {
        Singularity::None
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn value(&self, x: f64, y: f64) -> C64 {
        (**self).value(x, y)
    }

    fn singularity(&self) -> Singularity {
        (**self).singularity()
    }
}
