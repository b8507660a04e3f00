use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{apply_mask, gaussian_component, Field, LgMode, PhaseMask, QuadratureGrid};
use crate::{Error, Result};

/// First-order diffraction efficiency of the blazed grating on the SLM.
pub const DEFAULT_GRATING_EFFICIENCY: f64 = 0.25;

/// Displacement path of the vortex core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanPath {
    /// Core at `(s, s)`.
    Diagonal,
    /// Core at `(s, 0)`.
    Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub s: f64,
    pub gaussian_component: f64,
}

fn check_values(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::InvalidParameter(format!(
            "scan position {v} is not finite"
        ))),
        None => Ok(()),
    }
}

/// Gaussian component of a `w0` Gaussian after a displaced vortex mask,
/// filtered by a fiber mode of the same waist.
pub fn vortex_scan(
    w0: f64,
    path: ScanPath,
    s_values: &[f64],
    grid: &QuadratureGrid,
) -> Result<Vec<ScanPoint>> {
    check_values(s_values)?;
    let beam = LgMode::gaussian(w0)?;
    s_values
        .iter()
        .map(|&s| {
            let mask = match path {
                ScanPath::Diagonal => PhaseMask::Vortex { x0: s, y0: s },
                ScanPath::Axis => PhaseMask::Vortex { x0: s, y0: 0.0 },
            };
            let gaussian_component = gaussian_component(&apply_mask(beam, mask), w0, grid)?;
            Ok(ScanPoint {
                s,
                gaussian_component,
            })
        })
        .collect()
}

/// Same as [`vortex_scan`] for a `pi` step edge at `x = x0`.
pub fn step_scan(w0: f64, x0_values: &[f64], grid: &QuadratureGrid) -> Result<Vec<ScanPoint>> {
    check_values(x0_values)?;
    let beam = LgMode::gaussian(w0)?;
    x0_values
        .iter()
        .map(|&x0| {
            let gaussian_component =
                gaussian_component(&apply_mask(beam, PhaseMask::Step { x0 }), w0, grid)?;
            Ok(ScanPoint {
                s: x0,
                gaussian_component,
            })
        })
        .collect()
}

/// Fraction of `source` coupled into the fiber after the mask.
pub fn conversion_efficiency<F: Field>(
    source: &F,
    mask: PhaseMask,
    filter_w0: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    mask.validate()?;
    gaussian_component(&apply_mask(source, mask), filter_w0, grid)
}

/// Curve divided by its largest value.
pub fn peak_normalized(points: &[ScanPoint]) -> Result<Vec<ScanPoint>> {
    let peak = points
        .iter()
        .map(|p| p.gaussian_component)
        .fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(
            "curve has no positive value to normalize by".into(),
        ));
    }
    Ok(points
        .iter()
        .map(|p| ScanPoint {
            s: p.s,
            gaussian_component: p.gaussian_component / peak,
        })
        .collect())
}

/// Scalar model of the blazed grating: a fixed first-order efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GratingModel {
    pub efficiency: f64,
}

impl Default for GratingModel {
    fn default() -> Self {
        Self {
            efficiency: DEFAULT_GRATING_EFFICIENCY,
        }
    }
}

impl GratingModel {
    pub fn new(efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::InvalidParameter(format!(
                "grating efficiency {efficiency} must lie in [0, 1]"
            )));
        }
        Ok(Self { efficiency })
    }

    pub fn scale(&self, component: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&component) {
            return Err(Error::InvalidParameter(format!(
                "component {component} must lie in [0, 1]"
            )));
        }
        Ok(self.efficiency * component)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(e.to_string())
}

/// Writes `s,gaussian_component` rows.
pub fn write_scan_csv<W: Write>(points: &[ScanPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

pub fn read_scan_csv<R: Read>(reader: R) -> Result<Vec<ScanPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[derive(Serialize)]
struct SnapshotRow {
    x: f64,
    y: f64,
    intensity: f64,
    phase: f64,
}

/// Intensity and phase on a `samples x samples` grid over `[-half_width,
/// half_width]^2`, as `x,y,intensity,phase` rows (x fastest).
pub fn write_field_snapshot<F: Field + ?Sized, W: Write>(
    field: &F,
    half_width: f64,
    samples: usize,
    writer: W,
) -> Result<()> {
    if !(half_width > 0.0 && half_width.is_finite()) || samples < 2 {
        return Err(Error::InvalidParameter(
            "snapshot needs a positive width and at least 2 samples".into(),
        ));
    }
    let step = 2.0 * half_width / (samples - 1) as f64;
    let mut w = csv::Writer::from_writer(writer);
    for j in 0..samples {
        let y = -half_width + j as f64 * step;
        for i in 0..samples {
            let x = -half_width + i as f64 * step;
            let v = field.value(x, y);
            w.serialize(SnapshotRow {
                x,
                y,
                intensity: v.norm_sqr(),
                phase: v.arg(),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::ModeSum;
    use crate::C64;
    use statrs::function::erf::erf;

    fn coarse() -> QuadratureGrid {
        QuadratureGrid::new(8.0, 512).unwrap()
    }

    #[test]
    fn step_scan_matches_erf_squared() {
        let w0 = 2.2;
        let xs: Vec<f64> = [-3.0, -1.3, -0.5, 0.0, 0.25, 0.5, 2.0]
            .iter()
            .map(|v| v * w0)
            .collect();
        for p in step_scan(w0, &xs, &QuadratureGrid::default()).unwrap() {
            let oracle = erf(2f64.sqrt() * p.s / w0).powi(2);
            assert!(
                (p.gaussian_component - oracle).abs() < 1e-6,
                "x0 = {}: {} vs {oracle}",
                p.s,
                p.gaussian_component
            );
        }
        let half =
            step_scan(1.0, &[0.5], &QuadratureGrid::default()).unwrap()[0].gaussian_component;
        assert!((half - 0.466_065).abs() < 1e-5);
    }

    #[test]
    fn centered_vortex_blocks_the_fiber() {
        for path in [ScanPath::Diagonal, ScanPath::Axis] {
            let c = vortex_scan(1.0, path, &[0.0], &QuadratureGrid::default()).unwrap()[0]
                .gaussian_component;
            assert!(c < 1e-8, "{c}");
        }
    }

    #[test]
    fn distant_vortex_passes() {
        let c = vortex_scan(
            2.2,
            ScanPath::Diagonal,
            &[22.0, -22.0],
            &QuadratureGrid::default(),
        )
        .unwrap();
        assert!(c.iter().all(|p| p.gaussian_component > 0.99));
    }

    #[test]
    fn vortex_curve_is_even_and_monotone() {
        let s: Vec<f64> = (-8..=8).map(|k| 0.25 * k as f64).collect();
        let curve = vortex_scan(1.0, ScanPath::Diagonal, &s, &coarse()).unwrap();
        for k in 0..8 {
            assert!((curve[k].gaussian_component - curve[16 - k].gaussian_component).abs() < 1e-9);
            assert!(curve[k].gaussian_component > curve[k + 1].gaussian_component);
        }
    }

    #[test]
    fn vortex_converts_gaussian_to_lg01() {
        let g = LgMode::gaussian(1.0).unwrap();
        let target = LgMode::new(0, 1, 1.0).unwrap();
        let masked = apply_mask(g, PhaseMask::Vortex { x0: 0.0, y0: 0.0 });
        let amp = super::super::overlap(&masked, &target, &QuadratureGrid::default()).unwrap();
        assert!((amp.norm_sqr() - std::f64::consts::PI / 4.0).abs() < 1e-4);
    }

    #[test]
    fn step_on_dipole_peaks_at_center() {
        let w = 1.0;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let dipole = ModeSum::new(vec![
            (C64::new(s, 0.0), LgMode::new(0, -1, w).unwrap()),
            (C64::new(s, 0.0), LgMode::new(0, 1, w).unwrap()),
        ])
        .unwrap();
        let grid = coarse();
        let at =
            |x0: f64| conversion_efficiency(&dipole, PhaseMask::Step { x0 }, w, &grid).unwrap();
        let center = at(0.0);
        assert!(center > 0.5);
        for x0 in [-1.0, -0.3, -0.05, 0.05, 0.3, 1.0] {
            assert!(at(x0) < center);
        }
    }

    #[test]
    fn uniform_mask_keeps_orthogonality() {
        let lg01 = LgMode::new(0, 1, 1.0).unwrap();
        let c = conversion_efficiency(&lg01, PhaseMask::Uniform { phase: 0.3 }, 1.0, &coarse())
            .unwrap();
        assert!(c < 1e-10);
    }

    #[test]
    fn grating_scaling() {
        let g = GratingModel::default();
        assert_eq!(g.scale(1.0).unwrap(), 0.25);
        assert_eq!(g.scale(0.0).unwrap(), 0.0);
        assert!((g.scale(0.6).unwrap() - 0.15).abs() < 1e-12);
        assert!(g.scale(1.5).is_err());
        assert!(GratingModel::new(-0.1).is_err());
    }

    #[test]
    fn scan_csv_round_trip() {
        let points = vec![
            ScanPoint {
                s: -1.0,
                gaussian_component: 0.3,
            },
            ScanPoint {
                s: 0.1,
                gaussian_component: 1e-17,
            },
        ];
        let mut buf = Vec::new();
        write_scan_csv(&points, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("s,gaussian_component\n"));
        assert_eq!(read_scan_csv(buf.as_slice()).unwrap(), points);
        let norm = peak_normalized(&points).unwrap();
        assert_eq!(norm[0].gaussian_component, 1.0);
    }

    #[test]
    fn snapshot_layout() {
        let mut buf = Vec::new();
        write_field_snapshot(&LgMode::new(0, 1, 1.0).unwrap(), 2.0, 5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,intensity,phase");
        assert_eq!(lines.len(), 26);
        assert!(lines[13].starts_with("0.0,0.0,0.0,"));
    }
}
