use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{Field, Singularity};
use crate::{Error, Result, C64};

/// Pure-phase SLM transmission `T(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseMask {
    /// `exp(i arg((x - x0) + i (y - y0)))`, with `T = 1` at the core.
    Vortex {
        x0: f64,
        y0: f64,
    },
    /// `exp(i pi/2 sgn(x - x0))`, with `T = 1` on the edge itself.
    Step {
        x0: f64,
    },
    Uniform {
        phase: f64,
    },
}

impl PhaseMask {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PhaseMask::Vortex { x0, y0 } => x0.is_finite() && y0.is_finite(),
            PhaseMask::Step { x0 } => x0.is_finite(),
            PhaseMask::Uniform { phase } => phase.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "non-finite mask parameter in {self:?}"
            )))
        }
    }

    pub fn transmission(&self, x: f64, y: f64) -> C64 {
        match *self {
            PhaseMask::Vortex { x0, y0 } => {
                let z = C64::new(x - x0, y - y0);
                let r = z.norm();
                if r == 0.0 {
                    C64::new(1.0, 0.0)
                } else {
                    z / r
                }
            }
            PhaseMask::Step { x0 } => {
                if x > x0 {
                    C64::from_polar(1.0, FRAC_PI_2)
                } else if x < x0 {
                    C64::from_polar(1.0, -FRAC_PI_2)
                } else {
                    C64::new(1.0, 0.0)
                }
            }
            PhaseMask::Uniform { phase } => C64::from_polar(1.0, phase),
        }
    }

    fn singularity(&self) -> Singularity {
        match *self {
            PhaseMask::Vortex { x0, y0 } => Singularity::Point { x: x0, y: y0 },
            PhaseMask::Step { x0 } => Singularity::VerticalLine { x: x0 },
            PhaseMask::Uniform { .. } => Singularity::None,
        }
    }
}

/// A field multiplied pointwise by a phase mask, optionally sampled on a
/// square pixel grid (pixel edges on multiples of `pixel_pitch`).
#[derive(Debug, Clone)]
pub struct Masked<F> {
    pub field: F,
    pub mask: PhaseMask,
    pub pixel_pitch: Option<f64>,
}

pub fn apply_mask<F: Field>(field: F, mask: PhaseMask) -> Masked<F> {
    Masked {
        field,
        mask,
        pixel_pitch: None,
    }
}

impl<F: Field> Masked<F> {
    /// Evaluates the mask at pixel centers, as a pixelated SLM would.
    pub fn quantized(mut self, pixel_pitch: f64) -> Result<Self> {
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pixel pitch {pixel_pitch} must be positive"
            )));
        }
        self.pixel_pitch = Some(pixel_pitch);
        Ok(self)
    }
}

fn pixel_center(v: f64, pitch: f64) -> f64 {
    ((v / pitch).floor() + 0.5) * pitch
}

impl<F: Field> Field for Masked<F> {
    fn value(&self, x: f64, y: f64) -> C64 {
        let t = match self.pixel_pitch {
            Some(p) => self
                .mask
                .transmission(pixel_center(x, p), pixel_center(y, p)),
            None => self.mask.transmission(x, y),
        };
        self.field.value(x, y) * t
    }

    fn singularity(&self) -> Singularity {
        if self.pixel_pitch.is_some() {
            return Singularity::Pixelated;
        }
        match (self.mask.singularity(), self.field.singularity()) {
            (s, Singularity::None) => s,
            (Singularity::None, s) => s,
            _ => Singularity::Pixelated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::LgMode;

    #[test]
    fn masks_are_pure_phase() {
        let masks = [
            PhaseMask::Vortex { x0: 0.3, y0: -0.2 },
            PhaseMask::Step { x0: 0.1 },
            PhaseMask::Uniform { phase: 1.234 },
        ];
        for mask in masks {
            for &(x, y) in &[
                (0.0, 0.0),
                (0.3, -0.2),
                (0.1, 5.0),
                (-2.0, 1.0),
                (1e-9, -1e-9),
            ] {
                assert!((mask.transmission(x, y).norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn step_phase_jump() {
        let mask = PhaseMask::Step { x0: 0.5 };
        let left = mask.transmission(0.5 - 1e-12, 0.0);
        let right = mask.transmission(0.5 + 1e-12, 0.0);
        assert!((left - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((right - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((right / left - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(mask.transmission(0.5, 3.0), C64::new(1.0, 0.0));
    }

    #[test]
    fn vortex_cancels_opposite_charge() {
        let mode = LgMode::new(0, -1, 1.0).unwrap();
        let masked = apply_mask(mode, PhaseMask::Vortex { x0: 0.0, y0: 0.0 });
        for &(x, y) in &[(0.3, 0.0), (0.0, 0.3), (-0.3, 0.0), (0.2, -0.2)] {
            let v = masked.value(x, y);
            assert!(v.im.abs() < 1e-15 && v.re > 0.0);
        }
    }

    #[test]
    fn magnitude_preserved() {
        let mode = LgMode::new(1, 2, 0.8).unwrap();
        let masked = apply_mask(mode, PhaseMask::Uniform { phase: 0.7 });
        let v = masked.value(0.4, -0.1);
        assert!((v - mode.value(0.4, -0.1) * C64::from_polar(1.0, 0.7)).norm() < 1e-15);
    }

    #[test]
    fn quantizer_samples_pixel_centers() {
        let g = LgMode::gaussian(1.0).unwrap();
        let masked = apply_mask(g, PhaseMask::Step { x0: 0.05 })
            .quantized(0.1)
            .unwrap();
        // Pixel [0, 0.1) has its center at 0.05, exactly on the edge.
        assert_eq!(masked.value(0.02, 0.0), g.value(0.02, 0.0));
        assert!(matches!(masked.singularity(), Singularity::Pixelated));
        assert!(apply_mask(g, PhaseMask::Step { x0: 0.0 })
            .quantized(0.0)
            .is_err());
    }

    #[test]
    fn mask_json() {
        let m: PhaseMask =
            serde_json::from_str(r#"{"kind": "vortex", "x0": 1.0, "y0": 0.5}"#).unwrap();
        assert_eq!(m, PhaseMask::Vortex { x0: 1.0, y0: 0.5 });
        assert!(
            serde_json::from_str::<PhaseMask>(r#"{"kind": "step", "x0": 1.0, "y0": 0.5}"#).is_err()
        );
    }
}
