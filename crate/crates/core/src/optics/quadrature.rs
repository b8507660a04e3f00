use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Field, LgMode, Singularity};
use crate::{Error, Result, C64};

/// Smallest accepted half extent, in units of the reference waist.
pub const MIN_HALF_EXTENT: f64 = 6.0;

/// Integration window `[-L, L]^2` with `L = half_extent * w_ref` and
/// `samples_per_axis` Simpson intervals across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureGrid {
    pub half_extent: f64,
    pub samples_per_axis: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            half_extent: 8.0,
            samples_per_axis: 1024,
        }
    }
}

impl QuadratureGrid {
    pub fn new(half_extent: f64, samples_per_axis: usize) -> Result<Self> {
        let grid = Self {
            half_extent,
            samples_per_axis,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_extent >= MIN_HALF_EXTENT && self.half_extent.is_finite()) {
            return Err(Error::GridTooSmall(self.half_extent));
        }
        if self.samples_per_axis < 16 || !self.samples_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "samples_per_axis = {} must be even and at least 16",
                self.samples_per_axis
            )));
        }
        Ok(())
    }

    /// Same window with twice the sampling density.
    pub fn refined(&self) -> Self {
        Self {
            samples_per_axis: 2 * self.samples_per_axis,
            ..*self
        }
    }
}

/// Composite Simpson nodes and weights on `[a, b]` with `n` (even) intervals.
fn simpson(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / n as f64;
    let nodes = (0..=n)
        .map(|i| if i == n { b } else { a + i as f64 * h })
        .collect();
    let weights = (0..=n)
        .map(|i| {
            let c = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

fn even_intervals(n: f64) -> usize {
    let k = (n / 2.0).ceil().max(1.0) as usize;
    2 * k
}

/// Tensor-product Simpson rule over a rectangle; rows run in parallel and are
/// summed in index order.
fn integrate_rect<I>(f: &I, x: (f64, f64), nx: usize, y: (f64, f64), ny: usize) -> C64
where
    I: Fn(f64, f64) -> C64 + Sync,
{
    let (xs, wx) = simpson(x.0, x.1, nx);
    let (ys, wy) = simpson(y.0, y.1, ny);
    let rows: Vec<C64> = ys
        .par_iter()
        .map(|&yv| xs.iter().zip(&wx).map(|(&xv, &w)| f(xv, yv) * w).sum())
        .collect();
    rows.iter().zip(&wy).map(|(r, w)| r * w).sum()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Points per Gauss-Legendre panel of the radial rule.
const PANEL_ORDER: usize = 8;

/// Polar rule centered on `(cx, cy)`: Gauss-Legendre panels in radius over
/// `[0, r_max]` (about `nr` nodes), periodic trapezoid in angle.
fn integrate_polar<I>(f: &I, cx: f64, cy: f64, r_max: f64, nr: usize, nphi: usize) -> C64
where
    I: Fn(f64, f64) -> C64 + Sync,
{
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let panels = nr.div_ceil(PANEL_ORDER).max(1);
    let width = r_max / panels as f64;
    let (rs, wr): (Vec<f64>, Vec<f64>) = (0..panels)
        .flat_map(|k| {
            let mid = (k as f64 + 0.5) * width;
            gx.iter()
                .zip(&gw)
                .map(move |(x, w)| (mid + 0.5 * width * x, 0.5 * width * w))
        })
        .unzip();
    let dphi = 2.0 * PI / nphi as f64;
    let dirs: Vec<(f64, f64)> = (0..nphi).map(|j| (j as f64 * dphi).sin_cos()).collect();
    let rings: Vec<C64> = rs
        .par_iter()
        .map(|&r| {
            let ring: C64 = dirs.iter().map(|&(s, c)| f(cx + r * c, cy + r * s)).sum();
            ring * (r * dphi)
        })
        .collect();
    rings.iter().zip(&wr).map(|(v, w)| v * w).sum()
}

/// `integral of f` over the window of `grid` scaled by `w_ref`, choosing the
/// rule from the singularity of the integrand.
pub fn integrate<I>(
    f: &I,
    singularity: Singularity,
    w_ref: f64,
    grid: &QuadratureGrid,
) -> Result<C64>
where
    I: Fn(f64, f64) -> C64 + Sync,
{
    grid.validate()?;
    if !(w_ref > 0.0 && w_ref.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "reference waist {w_ref} must be positive"
        )));
    }
    let l = grid.half_extent * w_ref;
    let n = grid.samples_per_axis;
    let h = 2.0 * l / n as f64;
    Ok(match singularity {
        Singularity::Point { x, y } => {
            // The disc around the core must cover the whole window.
            let r_max = x.hypot(y) + l * 2f64.sqrt();
            let nr = even_intervals(r_max / h).max(n / 2);
            integrate_polar(f, x, y, r_max, nr, n)
        }
        Singularity::VerticalLine { x } if x > -l && x < l => {
            let nl = even_intervals(n as f64 * (x + l) / (2.0 * l)).max(2);
            let nrt = even_intervals(n as f64 * (l - x) / (2.0 * l)).max(2);
            // Stay strictly on one side of the edge.
            integrate_rect(f, (-l, x.next_down()), nl, (-l, l), n)
                + integrate_rect(f, (x.next_up(), l), nrt, (-l, l), n)
        }
        _ => integrate_rect(f, (-l, l), n, (-l, l), n),
    })
}

/// `<target | field>` over the window scaled by the target's waist.
pub fn overlap<F: Field + ?Sized>(
    field: &F,
    target: &LgMode,
    grid: &QuadratureGrid,
) -> Result<C64> {
    target.validate()?;
    let f = |x: f64, y: f64| target.value(x, y).conj() * field.value(x, y);
    integrate(&f, field.singularity(), target.w0, grid)
}

/// `integral of |E|^2`, window scaled by `w_ref`.
pub fn norm_squared<F: Field + ?Sized>(
    field: &F,
    w_ref: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let f = |x: f64, y: f64| C64::new(field.value(x, y).norm_sqr(), 0.0);
    Ok(integrate(&f, field.singularity(), w_ref, grid)?.re)
}

/// Power coupled into a single-mode fiber whose mode is the Gaussian of
/// waist `filter_w0`: `|<LG_00 | E>|^2`.
pub fn gaussian_component<F: Field + ?Sized>(
    field: &F,
    filter_w0: f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let g = LgMode::gaussian(filter_w0)?;
    Ok(overlap(field, &g, grid)?.norm_sqr())
}
