//! Seeded random states and operators (Ginibre and Haar ensembles).

use nalgebra::SMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::qutrit::{DensityMatrix9, Ket3, Ket9, Matrix3, Matrix9, Side};
use crate::C64;

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed for item `index` under `seed` (splitmix64).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

fn ginibre<const R: usize, const C: usize, G: Rng + ?Sized>(rng: &mut G) -> SMatrix<C64, R, C> {
    SMatrix::<C64, R, C>::from_fn(|_, _| gaussian_c64(rng))
}

/// Haar-random single-qutrit ket.
pub fn ket3<R: Rng + ?Sized>(rng: &mut R, side: Side) -> Ket3 {
    loop {
        if let Ok(k) = Ket3::new(side, std::array::from_fn(|_| gaussian_c64(rng))) {
            return k;
        }
    }
}

/// Haar-random two-qutrit ket.
pub fn ket9<R: Rng + ?Sized>(rng: &mut R) -> Ket9 {
    loop {
        if let Ok(k) = Ket9::new(std::array::from_fn(|_| gaussian_c64(rng))) {
            return k;
        }
    }
}

/// Haar-random 3x3 unitary (QR of a Ginibre matrix with phase correction).
pub fn unitary3<R: Rng + ?Sized>(rng: &mut R) -> Matrix3 {
    let qr = ginibre::<3, 3, R>(rng).qr();
    let (mut q, r) = qr.unpack();
    for c in 0..3 {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for row in 0..3 {
            q[(row, c)] *= phase;
        }
    }
    q
}

/// Random PSD, trace-one 3x3 operator from the Ginibre (Hilbert-Schmidt) ensemble.
pub fn density3<R: Rng + ?Sized>(rng: &mut R) -> Matrix3 {
    let g = ginibre::<3, 3, R>(rng);
    let w = g * g.adjoint();
    let tr = w.trace().re;
    w.unscale(tr)
}

/// Random two-qutrit state of the given rank (1..=9), induced Ginibre measure.
pub fn density9<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> DensityMatrix9 {
    let rank = rank.clamp(1, 9);
    let mut w = Matrix9::zeros();
    for _ in 0..rank {
        let v = nalgebra::SVector::<C64, 9>::from_fn(|_, _| gaussian_c64(rng));
        w += v * v.adjoint();
    }
    let tr = w.trace().re;
    DensityMatrix9::new_unchecked(crate::qutrit::hermitian_part(&w).unscale(tr))
}
