//! Helpers shared by the integration tests.
#![allow(dead_code)]

use crackscat::linalg::CMatrix;
use crackscat::Complex64;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fractional bits of the fixed-point series oracle.
const BITS: u32 = 480;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn fixed(x: f64) -> BigInt {
    // x is a dyadic rational, so the shift is exact for the ranges used here.
    let (mantissa, exponent) = decompose(x);
    let shift = exponent + BITS as i32;
    assert!(shift >= 0, "argument too small for fixed-point oracle");
    BigInt::from(mantissa) << shift as u32
}

fn decompose(x: f64) -> (i64, i32) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let mantissa = frac | (1 << 52);
    let sign = if x < 0.0 { -1 } else { 1 };
    (sign * mantissa, exp - 1075)
}

fn to_f64(v: &BigInt) -> f64 {
    // keep 64 leading bits, then scale
    let bits = v.bits() as i64;
    let drop = (bits - 64).max(0);
    let head = (v >> drop as u32).to_f64().unwrap();
    head * 2f64.powi((drop - BITS as i64) as i32)
}

fn mul(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> BITS
}

/// Power series pieces evaluated in fixed point:
/// `J0`, `J1`, `sum_{k>=1} (-1)^(k+1) H_k (x^2/4)^k / (k!)^2` and
/// `sum_{k>=0} (-1)^k (H_k + H_(k+1)) (x/2)^(2k+1) / (k! (k+1)!)`.
fn series(x: f64) -> (f64, f64, f64, f64) {
    let one = BigInt::one() << BITS;
    let half_x = fixed(x) >> 1u32;
    let q = mul(&half_x, &half_x);
    let tol = BigInt::one() << 16u32;
    // order 0: term_k = (-q)^k / (k!)^2
    let mut term = one.clone();
    let mut j0 = one.clone();
    let mut harmonic = BigInt::zero();
    let mut s0 = BigInt::zero();
    let mut k: u64 = 0;
    loop {
        k += 1;
        term = -mul(&term, &q) / BigInt::from(k * k);
        harmonic += &one / BigInt::from(k);
        j0 += &term;
        s0 -= mul(&term, &harmonic);
        if term.abs() < tol && k as f64 > x {
            break;
        }
    }
    // order 1: term_k = (-1)^k (x/2)^(2k+1) / (k! (k+1)!)
    let mut term = half_x.clone();
    let mut j1 = term.clone();
    let mut h_k = BigInt::zero();
    let mut h_k1 = one.clone();
    let mut s1 = mul(&term, &(&h_k + &h_k1));
    let mut k: u64 = 0;
    loop {
        k += 1;
        term = -mul(&term, &q) / BigInt::from(k * (k + 1));
        h_k = h_k1.clone();
        h_k1 += &one / BigInt::from(k + 1);
        j1 += &term;
        s1 += mul(&term, &(&h_k + &h_k1));
        if term.abs() < tol && k as f64 > x {
            break;
        }
    }
    (to_f64(&j0), to_f64(&j1), to_f64(&s0), to_f64(&s1))
}

/// Reference Bessel values `(J0, J1, Y0, Y1)` from high-precision series.
/// `Y` values are NaN at `x = 0`.
pub fn bessel_oracle(x: f64) -> (f64, f64, f64, f64) {
    let (j0, j1, s0, s1) = series(x);
    if x == 0.0 {
        return (j0, j1, f64::NAN, f64::NAN);
    }
    let pi = std::f64::consts::PI;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = 2.0 / pi * (log_term * j0 + s0);
    let y1 = 2.0 / pi * log_term * j1 - 2.0 / (pi * x) - s1 / pi;
    (j0, j1, y0, y1)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_vector(rng: &mut impl Rng, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Largest deviation of `Q^* Q` from the identity for columns `Q`.
pub fn orthonormality_error(columns: &[Vec<Complex64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in columns.iter().enumerate() {
        for (j, b) in columns.iter().enumerate() {
            let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).norm());
        }
    }
    worst
}

#[test]
fn oracle_known_values() {
    // J0(1), Y0(1), J1(2.5) to 15 digits
    let (j0, _, y0, _) = bessel_oracle(1.0);
    assert!((j0 - 0.765_197_686_557_966_6).abs() < 1e-15);
    assert!((y0 - 0.088_256_964_215_676_96).abs() < 1e-15);
    let (_, j1, _, y1) = bessel_oracle(2.5);
    assert!((j1 - 0.497_094_102_464_274_4).abs() < 1e-15);
    assert!((y1 - 0.145_918_137_966_786_7).abs() < 1e-14);
}
