//! Bessel functions `J0, J1, Y0, Y1` and Hankel functions of the first kind
//! for real positive arguments.
//!
//! Below [`ASYMPTOTIC_THRESHOLD`] the ascending power series are summed
//! directly; above it the Hankel asymptotic expansion in amplitude/phase
//! form is truncated at its smallest term. Both branches are accurate to
//! about `1e-12` absolute on `[0, 50]`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Switch point between the power series and the asymptotic expansion.
///
/// The asymptotic series for orders 0 and 1 reaches its smallest term at
/// roughly `2x`, with size near `exp(-2x)`; at `x = 12` this is below `1e-11`.
/// The power series at the same point cancels away about four digits.
pub const ASYMPTOTIC_THRESHOLD: f64 = 12.0;

const SERIES_TOL: f64 = 1e-18;

fn check_positive(function: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            x,
            requirement: "x > 0",
        })
    }
}

fn check_nonnegative(function: &'static str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            x,
            requirement: "x >= 0",
        })
    }
}

/// Power series of `J0` and the regular part of `Y0`.
///
/// Returns `(J0(x), S(x))` with
/// `S(x) = sum_{k>=1} (-1)^{k+1} H_k (x^2/4)^k / (k!)^2`, so that
/// `Y0 = (2/pi) [ (ln(x/2) + gamma) J0 + S ]`.
fn series_order0(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut s = 0.0;
    let mut harmonic = 0.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -q / (k * k);
        harmonic += 1.0 / k;
        j0 += term;
        s -= harmonic * term;
        if term.abs() * harmonic.max(1.0) < SERIES_TOL && k > q.sqrt() {
            break;
        }
    }
    (j0, s)
}

/// Power series of `J1` and the digamma sum entering `Y1`.
///
/// Returns `(J1(x), T(x))` with
/// `T(x) = (x/2) sum_{k>=0} (-1)^k (psi(k+1) + psi(k+2)) (x^2/4)^k / (k! (k+1)!)`,
/// so that `Y1 = (2/pi) ln(x/2) J1 - 2/(pi x) - T/pi`.
fn series_order1(x: f64) -> (f64, f64) {
    let half = 0.5 * x;
    let q = half * half;
    // psi(k+1) = -gamma + H_k
    let mut psi_k1 = -EULER_GAMMA;
    let mut psi_k2 = 1.0 - EULER_GAMMA;
    let mut term = half;
    let mut j1 = term;
    let mut t = term * (psi_k1 + psi_k2);
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -q / (k * (k + 1.0));
        psi_k1 = psi_k2;
        psi_k2 += 1.0 / (k + 1.0);
        j1 += term;
        let contrib = term * (psi_k1 + psi_k2);
        t += contrib;
        if contrib.abs() < SERIES_TOL && term.abs() < SERIES_TOL && k > q.sqrt() {
            break;
        }
    }
    (j1, t)
}

/// Amplitude factors `(P, Q)` of the Hankel asymptotic expansion of order `nu`,
/// truncated just before the smallest term.
fn asymptotic_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut k = 0usize;
    loop {
        k += 1;
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            break;
        }
        term = next;
        // a_k / x^k enters P for even k and Q for odd k, with alternating signs.
        let sign = if (k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        if k.is_multiple_of(2) {
            p += sign * term;
        } else {
            q += sign * term;
        }
    }
    (p, q)
}

/// `(J_nu(x), Y_nu(x))` for large `x` via the asymptotic expansion.
fn asymptotic(nu: f64, x: f64) -> (f64, f64) {
    let (p, q) = asymptotic_pq(nu, x);
    let chi = x - (0.5 * nu + 0.25) * PI;
    let amp = (2.0 / (PI * x)).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

/// Bessel function of the first kind of order zero, `x >= 0`.
pub fn bessel_j0(x: f64) -> Result<f64> {
    check_nonnegative("bessel_j0", x)?;
    Ok(j0_unchecked(x))
}

/// Bessel function of the first kind of order one, `x >= 0`.
pub fn bessel_j1(x: f64) -> Result<f64> {
    check_nonnegative("bessel_j1", x)?;
    Ok(j1_unchecked(x))
}

/// Bessel function of the second kind of order zero, `x > 0`.
pub fn bessel_y0(x: f64) -> Result<f64> {
    check_positive("bessel_y0", x)?;
    Ok(order0_unchecked(x).1)
}

/// Bessel function of the second kind of order one, `x > 0`.
pub fn bessel_y1(x: f64) -> Result<f64> {
    check_positive("bessel_y1", x)?;
    Ok(order1_unchecked(x).1)
}

/// `H^(1)_0(x) = J0(x) + i Y0(x)`, `x > 0`.
pub fn hankel1_0(x: f64) -> Result<Complex64> {
    check_positive("hankel1_0", x)?;
    let (j, y) = order0_unchecked(x);
    Ok(Complex64::new(j, y))
}

/// `H^(1)_1(x) = J1(x) + i Y1(x)`, `x > 0`.
pub fn hankel1_1(x: f64) -> Result<Complex64> {
    check_positive("hankel1_1", x)?;
    let (j, y) = order1_unchecked(x);
    Ok(Complex64::new(j, y))
}

fn j0_unchecked(x: f64) -> f64 {
    if x < ASYMPTOTIC_THRESHOLD {
        series_order0(x).0
    } else {
        asymptotic(0.0, x).0
    }
}

fn j1_unchecked(x: f64) -> f64 {
    if x < ASYMPTOTIC_THRESHOLD {
        series_order1(x).0
    } else {
        asymptotic(1.0, x).0
    }
}

fn order0_unchecked(x: f64) -> (f64, f64) {
    if x < ASYMPTOTIC_THRESHOLD {
        let (j0, s) = series_order0(x);
        let y0 = 2.0 / PI * (((0.5 * x).ln() + EULER_GAMMA) * j0 + s);
        (j0, y0)
    } else {
        asymptotic(0.0, x)
    }
}

fn order1_unchecked(x: f64) -> (f64, f64) {
    if x < ASYMPTOTIC_THRESHOLD {
        let (j1, t) = series_order1(x);
        let y1 = 2.0 / PI * (0.5 * x).ln() * j1 - 2.0 / (PI * x) - t / PI;
        (j1, y1)
    } else {
        asymptotic(1.0, x)
    }
}

/// Free-space Helmholtz Green's function `(i/4) H^(1)_0(k r)` in the plane.
pub fn helmholtz_green(k: f64, r: f64) -> Result<Complex64> {
    Ok(Complex64::new(0.0, 0.25) * hankel1_0(k * r)?)
}

/// Radial derivative `d/dr (i/4) H^(1)_0(k r) = -(i k / 4) H^(1)_1(k r)`.
pub fn helmholtz_green_dr(k: f64, r: f64) -> Result<Complex64> {
    Ok(Complex64::new(0.0, -0.25 * k) * hankel1_1(k * r)?)
}

/// `(i/4) H^(1)_0(k r) + ln(r) / (2 pi)`, continuous at `r = 0`.
///
/// At `r = 0` this takes the limit `i/4 - (ln(k/2) + gamma) / (2 pi)`.
pub fn helmholtz_green_regular(k: f64, r: f64) -> Complex64 {
    if r == 0.0 {
        return Complex64::new(-((0.5 * k).ln() + EULER_GAMMA) / (2.0 * PI), 0.25);
    }
    let x = k * r;
    if x < ASYMPTOTIC_THRESHOLD {
        // -(1/4) Y0 + ln(r)/(2 pi) with the logarithm subtracted analytically:
        // -[ (ln(k/2) + gamma) J0 + S ] / (2 pi) + ln(r) (1 - J0) / (2 pi)
        let (j0, s) = series_order0(x);
        let re = -(((0.5 * k).ln() + EULER_GAMMA) * j0 + s) / (2.0 * PI)
            + r.ln() * (1.0 - j0) / (2.0 * PI);
        Complex64::new(re, 0.25 * j0)
    } else {
        let (j0, y0) = asymptotic(0.0, x);
        Complex64::new(-0.25 * y0 + r.ln() / (2.0 * PI), 0.25 * j0)
    }
}
