//! Singular subspaces and the numerical stability harness.
//!
//! An [`OperatorFamily`] maps a two-component parameter `m` to a matrix
//! `A_m`. The harness samples the ratio
//!
//! ```text
//! ||A_m u - A_m' v|| / (|m - m'| ||v|| + ||u - v||)
//! ```
//!
//! over unit vectors `u`, `v` in the leading right singular subspaces of
//! `A_m` and `A_m'`, and measures how far `(u, v) -> d_q A_m u + A_m v` is from
//! losing injectivity.

pub mod svd;

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{item_rng, stream, PhysicsConfig};
use crate::error::{Error, Result};
use crate::forward::{
    assemble_forward_matrix, derivative_matrices, CrackGeometry, ObservationSet, QuadratureGrid,
    SupportInterval,
};
use crate::linalg::{cnorm, csub, CMatrix};

pub use svd::{svd, SingularSystem};

/// Parameter `m = (m_1, m_2)`; `(theta, a)` for cracks.
pub type Param = [f64; 2];

/// Distance used for `|m - m'|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// `theta` compared through `(cos 2 theta, sin 2 theta)`, `a` directly.
    Circular,
}

impl Metric {
    pub fn distance(&self, m: Param, mp: Param) -> f64 {
        match self {
            Metric::Euclidean => (m[0] - mp[0]).hypot(m[1] - mp[1]),
            Metric::Circular => param_metric(m, mp),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Circular => "circular",
        }
    }
}

/// `sqrt(delta(theta, theta')^2 + (a - a')^2)` where `delta` is the chord
/// distance between `(cos 2 theta, sin 2 theta)` and its primed counterpart.
pub fn param_metric(m: Param, mp: Param) -> f64 {
    let (s, c) = (2.0 * m[0]).sin_cos();
    let (sp, cp) = (2.0 * mp[0]).sin_cos();
    let delta = (c - cp).hypot(s - sp);
    delta.hypot(m[1] - mp[1])
}

/// Top singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct LeadingSubspace {
    pub sigma: Vec<f64>,
    pub left: Vec<Vec<Complex64>>,
    pub right: Vec<Vec<Complex64>>,
    /// Set when `sigma_N - sigma_{N+1} <= 1e-12 sigma_1`, i.e. the subspace
    /// is not uniquely determined.
    pub degenerate_gap: bool,
}

impl LeadingSubspace {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Ambient vector `sum_i c_i r_i`.
    pub fn embed(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        crate::linalg::combine(&self.right, coeffs)
    }

    /// Matrix whose columns are the leading right vectors.
    pub fn right_frame(&self) -> CMatrix {
        let rows = self.right.first().map_or(0, Vec::len);
        CMatrix::from_columns(rows, &self.right)
    }
}

/// Relative gap below which the leading subspace is reported as ambiguous.
pub const DEGENERATE_GAP_TOL: f64 = 1e-12;

/// Leading `n` singular triplets of `a`.
pub fn leading_subspace(a: &CMatrix, n: usize) -> Result<LeadingSubspace> {
    let full = svd(a)?;
    leading_from_system(&full, n)
}

fn leading_from_system(full: &SingularSystem, n: usize) -> Result<LeadingSubspace> {
    let limit = full.sigma.len();
    if n == 0 || n > limit {
        return Err(Error::Config(format!(
            "subspace dimension {n} outside 1..={limit}"
        )));
    }
    let degenerate_gap =
        n < limit && full.sigma[n - 1] - full.sigma[n] <= DEGENERATE_GAP_TOL * full.sigma[0];
    Ok(LeadingSubspace {
        sigma: full.sigma[..n].to_vec(),
        left: full.left[..n].to_vec(),
        right: full.right[..n].to_vec(),
        degenerate_gap,
    })
}

/// A matrix-valued map `m -> A_m` on a two-dimensional parameter box.
pub trait OperatorFamily: Send + Sync {
    fn name(&self) -> String;

    fn matrix(&self, m: Param) -> Result<CMatrix>;

    /// Directional derivative `d_q A_m`. Defaults to central differences.
    fn derivative(&self, m: Param, q: Param) -> Result<CMatrix> {
        let h = 1e-6;
        let plus = self.matrix([m[0] + h * q[0], m[1] + h * q[1]])?;
        let minus = self.matrix([m[0] - h * q[0], m[1] - h * q[1]])?;
        Ok(plus.sub(&minus).scale(Complex64::new(0.5 / h, 0.0)))
    }

    /// Uniform draw from the parameter box.
    fn sample_param(&self, rng: &mut dyn RngCore) -> Param;

    /// Parameter box `[lo, hi]` per component.
    fn domain(&self) -> [(f64, f64); 2] {
        [(1.0, 2.0), (1.0, 2.0)]
    }

    fn metric(&self) -> Metric;
}

/// Coarse crack operators `m = (theta, a) -> A_{m,app}` on a fixed support.
#[derive(Debug, Clone)]
pub struct CrackFamily {
    pub physics: PhysicsConfig,
    pub support: SupportInterval,
    pub include_scale: bool,
    grid: QuadratureGrid,
    obs: ObservationSet,
}

impl CrackFamily {
    pub fn new(
        physics: PhysicsConfig,
        support: SupportInterval,
        include_scale: bool,
    ) -> Result<Self> {
        physics.validate()?;
        Ok(Self {
            grid: QuadratureGrid::new(physics.n_quad)?,
            obs: ObservationSet::from_config(&physics),
            physics,
            support,
            include_scale,
        })
    }

    /// Family on the centered support of length 2.
    pub fn centered(physics: PhysicsConfig) -> Result<Self> {
        Self::new(physics, SupportInterval::unchecked(0.0, 2.0), true)
    }
}

impl OperatorFamily for CrackFamily {
    fn name(&self) -> String {
        format!(
            "crack(o={}, l={}, n_quad={})",
            self.support.center, self.support.length, self.physics.n_quad
        )
    }

    fn matrix(&self, m: Param) -> Result<CMatrix> {
        let geom = CrackGeometry::unchecked(m[0], m[1]);
        let a = assemble_forward_matrix(
            self.physics.wavenumber,
            &geom,
            &self.support,
            &self.grid,
            &self.obs,
            self.include_scale,
        )?;
        Ok(a.matrix)
    }

    fn derivative(&self, m: Param, q: Param) -> Result<CMatrix> {
        let geom = CrackGeometry::unchecked(m[0], m[1]);
        let (d_theta, d_offset) = derivative_matrices(
            self.physics.wavenumber,
            &geom,
            &self.support,
            &self.grid,
            &self.obs,
            self.include_scale,
        )?;
        let (rows, cols) = d_theta.matrix.shape();
        Ok(CMatrix::from_fn(rows, cols, |i, j| {
            d_theta.matrix[(i, j)] * q[0] + d_offset.matrix[(i, j)] * q[1]
        }))
    }

    fn sample_param(&self, rng: &mut dyn RngCore) -> Param {
        let a_max = self.physics.a_max;
        [
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            rng.random_range(-a_max..=a_max),
        ]
    }

    fn domain(&self) -> [(f64, f64); 2] {
        [
            (-FRAC_PI_2, FRAC_PI_2),
            (-self.physics.a_max, self.physics.a_max),
        ]
    }

    fn metric(&self) -> Metric {
        Metric::Circular
    }
}

fn sample_unit_box(rng: &mut dyn RngCore) -> Param {
    [rng.random_range(1.0..=2.0), rng.random_range(1.0..=2.0)]
}

/// `A_m e_j = m_1 f_j + m_2 f_{j+n} + m_2^2 f_{j+2n}`, `j = 1..n`, on `[1, 2]^2`.
#[derive(Debug, Clone, Copy)]
pub struct GenericExample1 {
    pub n: usize,
}

/// Real `3n x n` matrix of the first generic example.
pub fn generic_example1(m: Param, n: usize) -> CMatrix {
    let mut a = CMatrix::zeros(3 * n, n);
    for j in 0..n {
        a[(j, j)] = Complex64::new(m[0], 0.0);
        a[(j + n, j)] = Complex64::new(m[1], 0.0);
        a[(j + 2 * n, j)] = Complex64::new(m[1] * m[1], 0.0);
    }
    a
}

impl OperatorFamily for GenericExample1 {
    fn name(&self) -> String {
        format!("example1(n={})", self.n)
    }

    fn matrix(&self, m: Param) -> Result<CMatrix> {
        Ok(generic_example1(m, self.n))
    }

    fn derivative(&self, m: Param, q: Param) -> Result<CMatrix> {
        let n = self.n;
        let mut d = CMatrix::zeros(3 * n, n);
        for j in 0..n {
            d[(j, j)] = Complex64::new(q[0], 0.0);
            d[(j + n, j)] = Complex64::new(q[1], 0.0);
            d[(j + 2 * n, j)] = Complex64::new(2.0 * m[1] * q[1], 0.0);
        }
        Ok(d)
    }

    fn sample_param(&self, rng: &mut dyn RngCore) -> Param {
        sample_unit_box(rng)
    }

    fn metric(&self) -> Metric {
        Metric::Euclidean
    }
}

/// `A_m e_n = (m_1 f_{3n} + m_2 f_{3n+1} + m_2^2 f_{3n+2}) / n`, truncated to
/// `n <= n_max`.
#[derive(Debug, Clone, Copy)]
pub struct GenericExample2 {
    pub n_max: usize,
}

/// Real `(3 n_max + 2) x n_max` truncation of the second generic example.
pub fn generic_example2(m: Param, n_max: usize) -> CMatrix {
    let mut a = CMatrix::zeros(3 * n_max + 2, n_max);
    for col in 0..n_max {
        let n = (col + 1) as f64;
        // f_{3n} is row 3n - 1 with zero-based rows.
        let row = 3 * (col + 1) - 1;
        a[(row, col)] = Complex64::new(m[0] / n, 0.0);
        a[(row + 1, col)] = Complex64::new(m[1] / n, 0.0);
        a[(row + 2, col)] = Complex64::new(m[1] * m[1] / n, 0.0);
    }
    a
}

/// `sqrt(m_1^2 + m_2^2 + m_2^4) / k`: the `k`-th singular value of the second
/// generic example.
pub fn generic_example2_sigma(m: Param, k: usize) -> f64 {
    (m[0] * m[0] + m[1] * m[1] + m[1].powi(4)).sqrt() / k as f64
}

impl OperatorFamily for GenericExample2 {
    fn name(&self) -> String {
        format!("example2(n_max={})", self.n_max)
    }

    fn matrix(&self, m: Param) -> Result<CMatrix> {
        Ok(generic_example2(m, self.n_max))
    }

    fn derivative(&self, m: Param, q: Param) -> Result<CMatrix> {
        let mut d = CMatrix::zeros(3 * self.n_max + 2, self.n_max);
        for col in 0..self.n_max {
            let n = (col + 1) as f64;
            let row = 3 * (col + 1) - 1;
            d[(row, col)] = Complex64::new(q[0] / n, 0.0);
            d[(row + 1, col)] = Complex64::new(q[1] / n, 0.0);
            d[(row + 2, col)] = Complex64::new(2.0 * m[1] * q[1] / n, 0.0);
        }
        Ok(d)
    }

    fn sample_param(&self, rng: &mut dyn RngCore) -> Param {
        sample_unit_box(rng)
    }

    fn metric(&self) -> Metric {
        Metric::Euclidean
    }
}

/// `A_m = m_1 B` for a fixed matrix `B`; violates the derivative injectivity
/// condition by construction.
#[derive(Debug, Clone)]
pub struct BrokenFamily {
    pub base: CMatrix,
}

impl BrokenFamily {
    /// Fixed `rows x cols` base matrix with entries `sin(i + 2j + 1) + i cos(3i - j)`.
    pub fn new(rows: usize, cols: usize) -> Self {
        let base = CMatrix::from_fn(rows, cols, |i, j| {
            let (i, j) = (i as f64, j as f64);
            Complex64::new((i + 2.0 * j + 1.0).sin(), (3.0 * i - j).cos())
        });
        Self { base }
    }
}

impl OperatorFamily for BrokenFamily {
    fn name(&self) -> String {
        format!("broken({}x{})", self.base.rows(), self.base.cols())
    }

    fn matrix(&self, m: Param) -> Result<CMatrix> {
        Ok(self.base.scale(Complex64::new(m[0], 0.0)))
    }

    fn derivative(&self, _m: Param, q: Param) -> Result<CMatrix> {
        Ok(self.base.scale(Complex64::new(q[0], 0.0)))
    }

    fn sample_param(&self, rng: &mut dyn RngCore) -> Param {
        sample_unit_box(rng)
    }

    fn metric(&self) -> Metric {
        Metric::Euclidean
    }
}

/// Ratio for vectors already embedded in the ambient space.
fn ratio_embedded(
    a_m: &CMatrix,
    a_mp: &CMatrix,
    u: &[Complex64],
    v: &[Complex64],
    distance: f64,
) -> Result<f64> {
    let num = cnorm(&csub(&a_m.mul_vec(u)?, &a_mp.mul_vec(v)?));
    let den = distance * cnorm(v) + cnorm(&csub(u, v));
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

/// `||A_m u - A_m' v|| / (|m - m'| ||v|| + ||u - v||)` for `u`, `v` given as
/// coefficients in the leading `n_modes` right frames of `A_m` and `A_m'`.
pub fn stability_ratio(
    family: &dyn OperatorFamily,
    m: Param,
    mp: Param,
    u: &[Complex64],
    v: &[Complex64],
    n_modes: usize,
) -> Result<f64> {
    for coeffs in [u, v] {
        if coeffs.len() != n_modes {
            return Err(Error::DimensionMismatch {
                expected: n_modes,
                actual: coeffs.len(),
            });
        }
    }
    let a_m = family.matrix(m)?;
    let a_mp = family.matrix(mp)?;
    let e_m = leading_subspace(&a_m, n_modes)?;
    let e_mp = leading_subspace(&a_mp, n_modes)?;
    ratio_embedded(
        &a_m,
        &a_mp,
        &e_m.embed(u),
        &e_mp.embed(v),
        family.metric().distance(m, mp),
    )
}

/// Configuration attaining the smallest sampled ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityWitness {
    pub sample: usize,
    pub m: Param,
    pub mp: Param,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub family: String,
    pub n_modes: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub metric: Metric,
    pub min_ratio: f64,
    pub argmin: StabilityWitness,
    /// Ratio of every sample, in sample order.
    pub ratios: Vec<f64>,
    /// Samples where either leading subspace had a degenerate gap.
    pub degenerate_samples: usize,
}

impl StabilityReport {
    /// Plain `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let w = &self.argmin;
        let fmt_vec = |x: &[Complex64]| {
            x.iter()
                .map(|z| format!("{:.17e}{:+.17e}i", z.re, z.im))
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut s = String::new();
        let _ = writeln!(s, "family={}", self.family);
        let _ = writeln!(s, "n_modes={}", self.n_modes);
        let _ = writeln!(s, "sample_count={}", self.sample_count);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "metric={}", self.metric.name());
        let _ = writeln!(s, "min_ratio={:.17e}", self.min_ratio);
        let _ = writeln!(s, "argmin_sample={}", w.sample);
        let _ = writeln!(s, "argmin_m={:.17e},{:.17e}", w.m[0], w.m[1]);
        let _ = writeln!(s, "argmin_m_prime={:.17e},{:.17e}", w.mp[0], w.mp[1]);
        let _ = writeln!(s, "argmin_u={}", fmt_vec(&w.u));
        let _ = writeln!(s, "argmin_v={}", fmt_vec(&w.v));
        let _ = writeln!(s, "degenerate_samples={}", self.degenerate_samples);
        s
    }

    /// CSV with header `sample,ratio`.
    pub fn write_ratios_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "sample,ratio")?;
        for (i, r) in self.ratios.iter().enumerate() {
            writeln!(out, "{i},{r:.17e}")?;
        }
        Ok(())
    }
}

struct SampleDraw {
    m: Param,
    mp: Param,
    /// Gaussian coefficients; the first `N` entries normalized give a uniform
    /// point on the unit sphere of the `N`-dimensional subspace.
    u: Vec<Complex64>,
    v: Vec<Complex64>,
}

fn draw_sample(family: &dyn OperatorFamily, seed: u64, index: usize, width: usize) -> SampleDraw {
    let mut rng = item_rng(seed, stream::STABILITY, index as u64);
    let m = family.sample_param(&mut rng);
    let mp = family.sample_param(&mut rng);
    // u and v are drawn in interleaved pairs so that their first N entries
    // do not depend on `width`
    let (mut u, mut v) = (Vec::with_capacity(width), Vec::with_capacity(width));
    for _ in 0..width {
        for x in [&mut u, &mut v] {
            x.push(Complex64::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ));
        }
    }
    SampleDraw { m, mp, u, v }
}

fn unit_prefix(x: &[Complex64], n: usize) -> Vec<Complex64> {
    let norm = cnorm(&x[..n]);
    x[..n].iter().map(|z| z / norm).collect()
}

struct SampleOutcome {
    ratios: Vec<f64>,
    degenerate: Vec<bool>,
}

fn evaluate_sample(
    family: &dyn OperatorFamily,
    draw: &SampleDraw,
    modes: &[usize],
) -> Result<SampleOutcome> {
    let a_m = family.matrix(draw.m)?;
    let a_mp = family.matrix(draw.mp)?;
    let sys_m = svd(&a_m)?;
    let sys_mp = svd(&a_mp)?;
    let distance = family.metric().distance(draw.m, draw.mp);
    let mut ratios = Vec::with_capacity(modes.len());
    let mut degenerate = Vec::with_capacity(modes.len());
    for &n in modes {
        let e_m = leading_from_system(&sys_m, n)?;
        let e_mp = leading_from_system(&sys_mp, n)?;
        let u = e_m.embed(&unit_prefix(&draw.u, n));
        let v = e_mp.embed(&unit_prefix(&draw.v, n));
        ratios.push(ratio_embedded(&a_m, &a_mp, &u, &v, distance)?);
        degenerate.push(e_m.degenerate_gap || e_mp.degenerate_gap);
    }
    Ok(SampleOutcome { ratios, degenerate })
}

/// Monte-Carlo minimum of the stability ratio for several subspace
/// dimensions at once.
///
/// Every dimension sees the same parameter pairs and the same Gaussian draws
/// (truncated to the subspace dimension), so estimates for different `N`
/// differ only through the subspaces. Sample `i` is generated from its own
/// sub-seed, so the result does not depend on thread scheduling.
pub fn estimate_stability_sweep(
    family: &dyn OperatorFamily,
    modes: &[usize],
    sample_count: usize,
    seed: u64,
) -> Result<Vec<StabilityReport>> {
    if sample_count == 0 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let width = modes.iter().copied().max().unwrap_or(0);
    if width == 0 {
        return Err(Error::Config("need at least one subspace dimension".into()));
    }
    let outcomes: Vec<(SampleDraw, SampleOutcome)> = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let draw = draw_sample(family, seed, i, width);
            let outcome = evaluate_sample(family, &draw, modes)?;
            Ok((draw, outcome))
        })
        .collect::<Result<_>>()?;

    let reports = modes
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            let ratios: Vec<f64> = outcomes.iter().map(|(_, o)| o.ratios[slot]).collect();
            let (best, min_ratio) =
                ratios
                    .iter()
                    .copied()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |acc, (i, r)| if r < acc.1 { (i, r) } else { acc },
                    );
            let draw = &outcomes[best].0;
            StabilityReport {
                family: family.name(),
                n_modes: n,
                sample_count,
                seed,
                metric: family.metric(),
                min_ratio,
                argmin: StabilityWitness {
                    sample: best,
                    m: draw.m,
                    mp: draw.mp,
                    u: unit_prefix(&draw.u, n),
                    v: unit_prefix(&draw.v, n),
                },
                degenerate_samples: outcomes.iter().filter(|(_, o)| o.degenerate[slot]).count(),
                ratios,
            }
        })
        .collect();
    Ok(reports)
}

/// Sweep minima over nested subspaces: `(N, min)` where `min` runs over
/// every report with `n_modes <= N`. A coefficient vector drawn for a
/// smaller dimension embeds into `E_N`, so those ratios are candidates for
/// the infimum over `E_N` as well. Sorted by `N`.
pub fn nested_minima(reports: &[StabilityReport]) -> Vec<(usize, f64)> {
    let mut by_dim: Vec<(usize, f64)> = reports.iter().map(|r| (r.n_modes, r.min_ratio)).collect();
    by_dim.sort_by_key(|&(n, _)| n);
    let mut running = f64::INFINITY;
    by_dim
        .into_iter()
        .map(|(n, m)| {
            running = running.min(m);
            (n, running)
        })
        .collect()
}

/// Monte-Carlo minimum of the stability ratio over `sample_count` draws.
pub fn estimate_stability_constant(
    family: &dyn OperatorFamily,
    n_modes: usize,
    sample_count: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let mut reports = estimate_stability_sweep(family, &[n_modes], sample_count, seed)?;
    Ok(reports.remove(0))
}

/// `sigma_min / sigma_max` of `[d_q A_m | A_m]`.
///
/// With `modes = Some(N)` both blocks are first restricted to the leading
/// `N`-dimensional right subspace of `A_m`, i.e. the map is
/// `(u, v) -> d_q A_m u + A_m v` for `u`, `v` in that subspace.
pub fn u2_margin(
    family: &dyn OperatorFamily,
    m: Param,
    q: Param,
    modes: Option<usize>,
) -> Result<f64> {
    let a = family.matrix(m)?;
    let d = family.derivative(m, q)?;
    let stacked = match modes {
        None => d.hstack(&a)?,
        Some(n) => {
            let frame = leading_subspace(&a, n)?.right_frame();
            d.matmul(&frame)?.hstack(&a.matmul(&frame)?)?
        }
    };
    let sys = svd(&stacked)?;
    let largest = sys.sigma[0];
    if largest == 0.0 {
        return Ok(0.0);
    }
    let smallest = if stacked.rows() >= stacked.cols() {
        *sys.sigma.last().unwrap_or(&0.0)
    } else {
        // More unknowns than equations: the kernel is nontrivial.
        0.0
    };
    Ok(smallest / largest)
}

/// Margins at one grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct U2Point {
    pub m: Param,
    /// Angle of the unit direction `q = (cos, sin)`.
    pub direction: f64,
    /// Margin of the full block matrix.
    pub full: f64,
    /// Margin restricted to the leading right subspace.
    pub projected: f64,
}

/// [`u2_margin`] over a `steps x steps` parameter grid and `directions`
/// directions `q` equally spaced on the unit circle.
///
/// The first parameter component samples its range without the upper end
/// (for cracks `theta = pi / 2` is identified with `-pi / 2`); the second
/// includes both ends.
pub fn u2_sweep(
    family: &dyn OperatorFamily,
    steps: usize,
    directions: usize,
    modes: usize,
) -> Result<Vec<U2Point>> {
    let [(lo0, hi0), (lo1, hi1)] = family.domain();
    let first = |i: usize| lo0 + (hi0 - lo0) * i as f64 / steps as f64;
    let second = |j: usize| {
        if steps == 1 {
            0.5 * (lo1 + hi1)
        } else {
            lo1 + (hi1 - lo1) * j as f64 / (steps - 1) as f64
        }
    };
    let grid: Vec<(Param, f64)> = (0..steps)
        .flat_map(|i| {
            (0..steps).flat_map(move |j| {
                (0..directions).map(move |d| {
                    (
                        [first(i), second(j)],
                        2.0 * std::f64::consts::PI * d as f64 / directions as f64,
                    )
                })
            })
        })
        .collect();
    grid.into_par_iter()
        .map(|(m, angle)| {
            let q = [angle.cos(), angle.sin()];
            Ok(U2Point {
                m,
                direction: angle,
                full: u2_margin(family, m, q, None)?,
                projected: u2_margin(family, m, q, Some(modes))?,
            })
        })
        .collect()
}
