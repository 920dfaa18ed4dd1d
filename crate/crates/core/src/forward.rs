//! Straight-crack forward model.
//!
//! A crack is the segment `y(t) = tau t + a n`, `t in [o - l/2, o + l/2]`, with
//! `tau = (cos theta, sin theta)` and `n = (-sin theta, cos theta)`. Densities
//! carry the inverse square-root endpoint singularity, which the substitution
//! `t = o + (l/2) sin v` removes: integrals over the crack become smooth
//! integrals in `v in [-pi/2, pi/2]` approximated by the trapezoidal rule.
//!
//! The coarse operator on the observation circle is assembled by
//! [`assemble_forward_matrix`]; [`solve_bie`] solves the first-kind
//! single-layer equation on a fine grid to produce data for physical
//! excitations.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::specfun::{helmholtz_green, helmholtz_green_dr, helmholtz_green_regular};
use crate::spectral::svd;

pub type Point = [f64; 2];

/// Crack orientation `theta` and offset `a` of the supporting line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackGeometry {
    pub theta: f64,
    pub offset: f64,
}

impl CrackGeometry {
    /// Admissible geometry: `theta in [-pi/2, pi/2)`, `|a| <= a_max`.
    pub fn new(theta: f64, offset: f64, a_max: f64) -> Result<Self> {
        if !(-FRAC_PI_2..FRAC_PI_2).contains(&theta) {
            return Err(Error::Config(format!(
                "theta = {theta} outside [-pi/2, pi/2)"
            )));
        }
        if !(offset.abs() <= a_max) {
            return Err(Error::Config(format!(
                "|a| = {} exceeds a_max = {a_max}",
                offset.abs()
            )));
        }
        Ok(Self { theta, offset })
    }

    /// Geometry without range checks, e.g. for rotated or reflected copies.
    pub fn unchecked(theta: f64, offset: f64) -> Self {
        Self { theta, offset }
    }

    pub fn tangent(&self) -> Point {
        [self.theta.cos(), self.theta.sin()]
    }

    pub fn normal(&self) -> Point {
        [-self.theta.sin(), self.theta.cos()]
    }
}

/// Support `[o - l/2, o + l/2]` of the density along the crack line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportInterval {
    pub center: f64,
    pub length: f64,
}

impl SupportInterval {
    /// Admissible support: `o in [-1, 1]`, `l in [1, 3]`.
    pub fn new(center: f64, length: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&center) {
            return Err(Error::Config(format!(
                "support center {center} outside [-1, 1]"
            )));
        }
        if !(1.0..=3.0).contains(&length) {
            return Err(Error::Config(format!(
                "support length {length} outside [1, 3]"
            )));
        }
        Ok(Self { center, length })
    }

    pub fn unchecked(center: f64, length: f64) -> Self {
        Self { center, length }
    }

    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.length
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.length
    }

    pub fn half_length(&self) -> f64 {
        0.5 * self.length
    }

    /// Line parameter `t` for the substitution variable `v`.
    pub fn line_parameter(&self, v: f64) -> f64 {
        self.center + self.half_length() * v.sin()
    }
}

/// Points `x_i = R (cos(2 pi i / N_S), sin(2 pi i / N_S))`, `i = 1..N_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub radius: f64,
    pub points: Vec<Point>,
}

impl ObservationSet {
    pub fn new(radius: f64, count: usize) -> Self {
        Self::with_rotation(radius, count, 0.0)
    }

    pub fn from_config(physics: &PhysicsConfig) -> Self {
        Self::new(physics.radius, physics.n_obs)
    }

    /// Same points rotated counter-clockwise by `angle`.
    pub fn with_rotation(radius: f64, count: usize, angle: f64) -> Self {
        let points = (1..=count)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / count as f64 + angle;
                [radius * phi.cos(), radius * phi.sin()]
            })
            .collect();
        Self { radius, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Uniform trapezoidal grid on `[-pi/2, pi/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub step: f64,
}

impl QuadratureGrid {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Config(format!(
                "quadrature grid needs at least 2 nodes, got {count}"
            )));
        }
        let step = PI / (count - 1) as f64;
        let nodes = (0..count).map(|j| -FRAC_PI_2 + j as f64 * step).collect();
        let mut weights = vec![1.0; count];
        weights[0] = 0.5;
        weights[count - 1] = 0.5;
        Ok(Self {
            nodes,
            weights,
            step,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Desingularized density values `psi~(v_j)` on a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector(pub Vec<Complex64>);

impl DensityVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Discretized operator from densities on the crack to the field on the
/// observation circle.
#[derive(Debug, Clone)]
pub struct ForwardMatrix {
    pub matrix: CMatrix,
    pub geometry: CrackGeometry,
    pub support: SupportInterval,
    pub n_quad: usize,
    /// Whether the constant `(l/2) pi / (N_Gamma - 1)` is included.
    pub scaled: bool,
}

/// Point `tau (o + (l/2) sin v) + a n` of the crack.
pub fn crack_point(geom: &CrackGeometry, support: &SupportInterval, v: f64) -> Point {
    point_at(geom, support.line_parameter(v))
}

fn point_at(geom: &CrackGeometry, t: f64) -> Point {
    let tau = geom.tangent();
    let n = geom.normal();
    [
        tau[0] * t + geom.offset * n[0],
        tau[1] * t + geom.offset * n[1],
    ]
}

fn dist(x: Point, y: Point) -> f64 {
    (x[0] - y[0]).hypot(x[1] - y[1])
}

/// Smallest distance between the crack segment and the observation circle.
///
/// `|y(t)|^2 = t^2 + a^2` is convex in `t`, so the farthest segment point from
/// the origin is an endpoint.
pub fn min_distance_to_circle(
    geom: &CrackGeometry,
    support: &SupportInterval,
    obs: &ObservationSet,
) -> f64 {
    let t_max = support.start().abs().max(support.end().abs());
    obs.radius - t_max.hypot(geom.offset)
}

/// Euclidean distance from `x` to the crack segment.
pub fn distance_to_crack(geom: &CrackGeometry, support: &SupportInterval, x: Point) -> f64 {
    let tau = geom.tangent();
    let n = geom.normal();
    let along = x[0] * tau[0] + x[1] * tau[1];
    let across = x[0] * n[0] + x[1] * n[1] - geom.offset;
    let clamped = along.clamp(support.start(), support.end());
    (along - clamped).hypot(across)
}

/// Coarse operator `A_{m,app}` with entries `w_j Phi(x_i, y(v_j))`, times
/// `(l/2) pi / (N_Gamma - 1)` when `include_scale` is set.
pub fn assemble_forward_matrix(
    wavenumber: f64,
    geom: &CrackGeometry,
    support: &SupportInterval,
    grid: &QuadratureGrid,
    obs: &ObservationSet,
    include_scale: bool,
) -> Result<ForwardMatrix> {
    let scale = if include_scale {
        support.half_length() * grid.step
    } else {
        1.0
    };
    let nodes: Vec<Point> = grid
        .nodes
        .iter()
        .map(|&v| crack_point(geom, support, v))
        .collect();
    let mut matrix = CMatrix::zeros(obs.len(), grid.len());
    for (i, &x) in obs.points.iter().enumerate() {
        for (j, &y) in nodes.iter().enumerate() {
            matrix[(i, j)] = helmholtz_green(wavenumber, dist(x, y))? * (grid.weights[j] * scale);
        }
    }
    Ok(ForwardMatrix {
        matrix,
        geometry: *geom,
        support: *support,
        n_quad: grid.len(),
        scaled: include_scale,
    })
}

/// Field on the observation circle produced by a density.
pub fn forward_apply(a: &ForwardMatrix, psi: &DensityVector) -> Result<Vec<Complex64>> {
    a.matrix.mul_vec(&psi.0)
}

/// Parameter derivatives `(dA/dtheta, dA/da)` of the coarse operator.
///
/// Built from `grad_y Phi(x, y) = (i k / 4) H^(1)_1(k |x - y|) (x - y) / |x - y|`
/// contracted with `dy/dtheta = n t - a tau` and `dy/da = n`.
pub fn derivative_matrices(
    wavenumber: f64,
    geom: &CrackGeometry,
    support: &SupportInterval,
    grid: &QuadratureGrid,
    obs: &ObservationSet,
    include_scale: bool,
) -> Result<(ForwardMatrix, ForwardMatrix)> {
    let scale = if include_scale {
        support.half_length() * grid.step
    } else {
        1.0
    };
    let tau = geom.tangent();
    let n = geom.normal();
    let mut d_theta = CMatrix::zeros(obs.len(), grid.len());
    let mut d_offset = CMatrix::zeros(obs.len(), grid.len());
    for (j, &v) in grid.nodes.iter().enumerate() {
        let t = support.line_parameter(v);
        let y = point_at(geom, t);
        let dy_dtheta = [
            n[0] * t - geom.offset * tau[0],
            n[1] * t - geom.offset * tau[1],
        ];
        for (i, &x) in obs.points.iter().enumerate() {
            let r = dist(x, y);
            // grad_y Phi = Phi'(r) (y - x) / r
            let radial = helmholtz_green_dr(wavenumber, r)? / r;
            let gx = radial * (y[0] - x[0]);
            let gy = radial * (y[1] - x[1]);
            let w = grid.weights[j] * scale;
            d_theta[(i, j)] = (gx * dy_dtheta[0] + gy * dy_dtheta[1]) * w;
            d_offset[(i, j)] = (gx * n[0] + gy * n[1]) * w;
        }
    }
    let wrap = |matrix| ForwardMatrix {
        matrix,
        geometry: *geom,
        support: *support,
        n_quad: grid.len(),
        scaled: include_scale,
    };
    Ok((wrap(d_theta), wrap(d_offset)))
}

/// Excitations used to produce test data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Excitation {
    /// Case 1: plane wave `exp(i k x . eta)`, `|eta| = 1`.
    PlaneWave { direction: Point },
    /// Case 2: point source between crack and observation circle, `|s| in [3, 3.5]`.
    NearSource { source: Point },
    /// Case 3: point source outside the observation circle, `|s| in [5, 7]`.
    FarSource { source: Point },
    /// Case 4: prescribed density `psi(t) = y_1(t) - i cos y_2(t)`.
    Forcing,
}

impl Excitation {
    pub fn case_id(&self) -> u8 {
        match self {
            Excitation::PlaneWave { .. } => 1,
            Excitation::NearSource { .. } => 2,
            Excitation::FarSource { .. } => 3,
            Excitation::Forcing => 4,
        }
    }

    pub fn plane_wave_at_angle(angle: f64) -> Self {
        Excitation::PlaneWave {
            direction: [angle.cos(), angle.sin()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Excitation::PlaneWave { direction } => {
                let norm = direction[0].hypot(direction[1]);
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "plane wave direction has norm {norm}, expected 1"
                    )));
                }
            }
            Excitation::NearSource { source } => check_source_radius(source, 3.0, 3.5)?,
            Excitation::FarSource { source } => check_source_radius(source, 5.0, 7.0)?,
            Excitation::Forcing => {}
        }
        Ok(())
    }

    fn source(&self) -> Option<Point> {
        match *self {
            Excitation::NearSource { source } | Excitation::FarSource { source } => Some(source),
            _ => None,
        }
    }
}

fn check_source_radius(source: Point, lo: f64, hi: f64) -> Result<()> {
    let r = source[0].hypot(source[1]);
    // Small slack for sources built from polar coordinates.
    if r < lo - 1e-12 || r > hi + 1e-12 {
        return Err(Error::Config(format!(
            "source radius {r} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Incident field at `x`; zero for the prescribed-density case.
pub fn incident_field(wavenumber: f64, excitation: &Excitation, x: Point) -> Result<Complex64> {
    match *excitation {
        Excitation::PlaneWave { direction } => {
            let phase = wavenumber * (x[0] * direction[0] + x[1] * direction[1]);
            Ok(Complex64::from_polar(1.0, phase))
        }
        Excitation::NearSource { source } | Excitation::FarSource { source } => {
            helmholtz_green(wavenumber, dist(x, source))
        }
        Excitation::Forcing => Ok(Complex64::new(0.0, 0.0)),
    }
}

/// Discretization parameters of the boundary integral solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BieOptions {
    pub n_dense: usize,
    /// Singular values below `trunc_tol * sigma_max` are discarded.
    pub trunc_tol: f64,
}

impl Default for BieOptions {
    fn default() -> Self {
        Self {
            n_dense: 256,
            trunc_tol: 1e-10,
        }
    }
}

/// Relative residual above which a solve is reported as suspicious.
pub const RESIDUAL_WARNING: f64 = 1e-2;

/// Density on the dense grid with solve diagnostics.
#[derive(Debug, Clone)]
pub struct BieSolution {
    pub density: DensityVector,
    pub grid: QuadratureGrid,
    /// `||S psi - g|| / ||g||`.
    pub relative_residual: f64,
    /// Singular values kept by the truncated solve.
    pub rank: usize,
}

impl BieSolution {
    pub fn residual_warning(&self) -> bool {
        self.relative_residual > RESIDUAL_WARNING
    }
}

/// Crack points at the nodes of a grid.
pub fn grid_points(
    geom: &CrackGeometry,
    support: &SupportInterval,
    grid: &QuadratureGrid,
) -> Vec<Point> {
    grid.nodes
        .iter()
        .map(|&v| crack_point(geom, support, v))
        .collect()
}

/// `int ln|y(v) - y(v_j)| dv` over the panel of node `j` (half panel at the ends).
///
/// Interior nodes: `|y(v) - y_j| ~ c |v - v_j|` with `c = (l/2) cos v_j`.
/// End nodes: `cos v_j = 0` and `|y(v) - y_j| ~ (l/4) (v - v_j)^2`.
fn self_panel_log_integral(support: &SupportInterval, grid: &QuadratureGrid, j: usize) -> f64 {
    let h = grid.step;
    if j == 0 || j + 1 == grid.len() {
        let half = 0.5 * h;
        half * (0.5 * support.half_length()).ln() + 2.0 * (half * half.ln() - half)
    } else {
        let c = support.half_length() * grid.nodes[j].cos();
        h * ((0.5 * c * h).ln() - 1.0)
    }
}

/// Collocation matrix of the single-layer operator on the crack itself.
///
/// Off-diagonal entries use the trapezoidal rule; diagonal entries split
/// `Phi = -ln|x - y| / (2 pi) + Phi_reg` and integrate the logarithm over
/// the node's own panel analytically.
pub fn single_layer_matrix(
    wavenumber: f64,
    geom: &CrackGeometry,
    support: &SupportInterval,
    grid: &QuadratureGrid,
) -> Result<CMatrix> {
    let pts = grid_points(geom, support, grid);
    let n = grid.len();
    let half = support.half_length();
    let h = grid.step;
    let mut s = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = if i == j {
                let regular = helmholtz_green_regular(wavenumber, 0.0) * (grid.weights[j] * h);
                let log_part = self_panel_log_integral(support, grid, j) / (2.0 * PI);
                (regular - log_part) * half
            } else {
                helmholtz_green(wavenumber, dist(pts[i], pts[j]))? * (grid.weights[j] * h * half)
            };
        }
    }
    Ok(s)
}

/// Solves the first-kind equation `S psi~ = g` on a dense grid by truncated SVD.
///
/// `g` holds the Dirichlet data sampled at the dense nodes
/// (see [`grid_points`]).
pub fn solve_bie(
    wavenumber: f64,
    geom: &CrackGeometry,
    support: &SupportInterval,
    g: &[Complex64],
    options: &BieOptions,
) -> Result<BieSolution> {
    if options.n_dense < 64 {
        return Err(Error::Config(format!(
            "n_dense must be at least 64, got {}",
            options.n_dense
        )));
    }
    if g.len() != options.n_dense {
        return Err(Error::DimensionMismatch {
            expected: options.n_dense,
            actual: g.len(),
        });
    }
    let grid = QuadratureGrid::new(options.n_dense)?;
    let s = single_layer_matrix(wavenumber, geom, support, &grid)?;
    let sys = svd::svd(&s)?;
    let sigma_max = sys.sigma[0];
    if sigma_max == 0.0 {
        return Err(Error::SingularSystem);
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut rank = 0;
    for ((sigma, l), r) in sys.sigma.iter().zip(&sys.left).zip(&sys.right) {
        if *sigma < options.trunc_tol * sigma_max {
            break;
        }
        rank += 1;
        let coeff = crate::linalg::cdot(l, g) / *sigma;
        for (p, ri) in psi.iter_mut().zip(r) {
            *p += coeff * ri;
        }
    }
    let applied = s.mul_vec(&psi)?;
    let g_norm = crate::linalg::cnorm(g);
    let relative_residual = if g_norm > 0.0 {
        crate::linalg::cnorm(&crate::linalg::csub(&applied, g)) / g_norm
    } else {
        0.0
    };
    Ok(BieSolution {
        density: DensityVector(psi),
        grid,
        relative_residual,
        rank,
    })
}

/// Single-layer potential `(l/2) int Phi(x, y(v)) psi~(v) dv` of a density on
/// a grid, evaluated anywhere off the crack.
///
/// Points far from the crack use the trapezoidal rule directly. Near the
/// crack the logarithmic part of the kernel is integrated exactly against
/// the Chebyshev interpolant of `psi~` (the nodes `sin v_j` are
/// Chebyshev-Lobatto points), which keeps the result accurate down to
/// distances far below the node spacing.
pub struct PotentialEvaluator<'a> {
    wavenumber: f64,
    geom: CrackGeometry,
    support: SupportInterval,
    grid: &'a QuadratureGrid,
    density: &'a DensityVector,
    nodes: Vec<Point>,
    chebyshev: Vec<Complex64>,
    near_distance: f64,
}

impl<'a> PotentialEvaluator<'a> {
    pub fn new(
        wavenumber: f64,
        geom: &CrackGeometry,
        support: &SupportInterval,
        grid: &'a QuadratureGrid,
        density: &'a DensityVector,
    ) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: density.len(),
            });
        }
        Ok(Self {
            wavenumber,
            geom: *geom,
            support: *support,
            grid,
            density,
            nodes: grid_points(geom, support, grid),
            chebyshev: chebyshev_coefficients(&density.0),
            near_distance: 8.0 * support.half_length() * grid.step,
        })
    }

    pub fn potential(&self, x: Point) -> Result<Complex64> {
        let half = self.support.half_length();
        let h = self.grid.step;
        let d = distance_to_crack(&self.geom, &self.support, x);
        if d > self.near_distance {
            let mut sum = Complex64::new(0.0, 0.0);
            for ((y, w), psi) in self
                .nodes
                .iter()
                .zip(&self.grid.weights)
                .zip(&self.density.0)
            {
                sum += helmholtz_green(self.wavenumber, dist(x, *y))? * (*w) * psi;
            }
            return Ok(sum * (half * h));
        }
        if d == 0.0 {
            return Err(Error::Domain {
                function: "single_layer_potential",
                x: d,
                requirement: "evaluation point off the crack",
            });
        }
        let mut regular = Complex64::new(0.0, 0.0);
        for ((y, w), psi) in self
            .nodes
            .iter()
            .zip(&self.grid.weights)
            .zip(&self.density.0)
        {
            regular += helmholtz_green_regular(self.wavenumber, dist(x, *y)) * (*w) * psi;
        }
        let log_part = self.log_integral(x);
        Ok((regular * h - log_part / (2.0 * PI)) * half)
    }

    /// `int ln|x - y(s)| psi~(s) / sqrt(1 - s^2) ds` for the interpolated density.
    fn log_integral(&self, x: Point) -> Complex64 {
        let tau = self.geom.tangent();
        let n = self.geom.normal();
        let half = self.support.half_length();
        let along = x[0] * tau[0] + x[1] * tau[1] - self.support.center;
        let across = x[0] * n[0] + x[1] * n[1] - self.geom.offset;
        let z = Complex64::new(along / half, across / half);
        let one = Complex64::new(1.0, 0.0);
        let mut w = z + (z - one).sqrt() * (z + one).sqrt();
        if w.norm() < 1.0 {
            w = one / w;
        }
        // (1/pi) int ln|z - s| T_0 / sqrt(1 - s^2) ds = ln(|w| / 2)
        // (1/pi) int ln|z - s| T_m / sqrt(1 - s^2) ds = -Re(w^-m) / m
        let winv = one / w;
        let mut power = one;
        let mut total = self.chebyshev[0] * (half.ln() + (0.5 * w.norm()).ln());
        for (m, c) in self.chebyshev.iter().enumerate().skip(1) {
            power *= winv;
            total -= c * (power.re / m as f64);
        }
        total * PI
    }
}

/// Chebyshev coefficients of the interpolant through values at `s_j = sin v_j`.
fn chebyshev_coefficients(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    let last = n - 1;
    // s_j = -cos(j pi / last), so T_m(s_j) = (-1)^m cos(m j pi / last).
    let cos_table: Vec<f64> = (0..2 * last)
        .map(|k| (k as f64 * PI / last as f64).cos())
        .collect();
    (0..n)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let w = if j == 0 || j == last { 0.5 } else { 1.0 };
                acc += v * (w * cos_table[(m * j) % (2 * last)]);
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let edge = if m == 0 || m == last { 0.5 } else { 1.0 };
            acc * (sign * edge * 2.0 / last as f64)
        })
        .collect()
}

/// Scattered data on the observation circle for one excitation, computed on
/// a dense grid.
#[derive(Debug, Clone)]
pub struct CaseData {
    pub data: Vec<Complex64>,
    pub density: DensityVector,
    pub grid: QuadratureGrid,
    /// Residual of the boundary solve; zero for the prescribed density.
    pub relative_residual: f64,
}

impl CaseData {
    pub fn residual_warning(&self) -> bool {
        self.relative_residual > RESIDUAL_WARNING
    }
}

/// Density of case 4, `psi(t) = y_1(t) - i cos y_2(t)`, desingularized to
/// `psi~ = psi cos v`.
pub fn forcing_density(
    geom: &CrackGeometry,
    support: &SupportInterval,
    grid: &QuadratureGrid,
) -> DensityVector {
    DensityVector(
        grid.nodes
            .iter()
            .map(|&v| {
                let y = crack_point(geom, support, v);
                Complex64::new(y[0], -y[1].cos()) * v.cos()
            })
            .collect(),
    )
}

/// Data vector on the observation points for one excitation.
///
/// Cases 1-3 impose `u = -u_inc` on the crack, solve for the density and
/// integrate it against the kernel at the observation points. Case 4 applies
/// the dense forward map to the prescribed density.
pub fn forward_data_for_case(
    wavenumber: f64,
    obs: &ObservationSet,
    excitation: &Excitation,
    geom: &CrackGeometry,
    support: &SupportInterval,
    options: &BieOptions,
) -> Result<CaseData> {
    excitation.validate()?;
    let (density, grid, relative_residual) = match excitation {
        Excitation::Forcing => {
            let grid = QuadratureGrid::new(options.n_dense)?;
            (forcing_density(geom, support, &grid), grid, 0.0)
        }
        _ => {
            let grid = QuadratureGrid::new(options.n_dense)?;
            let g = grid_points(geom, support, &grid)
                .into_iter()
                .map(|y| incident_field(wavenumber, excitation, y).map(|u| -u))
                .collect::<Result<Vec<_>>>()?;
            let sol = solve_bie(wavenumber, geom, support, &g, options)?;
            (sol.density, sol.grid, sol.relative_residual)
        }
    };
    let dense = assemble_forward_matrix(wavenumber, geom, support, &grid, obs, true)?;
    let data = forward_apply(&dense, &density)?;
    Ok(CaseData {
        data,
        density,
        grid,
        relative_residual,
    })
}

/// Rectangular sampling window for field plots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl FieldGridSpec {
    /// Square window `[-extent, extent]^2` with `resolution` points per side.
    pub fn square(extent: f64, resolution: usize) -> Self {
        Self {
            x_min: -extent,
            x_max: extent,
            y_min: -extent,
            y_max: extent,
            nx: resolution,
            ny: resolution,
        }
    }

    fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let step = |lo: f64, hi: f64, count: usize, i: usize| {
            if count <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        };
        (0..self.ny).flat_map(move |iy| {
            (0..self.nx).map(move |ix| {
                [
                    step(self.x_min, self.x_max, self.nx, ix),
                    step(self.y_min, self.y_max, self.ny, iy),
                ]
            })
        })
    }
}

/// Points closer than this to the crack (or to a point source) are masked.
pub const MASK_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub point: Point,
    /// Incident plus scattered field; NaN where masked.
    pub total: Complex64,
    pub masked: bool,
}

/// Total field on a rectangular grid of points.
pub fn total_field_grid(
    wavenumber: f64,
    obs: &ObservationSet,
    excitation: &Excitation,
    geom: &CrackGeometry,
    support: &SupportInterval,
    spec: &FieldGridSpec,
    options: &BieOptions,
) -> Result<Vec<FieldSample>> {
    let points: Vec<Point> = spec.points().collect();
    total_field_at(wavenumber, obs, excitation, geom, support, &points, options)
}

/// Total field (incident plus scattered) at arbitrary points.
pub fn total_field_at(
    wavenumber: f64,
    obs: &ObservationSet,
    excitation: &Excitation,
    geom: &CrackGeometry,
    support: &SupportInterval,
    points: &[Point],
    options: &BieOptions,
) -> Result<Vec<FieldSample>> {
    let case = forward_data_for_case(wavenumber, obs, excitation, geom, support, options)?;
    let evaluator = PotentialEvaluator::new(wavenumber, geom, support, &case.grid, &case.density)?;
    let source = excitation.source();
    points
        .iter()
        .map(|&x| {
            // points placed exactly MASK_DISTANCE away stay visible despite rounding
            let cutoff = MASK_DISTANCE * (1.0 - 1e-9);
            let near_source = source.is_some_and(|s| dist(x, s) < cutoff);
            if near_source || distance_to_crack(geom, support, x) < cutoff {
                return Ok(FieldSample {
                    point: x,
                    total: Complex64::new(f64::NAN, f64::NAN),
                    masked: true,
                });
            }
            let total = incident_field(wavenumber, excitation, x)? + evaluator.potential(x)?;
            Ok(FieldSample {
                point: x,
                total,
                masked: false,
            })
        })
        .collect()
}
