//! Recovery of `(theta, a)` from data on the observation circle, noise
//! injection and the randomized evaluation protocol.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::config::{item_rng, stream};
pub use crate::dataset::encode_measurement;
use crate::dataset::{denormalize_target, sample_geometry_and_support, SampleConfig};
use crate::error::{Error, Result};
use crate::forward::{
    forward_data_for_case, BieOptions, CrackGeometry, Excitation, ObservationSet, SupportInterval,
};
use crate::nn::{load_model, save_model, Mlp, NetworkKind};

/// Where a measurement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Excitation case 1-4.
    Case(u8),
    Synthetic,
}

/// Values of the field at the observation points.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub data: Vec<Complex64>,
    pub provenance: Provenance,
}

impl Measurement {
    pub fn new(data: Vec<Complex64>, provenance: Provenance) -> Self {
        Self { data, provenance }
    }

    /// Largest absolute value over all real and imaginary parts.
    pub fn sup_norm(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|z| [z.re.abs(), z.im.abs()])
            .fold(0.0, f64::max)
    }
}

/// Uniform additive noise relative to the sup norm of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub amplitude: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { amplitude: 0.2 }
    }
}

/// Adds an independent `U[-amplitude, amplitude] * sup` draw to every real
/// coordinate, `sup` being the largest absolute real coordinate.
pub fn add_noise(
    meas: &Measurement,
    spec: &NoiseSpec,
    rng: &mut dyn RngCore,
) -> Result<Measurement> {
    if !(spec.amplitude >= 0.0) {
        return Err(Error::Config(format!(
            "noise amplitude must be non-negative, got {}",
            spec.amplitude
        )));
    }
    if spec.amplitude == 0.0 {
        return Ok(meas.clone());
    }
    let scale = meas.sup_norm();
    let a = spec.amplitude;
    let data = meas
        .data
        .iter()
        .map(|z| {
            let dr: f64 = rng.random_range(-a..=a);
            let di: f64 = rng.random_range(-a..=a);
            z + Complex64::new(dr * scale, di * scale)
        })
        .collect();
    Ok(Measurement {
        data,
        provenance: meas.provenance,
    })
}

/// The three networks of the routing scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub sign: Mlp,
    pub negative: Mlp,
    pub non_negative: Mlp,
    pub a_max: f64,
}

pub const MODEL_FILES: [(NetworkKind, &str); 3] = [
    (NetworkKind::Sign, "n1.crkm"),
    (NetworkKind::Negative, "n2.crkm"),
    (NetworkKind::NonNegative, "n3.crkm"),
];

impl ModelSet {
    pub fn new(sign: Mlp, negative: Mlp, non_negative: Mlp, a_max: f64) -> Result<Self> {
        let set = Self {
            sign,
            negative,
            non_negative,
            a_max,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let checks = [
            (&self.sign, NetworkKind::Sign),
            (&self.negative, NetworkKind::Negative),
            (&self.non_negative, NetworkKind::NonNegative),
        ];
        for (model, kind) in checks {
            if model.kind() != kind || model.output_dim() != kind.outputs() {
                return Err(Error::Config(format!(
                    "expected network {} with {} outputs, got {} with {}",
                    kind.name(),
                    kind.outputs(),
                    model.kind().name(),
                    model.output_dim()
                )));
            }
            if model.input_dim() != self.sign.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.sign.input_dim(),
                    actual: model.input_dim(),
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sign.input_dim()
    }

    /// Loads `n1.crkm`, `n2.crkm`, `n3.crkm` from a directory.
    pub fn load_dir(dir: &Path, a_max: f64) -> Result<Self> {
        let [n1, n2, n3] = MODEL_FILES.map(|(_, name)| load_model(&dir.join(name)));
        Self::new(n1?, n2?, n3?, a_max)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_model(&self.sign, &dir.join(MODEL_FILES[0].1))?;
        save_model(&self.negative, &dir.join(MODEL_FILES[1].1))?;
        save_model(&self.non_negative, &dir.join(MODEL_FILES[2].1))?;
        Ok(())
    }
}

/// Recovered crack parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub theta: f64,
    pub offset: f64,
    /// Whether the sign network routed to the `theta < 0` network.
    pub negative_branch: bool,
}

/// Largest admissible angle below `pi / 2`.
const THETA_UPPER: f64 = FRAC_PI_2 - 1e-12;

/// Recovery from an already encoded measurement.
pub fn recover_encoded(input: &[f64], models: &ModelSet) -> Result<Estimate> {
    let negative_branch = models.sign.forward(input)?[0] < 0.0;
    let model = if negative_branch {
        &models.negative
    } else {
        &models.non_negative
    };
    let out = model.forward(input)?;
    let (theta, offset) = denormalize_target([out[0], out[1]], models.a_max);
    Ok(Estimate {
        theta: theta.clamp(-FRAC_PI_2, THETA_UPPER),
        offset: offset.clamp(-models.a_max, models.a_max),
        negative_branch,
    })
}

/// Routes through the sign network, then applies the network for that sign.
pub fn recover(meas: &Measurement, models: &ModelSet) -> Result<Estimate> {
    if meas.data.len() * 2 != models.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: models.input_dim() / 2,
            actual: meas.data.len(),
        });
    }
    recover_encoded(&encode_measurement(&meas.data)?, models)
}

/// Largest change of `(sin theta_hat, a_hat)` when the data is multiplied by
/// `exp(i phi)` for `steps` equally spaced `phi` in `[0, 2 pi)`.
pub fn phase_sensitivity(
    meas: &Measurement,
    models: &ModelSet,
    steps: usize,
) -> Result<(f64, f64)> {
    let base = recover(meas, models)?;
    let mut drift = (0.0f64, 0.0f64);
    for s in 1..steps {
        let rot = Complex64::from_polar(1.0, 2.0 * PI * s as f64 / steps as f64);
        let turned = Measurement {
            data: meas.data.iter().map(|z| z * rot).collect(),
            provenance: meas.provenance,
        };
        let est = recover(&turned, models)?;
        drift.0 = drift.0.max((est.theta.sin() - base.theta.sin()).abs());
        drift.1 = drift.1.max((est.offset - base.offset).abs());
    }
    Ok(drift)
}

/// Parameters of the randomized evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub sampling: SampleConfig,
    pub trials: usize,
    pub seed: u64,
    /// Noise for the repeated noisy pass; `None` skips it.
    pub noise: Option<NoiseSpec>,
    pub bie: BieOptions,
}

/// One excitation with its random parameters.
pub fn sample_excitation(case: u8, rng: &mut dyn RngCore) -> Result<Excitation> {
    let polar = |r: f64, phi: f64| [r * phi.cos(), r * phi.sin()];
    Ok(match case {
        1 => Excitation::plane_wave_at_angle(rng.random_range(0.0..2.0 * PI)),
        2 => {
            let r = rng.random_range(3.0..=3.5);
            Excitation::NearSource {
                source: polar(r, rng.random_range(0.0..2.0 * PI)),
            }
        }
        3 => {
            let r = rng.random_range(5.0..=7.0);
            Excitation::FarSource {
                source: polar(r, rng.random_range(0.0..2.0 * PI)),
            }
        }
        4 => Excitation::Forcing,
        _ => return Err(Error::Config(format!("unknown excitation case {case}"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub case: u8,
    pub theta: f64,
    pub offset: f64,
    pub theta_hat: f64,
    pub offset_hat: f64,
    pub err_sin_theta: f64,
    pub err_offset: f64,
    pub noisy: bool,
    /// Wall time of the recovery call.
    pub micros: f64,
}

/// A trial whose data could not be produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Data for one random trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub trial: usize,
    pub geometry: CrackGeometry,
    pub support: SupportInterval,
    pub excitation: Excitation,
    pub measurement: Measurement,
    pub residual_warning: bool,
}

/// Draws crack, support and excitation for trial `index` and computes its
/// data.
pub fn trial_data(config: &EvalConfig, index: usize) -> Result<TrialData> {
    let mut rng = item_rng(config.seed, stream::EVAL, index as u64);
    let (geometry, support) = sample_geometry_and_support(&mut rng, &config.sampling);
    let case = rng.random_range(1..=4u8);
    let excitation = sample_excitation(case, &mut rng)?;
    let physics = &config.sampling.physics;
    let obs = ObservationSet::from_config(physics);
    let data = forward_data_for_case(
        physics.wavenumber,
        &obs,
        &excitation,
        &geometry,
        &support,
        &config.bie,
    )?;
    Ok(TrialData {
        trial: index,
        geometry,
        support,
        excitation,
        residual_warning: data.residual_warning(),
        measurement: Measurement::new(data.data, Provenance::Case(case)),
    })
}

fn score(
    data: &TrialData,
    meas: &Measurement,
    models: &ModelSet,
    noisy: bool,
) -> Result<TrialResult> {
    let start = Instant::now();
    let est = recover(meas, models)?;
    let micros = start.elapsed().as_secs_f64() * 1e6;
    let (theta, offset) = (data.geometry.theta, data.geometry.offset);
    Ok(TrialResult {
        trial: data.trial,
        case: data.excitation.case_id(),
        theta,
        offset,
        theta_hat: est.theta,
        offset_hat: est.offset,
        err_sin_theta: (est.theta.sin() - theta.sin()).abs(),
        err_offset: (est.offset - offset).abs(),
        noisy,
        micros,
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvaluationReport {
    pub clean: Vec<TrialResult>,
    pub noisy: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    /// Trials whose boundary solve had a large residual.
    pub residual_warnings: usize,
}

/// Mean errors of a set of trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean_err_sin_theta: f64,
    pub mean_err_offset: f64,
}

impl ErrorSummary {
    pub fn of<'a>(results: impl IntoIterator<Item = &'a TrialResult>) -> Self {
        let (mut count, mut s, mut a) = (0usize, 0.0, 0.0);
        for r in results {
            count += 1;
            s += r.err_sin_theta;
            a += r.err_offset;
        }
        let n = count.max(1) as f64;
        Self {
            count,
            mean_err_sin_theta: s / n,
            mean_err_offset: a / n,
        }
    }
}

impl EvaluationReport {
    pub fn clean_summary(&self) -> ErrorSummary {
        ErrorSummary::of(&self.clean)
    }

    pub fn noisy_summary(&self) -> ErrorSummary {
        ErrorSummary::of(&self.noisy)
    }

    /// `key=value` summary lines.
    pub fn summary(&self) -> String {
        let mut lines = Vec::new();
        let mut push = |label: &str, s: ErrorSummary| {
            lines.push(format!("{label}_trials={}", s.count));
            lines.push(format!(
                "{label}_mean_err_sin_theta={:.6}",
                s.mean_err_sin_theta
            ));
            lines.push(format!("{label}_mean_err_a={:.6}", s.mean_err_offset));
        };
        push("clean", self.clean_summary());
        for case in 1..=4u8 {
            push(
                &format!("clean_case{case}"),
                ErrorSummary::of(self.clean.iter().filter(|r| r.case == case)),
            );
        }
        if !self.noisy.is_empty() {
            push("noisy", self.noisy_summary());
        }
        let total_micros: f64 = self.clean.iter().map(|r| r.micros).sum();
        lines.push(format!(
            "clean_recover_total_seconds={:.6}",
            total_micros * 1e-6
        ));
        lines.push(format!("failures={}", self.failures.len()));
        lines.push(format!("residual_warnings={}", self.residual_warnings));
        lines.join("\n") + "\n"
    }

    /// Per-trial CSV with header
    /// `trial,case,theta,a,theta_hat,a_hat,err_sin_theta,err_a,noisy,micros`.
    pub fn write_trials_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(
            out,
            "trial,case,theta,a,theta_hat,a_hat,err_sin_theta,err_a,noisy,micros"
        )?;
        for r in self.clean.iter().chain(&self.noisy) {
            writeln!(
                out,
                "{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{},{:.3}",
                r.trial,
                r.case,
                r.theta,
                r.offset,
                r.theta_hat,
                r.offset_hat,
                r.err_sin_theta,
                r.err_offset,
                u8::from(r.noisy),
                r.micros
            )?;
        }
        Ok(())
    }

    /// Errors sorted increasingly, one column per curve:
    /// `rank,clean_err_sin_theta,clean_err_a,noisy_err_sin_theta,noisy_err_a`.
    pub fn write_sorted_errors_csv(&self, mut out: impl Write) -> io::Result<()> {
        let curves = [
            sorted_errors(&self.clean, |r| r.err_sin_theta),
            sorted_errors(&self.clean, |r| r.err_offset),
            sorted_errors(&self.noisy, |r| r.err_sin_theta),
            sorted_errors(&self.noisy, |r| r.err_offset),
        ];
        writeln!(
            out,
            "rank,clean_err_sin_theta,clean_err_a,noisy_err_sin_theta,noisy_err_a"
        )?;
        let rows = curves.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..rows {
            let cells: Vec<String> = curves
                .iter()
                .map(|c| c.get(i).map_or(String::new(), |v| format!("{v:.9}")))
                .collect();
            writeln!(out, "{},{}", i + 1, cells.join(","))?;
        }
        Ok(())
    }
}

/// Values of `field` sorted increasingly.
pub fn sorted_errors(results: &[TrialResult], field: impl Fn(&TrialResult) -> f64) -> Vec<f64> {
    let mut v: Vec<f64> = results.iter().map(field).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Clean result, optional noisy result and the residual warning flag.
type TrialOutcome = (TrialResult, Option<TrialResult>, bool);

/// Runs the randomized protocol: every trial draws a crack, a support and
/// one of the four excitations with equal probability, computes the data
/// and recovers `(theta, a)`. With noise configured, the same data is
/// recovered again after adding noise.
pub fn evaluate(models: &ModelSet, config: &EvalConfig) -> Result<EvaluationReport> {
    config.sampling.validate()?;
    let noise = config.noise;
    let outcomes: Vec<std::result::Result<TrialOutcome, TrialFailure>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let fail = |e: Error| TrialFailure {
                trial: i,
                message: e.to_string(),
            };
            let data = trial_data(config, i).map_err(fail)?;
            let clean = score(&data, &data.measurement, models, false).map_err(fail)?;
            let noisy = match noise {
                Some(spec) => {
                    let mut rng = item_rng(config.seed, stream::NOISE, i as u64);
                    let perturbed = add_noise(&data.measurement, &spec, &mut rng).map_err(fail)?;
                    Some(score(&data, &perturbed, models, true).map_err(fail)?)
                }
                None => None,
            };
            Ok((clean, noisy, data.residual_warning))
        })
        .collect();
    let mut report = EvaluationReport::default();
    for outcome in outcomes {
        match outcome {
            Ok((clean, noisy, warning)) => {
                report.clean.push(clean);
                report.noisy.extend(noisy);
                report.residual_warnings += usize::from(warning);
            }
            Err(f) => report.failures.push(f),
        }
    }
    Ok(report)
}
