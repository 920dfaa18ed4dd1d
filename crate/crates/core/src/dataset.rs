//! Synthetic training pairs and their binary file format.
//!
//! A pair is built from a random crack: the top left singular vectors
//! `v_1..v_N` of the unscaled coarse operator are combined with a random
//! point `r` of the unit ball of `C^N`, and the normalized combination
//! `w / ||w||` is encoded as `[Re w; Im w]`. The target is `(theta, a)`.
//!
//! File layout (little-endian):
//!
//! ```text
//! "CRKD" | version u32 | count u64 | n_obs u32 | n_modes u32 | k f64 | R f64 | seed u64
//! count x ( 2 n_obs f32 inputs | 2 f32 normalized targets | 2 f32 raw (theta, a) )
//! ```

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{item_rng, stream, PhysicsConfig};
use crate::error::{Error, Result};
use crate::forward::{
    assemble_forward_matrix, CrackGeometry, ObservationSet, QuadratureGrid, SupportInterval,
};
use crate::linalg::{cnorm, combine};
use crate::spectral::leading_subspace;

pub const MAGIC: &[u8; 4] = b"CRKD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

/// Norm below which a synthetic measurement is redrawn.
const DEGENERATE_NORM: f64 = 1e-12;
const MAX_REDRAWS: usize = 16;
/// Samples generated per parallel batch when streaming to disk.
const WRITE_BATCH: usize = 4096;

/// Sampling ranges and discretization for training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub physics: PhysicsConfig,
    pub seed: u64,
    /// Range of the support center `o`.
    pub center_range: (f64, f64),
    /// Range of the support length `l`.
    pub length_range: (f64, f64),
}

impl SampleConfig {
    pub fn new(physics: PhysicsConfig, seed: u64) -> Self {
        Self {
            physics,
            seed,
            center_range: (-1.0, 1.0),
            length_range: (1.0, 3.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        let (o_lo, o_hi) = self.center_range;
        let (l_lo, l_hi) = self.length_range;
        if !(-1.0 <= o_lo && o_lo <= o_hi && o_hi <= 1.0) {
            return Err(Error::Config(format!(
                "center range [{o_lo}, {o_hi}] not inside [-1, 1]"
            )));
        }
        if !(1.0 <= l_lo && l_lo <= l_hi && l_hi <= 3.0) {
            return Err(Error::Config(format!(
                "length range [{l_lo}, {l_hi}] not inside [1, 3]"
            )));
        }
        Ok(())
    }
}

/// One synthetic measurement with its crack parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// `[Re(w / ||w||); Im(w / ||w||)]`.
    pub input: Vec<f64>,
    pub theta: f64,
    pub offset: f64,
}

impl TrainingSample {
    /// `(theta 2 / pi, a / a_max)`, both in `[-1, 1]`.
    pub fn normalized_target(&self, a_max: f64) -> [f64; 2] {
        normalize_target(self.theta, self.offset, a_max)
    }
}

pub fn normalize_target(theta: f64, offset: f64, a_max: f64) -> [f64; 2] {
    [theta * 2.0 / PI, offset / a_max]
}

pub fn denormalize_target(target: [f64; 2], a_max: f64) -> (f64, f64) {
    (target[0] * FRAC_PI_2, target[1] * a_max)
}

/// Uniform `theta`, `a`, `o`, `l` over the configured box.
pub fn sample_geometry_and_support(
    rng: &mut dyn RngCore,
    config: &SampleConfig,
) -> (CrackGeometry, SupportInterval) {
    let a_max = config.physics.a_max;
    let theta = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let offset = rng.random_range(-a_max..=a_max);
    let center = uniform(rng, config.center_range);
    let length = uniform(rng, config.length_range);
    (
        CrackGeometry::unchecked(theta, offset),
        SupportInterval::unchecked(center, length),
    )
}

fn uniform(rng: &mut dyn RngCore, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Uniform point of the unit ball of `C^dim`, viewed as `R^(2 dim)`.
pub fn sample_complex_ball(rng: &mut dyn RngCore, dim: usize) -> Vec<Complex64> {
    let g: Vec<f64> = (0..2 * dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let radius = u.powf(1.0 / (2 * dim) as f64);
    g.chunks(2)
        .map(|p| Complex64::new(p[0], p[1]) * (radius / norm))
        .collect()
}

/// Real encoding `[Re(w / ||w||); Im(w / ||w||)]` of a measurement.
pub fn encode_measurement(w: &[Complex64]) -> Result<Vec<f64>> {
    let norm = cnorm(w);
    if !(norm >= DEGENERATE_NORM) {
        return Err(Error::ZeroData);
    }
    let mut out = Vec::with_capacity(2 * w.len());
    out.extend(w.iter().map(|z| z.re / norm));
    out.extend(w.iter().map(|z| z.im / norm));
    Ok(out)
}

/// Leading left singular vectors of the unscaled coarse operator.
pub fn data_frame(
    physics: &PhysicsConfig,
    geom: &CrackGeometry,
    support: &SupportInterval,
) -> Result<Vec<Vec<Complex64>>> {
    let grid = QuadratureGrid::new(physics.n_quad)?;
    let obs = ObservationSet::from_config(physics);
    let a = assemble_forward_matrix(physics.wavenumber, geom, support, &grid, &obs, false)?;
    Ok(leading_subspace(&a.matrix, physics.n_modes)?.left)
}

/// Sample for given crack and ball coefficients.
pub fn sample_from_coefficients(
    physics: &PhysicsConfig,
    geom: &CrackGeometry,
    support: &SupportInterval,
    coeffs: &[Complex64],
) -> Result<TrainingSample> {
    let frame = data_frame(physics, geom, support)?;
    let w = combine(&frame, coeffs);
    Ok(TrainingSample {
        input: encode_measurement(&w)?,
        theta: geom.theta,
        offset: geom.offset,
    })
}

/// Draws a crack and a ball point and builds the corresponding sample.
pub fn make_sample(rng: &mut dyn RngCore, config: &SampleConfig) -> Result<TrainingSample> {
    let physics = &config.physics;
    let (geom, support) = sample_geometry_and_support(rng, config);
    let frame = data_frame(physics, &geom, &support)?;
    for _ in 0..MAX_REDRAWS {
        let r = sample_complex_ball(rng, physics.n_modes);
        let w = combine(&frame, &r);
        match encode_measurement(&w) {
            Ok(input) => {
                return Ok(TrainingSample {
                    input,
                    theta: geom.theta,
                    offset: geom.offset,
                })
            }
            Err(Error::ZeroData) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateSample(format!(
        "measurement norm below {DEGENERATE_NORM} after {MAX_REDRAWS} draws"
    )))
}

/// Samples `start..start + count`; sample `i` depends only on `(seed, i)`.
pub fn generate_samples(
    config: &SampleConfig,
    start: u64,
    count: usize,
) -> Result<Vec<TrainingSample>> {
    config.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(config.seed, stream::DATASET, start + i);
            make_sample(&mut rng, config)
        })
        .collect()
}

/// Metadata stored at the start of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub count: u64,
    pub n_obs: u32,
    pub n_modes: u32,
    pub wavenumber: f64,
    pub radius: f64,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn for_config(config: &SampleConfig, count: u64) -> Self {
        Self {
            version: VERSION,
            count,
            n_obs: config.physics.n_obs as u32,
            n_modes: config.physics.n_modes as u32,
            wavenumber: config.physics.wavenumber,
            radius: config.physics.radius,
            seed: config.seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.n_obs as usize
    }

    /// Bytes per record.
    pub fn record_len(&self) -> usize {
        4 * (self.input_dim() + 4)
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..16].copy_from_slice(&self.count.to_le_bytes());
        b[16..20].copy_from_slice(&self.n_obs.to_le_bytes());
        b[20..24].copy_from_slice(&self.n_modes.to_le_bytes());
        b[24..32].copy_from_slice(&self.wavenumber.to_le_bytes());
        b[32..40].copy_from_slice(&self.radius.to_le_bytes());
        b[40..48].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[0..4] != MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let header = Self {
            version: u32_at(4),
            count: u64_at(8),
            n_obs: u32_at(16),
            n_modes: u32_at(20),
            wavenumber: f64_at(24),
            radius: f64_at(32),
            seed: u64_at(40),
        };
        if header.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {} (expected {VERSION})",
                header.version
            )));
        }
        if header.n_obs == 0 {
            return Err(Error::Format(
                "dataset header has zero observation points".into(),
            ));
        }
        Ok(header)
    }
}

fn write_record(out: &mut impl Write, sample: &TrainingSample, a_max: f64) -> Result<()> {
    let target = sample.normalized_target(a_max);
    let values = sample
        .input
        .iter()
        .copied()
        .chain(target)
        .chain([sample.theta, sample.offset]);
    for v in values {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Writes samples to a new dataset file.
pub fn write_dataset(path: &Path, config: &SampleConfig, samples: &[TrainingSample]) -> Result<()> {
    let header = DatasetHeader::for_config(config, samples.len() as u64);
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header.to_bytes())?;
    for s in samples {
        if s.input.len() != header.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: header.input_dim(),
                actual: s.input.len(),
            });
        }
        write_record(&mut out, s, config.physics.a_max)?;
    }
    out.flush()?;
    Ok(())
}

/// Generates `count` samples and streams them to `path` in index order.
/// `progress` is called with the number of samples written so far.
pub fn generate_dataset(
    config: &SampleConfig,
    count: usize,
    path: &Path,
    mut progress: impl FnMut(usize),
) -> Result<DatasetHeader> {
    config.validate()?;
    let header = DatasetHeader::for_config(config, count as u64);
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header.to_bytes())?;
    let mut done = 0;
    while done < count {
        let batch = WRITE_BATCH.min(count - done);
        for s in generate_samples(config, done as u64, batch)? {
            write_record(&mut out, &s, config.physics.a_max)?;
        }
        done += batch;
        progress(done);
    }
    out.flush()?;
    Ok(header)
}

/// Dataset held in memory at storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    inputs: Vec<f32>,
    targets: Vec<f32>,
    raw: Vec<f32>,
}

/// Tolerance on the norm of stored inputs (f32 rounding).
const STORED_NORM_TOL: f64 = 1e-5;

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.header.input_dim()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        let d = self.input_dim();
        &self.inputs[i * d..(i + 1) * d]
    }

    /// Normalized target `(theta 2 / pi, a / a_max)`.
    pub fn target(&self, i: usize) -> [f32; 2] {
        [self.targets[2 * i], self.targets[2 * i + 1]]
    }

    /// Raw `(theta, a)`.
    pub fn raw(&self, i: usize) -> [f32; 2] {
        [self.raw[2 * i], self.raw[2 * i + 1]]
    }

    /// Builds an in-memory dataset from samples, rounding to f32.
    pub fn from_samples(config: &SampleConfig, samples: &[TrainingSample]) -> Self {
        let header = DatasetHeader::for_config(config, samples.len() as u64);
        let mut inputs = Vec::with_capacity(samples.len() * header.input_dim());
        let mut targets = Vec::with_capacity(2 * samples.len());
        let mut raw = Vec::with_capacity(2 * samples.len());
        for s in samples {
            inputs.extend(s.input.iter().map(|&x| x as f32));
            targets.extend(s.normalized_target(config.physics.a_max).map(|x| x as f32));
            raw.extend([s.theta as f32, s.offset as f32]);
        }
        Self {
            header,
            inputs,
            targets,
            raw,
        }
    }

    /// Subset of records in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.input_dim();
        let mut out = Self {
            header: DatasetHeader {
                count: indices.len() as u64,
                ..self.header
            },
            inputs: Vec::with_capacity(indices.len() * d),
            targets: Vec::with_capacity(2 * indices.len()),
            raw: Vec::with_capacity(2 * indices.len()),
        };
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.targets.extend(self.target(i));
            out.raw.extend(self.raw(i));
        }
        out
    }
}

/// Reads a dataset file, checking the header, length and unit-norm inputs.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    let mut head = [0u8; HEADER_LEN];
    reader
        .read_exact(&mut head)
        .map_err(|_| Error::Format("file shorter than dataset header".into()))?;
    let header = DatasetHeader::from_bytes(&head)?;
    let expected = HEADER_LEN as u64 + header.count * header.record_len() as u64;
    if file_len != expected {
        return Err(Error::Format(format!(
            "file has {file_len} bytes, header announces {expected} ({} records)",
            header.count
        )));
    }
    let d = header.input_dim();
    let n = header.count as usize;
    let mut inputs = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(2 * n);
    let mut raw = Vec::with_capacity(2 * n);
    let mut record = vec![0u8; header.record_len()];
    for i in 0..n {
        reader.read_exact(&mut record)?;
        let values: Vec<f32> = record
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let norm = values[..d]
            .iter()
            .map(|&x| f64::from(x).powi(2))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > STORED_NORM_TOL {
            return Err(Error::Format(format!(
                "record {i} input has norm {norm}, expected 1"
            )));
        }
        inputs.extend_from_slice(&values[..d]);
        targets.extend_from_slice(&values[d..d + 2]);
        raw.extend_from_slice(&values[d + 2..d + 4]);
    }
    Ok(Dataset {
        header,
        inputs,
        targets,
        raw,
    })
}
