//! Fully connected tanh network trained with ADAM on mean squared error.
//!
//! Parameters live in one flat vector, layer by layer: the `out x in`
//! row-major weight matrix followed by the bias. Batched passes keep
//! activations as `batch x width` row-major blocks and use
//! [`matrixmultiply::dgemm`].

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{item_rng, stream};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CRKM";
pub const VERSION: u32 = 1;
/// Hidden layer widths of every network.
pub const HIDDEN: [usize; 4] = [80, 80, 80, 80];

/// Role of a network in the three-network scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    /// Predicts normalized `theta` over the full range; used for its sign.
    Sign,
    /// Predicts `(theta, a)` for `theta < 0`.
    Negative,
    /// Predicts `(theta, a)` for `theta >= 0`.
    NonNegative,
    /// Any other use (tests, experiments).
    Generic,
}

impl NetworkKind {
    pub fn tag(self) -> u32 {
        match self {
            NetworkKind::Sign => 1,
            NetworkKind::Negative => 2,
            NetworkKind::NonNegative => 3,
            NetworkKind::Generic => 0,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        Ok(match tag {
            0 => NetworkKind::Generic,
            1 => NetworkKind::Sign,
            2 => NetworkKind::Negative,
            3 => NetworkKind::NonNegative,
            _ => return Err(Error::Format(format!("unknown network kind tag {tag}"))),
        })
    }

    /// Output width of the network.
    pub fn outputs(self) -> usize {
        match self {
            NetworkKind::Sign => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Sign => "n1",
            NetworkKind::Negative => "n2",
            NetworkKind::NonNegative => "n3",
            NetworkKind::Generic => "generic",
        }
    }
}

/// Multilayer perceptron with tanh hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths including input and output.
    widths: Vec<usize>,
    kind: NetworkKind,
    /// Inputs are multiplied by this factor before the first layer.
    input_scale: f64,
    params: Vec<f64>,
}

impl Mlp {
    /// Zero-initialized network.
    pub fn zeros(widths: &[usize], kind: NetworkKind, input_scale: f64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let count = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            widths: widths.to_vec(),
            kind,
            input_scale,
            params: vec![0.0; count],
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn glorot(
        widths: &[usize],
        kind: NetworkKind,
        input_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(widths, kind, input_scale)?;
        for l in 0..mlp.layers() {
            let (fan_in, fan_out) = (mlp.widths[l], mlp.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = mlp.layer_range(l);
            for p in &mut mlp.params[w] {
                *p = rng.random_range(-limit..=limit);
            }
        }
        Ok(mlp)
    }

    /// Standard network `input -> 80 -> 80 -> 80 -> 80 -> outputs` for a role.
    pub fn for_kind(
        input_dim: usize,
        kind: NetworkKind,
        input_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend(HIDDEN);
        widths.push(kind.outputs());
        Self::glorot(&widths, kind, input_scale, rng)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Index ranges of the weights and bias of layer `l`.
    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.widths[..l + 1]
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum();
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    /// Output for a single input.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut act: Vec<f64> = input.iter().map(|x| x * self.input_scale).collect();
        for l in 0..self.layers() {
            let (wr, br) = self.layer_range(l);
            let (fan_in, w, b) = (self.widths[l], &self.params[wr], &self.params[br]);
            let last = l + 1 == self.layers();
            act = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z = bias + row.iter().zip(&act).map(|(a, x)| a * x).sum::<f64>();
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
        }
        Ok(act)
    }

    /// Activations of every layer for a row-major batch; index 0 is the scaled input.
    fn forward_batch(&self, inputs: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(
            inputs
                .iter()
                .map(|x| x * self.input_scale)
                .collect::<Vec<f64>>(),
        );
        for l in 0..self.layers() {
            let (wr, br) = self.layer_range(l);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let mut z = vec![0.0; batch * fan_out];
            for row in z.chunks_exact_mut(fan_out) {
                row.copy_from_slice(&self.params[br.clone()]);
            }
            // Z = X W^T + 1 b^T
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_in,
                    fan_out,
                    1.0,
                    acts[l].as_ptr(),
                    fan_in as isize,
                    1,
                    self.params[wr].as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    z.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            if l + 1 < self.layers() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Outputs for a row-major batch of inputs.
    pub fn predict_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: inputs.len() % d,
            });
        }
        let batch = inputs.len() / d;
        Ok(self.forward_batch(inputs, batch).pop().unwrap())
    }

    /// Mean squared error over a batch (averaged over samples and outputs)
    /// and its gradient with respect to all parameters.
    pub fn loss_and_gradient(&self, inputs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (d, out) = (self.input_dim(), self.output_dim());
        let batch = inputs.len() / d;
        if batch == 0 || inputs.len() != batch * d || targets.len() != batch * out {
            return Err(Error::DimensionMismatch {
                expected: batch.max(1) * out,
                actual: targets.len(),
            });
        }
        let acts = self.forward_batch(inputs, batch);
        let scale = 1.0 / (batch * out) as f64;
        let prediction = &acts[self.layers()];
        let mut loss = 0.0;
        let mut delta: Vec<f64> = prediction
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let r = y - t;
                loss += r * r;
                2.0 * r * scale
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        for l in (0..self.layers()).rev() {
            let (wr, br) = self.layer_range(l);
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            // dW = delta^T X
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    batch,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    acts[l].as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    grad[wr.clone()].as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            let gb = &mut grad[br];
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta W) * (1 - a^2)
            let mut prev = vec![0.0; batch * fan_in];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    self.params[wr].as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for (p, a) in prev.iter_mut().zip(&acts[l]) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok((loss * scale, grad))
    }

    /// Writes the checkpoint format.
    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&self.kind.tag().to_le_bytes())?;
        out.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for &w in &self.widths {
            out.write_all(&(w as u32).to_le_bytes())?;
        }
        out.write_all(&(self.output_dim() as u32).to_le_bytes())?;
        out.write_all(&self.input_scale.to_le_bytes())?;
        out.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    /// Bytes before the parameters in a checkpoint.
    pub fn header_len(&self) -> usize {
        4 + 4 + 4 + 4 + 4 * self.widths.len() + 4 + 8 + 8
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::Format("checkpoint truncated".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let kind = NetworkKind::from_tag(read_u32(&mut input)?)?;
        let n_widths = read_u32(&mut input)? as usize;
        if !(2..=64).contains(&n_widths) {
            return Err(Error::Format(format!("implausible layer count {n_widths}")));
        }
        let widths = (0..n_widths)
            .map(|_| read_u32(&mut input).map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let out = read_u32(&mut input)? as usize;
        if widths.last() != Some(&out) {
            return Err(Error::Format(format!(
                "output width {out} disagrees with layers {widths:?}"
            )));
        }
        let mut scale = [0u8; 8];
        read_exact(&mut input, &mut scale)?;
        let input_scale = f64::from_le_bytes(scale);
        let mut mlp =
            Self::zeros(&widths, kind, input_scale).map_err(|e| Error::Format(e.to_string()))?;
        let mut count = [0u8; 8];
        read_exact(&mut input, &mut count)?;
        if u64::from_le_bytes(count) != mlp.params.len() as u64 {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameters, layers need {}",
                u64::from_le_bytes(count),
                mlp.params.len()
            )));
        }
        let mut buf = [0u8; 8];
        for p in &mut mlp.params {
            read_exact(&mut input, &mut buf)?;
            *p = f64::from_le_bytes(buf);
        }
        if !mlp.params.iter().all(|p| p.is_finite()) {
            return Err(Error::Format(
                "checkpoint contains non-finite parameters".into(),
            ));
        }
        if input.read(&mut buf)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(mlp)
    }
}

fn read_exact(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| Error::Format("checkpoint truncated".into()))
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn save_model(model: &Mlp, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    model.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Mlp> {
    Mlp::read_from(BufReader::new(File::open(path)?))
}

/// ADAM moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    /// One bias-corrected ADAM update of `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grad.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first.len(),
                actual: grad.len(),
            });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub input_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            seed: 1,
            validation_fraction: 0.05,
            input_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: Mlp,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub log: Vec<EpochLog>,
}

pub fn write_log_csv(log: &[EpochLog], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "epoch,train_mse,val_mse,wall_time")?;
    for e in log {
        writeln!(
            out,
            "{},{:.9e},{:.9e},{:.3}",
            e.epoch, e.train_mse, e.val_mse, e.wall_time
        )?;
    }
    Ok(())
}

/// Row-major inputs and targets in f64.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub input_dim: usize,
    pub output_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len().checked_div(self.output_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records of `dataset` relevant to a network role, with its targets.
    pub fn for_kind(dataset: &Dataset, kind: NetworkKind) -> Self {
        let mut set = Self {
            input_dim: dataset.input_dim(),
            output_dim: kind.outputs(),
            ..Self::default()
        };
        for i in 0..dataset.len() {
            let t = dataset.target(i);
            let keep = match kind {
                NetworkKind::Sign | NetworkKind::Generic => true,
                NetworkKind::Negative => dataset.raw(i)[0] < 0.0,
                NetworkKind::NonNegative => dataset.raw(i)[0] >= 0.0,
            };
            if !keep {
                continue;
            }
            set.inputs
                .extend(dataset.input(i).iter().map(|&x| f64::from(x)));
            match kind {
                NetworkKind::Sign => set.targets.push(f64::from(t[0])),
                _ => set.targets.extend(t.map(f64::from)),
            }
        }
        set
    }

    fn gather(&self, indices: &[usize], inputs: &mut Vec<f64>, targets: &mut Vec<f64>) {
        inputs.clear();
        targets.clear();
        for &i in indices {
            inputs.extend_from_slice(&self.inputs[i * self.input_dim..(i + 1) * self.input_dim]);
            targets
                .extend_from_slice(&self.targets[i * self.output_dim..(i + 1) * self.output_dim]);
        }
    }
}

fn mean_loss(model: &Mlp, set: &TrainingSet, indices: &[usize], chunk: usize) -> Result<f64> {
    let mut total = 0.0;
    let (mut xi, mut ti) = (Vec::new(), Vec::new());
    for part in indices.chunks(chunk.max(1)) {
        set.gather(part, &mut xi, &mut ti);
        let pred = model.predict_batch(&xi)?;
        total += pred
            .iter()
            .zip(&ti)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>();
    }
    Ok(total / (indices.len() * set.output_dim) as f64)
}

/// Minibatch ADAM starting from `model`; returns the best-validation
/// parameters. `on_epoch` sees each log line as it is produced.
pub fn train_model(
    mut model: Mlp,
    set: &TrainingSet,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyDataset(model.kind().name().to_string()));
    }
    if set.input_dim != model.input_dim() || set.output_dim != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: set.input_dim,
        });
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut item_rng(config.seed, stream::TRAIN, 0));
    let n_val = ((set.len() as f64) * config.validation_fraction).floor() as usize;
    let n_val = n_val.min(set.len() - 1);
    let (train_idx, val_idx) = order.split_at(set.len() - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let start = Instant::now();
    let mut adam = AdamState::new(model.param_count(), config.learning_rate);
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut log = Vec::new();
    let (mut xi, mut ti) = (Vec::new(), Vec::new());
    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut item_rng(config.seed, stream::TRAIN, epoch as u64));
        let mut sum = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            set.gather(batch, &mut xi, &mut ti);
            let (loss, grad) = model.loss_and_gradient(&xi, &ti)?;
            sum += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grad)?;
        }
        let train_mse = sum / train_idx.len() as f64;
        let val_mse = if val_idx.is_empty() {
            train_mse
        } else {
            mean_loss(&model, set, &val_idx, 4096)?
        };
        if !val_mse.is_finite() {
            return Err(Error::Config(format!("training diverged at epoch {epoch}")));
        }
        let entry = EpochLog {
            epoch,
            train_mse,
            val_mse,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
        if val_mse < best.2 {
            best = (model.clone(), epoch, val_mse);
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        best_val_mse: best.2,
        log,
    })
}

/// Trains the network for one role on its slice of the dataset.
pub fn train(
    kind: NetworkKind,
    dataset: &Dataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let set = TrainingSet::for_kind(dataset, kind);
    if set.is_empty() {
        return Err(Error::EmptyDataset(kind.name().to_string()));
    }
    let mut rng = item_rng(config.seed, stream::TRAIN, u64::MAX - u64::from(kind.tag()));
    let model = Mlp::for_kind(dataset.input_dim(), kind, config.input_scale, &mut rng)?;
    train_model(model, &set, config, on_epoch)
}
