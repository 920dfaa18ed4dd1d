use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use crackscat::config::PhysicsConfig;
use crackscat::dataset::{generate_dataset, load_dataset, DatasetHeader, SampleConfig, HEADER_LEN};
use crackscat::forward::{
    total_field_grid, BieOptions, CrackGeometry, Excitation, FieldGridSpec, ObservationSet,
    SupportInterval,
};
use crackscat::inverse::{evaluate, EvalConfig, ModelSet, NoiseSpec};
use crackscat::nn::{self, save_model, write_log_csv, Mlp, NetworkKind, TrainConfig};
use crackscat::spectral::{
    estimate_stability_sweep, nested_minima, u2_sweep, BrokenFamily, CrackFamily, GenericExample1,
    GenericExample2, OperatorFamily, StabilityReport,
};
use crackscat::Error;

use crate::settings::Resolver;
use crate::{FamilyArg, NetArg, PhysicsArgs};

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn gen_data(
    mut r: Resolver,
    count: Option<usize>,
    out: &Path,
    seed: Option<u64>,
    physics: &PhysicsArgs,
) -> Result<()> {
    let physics = r.physics(physics)?;
    let count = r.get("count", count, 100_000)?;
    let seed = r.get("seed", seed, 1)?;
    r.finish()?;
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()).into());
    }
    let config = SampleConfig::new(physics, seed);
    let start = Instant::now();
    generate_dataset(&config, count, out, |done| {
        eprintln!(
            "gen-data: {done}/{count} samples ({:.1} s)",
            start.elapsed().as_secs_f64()
        );
    })
    .with_context(|| format!("writing {}", out.display()))?;
    write_text(&sibling(out, ".config"), &r.echo())?;
    eprintln!(
        "gen-data: wrote {} ({:.0} samples/s)",
        out.display(),
        count as f64 / start.elapsed().as_secs_f64()
    );
    Ok(())
}

pub struct TrainFlags {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub val_fraction: Option<f64>,
    pub input_scale: Option<f64>,
    pub seed: Option<u64>,
}

pub fn train(
    mut r: Resolver,
    data: &Path,
    net: NetArg,
    out: &Path,
    log: Option<PathBuf>,
    flags: TrainFlags,
) -> Result<()> {
    let dataset = load_dataset(data).with_context(|| format!("loading {}", data.display()))?;
    let kind = match net {
        NetArg::N1 => NetworkKind::Sign,
        NetArg::N2 => NetworkKind::Negative,
        NetArg::N3 => NetworkKind::NonNegative,
    };
    let d = TrainConfig::default();
    let config = TrainConfig {
        max_epochs: r.get("epochs", flags.epochs, 300)?,
        learning_rate: r.get("lr", flags.lr, d.learning_rate)?,
        batch_size: r.get("batch_size", flags.batch_size, d.batch_size)?,
        patience: r.get("patience", flags.patience, d.patience)?,
        validation_fraction: r.get("val_fraction", flags.val_fraction, d.validation_fraction)?,
        input_scale: r.get(
            "input_scale",
            flags.input_scale,
            (dataset.input_dim() as f64).sqrt(),
        )?,
        seed: r.get("seed", flags.seed, d.seed)?,
    };
    r.finish()?;
    config.validate()?;
    let log_path = log.unwrap_or_else(|| sibling(out, ".log.csv"));
    let outcome = nn::train(kind, &dataset, &config, &mut |e| {
        eprintln!(
            "train {}: epoch {} train_mse {:.6e} val_mse {:.6e} ({:.1} s)",
            kind.name(),
            e.epoch,
            e.train_mse,
            e.val_mse,
            e.wall_time
        );
    })?;
    save_model(&outcome.model, out).with_context(|| format!("writing {}", out.display()))?;
    let h = &dataset.header;
    let mut echo = format!(
        "net={}\ndata={}\ndata_seed={}\ndata_count={}\nwavenumber={}\nradius={}\nn_obs={}\nn_modes={}\n",
        kind.name(),
        data.display(),
        h.seed,
        h.count,
        h.wavenumber,
        h.radius,
        h.n_obs,
        h.n_modes
    );
    echo.push_str(&r.echo());
    echo.push_str(&format!(
        "best_epoch={}\nbest_val_mse={:.9e}\n",
        outcome.best_epoch, outcome.best_val_mse
    ));
    write_text(&sibling(out, ".config"), &echo)?;
    let mut log_out = create(&log_path)?;
    for line in echo.lines() {
        writeln!(log_out, "# {line}")?;
    }
    write_log_csv(&outcome.log, &mut log_out)?;
    log_out.flush()?;
    println!("{echo}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    mut r: Resolver,
    models: &Path,
    trials: Option<usize>,
    noise: Option<f64>,
    seed: Option<u64>,
    out: &Path,
    sorted_out: Option<PathBuf>,
    n_dense: Option<usize>,
    physics: &PhysicsArgs,
) -> Result<()> {
    let physics = r.physics(physics)?;
    let trials = r.get("trials", trials, 1000)?;
    let amplitude = r.get("noise", noise, 0.2)?;
    let seed = r.get("seed", seed, 2)?;
    let n_dense = r.get("n_dense", n_dense, BieOptions::default().n_dense)?;
    r.finish()?;
    let set = ModelSet::load_dir(models, physics.a_max)
        .with_context(|| format!("loading models from {}", models.display()))?;
    if set.input_dim() != physics.input_dim() {
        bail!(Error::Config(format!(
            "models expect {} inputs but n_obs = {} gives {}",
            set.input_dim(),
            physics.n_obs,
            physics.input_dim()
        )));
    }
    let config = EvalConfig {
        sampling: SampleConfig::new(physics, seed),
        trials,
        seed,
        noise: (amplitude > 0.0).then_some(NoiseSpec { amplitude }),
        bie: BieOptions {
            n_dense,
            ..BieOptions::default()
        },
    };
    let start = Instant::now();
    let report = evaluate(&set, &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    for f in &report.failures {
        eprintln!("eval: trial {} failed: {}", f.trial, f.message);
    }
    let mut csv = create(out)?;
    csv.write_all(r.echo_comment().as_bytes())?;
    report.write_trials_csv(&mut csv)?;
    csv.flush()?;
    let sorted_path = sorted_out.unwrap_or_else(|| out.with_extension("sorted.csv"));
    let mut sorted = create(&sorted_path)?;
    sorted.write_all(r.echo_comment().as_bytes())?;
    report.write_sorted_errors_csv(&mut sorted)?;
    sorted.flush()?;
    print!("{}", r.echo());
    print!("{}", report.summary());
    println!("eval_wall_seconds={elapsed:.3}");
    Ok(())
}

fn family_for(
    r: &mut Resolver,
    family: FamilyArg,
    size: Option<usize>,
    physics: PhysicsConfig,
) -> Result<(Box<dyn OperatorFamily>, usize, usize)> {
    // (family, default subspace dimension, number of columns)
    Ok(match family {
        FamilyArg::Crack => (
            Box::new(CrackFamily::centered(physics)?),
            physics.n_modes,
            physics.n_quad,
        ),
        FamilyArg::Example1 => {
            let n = r.get("size", size, 4)?;
            (Box::new(GenericExample1 { n }), n, n)
        }
        FamilyArg::Example2 => {
            let n_max = r.get("size", size, 50)?;
            (Box::new(GenericExample2 { n_max }), 5.min(n_max), n_max)
        }
        FamilyArg::Broken => (Box::new(BrokenFamily::new(8, 3)), 3, 3),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn verify_stability(
    mut r: Resolver,
    family: FamilyArg,
    subspace_dim: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    sweep_max: Option<usize>,
    size: Option<usize>,
    physics: &PhysicsArgs,
) -> Result<()> {
    let physics = r.physics(physics)?;
    let (fam, default_dim, columns) = family_for(&mut r, family, size, physics)?;
    let dim = r.get("subspace_dim", subspace_dim, default_dim)?;
    let samples = r.get("samples", samples, 10_000)?;
    let seed = r.get("seed", seed, 1)?;
    let sweep_max = r.get("sweep_max", sweep_max, 8)?.min(columns);
    r.finish()?;
    if dim == 0 || dim > columns {
        bail!(Error::Config(format!(
            "N must lie in 1..={columns}, got {dim}"
        )));
    }

    let mut modes: Vec<usize> = (1..=sweep_max).collect();
    if !modes.contains(&dim) {
        modes.push(dim);
    }
    let start = Instant::now();
    let reports = estimate_stability_sweep(fam.as_ref(), &modes, samples, seed)?;
    let main = reports.iter().find(|rep| rep.n_modes == dim).unwrap();

    let u2 = u2_sweep(fam.as_ref(), 5, 8, dim)?;
    let min_full = u2.iter().map(|p| p.full).fold(f64::INFINITY, f64::min);
    let min_projected = u2.iter().map(|p| p.projected).fold(f64::INFINITY, f64::min);

    let mut text = r.echo();
    text.push_str(&main.to_key_value());
    text.push_str(&format!("u2_grid_points={}\n", u2.len()));
    text.push_str(&format!("u2_min_margin={min_full:.6e}\n"));
    text.push_str(&format!("u2_min_margin_subspace={min_projected:.6e}\n"));
    let swept: Vec<&StabilityReport> = reports
        .iter()
        .filter(|rep| rep.n_modes <= sweep_max)
        .collect();
    let sweep: Vec<(usize, f64, f64)> = nested_minima(&reports)
        .into_iter()
        .filter(|&(n, _)| n <= sweep_max)
        .zip(&swept)
        .map(|((n, nested), rep)| (n, nested, rep.min_ratio))
        .collect();
    let non_increasing = sweep.windows(2).all(|w| w[1].1 <= w[0].1);
    text.push_str(&format!("sweep_non_increasing={non_increasing}\n"));
    let direct = sweep.windows(2).all(|w| w[1].2 <= w[0].2);
    text.push_str(&format!("sweep_at_n_non_increasing={direct}\n"));
    text.push_str(&format!(
        "wall_seconds={:.3}\n",
        start.elapsed().as_secs_f64()
    ));
    write_text(out, &text)?;

    let mut ratios = create(&sibling(out, ".ratios.csv"))?;
    ratios.write_all(r.echo_comment().as_bytes())?;
    main.write_ratios_csv(&mut ratios)?;
    ratios.flush()?;

    let mut sweep_csv = create(&sibling(out, ".sweep.csv"))?;
    sweep_csv.write_all(r.echo_comment().as_bytes())?;
    writeln!(sweep_csv, "N,min_ratio,min_ratio_at_n")?;
    for (n, v, direct) in &sweep {
        writeln!(sweep_csv, "{n},{v:.9e},{direct:.9e}")?;
    }
    sweep_csv.flush()?;

    let mut u2_csv = create(&sibling(out, ".u2.csv"))?;
    u2_csv.write_all(r.echo_comment().as_bytes())?;
    writeln!(u2_csv, "m1,m2,q_angle,margin,margin_subspace")?;
    for p in &u2 {
        writeln!(
            u2_csv,
            "{:.9},{:.9},{:.9},{:.9e},{:.9e}",
            p.m[0], p.m[1], p.direction, p.full, p.projected
        )?;
    }
    u2_csv.flush()?;
    print!("{text}");
    Ok(())
}

pub struct FieldFlags {
    pub case: u8,
    pub eta_angle: Option<f64>,
    pub source_x: Option<f64>,
    pub source_y: Option<f64>,
    pub theta: Option<f64>,
    pub a: Option<f64>,
    pub o: Option<f64>,
    pub l: Option<f64>,
    pub extent: Option<f64>,
    pub res: Option<usize>,
    pub n_dense: Option<usize>,
}

pub fn field_grid(mut r: Resolver, f: FieldFlags, out: &Path, physics: &PhysicsArgs) -> Result<()> {
    let physics = r.physics(physics)?;
    let excitation = match f.case {
        1 => Excitation::plane_wave_at_angle(r.get("eta_angle", f.eta_angle, 0.0)?),
        2 | 3 => {
            let default_x = if f.case == 2 { 3.25 } else { 6.0 };
            let source = [
                r.get("source_x", f.source_x, default_x)?,
                r.get("source_y", f.source_y, 0.0)?,
            ];
            if f.case == 2 {
                Excitation::NearSource { source }
            } else {
                Excitation::FarSource { source }
            }
        }
        4 => Excitation::Forcing,
        other => bail!(Error::Config(format!(
            "case must be 1, 2, 3 or 4, got {other}"
        ))),
    };
    let geom = CrackGeometry::new(
        r.get("theta", f.theta, 0.0)?,
        r.get("a", f.a, 0.0)?,
        physics.a_max,
    )?;
    let support = SupportInterval::new(r.get("o", f.o, 0.0)?, r.get("l", f.l, 2.0)?)?;
    let spec = FieldGridSpec::square(r.get("extent", f.extent, 6.0)?, r.get("res", f.res, 121)?);
    let n_dense = r.get("n_dense", f.n_dense, BieOptions::default().n_dense)?;
    r.finish()?;
    excitation.validate()?;
    let obs = ObservationSet::from_config(&physics);
    let options = BieOptions {
        n_dense,
        ..BieOptions::default()
    };
    let samples = total_field_grid(
        physics.wavenumber,
        &obs,
        &excitation,
        &geom,
        &support,
        &spec,
        &options,
    )?;
    let mut csv = create(out)?;
    csv.write_all(format!("# case={}\n", f.case).as_bytes())?;
    csv.write_all(r.echo_comment().as_bytes())?;
    writeln!(csv, "x,y,re_total,im_total,masked")?;
    for s in &samples {
        writeln!(
            csv,
            "{:.9},{:.9},{:.12e},{:.12e},{}",
            s.point[0],
            s.point[1],
            s.total.re,
            s.total.im,
            u8::from(s.masked)
        )?;
    }
    csv.flush()?;
    let masked = samples.iter().filter(|s| s.masked).count();
    eprintln!(
        "field-grid: {} points, {masked} masked, wrote {}",
        samples.len(),
        out.display()
    );
    Ok(())
}

pub fn info(path: &Path) -> Result<()> {
    let mut head = Vec::new();
    File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .take(HEADER_LEN as u64)
        .read_to_end(&mut head)?;
    match head.get(..4) {
        Some(b"CRKD") => {
            let bytes: [u8; HEADER_LEN] = head
                .as_slice()
                .try_into()
                .map_err(|_| Error::Format("dataset header truncated".into()))?;
            let h = DatasetHeader::from_bytes(&bytes)?;
            println!("kind=dataset");
            println!("version={}", h.version);
            println!("count={}", h.count);
            println!("n_obs={}", h.n_obs);
            println!("n_modes={}", h.n_modes);
            println!("wavenumber={}", h.wavenumber);
            println!("radius={}", h.radius);
            println!("seed={}", h.seed);
            println!("record_bytes={}", h.record_len());
        }
        Some(b"CRKM") => {
            let m: Mlp = nn::load_model(path)?;
            println!("kind=model");
            println!("network={}", m.kind().name());
            println!(
                "widths={}",
                m.widths()
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            );
            println!("outputs={}", m.output_dim());
            println!("input_scale={}", m.input_scale());
            println!("parameters={}", m.param_count());
        }
        _ => bail!(Error::Format(format!(
            "{}: unrecognized magic; expected \"CRKD\" (dataset) or \"CRKM\" (model)",
            path.display()
        ))),
    }
    Ok(())
}
