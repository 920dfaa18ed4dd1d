use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crackscat"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    o
}

fn lines_of(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn gen_data_is_deterministic_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(run(
        &[
            "gen-data", "--count", "300", "--seed", "4", "--out", "a.crkd",
        ],
        d,
    ));
    ok(run(
        &[
            "gen-data", "--count", "300", "--seed", "4", "--out", "b.crkd",
        ],
        d,
    ));
    ok(run(
        &[
            "gen-data", "--count", "300", "--seed", "5", "--out", "c.crkd",
        ],
        d,
    ));
    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.crkd"), read("b.crkd"));
    assert_ne!(read("a.crkd"), read("c.crkd"));
    let echo = std::fs::read_to_string(d.join("a.crkd.config")).unwrap();
    for key in [
        "wavenumber=1.5",
        "radius=4",
        "n_obs=40",
        "count=300",
        "seed=4",
    ] {
        assert!(echo.lines().any(|l| l == key), "missing {key} in {echo}");
    }

    let info = ok(run(&["info", "--data", "a.crkd"], d));
    let text = stdout(&info);
    for key in ["kind=dataset", "count=300", "n_obs=40", "seed=4"] {
        assert!(text.lines().any(|l| l == key), "missing {key} in {text}");
    }
}

#[test]
fn config_file_and_flags_resolve_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.cfg"),
        "# small run\ncount = 50\nseed = 8\nN_S = 20\n",
    )
    .unwrap();
    ok(run(
        &[
            "--config", "run.cfg", "gen-data", "--seed", "9", "--out", "x.crkd",
        ],
        d,
    ));
    let echo = std::fs::read_to_string(d.join("x.crkd.config")).unwrap();
    assert!(
        echo.contains("count=50\n") && echo.contains("seed=9\n") && echo.contains("n_obs=20\n")
    );
    let info = stdout(&ok(run(&["info", "--data", "x.crkd"], d)));
    assert!(info.contains("n_obs=20") && info.contains("count=50"));

    std::fs::write(d.join("bad.cfg"), "bogus_key=1\n").unwrap();
    let o = run(&["--config", "bad.cfg", "gen-data", "--out", "y.crkd"], d);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run(&["gen-data", "--count", "10"], d).status.code(),
        Some(2)
    );
    assert_eq!(run(&["no-such-command"], d).status.code(), Some(2));
    assert_eq!(
        run(&["gen-data", "--count", "0", "--out", "z.crkd"], d)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(
            &[
                "gen-data",
                "--count",
                "5",
                "--n-modes",
                "50",
                "--out",
                "z.crkd"
            ],
            d
        )
        .status
        .code(),
        Some(2)
    );
    let o = run(&["field-grid", "--case", "7", "--out", "f.csv"], d);
    assert_eq!(o.status.code(), Some(2));
    // runtime failure: missing input file
    assert_eq!(
        run(
            &[
                "train",
                "--data",
                "missing.crkd",
                "--net",
                "n1",
                "--out",
                "m.crkm"
            ],
            d
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn train_writes_checkpoint_log_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(run(
        &[
            "gen-data", "--count", "400", "--seed", "2", "--out", "d.crkd",
        ],
        d,
    ));
    let o = ok(run(
        &[
            "train",
            "--data",
            "d.crkd",
            "--net",
            "n3",
            "--out",
            "n3.crkm",
            "--epochs",
            "3",
            "--patience",
            "5",
        ],
        d,
    ));
    assert!(stdout(&o).contains("net=n3"));
    let log = lines_of(&d.join("n3.crkm.log.csv"));
    let rows: Vec<&String> = log.iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,train_mse,val_mse,wall_time");
    assert_eq!(rows.len(), 4);
    assert!(log.iter().any(|l| l == "# epochs=3"));
    assert!(log.iter().any(|l| l == "# data_seed=2"));

    let info = stdout(&ok(run(&["info", "--model", "n3.crkm"], d)));
    assert!(info.contains("network=n3"));
    assert!(info.contains("widths=80,80,80,80,80,2"));

    // seed fixes the weights
    ok(run(
        &[
            "train",
            "--data",
            "d.crkd",
            "--net",
            "n3",
            "--out",
            "again.crkm",
            "--epochs",
            "3",
            "--patience",
            "5",
        ],
        d,
    ));
    assert_eq!(
        std::fs::read(d.join("n3.crkm")).unwrap(),
        std::fs::read(d.join("again.crkm")).unwrap()
    );
}

#[test]
fn train_rejects_an_empty_role() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // a single sample cannot feed both theta signs
    ok(run(
        &[
            "gen-data", "--count", "1", "--seed", "3", "--out", "one.crkd",
        ],
        d,
    ));
    let results: Vec<Output> = ["n2", "n3"]
        .iter()
        .map(|net| {
            run(
                &[
                    "train", "--data", "one.crkd", "--net", net, "--out", "m.crkm", "--epochs", "1",
                ],
                d,
            )
        })
        .collect();
    let failed: Vec<&Output> = results.iter().filter(|o| !o.status.success()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].status.code(), Some(1));
    assert!(stderr(failed[0]).contains("no training samples"));
}

#[test]
fn info_rejects_unknown_magic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("junk.bin"), b"JUNKJUNKJUNK").unwrap();
    let o = run(&["info", "--data", "junk.bin"], d);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("CRKD") && err.contains("CRKM"), "{err}");
}

#[test]
fn verify_stability_writes_report_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = ok(run(
        &[
            "verify-stability",
            "--family",
            "crack",
            "--N",
            "5",
            "--samples",
            "2000",
            "--seed",
            "3",
            "--out",
            "crack.txt",
        ],
        d,
    ));
    let report = stdout(&o);
    let value = |key: &str| -> String {
        report
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("missing {key}"))
            .to_string()
    };
    assert!(value("min_ratio").parse::<f64>().unwrap() > 0.0);
    assert!(value("u2_min_margin_subspace").parse::<f64>().unwrap() > 0.0);
    assert_eq!(value("u2_grid_points"), "200");
    assert_eq!(value("seed"), "3");
    assert_eq!(
        std::fs::read_to_string(d.join("crack.txt")).unwrap(),
        report
    );

    let sweep = lines_of(&d.join("crack.txt.sweep.csv"));
    let rows: Vec<(usize, f64)> = sweep
        .iter()
        .filter(|l| !l.starts_with('#') && !l.starts_with('N'))
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            assert_eq!(cols.len(), 3);
            (cols[0].parse().unwrap(), cols[1].parse().unwrap())
        })
        .collect();
    assert_eq!(
        rows.iter().map(|r| r.0).collect::<Vec<_>>(),
        (1..=8).collect::<Vec<_>>()
    );
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));
    assert_eq!(value("sweep_non_increasing"), "true");
    let ratios = lines_of(&d.join("crack.txt.ratios.csv"));
    assert_eq!(ratios.iter().filter(|l| !l.starts_with('#')).count(), 2001);

    let o = ok(run(
        &[
            "verify-stability",
            "--family",
            "broken",
            "--samples",
            "50",
            "--out",
            "broken.txt",
        ],
        d,
    ));
    let margin: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("u2_min_margin="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(margin <= 1e-10);
}

#[test]
fn field_grid_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(run(
        &[
            "field-grid",
            "--case",
            "1",
            "--extent",
            "2",
            "--res",
            "9",
            "--n-dense",
            "64",
            "--out",
            "f.csv",
        ],
        d,
    ));
    let lines = lines_of(&d.join("f.csv"));
    assert_eq!(lines[0], "# case=1");
    assert!(lines.iter().any(|l| l == "# res=9"));
    let header = lines
        .iter()
        .position(|l| l == "x,y,re_total,im_total,masked")
        .unwrap();
    let rows = &lines[header + 1..];
    assert_eq!(rows.len(), 81);
    let mut masked = 0;
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 5);
        let (x, y): (f64, f64) = (cols[0].parse().unwrap(), cols[1].parse().unwrap());
        let re: f64 = cols[2].parse().unwrap();
        if cols[4] == "1" {
            masked += 1;
            // the default crack is the segment [-1, 1] x {0}
            assert!(y.abs() < 1e-3 && x.abs() <= 1.0 + 1e-3);
        } else {
            assert!(re.is_finite());
        }
    }
    assert!(masked > 0);

    ok(run(
        &[
            "field-grid",
            "--case",
            "3",
            "--source-x",
            "6",
            "--source-y",
            "0",
            "--res",
            "5",
            "--n-dense",
            "64",
            "--out",
            "g.csv",
        ],
        d,
    ));
    let o = run(
        &[
            "field-grid",
            "--case",
            "3",
            "--source-x",
            "4",
            "--res",
            "5",
            "--out",
            "h.csv",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
}
