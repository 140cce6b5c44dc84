use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hlift::experiments::{write_results, ExperimentId, ScenarioResult};
use hlift::regression::{rate_model, RateParams};

fn hlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn labelled(text: &str, label: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{label} = ")))
        .unwrap_or_else(|| panic!("no `{label}` in output:\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn divergence_of_identical_arguments_is_zero() {
    let o = hlift(&["divergence", "f2", "f2", "uniform"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(labelled(&text, "klh").abs() < 1e-9);
    assert!(labelled(&text, "l1").abs() < 1e-9);
}

#[test]
fn divergence_f1_against_uniform_has_tv_one_fifth() {
    let o = hlift(&["divergence", "f1", "uniform", "uniform"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((labelled(&text, "l1") - 0.4).abs() < 1e-6);
    assert!((labelled(&text, "tv") - 0.2).abs() < 1e-6);
    assert!(labelled(&text, "klh") > 0.0);
}

#[test]
fn malformed_density_exits_with_two() {
    let o = hlift(&["divergence", "beta:2", "uniform", "uniform"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_config_key_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[mm]\nmax_iter = 10\n").unwrap();
    let o = hlift(&[
        "--config",
        cfg.to_str().unwrap(),
        "divergence",
        "f1",
        "f2",
        "uniform",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_iter"));
}

fn run_fit(out: &Path) -> Output {
    hlift(&[
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
        "fit",
        "--k",
        "1",
        "--generate",
        "beta:3,3",
        "--n",
        "10000",
    ])
}

#[test]
fn fit_recovers_single_beta_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run_fit(&a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let row = fs::read_to_string(a.join("fit_mixture.csv")).unwrap();
    let psi = hlift::MixtureParams::from_csv_row(row.trim()).unwrap();
    let theta = psi.components()[0];
    assert!((theta.a() - 3.0).abs() <= 0.3, "a = {}", theta.a());
    assert!((theta.b() - 3.0).abs() <= 0.3, "b = {}", theta.b());

    let trace: Vec<f64> = fs::read_to_string(a.join("fit_trace.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert!(!trace.is_empty());
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));

    let o2 = run_fit(&b);
    assert!(o2.status.success());
    assert_eq!(
        stdout(&o).replace(a.to_str().unwrap(), ""),
        stdout(&o2).replace(b.to_str().unwrap(), "")
    );
    for f in ["fit_mixture.csv", "fit_trace.txt"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn fit_reads_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.txt");
    let mut text = String::from("x\n");
    for i in 0..400 {
        text.push_str(&format!("{}\n", (i as f64 + 0.5) / 400.0));
    }
    fs::write(&data, text).unwrap();
    let o = hlift(&[
        "--out",
        dir.path().to_str().unwrap(),
        "fit",
        "--k",
        "2",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fit_mixture.csv").exists());

    fs::write(&data, "0.5\n1.5\n").unwrap();
    let bad = hlift(&[
        "--out",
        dir.path().to_str().unwrap(),
        "fit",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn greedy_writes_non_increasing_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    fs::write(&cfg, "[greedy]\npi_count = 21\nshape_count = 6\n").unwrap();
    let o = hlift(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "greedy",
        "--k-max",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("greedy.csv")).unwrap();
    let objectives: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(objectives.len(), 4);
    assert!(objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

fn row(k: usize, n: usize, l: usize, v: f64) -> ScenarioResult {
    ScenarioResult {
        experiment: ExperimentId::E1,
        k,
        n,
        l,
        seed: 1,
        neg_lifted_loglik: v,
        final_objective: -v,
        iterations: 1,
    }
}

#[test]
fn report_draws_one_cell_per_k_n_pair() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    let rows = vec![
        row(2, 1024, 1, -0.10),
        row(2, 1024, 2, -0.12),
        row(2, 2048, 1, -0.13),
        row(3, 1024, 1, -0.14),
        row(3, 2048, 1, -0.15),
    ];
    write_results(&results, &rows).unwrap();
    let o = hlift(&[
        "--out",
        dir.path().to_str().unwrap(),
        "report",
        results.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(dir.path().join("heatmap.svg")).unwrap();
    assert_eq!(svg.matches(r#"<rect class="cell""#).count(), 4);
    let table = fs::read_to_string(dir.path().join("means_table.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "k,1024,2048");
}

#[test]
fn regress_prints_noiseless_parameters_to_four_decimals() {
    let truth: RateParams = [-1.68, 0.73, 6.80, 1.87, 0.99];
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    let mut rows = Vec::new();
    for k in 2..=8 {
        for e in 10..=15 {
            let n = 1usize << e;
            rows.push(row(k, n, 1, rate_model(k, n, &truth)));
        }
    }
    write_results(&results, &rows).unwrap();
    let o = hlift(&[
        "--out",
        dir.path().to_str().unwrap(),
        "regress",
        results.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for (name, want) in ["a0", "a1", "a2", "b1", "b2"]
        .iter()
        .zip(["-1.6800", "0.7300", "6.8000", "1.8700", "0.9900"])
    {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap_or_else(|| panic!("no {name} line in\n{text}"));
        assert_eq!(line.split_whitespace().nth(1), Some(want), "{line}");
    }
    assert!(dir.path().join("fit_report.csv").exists());
}

#[test]
fn regress_on_missing_file_exits_with_two() {
    let o = hlift(&["regress", "/nonexistent/results.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_with_tiny_config_writes_results_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.toml");
    fs::write(
        &cfg,
        "[experiment]\nid = \"E1\"\nn_values = [64, 128]\nk_values = [1, 2]\nreplicates = 2\n[mm]\nrestarts = 1\nmax_iters = 50\n",
    )
    .unwrap();
    let args = [
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--workers",
        "2",
        "experiment",
    ];
    let o = hlift(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("results_E1.csv");
    let first = fs::read(&path).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 9);
    assert!(dir.path().join("entropy_E1.csv").exists());

    let again = hlift(&args);
    assert!(again.status.success());
    assert!(again.stderr.is_empty(), "resume recomputed rows");
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn help_lists_every_flag_with_defaults() {
    let top = stdout(&hlift(&["--help"]));
    for cmd in [
        "divergence",
        "fit",
        "greedy",
        "experiment",
        "regress",
        "report",
    ] {
        assert!(top.contains(cmd), "{cmd} missing from help");
    }
    for cmd in [
        "divergence",
        "fit",
        "greedy",
        "experiment",
        "regress",
        "report",
    ] {
        let help = stdout(&hlift(&[cmd, "--help"]));
        for flag in ["--config", "--seed", "--out", "--workers"] {
            assert!(help.contains(flag), "{cmd}: {flag} missing");
        }
        for line in help
            .lines()
            .filter(|l| l.trim_start().starts_with("--") && l.contains('<'))
        {
            assert!(line.contains("[default"), "{cmd}: no default in `{line}`");
        }
    }
    let fit = stdout(&hlift(&["fit", "--help"]));
    assert!(fit.contains("beta:A,B"));
}
