//! Replays the checked-in fuzz corpus through the same properties the fuzz
//! targets assert, so the seeds stay meaningful on stable toolchains.

use std::fs;
use std::path::PathBuf;

use hlift::config::RunConfig;
use hlift::experiments::{parse_results, RESULTS_HEADER};
use hlift::{Density, MixtureParams};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn density_spec_seeds() {
    let mut parsed = 0;
    for (name, bytes) in corpus("density_spec") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(d) = text.parse::<Density>() {
            let again: Density = d.to_string().parse().unwrap();
            assert_eq!(again.to_string(), d.to_string(), "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 6);
}

#[test]
fn mixture_row_seeds() {
    let mut parsed = 0;
    for (name, bytes) in corpus("mixture_row") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(psi) = MixtureParams::from_csv_row(&text) {
            let again = MixtureParams::from_csv_row(&psi.to_csv_row()).unwrap();
            assert_eq!(again, psi, "{name}");
            parsed += 1;
        }
    }
    assert_eq!(parsed, 3);
}

#[test]
fn results_csv_seeds() {
    let mut parsed = 0;
    for (name, bytes) in corpus("results_csv") {
        if let Ok(rows) = parse_results(bytes.as_slice()) {
            let mut text = format!("{RESULTS_HEADER}\n");
            for r in &rows {
                text.push_str(&r.to_csv_line());
                text.push('\n');
            }
            assert_eq!(parse_results(text.as_bytes()).unwrap(), rows, "{name}");
            parsed += 1;
        }
    }
    assert_eq!(parsed, 2);
}

#[test]
fn run_config_seeds() {
    let mut parsed = 0;
    for (name, bytes) in corpus("run_config") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(cfg) = RunConfig::from_toml_str(&text) {
            assert_eq!(
                RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
                cfg,
                "{name}"
            );
            parsed += 1;
        }
    }
    assert_eq!(parsed, 3);
}
