//! Simulation sweeps over `(k, n)` with replicated h-MLLE fits.
//!
//! Each replicate draws `n` points from the target and `n` from the lifting
//! density, fits a `k`-component mixture and records
//! `K = −∫ (f + h) ln(f̂ + h)`. Every replicate owns a random stream derived
//! from the master seed and its `(experiment, k, n, l)` coordinates, so a
//! plan gives the same numbers however it is scheduled.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::densities::Density;
use crate::divergence::{lifted_cross_entropy, lifted_entropy};
use crate::error::{Error, Result};
use crate::estimation::{mm_fit, MMConfig};
use crate::numerics::QuadratureSpec;

pub const RESULTS_HEADER: &str = "experiment,k,n,l,seed,K,final_objective,iterations";
pub const ENTROPY_HEADER: &str = "experiment,entropy_constant";
pub const DEFAULT_MASTER_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    /// Piecewise-constant target with arcsine lifting.
    E1,
    /// V-shaped target with uniform lifting.
    E2,
}

impl ExperimentId {
    pub fn target(self) -> Density {
        match self {
            ExperimentId::E1 => Density::TargetF1,
            ExperimentId::E2 => Density::TargetF2,
        }
    }

    pub fn lifting(self) -> Density {
        match self {
            ExperimentId::E1 => Density::Arcsine,
            ExperimentId::E2 => Density::Uniform,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "E1" | "e1" => Ok(ExperimentId::E1),
            "E2" | "e2" => Ok(ExperimentId::E2),
            other => Err(Error::Parse(format!(
                "unknown experiment `{other}` (expected E1 or E2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub experiment: ExperimentId,
    pub target: Density,
    pub lifting: Density,
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    pub mm: MMConfig,
    pub quadrature: QuadratureSpec,
}

impl ExperimentPlan {
    /// Plan with the experiment's own target and lifting density.
    pub fn new(
        experiment: ExperimentId,
        n_values: Vec<usize>,
        k_values: Vec<usize>,
        replicates: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let plan = Self {
            experiment,
            target: experiment.target(),
            lifting: experiment.lifting(),
            n_values,
            k_values,
            replicates,
            master_seed,
            mm: MMConfig::default(),
            quadrature: QuadratureSpec::default(),
        };
        plan.validate()?;
        Ok(plan)
    }

    /// n ∈ {2¹⁰, …, 2¹³}, k ∈ {2, …, 6}, 10 replicates.
    pub fn desk(experiment: ExperimentId, master_seed: u64) -> Self {
        Self::new(
            experiment,
            (10..=13).map(|p| 1 << p).collect(),
            (2..=6).collect(),
            10,
            master_seed,
        )
        .expect("desk plan is valid")
    }

    /// n ∈ {2¹⁰, …, 2¹⁵}, k ∈ {2, …, 8}, 50 replicates.
    pub fn paper(experiment: ExperimentId, master_seed: u64) -> Self {
        Self::new(
            experiment,
            (10..=15).map(|p| 1 << p).collect(),
            (2..=8).collect(),
            50,
            master_seed,
        )
        .expect("paper plan is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[usize]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.n_values) || self.n_values[0] == 0 {
            return Err(Error::InvalidParams(
                "n values must be non-empty, positive and strictly increasing".into(),
            ));
        }
        if !increasing(&self.k_values) || self.k_values[0] == 0 {
            return Err(Error::InvalidParams(
                "k values must be non-empty, positive and strictly increasing".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParams("replicates must be at least 1".into()));
        }
        self.mm.validate()
    }

    /// All `(k, n, l)` triples in output order, with `l` counting from 1.
    pub fn scenarios(&self) -> Vec<(usize, usize, usize)> {
        let mut out =
            Vec::with_capacity(self.k_values.len() * self.n_values.len() * self.replicates);
        for &k in &self.k_values {
            for &n in &self.n_values {
                for l in 1..=self.replicates {
                    out.push((k, n, l));
                }
            }
        }
        out
    }

    fn contains(&self, k: usize, n: usize, l: usize) -> bool {
        self.k_values.contains(&k)
            && self.n_values.contains(&n)
            && (1..=self.replicates).contains(&l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub experiment: ExperimentId,
    pub k: usize,
    pub n: usize,
    pub l: usize,
    pub seed: u64,
    /// `K = −∫ (f + h) ln(f̂ + h)`.
    pub neg_lifted_loglik: f64,
    /// `L_{h,n}` at the fitted mixture.
    pub final_objective: f64,
    pub iterations: usize,
}

impl ScenarioResult {
    pub fn key(&self) -> (usize, usize, usize) {
        (self.k, self.n, self.l)
    }

    /// One results row, reals with 17 significant digits, no line ending.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.16e},{:.16e},{}",
            self.experiment,
            self.k,
            self.n,
            self.l,
            self.seed,
            self.neg_lifted_loglik,
            self.final_objective,
            self.iterations
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stream identifier for one replicate.
pub fn scenario_seed(
    master_seed: u64,
    experiment: ExperimentId,
    k: usize,
    n: usize,
    l: usize,
) -> u64 {
    [
        fnv1a(experiment.tag().as_bytes()),
        k as u64,
        n as u64,
        l as u64,
    ]
    .into_iter()
    .fold(splitmix64(master_seed), |acc, v| {
        splitmix64(acc ^ splitmix64(v))
    })
}

/// Fits one replicate and evaluates its `K`.
pub fn run_scenario(plan: &ExperimentPlan, k: usize, n: usize, l: usize) -> Result<ScenarioResult> {
    if !plan.contains(k, n, l) {
        return Err(Error::InvalidParams(format!(
            "scenario (k={k}, n={n}, l={l}) is not part of the plan"
        )));
    }
    let wrap = |e: Error| Error::Scenario {
        k,
        n,
        l,
        source: Box::new(e),
    };
    let seed = scenario_seed(plan.master_seed, plan.experiment, k, n, l);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = plan.target.sample(&mut rng, n);
    let ys = plan.lifting.sample(&mut rng, n);
    let fit = mm_fit(&plan.lifting, &xs, &ys, k, &plan.mm, &mut rng).map_err(wrap)?;
    let fitted = Density::Mixture(fit.psi);
    let value = lifted_cross_entropy(&plan.target, &fitted, &plan.lifting, &plan.quadrature)
        .map_err(wrap)?;
    if !value.is_finite() {
        return Err(wrap(Error::Degenerate(format!("K = {value}"))));
    }
    Ok(ScenarioResult {
        experiment: plan.experiment,
        k,
        n,
        l,
        seed,
        neg_lifted_loglik: value,
        final_objective: fit.objective,
        iterations: fit.iterations,
    })
}

/// `∫ (f + h) ln(f + h)`, so that `KL_h(f || f̂) = constant + K`.
pub fn entropy_constant(plan: &ExperimentPlan) -> Result<f64> {
    lifted_entropy(&plan.target, &plan.lifting, &plan.quadrature)
}

/// Runs every scenario of `plan` on `workers` threads.
///
/// With `results_path`, finished rows are appended to that file as they
/// complete; rows already present (matched by coordinates and seed) are
/// not recomputed. At the end the file is rewritten in `(k, n, l)` order.
/// On failure the successful rows stay in the file and the error lists the
/// failed triples.
pub fn run_plan(
    plan: &ExperimentPlan,
    workers: usize,
    results_path: Option<&Path>,
) -> Result<Vec<ScenarioResult>> {
    run_plan_observed(plan, workers, results_path, &|_| {})
}

/// [`run_plan`] that reports each freshly computed row to `observer`
/// (from the writer thread, in completion order).
pub fn run_plan_observed(
    plan: &ExperimentPlan,
    workers: usize,
    results_path: Option<&Path>,
    observer: &dyn Fn(&ScenarioResult),
) -> Result<Vec<ScenarioResult>> {
    plan.validate()?;
    let mut done: BTreeMap<(usize, usize, usize), ScenarioResult> = BTreeMap::new();
    let mut foreign: Vec<ScenarioResult> = Vec::new();
    if let Some(path) = results_path {
        for row in load_for_resume(path)? {
            let expected = scenario_seed(plan.master_seed, plan.experiment, row.k, row.n, row.l);
            if row.experiment == plan.experiment && row.seed != expected {
                return Err(Error::InvalidParams(format!(
                    "{} holds rows from a different master seed; use a fresh output file",
                    path.display()
                )));
            }
            if row.experiment == plan.experiment && plan.contains(row.k, row.n, row.l) {
                done.insert(row.key(), row);
            } else {
                foreign.push(row);
            }
        }
        rewrite_sorted(path, foreign.iter().chain(done.values()))?;
    }

    let todo: Vec<(usize, usize, usize)> = plan
        .scenarios()
        .into_iter()
        .filter(|t| !done.contains_key(t))
        .collect();
    let mut failed = Vec::new();
    if !todo.is_empty() {
        let mut sink = match results_path {
            Some(p) => Some(BufWriter::new(OpenOptions::new().append(true).open(p)?)),
            None => None,
        };
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        let workers = workers.clamp(1, todo.len());
        let mut io_err = None;
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, todo) = (&next, &todo);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(k, n, l)) = todo.get(i) else { break };
                    if tx.send(((k, n, l), run_scenario(plan, k, n, l))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            // single writer: rows reach the file in completion order
            for (key, outcome) in rx {
                match outcome {
                    Ok(row) => {
                        observer(&row);
                        if let Some(w) = sink.as_mut() {
                            let res = writeln!(w, "{}", row.to_csv_line()).and_then(|_| w.flush());
                            if let Err(e) = res {
                                io_err.get_or_insert(e);
                            }
                        }
                        done.insert(key, row);
                    }
                    Err(e) => failed.push((key, e.to_string())),
                }
            }
        });
        if let Some(e) = io_err {
            return Err(e.into());
        }
        drop(sink);
        if let Some(path) = results_path {
            rewrite_sorted(path, foreign.iter().chain(done.values()))?;
        }
    }
    if !failed.is_empty() {
        failed.sort();
        return Err(Error::PlanFailed { failed });
    }
    Ok(done.into_values().collect())
}

// Existing rows, ignoring an unterminated last line left by an interrupted write.
fn load_for_resume(path: &Path) -> Result<Vec<ScenarioResult>> {
    let mut text = String::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_string(&mut text)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    }
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if !text.ends_with('\n') {
        match text.rfind('\n') {
            Some(i) => text.truncate(i + 1),
            None => return Ok(Vec::new()),
        }
    }
    parse_results(text.as_bytes())
}

fn rewrite_sorted<'a, I: Iterator<Item = &'a ScenarioResult>>(path: &Path, rows: I) -> Result<()> {
    let mut rows: Vec<&ScenarioResult> = rows.collect();
    rows.sort_by_key(|r| (r.experiment, r.k, r.n, r.l));
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_rows(&mut w, rows.into_iter())?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_rows<'a, W: Write, I: Iterator<Item = &'a ScenarioResult>>(
    w: &mut W,
    rows: I,
) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    Ok(())
}

/// Writes a complete results file.
pub fn write_results(path: &Path, rows: &[ScenarioResult]) -> Result<()> {
    rewrite_sorted(path, rows.iter())
}

pub fn read_results(path: &Path) -> Result<Vec<ScenarioResult>> {
    parse_results(File::open(path)?)
}

/// Parses a results CSV; the header must match exactly.
pub fn parse_results<R: Read>(reader: R) -> Result<Vec<ScenarioResult>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(Error::Parse(format!(
            "results header must be `{RESULTS_HEADER}`"
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = i + 2;
        let field = |j: usize| rec.get(j).unwrap_or("").trim();
        let int = |j: usize| -> Result<usize> {
            field(j)
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: bad integer `{}`", field(j))))
        };
        let real = |j: usize| -> Result<f64> {
            match field(j).parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse(format!(
                    "line {line}: bad real `{}`",
                    field(j)
                ))),
            }
        };
        let row = ScenarioResult {
            experiment: field(0).parse()?,
            k: int(1)?,
            n: int(2)?,
            l: int(3)?,
            seed: field(4)
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: bad seed `{}`", field(4))))?,
            neg_lifted_loglik: real(5)?,
            final_objective: real(6)?,
            iterations: int(7)?,
        };
        if row.k == 0 || row.n == 0 || row.l == 0 {
            return Err(Error::Parse(format!(
                "line {line}: k, n and l must be positive"
            )));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_entropy_constants(path: &Path, values: &[(ExperimentId, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{ENTROPY_HEADER}")?;
    for (id, v) in values {
        writeln!(w, "{id},{v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_entropy_constants(path: &Path) -> Result<HashMap<ExperimentId, f64>> {
    let mut rdr = csv::Reader::from_reader(File::open(path)?);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != ENTROPY_HEADER {
        return Err(Error::Parse(format!(
            "entropy header must be `{ENTROPY_HEADER}`"
        )));
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let id: ExperimentId = rec.get(0).unwrap_or("").parse()?;
        let v: f64 = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse("bad entropy constant".into()))?;
        out.insert(id, v);
    }
    Ok(out)
}

/// Mean `K` per `(k, n)` cell.
pub fn cell_means(rows: &[ScenarioResult]) -> BTreeMap<(usize, usize), f64> {
    let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.k, r.n)).or_insert((0.0, 0));
        e.0 += r.neg_lifted_loglik;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(key, (s, c))| (key, s / c as f64))
        .collect()
}
