//! `hlift` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hlift::config::{RunConfig, Scale};
use hlift::divergence::divergence_report;
use hlift::estimation::{greedy_fit, mm_fit, PointObjective};
use hlift::experiments::{
    entropy_constant, read_results, run_plan_observed, write_entropy_constants, ExperimentId,
    DEFAULT_MASTER_SEED,
};
use hlift::regression::{
    aggregate_means, fit_rows, rows_from_results, write_fit_report, PARAM_NAMES,
};
use hlift::report::{heatmap_svg, MeansTable};
use hlift::{Density, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DENSITY_GRAMMAR: &str =
    "Density specs: f1 | f2 | uniform | arcsine | beta:A,B | mix:K,W1,..,WK,A1,B1,..,AK,BK \
(shapes in [1, 50], weights summing to 1).";

#[derive(Parser)]
#[command(
    name = "hlift",
    version,
    about = "Beta-mixture estimation under the h-lifted KL divergence"
)]
#[command(after_help = DENSITY_GRAMMAR)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// TOML run configuration [default: built-in defaults]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed, 64-bit unsigned decimal [default: experiment.seed from the config, else 20240601]
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for all output files [default: output.dir from the config, else ./out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for experiment sweeps [default: output.workers from the config, else 1]
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print KL_h, L1, squared L2 and total variation between two densities
    #[command(after_help = DENSITY_GRAMMAR)]
    Divergence {
        /// First argument f
        f: String,
        /// Second argument g
        g: String,
        /// Lifting density h
        h: String,
    },
    /// Fit a k-component beta mixture by maximizing the h-lifted likelihood
    #[command(after_help = DENSITY_GRAMMAR)]
    Fit {
        /// Number of mixture components
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Lifting density h; the second sample is drawn from it
        #[arg(long, default_value = "uniform")]
        h: String,
        /// File with one observation per line (an optional non-numeric header line is skipped) [default: none]
        #[arg(long, value_name = "FILE", conflicts_with = "generate")]
        data: Option<PathBuf>,
        /// Density to simulate the observations from instead of reading --data [default: none]
        #[arg(long, value_name = "SPEC")]
        generate: Option<String>,
        /// Sample size when simulating
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
    /// Greedy approximation sequence over a grid of beta components
    #[command(after_help = DENSITY_GRAMMAR)]
    Greedy {
        /// Target density (population objective KL_h(target || .))
        #[arg(long, default_value = "f2")]
        target: String,
        /// Lifting density h
        #[arg(long, default_value = "uniform")]
        h: String,
        /// Use the sample objective on this many simulated points instead of the population one [default: none]
        #[arg(long, value_name = "N")]
        sample_size: Option<usize>,
        /// Number of greedy steps [default: greedy.k_max from the config, else 6]
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Run the (k, n) simulation sweep; resumes an existing results file
    Experiment {
        /// E1 (f1 target, arcsine h) or E2 (f2 target, uniform h) [default: experiment.id from the config, else E2]
        #[arg(long)]
        experiment: Option<String>,
        /// desk or paper grid [default: experiment.scale from the config, else desk]
        #[arg(long)]
        scale: Option<String>,
    },
    /// Fit E[K] = a0 + a1/(k+2)^b1 + a2/n^b2 to a results file
    Regress {
        /// Results CSV written by `experiment`
        results: PathBuf,
        /// Fit to per-(k, n) means instead of all rows
        #[arg(long)]
        aggregate_means: bool,
        /// Drop rows with k below this value
        #[arg(long, default_value_t = 2)]
        min_k: usize,
    },
    /// Mean-K table and heatmap from a results file
    Report {
        /// Results CSV written by `experiment`
        results: PathBuf,
    },
}

struct CliError {
    code: u8,
    message: String,
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Bad input: malformed specs, config or files.
fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError {
        code: 2,
        message: e.to_string(),
    }
}

/// Failure while computing.
fn numeric<E: std::fmt::Display>(e: E) -> CliError {
    CliError {
        code: 3,
        message: e.to_string(),
    }
}

fn classify(e: Error) -> CliError {
    match e {
        Error::Parse(_) => usage(e),
        _ => numeric(e),
    }
}

fn parse_density(spec: &str) -> CliResult<Density> {
    spec.parse::<Density>().map_err(usage)
}

struct Context {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
    workers: usize,
}

impl Context {
    fn new(g: &GlobalOpts) -> CliResult<Self> {
        let config = match &g.config {
            Some(p) => RunConfig::load(p).map_err(usage)?,
            None => RunConfig::default(),
        };
        let workers = g.workers.unwrap_or(config.output.workers);
        if workers == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        Ok(Self {
            seed: g.seed.unwrap_or(if g.config.is_some() {
                config.experiment.seed
            } else {
                DEFAULT_MASTER_SEED
            }),
            out: g.out.clone().unwrap_or_else(|| config.output.dir.clone()),
            workers,
            config,
        })
    }

    fn out_file(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out)
            .map_err(|e| numeric(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| numeric(format!("cannot write {}: {e}", path.display())))
}

fn read_sample(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => out.push(v),
            Ok(v) => {
                return Err(usage(format!(
                    "{}:{}: value {v} outside [0, 1]",
                    path.display(),
                    i + 1
                )))
            }
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(usage(format!(
                    "{}:{}: not a number: `{t}`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(usage(format!("{} holds no observations", path.display())));
    }
    Ok(out)
}

fn cmd_divergence(ctx: &Context, f: &str, g: &str, h: &str) -> CliResult<()> {
    let (f, g, h) = (parse_density(f)?, parse_density(g)?, parse_density(h)?);
    let spec = ctx.config.quadrature_spec().map_err(usage)?;
    let r = divergence_report(&f, &g, &h, &spec).map_err(numeric)?;
    println!("klh = {:.10}", r.klh);
    println!("l1 = {:.10}", r.l1);
    println!("l2_sq = {:.10}", r.l2_sq);
    println!("tv = {:.10}", r.tv);
    Ok(())
}

fn cmd_fit(
    ctx: &Context,
    k: usize,
    h: &str,
    data: Option<&Path>,
    generate: Option<&str>,
    n: usize,
) -> CliResult<()> {
    let h = parse_density(h)?;
    let cfg = ctx.config.mm_config().map_err(usage)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let xs = match (data, generate) {
        (Some(p), _) => read_sample(p)?,
        (None, Some(spec)) => {
            if n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            parse_density(spec)?.sample(&mut rng, n)
        }
        (None, None) => return Err(usage("give either --data FILE or --generate SPEC")),
    };
    let ys = h.sample(&mut rng, xs.len());
    let fit = mm_fit(&h, &xs, &ys, k, &cfg, &mut rng).map_err(classify)?;

    let mix_path = ctx.out_file("fit_mixture.csv")?;
    write_text(&mix_path, &format!("{}\n", fit.psi.to_csv_row()))?;
    let trace: String = fit
        .objective_trace
        .iter()
        .map(|v| format!("{v:.16e}\n"))
        .collect();
    let trace_path = ctx.out_file("fit_trace.txt")?;
    write_text(&trace_path, &trace)?;

    println!("objective = {:.10}", fit.objective);
    println!("iterations = {}", fit.iterations);
    println!("restart = {}", fit.restart_index);
    for (j, (w, c)) in fit
        .psi
        .weights()
        .iter()
        .zip(fit.psi.components())
        .enumerate()
    {
        println!(
            "component {} weight = {:.6} a = {:.6} b = {:.6}",
            j + 1,
            w,
            c.a(),
            c.b()
        );
    }
    println!("wrote {} and {}", mix_path.display(), trace_path.display());
    Ok(())
}

fn cmd_greedy(
    ctx: &Context,
    target: &str,
    h: &str,
    sample_size: Option<usize>,
    k_max: Option<usize>,
) -> CliResult<()> {
    let (f, h) = (parse_density(target)?, parse_density(h)?);
    let grid = ctx.config.greedy_grid().map_err(usage)?;
    let k_max = k_max.unwrap_or(ctx.config.greedy.k_max);
    let obj = match sample_size {
        Some(0) => return Err(usage("--sample-size must be at least 1")),
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let xs = f.sample(&mut rng, n);
            let ys = h.sample(&mut rng, n);
            PointObjective::empirical(&h, &xs, &ys).map_err(numeric)?
        }
        None => PointObjective::population(&f, &h, &ctx.config.quadrature_spec().map_err(usage)?)
            .map_err(numeric)?,
    };
    let steps = greedy_fit(&obj, k_max, &grid).map_err(classify)?;
    let mut csv = String::from("k,pi,a,b,objective,mixture\n");
    println!(
        "{:>3} {:>8} {:>10} {:>10} {:>16}",
        "k", "pi", "a", "b", "objective"
    );
    for s in &steps {
        csv.push_str(&format!(
            "{},{},{},{},{:.16e},\"{}\"\n",
            s.k,
            s.pi,
            s.theta.a(),
            s.theta.b(),
            s.objective,
            s.mixture.to_csv_row()
        ));
        println!(
            "{:>3} {:>8.4} {:>10.4} {:>10.4} {:>16.10}",
            s.k,
            s.pi,
            s.theta.a(),
            s.theta.b(),
            s.objective
        );
    }
    let path = ctx.out_file("greedy.csv")?;
    write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_experiment(ctx: &Context, experiment: Option<&str>, scale: Option<&str>) -> CliResult<()> {
    let mut config = ctx.config.clone();
    if let Some(id) = experiment {
        config.experiment.id = id.parse::<ExperimentId>().map_err(usage)?.to_string();
    }
    if let Some(s) = scale {
        config.experiment.scale = match s {
            "desk" => Scale::Desk,
            "paper" => Scale::Paper,
            other => {
                return Err(usage(format!(
                    "unknown scale `{other}` (expected desk or paper)"
                )))
            }
        };
    }
    config.experiment.seed = ctx.seed;
    let plan = config.plan().map_err(usage)?;
    let results = ctx.out_file(&format!("results_{}.csv", plan.experiment))?;
    let entropy = ctx.out_file(&format!("entropy_{}.csv", plan.experiment))?;

    let constant = entropy_constant(&plan).map_err(numeric)?;
    write_entropy_constants(&entropy, &[(plan.experiment, constant)]).map_err(numeric)?;
    let total = plan.scenarios().len();
    let progress = std::cell::Cell::new(0usize);
    let rows = run_plan_observed(&plan, ctx.workers, Some(&results), &|r| {
        progress.set(progress.get() + 1);
        eprintln!(
            "[{}] k={} n={} l={} K={:.6}",
            progress.get(),
            r.k,
            r.n,
            r.l,
            r.neg_lifted_loglik
        );
    })
    .map_err(|e| match e {
        Error::PlanFailed { .. } => numeric(e),
        other => classify(other),
    })?;
    println!(
        "{} of {} scenarios in {}",
        rows.len(),
        total,
        results.display()
    );
    println!("entropy constant = {constant:.10} ({})", entropy.display());
    Ok(())
}

fn cmd_regress(ctx: &Context, results: &Path, aggregate: bool, min_k: usize) -> CliResult<()> {
    let rows = read_results(results).map_err(usage)?;
    let mut data = rows_from_results(&rows, min_k.max(2));
    if aggregate {
        data = aggregate_means(&data);
    }
    let fit = fit_rows(&data).map_err(classify)?;
    let path = ctx.out_file("fit_report.csv")?;
    write_fit_report(&path, &fit).map_err(numeric)?;
    println!(
        "{:>4} {:>12} {:>12} {:>12}",
        "", "estimate", "ci_lower", "ci_upper"
    );
    for i in 0..5 {
        println!(
            "{:>4} {:>12.4} {:>12.4} {:>12.4}",
            PARAM_NAMES[i], fit.params[i], fit.ci_lower[i], fit.ci_upper[i]
        );
    }
    println!(
        "rss = {:.6e} n_obs = {} converged = {}",
        fit.rss, fit.n_obs, fit.converged
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(ctx: &Context, results: &Path) -> CliResult<()> {
    let rows = read_results(results).map_err(usage)?;
    if rows.is_empty() {
        return Err(usage(format!("{} has no rows", results.display())));
    }
    let table = MeansTable::from_results(&rows);
    let mut ids: Vec<String> = rows.iter().map(|r| r.experiment.to_string()).collect();
    ids.sort();
    ids.dedup();
    let title = format!("Mean K by k and n ({})", ids.join(", "));
    let table_path = ctx.out_file("means_table.csv")?;
    write_text(&table_path, &table.to_csv())?;
    let svg_path = ctx.out_file("heatmap.svg")?;
    write_text(&svg_path, &heatmap_svg(&table, &title))?;
    let (row_v, col_v) = table.monotonicity_violations();
    print!("{}", table.to_csv());
    println!("increases along n per k: {row_v:?}");
    println!("increases along k per n: {col_v:?}");
    println!("wrote {} and {}", table_path.display(), svg_path.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Divergence { f, g, h } => cmd_divergence(&ctx, f, g, h),
        Command::Fit {
            k,
            h,
            data,
            generate,
            n,
        } => cmd_fit(&ctx, *k, h, data.as_deref(), generate.as_deref(), *n),
        Command::Greedy {
            target,
            h,
            sample_size,
            k_max,
        } => cmd_greedy(&ctx, target, h, *sample_size, *k_max),
        Command::Experiment { experiment, scale } => {
            cmd_experiment(&ctx, experiment.as_deref(), scale.as_deref())
        }
        Command::Regress {
            results,
            aggregate_means,
            min_k,
        } => cmd_regress(&ctx, results, *aggregate_means, *min_k),
        Command::Report { results } => cmd_report(&ctx, results),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
