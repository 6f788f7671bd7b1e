//! `asugs` command-line driver.
//!
//! Exit status: 0 on success, 2 for bad flags or configuration, 3 for
//! unreadable or malformed data, 4 when a run, a trial or a numeric check
//! fails.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use asugs::data::{self, Dataset};
use asugs::diagnostics::{
    growth_exponent_of_counts, kl_divergence_estimate, l2_distance_to_truth, linear_trend,
    product_bound_check, rising_product_ratio, run_with_diagnostics, DiagnosticsPlan, Schedule,
};
use asugs::harness::{compare, CompareConfig, DataSource, Variant};
use asugs::rng::{stream, Purpose};
use asugs::trace::{read_trace, write_trace, TraceFile};
use asugs::{EngineConfig, GaussianMixture, PriorConfig, Selection};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Trial(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Trial(_) => 4,
        }
    }
}

impl From<asugs::Error> for CliError {
    fn from(e: asugs::Error) -> Self {
        use asugs::Error as E;
        match e {
            E::InvalidConfig { .. } | E::Domain(_) | E::NotPositiveDefinite => {
                CliError::Config(e.to_string())
            }
            E::Step { .. } => CliError::Trial(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "asugs",
    version,
    about = "Single-pass Dirichlet process mixture clustering",
    allow_negative_numbers = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample train and test sets from a square grid of 2D Gaussians.
    Generate(GenerateArgs),
    /// Cluster one CSV stream and write its trace.
    Fit(FitArgs),
    /// Monte Carlo comparison of the adaptive and fixed-alpha variants.
    Compare(CompareArgs),
    /// Convergence diagnostics for a trace or a fresh run, plus the numeric
    /// checks on the rising-product ratio and the log-product bound.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory for train.csv, test.csv, truth.json, label files and
    /// generate.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    side: usize,
    #[arg(long, default_value_t = 0.025)]
    sigma2: f64,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the training stream grouped by component instead of shuffled.
    #[arg(long)]
    ordered: bool,
    /// Overwrite existing files.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Sample,
    Argmax,
}

#[derive(Args)]
struct EngineArgs {
    /// Rate of the exponential prior on the concentration.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Use this concentration throughout instead of adapting it.
    #[arg(long)]
    fixed_alpha: Option<f64>,
    #[arg(long, value_enum, default_value_t = SelectionArg::Sample)]
    selection: SelectionArg,
    /// Prune threshold on the responsibility share; 0 disables pruning.
    #[arg(long, default_value_t = asugs::engine::DEFAULT_PRUNE_EPS)]
    prune_eps: f64,
    /// Merge threshold on the averaged responsibility gap; 0 disables merging.
    #[arg(long, default_value_t = asugs::engine::DEFAULT_MERGE_EPS)]
    merge_eps: f64,
    #[arg(long, default_value_t = asugs::engine::DEFAULT_MAINTENANCE_PERIOD)]
    maintenance_period: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prior pseudo-count on the mean.
    #[arg(long, default_value_t = 1.0)]
    prior_c0: f64,
    /// Prior shape; defaults to (d + 2)/2.
    #[arg(long)]
    prior_delta0: Option<f64>,
    /// Prior covariance scale: sigma0 = scale * I.
    #[arg(long, default_value_t = 1.0)]
    prior_scale: f64,
}

impl EngineArgs {
    fn config(&self, d: usize) -> CliResult<EngineConfig> {
        let delta0 = self.prior_delta0.unwrap_or((d as f64 + 2.0) / 2.0);
        let config = EngineConfig {
            lambda: self.lambda,
            selection: match self.selection {
                SelectionArg::Sample => Selection::Sample,
                SelectionArg::Argmax => Selection::Argmax,
            },
            fixed_alpha: self.fixed_alpha,
            prune_eps: self.prune_eps,
            merge_eps: self.merge_eps,
            maintenance_period: self.maintenance_period,
            seed: self.seed,
            prior: PriorConfig::isotropic(d, self.prior_c0, delta0, self.prior_scale),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training stream, one observation per CSV row.
    #[arg(long)]
    train: PathBuf,
    /// Held-out rows scored at every checkpoint and at the end.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Generating mixture (JSON) for KL and L2 diagnostics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Directory for trace.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint every this many observations; default is 10, 20, 40, 80, ...
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long, default_value_t = 2000)]
    kl_samples: usize,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Fixed training set shared by all trials (otherwise data is drawn per trial).
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Mixture to draw per-trial data from; defaults to the 4 x 4 grid.
    #[arg(long, conflicts_with = "train")]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Concentration of the fixed-alpha variants.
    #[arg(long, default_value_t = 1.0)]
    sugs_alpha: f64,
    /// Comma-separated subset of asugs, asugs-pm, sugs, sugs-pm.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Checkpoint every this many observations; default is 10, 20, 40, 80, ...
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Directory for report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["trace", "train"])))]
struct DiagnoseArgs {
    /// Trace file written by `fit`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run the engine on this CSV stream instead of reading a trace.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Generating mixture; a missing file only disables truth-relative metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    kl_samples: usize,
    /// Checkpoint spacing for a fresh run; default is 10, 20, 40, 80, ...
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Largest n for the rising-product ratio check.
    #[arg(long, default_value_t = 1_000_000)]
    ratio_n: u64,
    /// Largest n for the log-product bound check.
    #[arg(long, default_value_t = 100_000)]
    bound_n: u64,
    /// Directory for diagnostics.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Compare(a) => run_compare(a),
        Command::Diagnose(a) => diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Create `dir` and return `dir/name`, refusing to clobber without `force`.
fn output_path(dir: &Path, name: &str, force: bool) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    if path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(path)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io)
}

fn load_csv(path: &Path) -> CliResult<Dataset> {
    data::read_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_mixture(path: &Path) -> CliResult<GaussianMixture> {
    data::read_mixture(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn same_dim(what: &str, d: usize, expected: usize) -> CliResult<()> {
    if d != expected {
        return Err(CliError::Data(format!(
            "{what} has dimension {d}, training data has {expected}"
        )));
    }
    Ok(())
}

fn schedule(every: Option<u64>) -> CliResult<Schedule> {
    match every {
        Some(0) => Err(CliError::Config(
            "--checkpoint-every must be at least 1".into(),
        )),
        Some(period) => Ok(Schedule::Every { period }),
        None => Ok(Schedule::default()),
    }
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let truth = data::generate_grid_mixture(a.side, a.sigma2, a.spacing)?;
    if a.n_train == 0 {
        return Err(CliError::Config("--n-train must be at least 1".into()));
    }
    let names = [
        "train.csv",
        "test.csv",
        "truth.json",
        "train_labels.csv",
        "test_labels.csv",
        "generate.json",
    ];
    let paths = names
        .iter()
        .map(|n| output_path(&a.out, n, a.force))
        .collect::<CliResult<Vec<_>>>()?;

    let mut train = truth.sample(a.n_train, &mut stream(a.seed, Purpose::TrainData, 0));
    if a.ordered {
        train = train.ordered_by_label();
    }
    let test = truth.sample(a.n_test, &mut stream(a.seed, Purpose::TestData, 0));
    data::write_csv(&paths[0], &train.rows)?;
    data::write_csv(&paths[1], &test.rows)?;
    data::write_mixture(&paths[2], &truth)?;
    data::write_labels(&paths[3], train.labels.as_deref().unwrap_or_default())?;
    data::write_labels(&paths[4], test.labels.as_deref().unwrap_or_default())?;
    let settings = json!({
        "side": a.side,
        "sigma2": a.sigma2,
        "spacing": a.spacing,
        "n_train": a.n_train,
        "n_test": a.n_test,
        "seed": a.seed,
        "ordered": a.ordered,
    });
    write_json(&paths[5], &settings)?;
    println!(
        "wrote {} train and {} test rows from {} components to {}",
        train.len(),
        test.len(),
        truth.len(),
        a.out.display()
    );
    Ok(())
}

fn fit(a: FitArgs) -> CliResult<()> {
    let out = a
        .out
        .as_deref()
        .map(|dir| output_path(dir, "trace.jsonl", a.force))
        .transpose()?;
    let train = load_csv(&a.train)?;
    let config = a.engine.config(train.d)?;
    let test = a.test.as_deref().map(load_csv).transpose()?;
    let truth = a.truth.as_deref().map(load_mixture).transpose()?;
    if let Some(t) = &test {
        same_dim("test set", t.d, train.d)?;
    }
    if let Some(t) = &truth {
        same_dim("truth", t.dim(), train.d)?;
    }
    let plan = DiagnosticsPlan {
        schedule: schedule(a.checkpoint_every)?,
        l2: truth.is_some(),
        truth,
        kl_samples: a.kl_samples,
        kl_seed: config.seed,
        heldout: test.map(|t| t.rows),
    };
    let run = run_with_diagnostics(&train.rows, &config, &plan)
        .map_err(|e| CliError::Trial(e.to_string()))?;
    if let Some(out) = &out {
        write_trace(out, &TraceFile::from(&run))?;
    }

    let last = run
        .checkpoints
        .last()
        .expect("a run always ends with a checkpoint");
    println!("observations: {}", run.book.n());
    println!("clusters: {}", run.book.len());
    println!("alpha: {:.6}", last.alpha);
    println!("pruned observations: {}", run.book.dropped());
    if let Some(h) = last.heldout_loglik {
        println!("held-out log-likelihood per sample: {h:.6}");
    }
    if let Some(kl) = last.kl {
        println!("KL to truth: {:.6} (se {:.6})", kl.value, kl.std_err);
    }
    if let Some(l2) = last.l2_distance {
        println!("L2 to truth: {l2:.6}");
    }
    if let Some(out) = &out {
        println!("trace: {}", out.display());
    }
    Ok(())
}

fn run_compare(a: CompareArgs) -> CliResult<()> {
    let out = a
        .out
        .as_deref()
        .map(|dir| output_path(dir, "report.json", a.force))
        .transpose()?;
    let source = match &a.train {
        Some(train) => {
            let train = load_csv(train)?;
            let test = a.test.as_deref().map(load_csv).transpose()?;
            if let Some(t) = &test {
                same_dim("test set", t.d, train.d)?;
            }
            DataSource::Fixed { train, test }
        }
        None => {
            let truth = match &a.truth {
                Some(p) => load_mixture(p)?,
                None => data::generate_grid_mixture(4, 0.025, 1.0)?,
            };
            if a.n_train == 0 {
                return Err(CliError::Config("--n-train must be at least 1".into()));
            }
            DataSource::Generated {
                truth,
                n_train: a.n_train,
                n_test: a.n_test,
            }
        }
    };
    let d = match &source {
        DataSource::Fixed { train, .. } => train.d,
        DataSource::Generated { truth, .. } => truth.dim(),
    };
    let mut config = CompareConfig::new(a.engine.config(d)?, a.trials);
    config.workers = a.workers;
    config.sugs_alpha = a.sugs_alpha;
    config.schedule = schedule(a.checkpoint_every)?;
    if let Some(v) = a.variants {
        config.variants = v;
    }
    let report = compare(&config, &source)?;
    if let Some(out) = &out {
        write_json(out, &report)?;
    }

    println!(
        "{:<10} {:>6} {:>7} {:>8} {:>8} {:>12}",
        "variant", "trials", "modal k", "mean k", "var k", "held-out"
    );
    for &v in &config.variants {
        let rows: Vec<_> = report.rows_for(v).collect();
        if rows.is_empty() {
            println!("{:<10} {:>6}", v.name(), 0);
            continue;
        }
        let m = rows.len() as f64;
        let mean_k = rows.iter().map(|r| r.final_k as f64).sum::<f64>() / m;
        let var_k = rows
            .iter()
            .map(|r| (r.final_k as f64 - mean_k).powi(2))
            .sum::<f64>()
            / m;
        let scores: Vec<f64> = rows.iter().filter_map(|r| r.heldout_per_sample).collect();
        let heldout = if scores.is_empty() {
            "-".to_string()
        } else {
            format!("{:.4}", scores.iter().sum::<f64>() / scores.len() as f64)
        };
        println!(
            "{:<10} {:>6} {:>7} {:>8.2} {:>8.2} {:>12}",
            v.name(),
            rows.len(),
            report.modal_final_k(v).unwrap_or(0),
            mean_k,
            var_k,
            heldout
        );
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("trial {} of {} failed: {}", f.trial, f.variant, f.error);
        }
        return Err(CliError::Trial(format!(
            "{} trial(s) failed",
            report.failures.len()
        )));
    }
    Ok(())
}

/// Truth mixture if the file exists; a missing file is only a warning.
fn optional_truth(path: Option<&Path>) -> CliResult<Option<GaussianMixture>> {
    match path {
        Some(p) if !p.exists() => {
            eprintln!(
                "warning: {} not found; skipping truth-relative metrics",
                p.display()
            );
            Ok(None)
        }
        Some(p) => load_mixture(p).map(Some),
        None => Ok(None),
    }
}

fn diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let out = a
        .out
        .as_deref()
        .map(|dir| output_path(dir, "diagnostics.json", a.force))
        .transpose()?;
    let truth = optional_truth(a.truth.as_deref())?;
    let test = a.test.as_deref().map(load_csv).transpose()?;

    let trace = match (&a.trace, &a.train) {
        (Some(p), _) => {
            read_trace(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        (None, Some(p)) => {
            let train = load_csv(p)?;
            let config = a.engine.config(train.d)?;
            let plan = DiagnosticsPlan {
                schedule: schedule(a.checkpoint_every)?,
                l2: truth.is_some(),
                truth: truth.clone(),
                kl_samples: a.kl_samples,
                kl_seed: config.seed,
                heldout: test.as_ref().map(|t| t.rows.clone()),
            };
            let run = run_with_diagnostics(&train.rows, &config, &plan)
                .map_err(|e| CliError::Trial(e.to_string()))?;
            TraceFile::from(&run)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let d = trace.config.dim();
    if let Some(t) = &truth {
        same_dim("truth", t.dim(), d)?;
    }
    if let Some(t) = &test {
        same_dim("test set", t.d, d)?;
    }
    let book = trace.summary.book()?;
    let alpha = trace
        .config
        .fixed_alpha
        .unwrap_or_else(|| trace.summary.concentration.alpha());
    let growth = growth_exponent_of_counts(&trace.class_counts()).ok();

    println!("observations: {}", trace.summary.n);
    println!("clusters: {}", book.len());
    println!("alpha: {alpha:.6}");
    println!("pruned observations: {}", trace.summary.dropped);
    match growth {
        Some(g) => println!("growth exponent of k in ln ln n: {g:.4}"),
        None => println!("growth exponent: n/a (needs at least 100 steps)"),
    }

    // trends over the second half of the checkpoints
    let tail = &trace.checkpoints[trace.checkpoints.len() / 2..];
    let lr_points: Vec<(f64, f64)> = tail
        .iter()
        .filter_map(|c| c.window_mean_lr.map(|l| (c.n as f64, l)))
        .collect();
    let lr_trend = (lr_points.len() >= 3).then(|| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = lr_points.iter().copied().unzip();
        linear_trend(&xs, &ys)
    });
    let k_ratio_non_increasing = (tail.len() >= 2).then(|| {
        tail.windows(2).all(|w| {
            let r = |c: &asugs::diagnostics::Checkpoint| c.k as f64 / (c.n as f64).ln().powi(2);
            r(&w[1]) <= r(&w[0])
        })
    });
    if let Some((slope, se)) = lr_trend {
        println!(
            "likelihood-ratio slope over last half: {slope:.3e} (se {se:.3e}), {}",
            if slope <= se {
                "no upward trend"
            } else {
                "rising"
            }
        );
    }
    if let Some(ok) = k_ratio_non_increasing {
        println!(
            "k / ln^2 n over last half: {}",
            if ok {
                "non-increasing"
            } else {
                "increases somewhere"
            }
        );
    }

    let fit_vs_truth = match &truth {
        Some(t) => {
            let kl = kl_divergence_estimate(t, &book, a.kl_samples, trace.config.seed)?;
            let l2 = l2_distance_to_truth(&book, t, a.kl_samples, trace.config.seed)?;
            println!("KL to truth: {:.6} (se {:.6})", kl.value, kl.std_err);
            println!("L2 to truth: {:.6}", l2.value);
            Some(json!({ "kl": kl, "l2": l2 }))
        }
        None => None,
    };
    let heldout = match &test {
        Some(t) => {
            let h = data::heldout_loglik(&book, &t.rows)?;
            println!("held-out log-likelihood per sample: {:.6}", h.per_sample);
            Some(h.per_sample)
        }
        None => None,
    };

    println!();
    let mut all_pass = true;
    let mut ratios = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        let r = rising_product_ratio(alpha, a.ratio_n)?;
        let pass = if alpha == 1.0 {
            (r - 1.0).abs() <= 1e-12
        } else {
            (0.95..=1.05).contains(&r)
        };
        all_pass &= pass;
        println!(
            "{} rising-product ratio, alpha {alpha}, n {}: {r:.6}",
            if pass { "PASS" } else { "FAIL" },
            a.ratio_n
        );
        ratios.push(json!({ "alpha": alpha, "n": a.ratio_n, "ratio": r, "pass": pass }));
    }
    let mut bounds = Vec::new();
    for phi in [0.5, 1.0, 2.0, 5.0] {
        for start in [2u64, 10, 100] {
            let check = product_bound_check(phi, start, a.bound_n.max(start))?;
            all_pass &= check.holds;
            println!(
                "{} log-product bound, phi {phi}, N {start}: smallest log slack {:.3e} at n = {}",
                if check.holds { "PASS" } else { "FAIL" },
                check.min_slack,
                check.min_slack_at
            );
            bounds.push(check);
        }
    }

    if let Some(out) = &out {
        let report: Value = json!({
            "config": trace.config,
            "source": match (&a.trace, &a.train) {
                (Some(p), _) => json!({ "trace": p }),
                (None, p) => json!({ "train": p }),
            },
            "observations": trace.summary.n,
            "clusters": book.len(),
            "alpha": alpha,
            "dropped": trace.summary.dropped,
            "growth_exponent": growth,
            "lr_trend": lr_trend.map(|(slope, se)| json!({ "slope": slope, "std_err": se })),
            "k_ratio_non_increasing": k_ratio_non_increasing,
            "truth": fit_vs_truth,
            "heldout_per_sample": heldout,
            "checkpoints": trace.checkpoints,
            "rising_product_ratio": ratios,
            "product_bound": bounds,
        });
        write_json(out, &report)?;
        println!("diagnostics: {}", out.display());
    }
    if !all_pass {
        return Err(CliError::Trial("a numeric check failed".into()));
    }
    Ok(())
}
