use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use itrval::analysis::{run_analysis, PipelineOptions, PropensityMode, RuleName, DEFAULT_PAIRS};
use itrval::data::{read_csv, split, Split};
use itrval::glm::{GlmFamily, DEFAULT_ALPHA, DEFAULT_FOLDS};
use itrval::mi::{DEFAULT_K, DEFAULT_MAX_SWEEPS};
use itrval::propensity::DEFAULT_CLIP;
use itrval::regimes::Prefer;
use itrval::report::{to_tsv_string, ReportRow, RowKind};
use itrval::simulation::{run_study, Scenario, ScenarioConfig};
use itrval::Error;

#[derive(Parser)]
#[command(name = "itrval", version, about = "Value estimates and paired tests for treatment rules")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic replicate study.
    Simulate(SimulateArgs),
    /// Evaluate rules on a CSV cohort.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// a, b (randomized), c, d (observational); b and d have missing covariates.
    #[arg(long, default_value = "a")]
    scenario: Scenario,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// Random seed; drawn at random (and recorded) if not given.
    #[arg(long, env = "ITRVAL_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Imputations per set in scenarios b and d.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 10_000)]
    oracle_size: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = DEFAULT_CLIP)]
    clip: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
    /// Multiplier on the covariate-by-treatment interactions.
    #[arg(long, default_value_t = 1.0)]
    interaction_scale: f64,
    /// No treatment effect at all.
    #[arg(long)]
    null_treatment: bool,
    /// Skip Q- and D-learning; evaluate only the observed and constant rules.
    #[arg(long)]
    no_learners: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Single cohort CSV, split into training and test sets.
    #[arg(long, conflicts_with_all = ["train", "test"], required_unless_present = "train")]
    input: Option<PathBuf>,
    /// Training CSV (with --test).
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    /// Test CSV (with --train).
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    /// Random seed for the split, folds and imputation; drawn at random (and recorded) if not given.
    #[arg(long, env = "ITRVAL_SEED")]
    seed: Option<u64>,
    /// `fit` (logistic regression on all covariates) or `known:<P(a=1)>`.
    #[arg(long, default_value = "fit")]
    propensity: PropensityMode,
    /// Comma-separated rules: obs, all0, all1, q, d.
    #[arg(long, value_delimiter = ',', default_value = "obs,all0,all1,q,d")]
    rules: Vec<RuleName>,
    /// Comma-separated pairs `first:second`. Defaults to the standard pairs among --rules.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(RuleName, RuleName)>>,
    /// Imputations per set when covariates are missing.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_CLIP)]
    clip: f64,
    /// Which outcome direction is better.
    #[arg(long, default_value = "smaller", value_parser = parse_prefer)]
    prefer: Prefer,
    /// Loss for Q-learning (default: binomial for 0/1 outcomes).
    #[arg(long, value_parser = parse_family)]
    q_family: Option<GlmFamily>,
    /// Loss for D-learning (default: gaussian).
    #[arg(long, value_parser = parse_family)]
    d_family: Option<GlmFamily>,
    /// Drop the propensity-estimation variance term.
    #[arg(long)]
    ignore_correction: bool,
    /// Include per-subject influence values in report.json.
    #[arg(long)]
    include_u: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(RuleName, RuleName), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("pair must look like `q:all1`, got `{s}`"))?;
    Ok((a.parse()?, b.parse()?))
}

fn parse_prefer(s: &str) -> Result<Prefer, String> {
    match s {
        "smaller" => Ok(Prefer::Smaller),
        "larger" => Ok(Prefer::Larger),
        _ => Err(format!("expected `smaller` or `larger`, got `{s}`")),
    }
}

fn parse_family(s: &str) -> Result<GlmFamily, String> {
    match s {
        "gaussian" => Ok(GlmFamily::Gaussian),
        "binomial" => Ok(GlmFamily::Binomial),
        _ => Err(format!("expected `gaussian` or `binomial`, got `{s}`")),
    }
}

fn fresh_seed() -> u64 {
    RandomState::new().build_hasher().finish()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn print_rows(rows: &[ReportRow]) {
    println!("{:<8} {:<10} {:>9} {:>8} {:>8} {:>10} {:>7}", "kind", "rule", "estimate", "sd", "t", "p", "mc");
    for r in rows {
        let name = match (&r.kind, &r.name2) {
            (RowKind::Compare, Some(b)) => format!("{}-{}", r.name1, b),
            _ => r.name1.clone(),
        };
        let kind = if r.kind == RowKind::Value { "value" } else { "compare" };
        let p = r.p.map(|p| format!("{p:.3e}")).unwrap_or_else(|| "-".into());
        print!("{kind:<8} {name:<10} {:>9} {:>8} {:>8} {p:>10} {:>7}", fmt_opt(r.estimate), fmt_opt(r.sd), fmt_opt(r.t), fmt_opt(r.mc));
        if let Some(e) = &r.error {
            print!("  ({e})");
        }
        println!();
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let seed = args.seed.unwrap_or_else(fresh_seed);
    let cfg = ScenarioConfig {
        scenario: args.scenario,
        n_total: args.n,
        train_fraction: args.train_frac,
        p: args.p,
        replicates: args.replicates,
        k: args.k,
        oracle_size: args.oracle_size,
        seed,
        alpha: args.alpha,
        n_folds: args.folds,
        max_sweeps: args.max_sweeps,
        clip: args.clip,
        interaction_scale: args.interaction_scale,
        null_treatment: args.null_treatment,
        learners: !args.no_learners,
    };
    cfg.validate()?;
    eprintln!("itrval: scenario {} seed {seed}, {} replicates", cfg.scenario, cfg.replicates);
    let report = run_study(&cfg)?;
    report.write_dir(&args.out)?;
    print_rows(&report.rows());
    for f in &report.failures {
        eprintln!("itrval: replicate {} failed: {}", f.index, f.error);
    }
    if report.replicates.is_empty() {
        return Err(Error::Failed("every replicate failed".into()));
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let seed = args.seed.unwrap_or_else(fresh_seed);
    let data_split = match (&args.input, &args.train, &args.test) {
        (Some(input), _, _) => split(&read_csv(input)?, args.train_frac, seed)?,
        (None, Some(train), Some(test)) => Split { train: read_csv(train)?, test: read_csv(test)? },
        _ => return Err(Error::Config("give --input, or both --train and --test".into())),
    };
    let pairs = args.pairs.clone().unwrap_or_else(|| {
        DEFAULT_PAIRS
            .iter()
            .copied()
            .filter(|(a, b)| args.rules.contains(a) && args.rules.contains(b))
            .collect()
    });
    let opts = PipelineOptions {
        propensity: args.propensity,
        clip: args.clip,
        rules: args.rules.clone(),
        pairs,
        k: args.k,
        max_sweeps: args.max_sweeps,
        alpha: args.alpha,
        n_folds: args.folds,
        prefer: args.prefer,
        q_family: args.q_family,
        d_family: args.d_family,
        ignore_correction: args.ignore_correction,
        seed,
    };
    opts.validate()?;
    std::fs::create_dir_all(&args.out)?;
    let config = json!({
        "input": args.input,
        "train": args.train,
        "test": args.test,
        "train_fraction": args.input.as_ref().map(|_| args.train_frac),
        "n_train": data_split.train.len(),
        "n_test": data_split.test.len(),
        "include_u": args.include_u,
        "options": opts,
    });
    write_json(&args.out.join("config.json"), &config)?;

    let out = run_analysis(&data_split, &opts)?;
    std::fs::write(args.out.join("report.tsv"), to_tsv_string(&out.rows))?;
    let values: Vec<_> = out
        .evaluation
        .rules
        .iter()
        .map(|(name, res)| match res {
            Ok(r) => json!({
                "name": name,
                "pooled": r.pooled,
                "per_imputation": r.per_k.iter().map(|e| e.to_json(args.include_u)).collect::<Vec<_>>(),
            }),
            Err(e) => json!({ "name": name, "error": e }),
        })
        .collect();
    let comparisons: Vec<_> = out
        .evaluation
        .pairs
        .iter()
        .map(|((a, b), res)| match res {
            Ok(r) => json!({
                "first": a,
                "second": b,
                "pooled": r.pooled,
                "per_imputation": r.per_k.iter().map(|c| c.to_json(args.include_u)).collect::<Vec<_>>(),
            }),
            Err(e) => json!({ "first": a, "second": b, "error": e }),
        })
        .collect();
    let report = json!({
        "seed": seed,
        "k": out.evaluation.k,
        "imputed": out.evaluation.imputed,
        "m": out.evaluation.m,
        "n": out.evaluation.n,
        "rows": out.rows,
        "propensity": out.fitted.propensities,
        "rules": out.fitted.rules,
        "values": values,
        "comparisons": comparisons,
    });
    write_json(&args.out.join("report.json"), &report)?;
    eprintln!("itrval: seed {seed}, n = {}, m = {}, k = {}", out.evaluation.n, out.evaluation.m, out.evaluation.k);
    print_rows(&out.rows);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("itrval: config error: --jobs must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("itrval: runtime error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config() => {
            eprintln!("itrval: config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("itrval: runtime error: {e}");
            ExitCode::from(1)
        }
    }
}
