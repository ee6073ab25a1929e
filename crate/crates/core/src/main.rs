use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nsbo::harness::{
    load_records, plot_data, run_all, summarize, write_csv, write_record, write_table, Method,
    RunConfig,
};
use nsbo::objectives::Family;
use nsbo::{Error, Result};

/// Bayesian optimization with informative covariance functions.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one objective for a list of seeds.
    Run(RunArgs),
    /// Mean NI per (objective, dimension, method): `summary.csv` and `table.csv`.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step NI mean, std and quartiles across seeds as `plot_data.csv`.
    PlotData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; flags given on the command line override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<Family>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    method: Option<Method>,
    /// Comma-separated seeds or ranges, e.g. `0,1,5-9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lcb_beta: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    n_sobol: Option<usize>,
    #[arg(long)]
    noisy: bool,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed list `{s}`"));
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn build_config(args: RunArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| Error::Format {
                path: p.clone(),
                message: e.to_string(),
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = args.objective {
        c.objective = v;
    }
    if let Some(v) = args.dim {
        c.dim = v;
    }
    if let Some(v) = args.method {
        c.method = v;
    }
    if let Some(v) = &args.seeds {
        c.seeds = parse_seeds(v)?;
    }
    if let Some(v) = args.n0 {
        c.n0 = v;
    }
    if let Some(v) = args.budget {
        c.budget = v;
    }
    if let Some(v) = args.out {
        c.out = v;
    }
    if args.lcb_beta.is_some() {
        c.lcb_beta = args.lcb_beta;
    }
    if args.zeta.is_some() {
        c.zeta = args.zeta;
    }
    if let Some(v) = args.n_sobol {
        c.n_sobol = v;
    }
    c.noisy |= args.noisy;
    c.validate()?;
    Ok(c)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("NSBO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("NSBO_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => {
            let config = build_config(args)?;
            let records = run_all(&config)?;
            for r in &records {
                let paths = write_record(r, Some(&config), &config.out)?;
                let mean = r.ni().and_then(|ni| nsbo::harness::run_mean_ni(&ni).ok());
                match mean {
                    Some(m) => println!("{} seed {}: mean NI {m:.4}", paths.csv.display(), r.seed),
                    None => println!("{} seed {}", paths.csv.display(), r.seed),
                }
            }
        }
        Command::Summarize { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let rows = summarize(&load_records(&input)?)?;
            write_csv(&rows, &out.join("summary.csv"))?;
            write_table(&rows, &out.join("table.csv"))?;
            for r in &rows {
                println!("{} {}D {}: {:.3} ± {:.3} ({} runs)", r.objective, r.dim, r.method, r.mean_ni, r.std_ni, r.runs);
            }
        }
        Command::PlotData { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let rows = plot_data(&load_records(&input)?);
            let path = out.join("plot_data.csv");
            write_csv(&rows, &path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
