//! `mrfsig` command line: binarize peak lists, discover scored signatures,
//! classify spectra, and check model fit quality.
//!
//! Exit codes: 0 success, 1 runtime/numerical failure, 2 input/usage error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mrfsig::RunConfig;

#[derive(Parser)]
#[command(name = "mrfsig", version, about = "Autologistic MRF biomarker signature discovery")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize a JSON-lines peak file into a binary matrix CSV.
    Binarize {
        /// Peak lists: one {"id", "group", "peaks"} object per line.
        peaks: PathBuf,
        /// Relative m/z accuracy.
        #[arg(long)]
        rho: Option<f64>,
        /// First grid abscissa (smallest observed peak when omitted).
        #[arg(long)]
        b1: Option<f64>,
    },
    /// Discover the optimal scored signature separating two groups.
    Discover {
        /// Binary matrix CSV (id,group,<mz...> header).
        matrix: PathBuf,
        /// Group label modeled as G+.
        group_plus: String,
        /// Group label modeled as G-.
        group_minus: String,
        /// Minimal activation frequency for feature selection.
        #[arg(long)]
        thr: Option<f64>,
        /// Candidate pool size per DP extreme.
        #[arg(long = "H")]
        h: Option<usize>,
        /// Pin the quadruplet d+,c+,d-,c- and skip the grid search.
        #[arg(long)]
        dim: Option<String>,
        /// Also scan normalized KL distances over the grid.
        #[arg(long)]
        kl_scan: bool,
        /// Rank candidates by leave-one-out cross validation (default).
        #[arg(long, overrides_with = "no_loo")]
        loo: bool,
        /// Rank candidates by training performance only.
        #[arg(long)]
        no_loo: bool,
        /// Virtual datasets for the fit-quality reports.
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Classify spectra against a discovered signature.
    Classify {
        /// Signature JSON produced by `discover`.
        signature: PathBuf,
        /// Peak lists to classify (JSON-lines).
        peaks: PathBuf,
    },
    /// Goodness-of-fit quantile of one group under a fitted model.
    Fitcheck {
        /// Binary matrix CSV.
        matrix: PathBuf,
        /// Group label to model.
        group: String,
        /// Take sites and cliques from this signature JSON.
        #[arg(long, conflicts_with = "sites")]
        signature: Option<PathBuf>,
        /// Which side of the signature supplies the cliques: plus or minus.
        #[arg(long, requires = "signature")]
        side: Option<String>,
        /// Explicit site list, e.g. 3,17,42 (original indices).
        #[arg(long)]
        sites: Option<String>,
        /// Explicit clique list, e.g. 3-17,5-42 (original indices).
        #[arg(long, requires = "sites")]
        cliques: Option<String>,
        /// Number of simulated virtual datasets.
        #[arg(long)]
        replicas: Option<usize>,
    },
}

/// Errors carrying their process exit code.
pub enum CliError {
    /// Bad input or usage: exit 2.
    Usage(String),
    /// Runtime or numerical failure: exit 1.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    /// Classifies a core error: malformed input and violated preconditions
    /// are usage errors, numerical trouble is a runtime error.
    pub fn from_core(e: mrfsig::Error) -> Self {
        use mrfsig::Error::*;
        match e {
            Format(_) | Domain(_) | InsufficientFeatures(_) => CliError::Usage(e.to_string()),
            Capacity(_) | Numerical(_) | RankDeficient { .. } | Io(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.code());
        }
    };
    let result = match &cli.command {
        Command::Binarize { peaks, rho, b1 } => {
            let mut cfg = cfg;
            if let Some(rho) = rho {
                cfg.rho = *rho;
            }
            if let Some(b1) = b1 {
                cfg.b1 = Some(*b1);
            }
            commands::binarize(peaks, &cfg, &cli.out)
        }
        Command::Discover {
            matrix,
            group_plus,
            group_minus,
            thr,
            h,
            dim,
            kl_scan,
            loo: _,
            no_loo,
            replicas,
        } => {
            let mut cfg = cfg;
            if let Some(thr) = thr {
                cfg.thr = *thr;
            }
            if let Some(h) = h {
                cfg.h = *h;
            }
            let opts = commands::DiscoverOptions {
                dim: dim.clone(),
                kl_scan: *kl_scan,
                use_loo: !*no_loo,
                replicas: replicas.unwrap_or(mrfsig::fit_quality::DEFAULT_REPLICAS),
            };
            commands::discover(matrix, group_plus, group_minus, &cfg, &opts, &cli.out)
        }
        Command::Classify { signature, peaks } => commands::classify(signature, peaks, &cli.out),
        Command::Fitcheck {
            matrix,
            group,
            signature,
            side,
            sites,
            cliques,
            replicas,
        } => {
            let source = match (signature, sites) {
                (Some(sig), None) => commands::SupportSource::Signature {
                    path: sig.clone(),
                    side: side.clone().unwrap_or_else(|| "plus".to_string()),
                },
                (None, Some(sites)) => commands::SupportSource::Explicit {
                    sites: sites.clone(),
                    cliques: cliques.clone(),
                },
                _ => {
                    eprintln!("error: fitcheck needs either --signature or --sites");
                    return ExitCode::from(2);
                }
            };
            commands::fitcheck(
                matrix,
                group,
                source,
                replicas.unwrap_or(mrfsig::fit_quality::DEFAULT_REPLICAS),
                &cfg,
                &cli.out,
            )
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
