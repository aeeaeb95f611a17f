mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use config::*;

/// Numerical laboratory for mixing of infinite-measure suspension flows.
///
/// Every subcommand writes `<command>.csv`, `manifest.json` and
/// `summary.txt` into the output directory and nowhere else. A JSON
/// `--config` file holds the subcommand's own section; flags override it.
/// Floats are printed with 17 significant digits. Set `INFMIX_THREADS` to
/// fix the worker count; results do not depend on it.
///
/// Exit status: 0 when every check passes or estimates were produced, 1 on
/// errors or failed checks, 2 when a check is inconclusive.
#[derive(Parser)]
#[command(name = "infmix", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "infmix-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file with this subcommand's configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Density of the normalized stable law.
    ///
    /// CSV columns: z, rho.
    StableDensity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        /// zmin:zmax:n, evenly spaced.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Interval probabilities of k-fold sums from the FFT oracle.
    ///
    /// CSV columns: k, lo, hi, prob, overflow_budget. `prob` is the grid
    /// probability of [lo, hi]; `overflow_budget` bounds the mass the
    /// truncation could have moved into the interval.
    ConvolveOracle {
        #[command(flatten)]
        common: Common,
        /// JSON file with the tail model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        cutoff: Option<f64>,
        /// Comma-separated list of k.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u64>>,
        /// lo:hi.
        #[arg(long)]
        query: Option<String>,
    },
    /// Cylinder boundaries and return-time tail of the LSV map.
    ///
    /// CSV columns: n, x_n, y_n, mu_R_gt_n. The last column is the empirical
    /// tail of the first return to [1/2, 1] along an induced orbit, under the
    /// induced invariant law.
    LsvTail {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        nmax: Option<usize>,
        /// Induced orbit length.
        #[arg(long)]
        orbit: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo estimate of correlations of the suspension flow.
    ///
    /// CSV columns: t, raw, scaled, stderr, n, seed. `raw` estimates the
    /// measure of A ∩ g_{-t}B, `scaled` multiplies it by the normalization
    /// L(t)t^{1-α}, `stderr` is the standard error of `raw`.
    MixEstimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        base: Option<BaseKind>,
        /// JSON file with the roof law (i.i.d. base).
        #[arg(long)]
        model: Option<PathBuf>,
        /// LSV parameter.
        #[arg(long)]
        r: Option<f64>,
        /// continuous, lattice:offset:span, affine:p:q, or JSON.
        #[arg(long)]
        roof: Option<String>,
        /// all:a1:a2, lo:hi:a1:a2, or JSON.
        #[arg(long = "A")]
        a: Option<String>,
        /// all:a1:a2, lo:hi:a1:a2, or JSON.
        #[arg(long = "B")]
        b: Option<String>,
        /// t0:t1:n (geometric) or a comma-separated list.
        #[arg(long = "t-grid")]
        t_grid: Option<String>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run verification suites.
    ///
    /// CSV columns: name, statistic, threshold, budget, pass, inconclusive.
    /// A check passes when statistic + budget ≤ threshold. Full reports go
    /// to report.json.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
}

fn load<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("config error in {}", p.display()))
        }
    }
}

fn load_model(path: &PathBuf) -> Result<infmix::regvar::TailModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("config error in `model` ({})", path.display()))
}

fn resolve(cmd: Command) -> Result<ExperimentConfig> {
    Ok(match cmd {
        Command::StableDensity { common, alpha, grid } => {
            let mut c: StableDensityConfig = load(&common.config)?;
            if let Some(v) = alpha {
                c.alpha = v;
            }
            if let Some(v) = grid {
                c.grid = v;
            }
            ExperimentConfig::StableDensity(c)
        }
        Command::ConvolveOracle { common, model, step, cutoff, k, query } => {
            let mut c: ConvolveOracleConfig = load(&common.config)?;
            if let Some(p) = model {
                c.model = load_model(&p)?;
            }
            if let Some(v) = step {
                c.step = v;
            }
            if let Some(v) = cutoff {
                c.cutoff = v;
            }
            if let Some(v) = k {
                c.k = v;
            }
            if let Some(v) = query {
                c.query = v;
            }
            ExperimentConfig::ConvolveOracle(c)
        }
        Command::LsvTail { common, r, nmax, orbit, seed } => {
            let mut c: LsvTailConfig = load(&common.config)?;
            if let Some(v) = r {
                c.r = v;
            }
            if let Some(v) = nmax {
                c.nmax = v;
            }
            if let Some(v) = orbit {
                c.orbit = v;
            }
            if let Some(v) = seed {
                c.seed = v;
            }
            ExperimentConfig::LsvTail(c)
        }
        Command::MixEstimate { common, base, model, r, roof, a, b, t_grid, samples, seed } => {
            let mut c: MixEstimateConfig = load(&common.config)?;
            if let Some(v) = base {
                c.base = v;
            }
            if let Some(p) = model {
                c.model = load_model(&p)?;
            }
            if let Some(v) = r {
                c.r = v;
            }
            if let Some(v) = roof {
                c.roof = config::roof(&v)?;
            } else if c.base == BaseKind::Lsv && matches!(c.roof, RoofChoice::Iid(_)) {
                c.roof = RoofChoice::Lsv(infmix::lsv::RoofSpec::Affine { p: 1.0, q: 1.0 });
            }
            if let Some(v) = a {
                c.a = product_set(&v, "A")?;
            }
            if let Some(v) = b {
                c.b = product_set(&v, "B")?;
            }
            if let Some(v) = t_grid {
                c.t_grid = time_grid(&v)?;
            }
            if let Some(v) = samples {
                c.samples = v;
            }
            if let Some(v) = seed {
                c.seed = v;
            }
            ExperimentConfig::MixEstimate(c)
        }
        Command::Verify { common, suite } => {
            let mut c: VerifyConfig = load(&common.config)?;
            if let Some(v) = suite {
                c.suite = v;
            }
            ExperimentConfig::Verify(c)
        }
    })
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("INFMIX_THREADS") {
        let n: usize = v.parse().with_context(|| format!("INFMIX_THREADS=`{v}` is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|_| resolve(cli.command)).and_then(|cfg| run::run(&cfg, &cli.out));
    match outcome {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
