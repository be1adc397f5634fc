use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use urbanlens_cli::config::{Overrides, PipelineConfig};
use urbanlens_cli::stages::EmptyDataset;
use urbanlens_cli::EXIT_EMPTY_DATASET;

/// Find popular areas in geotagged check-ins, profile them with municipal
/// reports, score candidate sites and analyse reader comments.
///
/// Exit status: 0 on success, 1 on any error, 2 on bad usage, 3 when no
/// check-ins remain after validation and filtering.
#[derive(Parser)]
#[command(name = "urbanlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster check-ins; writes clusters.geojson and clusters.csv
    Cluster(Common),
    /// Assign reports to cluster buffers; writes cluster_stats.csv and category_counts.json
    Enrich(Common),
    /// Build the site matrix and ranking; writes site_matrix.csv and site_ranking.csv
    ScoreSites(Common),
    /// Rank comments by relevance and score sentiment; writes ranked_comments.csv and sentiment.json
    React(Common),
    /// Run every stage and write manifest.json with input and output hashes
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// DBSCAN neighbourhood radius in metres
    #[arg(long)]
    eps: Option<f64>,
    /// DBSCAN minimum neighbourhood size, the point itself included
    #[arg(long)]
    min_pts: Option<usize>,
    /// Report buffer radius in metres
    #[arg(long)]
    radius: Option<f64>,
    /// Keep records dated on or after this day (YYYY-MM-DD)
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Keep records dated on or before this day (YYYY-MM-DD)
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let overrides = Overrides {
            eps_m: self.eps,
            min_pts: self.min_pts,
            radius_m: self.radius,
            from: self.from,
            to: self.to,
            output_dir: self.out.clone(),
        };
        Ok(PipelineConfig::load(&self.config, &overrides)?)
    }
}

type Cmd = fn(&PipelineConfig) -> anyhow::Result<Vec<PathBuf>>;

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, cmd): (&Common, Cmd) = match &cli.command {
        Command::Cluster(c) => (c, urbanlens_cli::cmd_cluster),
        Command::Enrich(c) => (c, urbanlens_cli::cmd_enrich),
        Command::ScoreSites(c) => (c, urbanlens_cli::cmd_score_sites),
        Command::React(c) => (c, urbanlens_cli::cmd_react),
        Command::Pipeline(c) => (c, urbanlens_cli::cmd_pipeline),
    };
    let cfg = common.load()?;
    for path in cmd(&cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<EmptyDataset>().is_some() {
                ExitCode::from(EXIT_EMPTY_DATASET as u8)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
