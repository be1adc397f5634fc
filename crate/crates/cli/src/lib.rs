//! Command implementations behind the `urbanlens` binary.

pub mod config;
pub mod output;
pub mod stages;

use std::path::PathBuf;

use anyhow::Result;
use serde_json::json;

use crate::config::{InputPath, PipelineConfig};
use crate::output::{commit, sha256_file, Artifact};

/// Exit status when filtering leaves no check-ins.
pub const EXIT_EMPTY_DATASET: i32 = 3;

pub fn cmd_cluster(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let run = stages::cluster(cfg)?;
    println!(
        "{} clusters from {} check-ins ({} noise)",
        run.assignment.cluster_count(),
        run.points.len(),
        run.assignment.noise().len()
    );
    commit(&cfg.output_dir, &run.artifacts()?)
}

pub fn cmd_enrich(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let clusters = stages::cluster(cfg)?;
    let run = stages::enrich(cfg, &clusters)?;
    print_enrich(cfg, &run);
    commit(&cfg.output_dir, &run.artifacts(cfg)?)
}

fn print_enrich(cfg: &PipelineConfig, run: &stages::EnrichRun) {
    println!(
        "{} reports assigned, {} unassigned, {} uncategorized",
        run.stats.iter().map(|s| s.total).sum::<u64>(),
        run.unassigned_categorized(),
        run.uncategorized()
    );
    if let Some(share) = run.share {
        println!("share of {}: {share:.2}%", cfg.share_subset.join("+"));
    }
}

pub fn cmd_score_sites(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let clusters = stages::cluster(cfg)?;
    let enrich = stages::enrich(cfg, &clusters)?;
    let run = stages::score_sites(cfg, &enrich)?;
    print_ranking(&run);
    commit(&cfg.output_dir, &run.artifacts()?)
}

fn print_ranking(run: &stages::ScoreRun) {
    for (i, r) in run.ranking.iter().enumerate() {
        println!("{:>2}. {} ({} marks)", i + 1, r.cluster, r.marks);
    }
}

pub fn cmd_react(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let run = stages::react(cfg)?;
    print_react(&run);
    commit(&cfg.output_dir, &run.artifacts()?)
}

fn print_react(run: &stages::ReactRun) {
    let all = urbanlens::sentiment::distribution(&run.scores);
    println!(
        "{} comments, {} with zero similarity; mean polarity {}",
        run.comments.len(),
        run.zero_similarity(),
        all.mean_text().unwrap_or_else(|| "n/a".into())
    );
}

fn input_entry(role: &str, input: &Option<InputPath>) -> Result<Option<serde_json::Value>> {
    let Some(input) = input else { return Ok(None) };
    let sha256 = if input.path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&input.path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.sort();
        let mut listing = String::new();
        for f in files.iter().filter(|f| f.is_file()) {
            let name = f.file_name().unwrap_or_default().to_string_lossy();
            listing.push_str(&format!("{}  {name}\n", sha256_file(f)?));
        }
        output::sha256_hex(listing.as_bytes())
    } else {
        sha256_file(&input.path)?
    };
    Ok(Some(
        json!({ "role": role, "path": input.configured, "sha256": sha256 }),
    ))
}

/// Inputs, parameters and output hashes of a pipeline run. Contains no
/// timestamps or absolute paths, so identical runs give identical manifests.
pub fn manifest(cfg: &PipelineConfig, stages: &[(&str, &[Artifact])]) -> Result<serde_json::Value> {
    let inputs: Vec<serde_json::Value> = [
        ("checkins", &cfg.checkins),
        ("reports", &cfg.reports),
        ("comments", &cfg.comments),
        ("articles", &cfg.articles),
        ("annotations", &cfg.annotations),
        ("checkin_schema", &cfg.checkin_schema),
        ("report_schema", &cfg.report_schema),
        ("comment_schema", &cfg.comment_schema),
        ("category_map", &cfg.category_map),
        ("language_dir", &cfg.language_dir),
        ("lexicon", &cfg.lexicon),
    ]
    .into_iter()
    .filter_map(|(role, input)| input_entry(role, input).transpose())
    .collect::<Result<_>>()?;
    let stages: Vec<serde_json::Value> = stages
        .iter()
        .map(|(name, artifacts)| {
            json!({
                "stage": name,
                "outputs": artifacts.iter().map(|a| json!({
                    "file": a.name,
                    "bytes": a.bytes.len(),
                    "sha256": a.sha256(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({
        "tool": "urbanlens",
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs,
        "parameters": cfg.parameters(),
        "stages": stages,
    }))
}

pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let clusters = stages::cluster(cfg)?;
    let enrich = stages::enrich(cfg, &clusters)?;
    let scores = stages::score_sites(cfg, &enrich)?;
    let react = stages::react(cfg)?;

    let cluster_out = clusters.artifacts()?;
    let enrich_out = enrich.artifacts(cfg)?;
    let score_out = scores.artifacts()?;
    let react_out = react.artifacts()?;
    let manifest = manifest(
        cfg,
        &[
            ("cluster", &cluster_out),
            ("enrich", &enrich_out),
            ("score-sites", &score_out),
            ("react", &react_out),
        ],
    )?;

    println!(
        "{} clusters from {} check-ins",
        clusters.assignment.cluster_count(),
        clusters.points.len()
    );
    print_enrich(cfg, &enrich);
    print_ranking(&scores);
    print_react(&react);

    let mut all: Vec<Artifact> = [cluster_out, enrich_out, score_out, react_out].concat();
    all.push(Artifact::json("manifest.json", &manifest));
    commit(&cfg.output_dir, &all)
}
