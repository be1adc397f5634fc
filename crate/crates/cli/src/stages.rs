//! The pipeline stages. Each computes its results and renders them as
//! artifacts; nothing is written to disk here.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::json;
use thiserror::Error;
use urbanlens::cluster::{dbscan, name_clusters, ClusterAssignment, Label};
use urbanlens::enrich::{
    assign_reports, categorize_report, compute_stats, most_common_category, share_of_total,
    CategoryMap, ClusterReportStats, MetaCategory, ReportAssignment,
};
use urbanlens::geo::GeoPoint;
use urbanlens::ingest::{
    self, dedupe_checkins, within_dates, CheckIn, Comment, FieldSet, InputFormat, Parsed, Report,
    Schema, CHECKIN_FIELDS, COMMENT_FIELDS, REPORT_FIELDS,
};
use urbanlens::sentiment::{distribution, score_text_with, Distribution, Lexicon, SentimentScore};
use urbanlens::sitescore::{
    build_matrix, derive_problem_flags, load_annotations, rank_candidates, ProblemFlags,
    RankedSite, SiteMatrix,
};
use urbanlens::textrank::{
    quartile_slice, rank_by_relevance, LanguageConfig, RankedComment, TopicProfile,
};

use crate::config::{InputPath, PipelineConfig};
use crate::output::{csv_bytes, Artifact};

/// Raised when filtering leaves no check-ins to cluster. Mapped to its own exit status.
#[derive(Debug, Error)]
#[error("no check-ins left after validation, date filter and deduplication ({0})")]
pub struct EmptyDataset(pub String);

fn schema(path: &Option<InputPath>, fields: FieldSet) -> Result<Schema> {
    match path {
        Some(p) => {
            Schema::load(&p.path, fields).with_context(|| format!("schema {}", p.path.display()))
        }
        None => Ok(Schema::default()),
    }
}

fn report_rejects<T>(what: &str, parsed: &Parsed<T>) {
    for r in parsed.rejects.iter().take(5) {
        warn!("{what}: row {} rejected: {}", r.row, r.reason);
    }
    if parsed.rejects.len() > 5 {
        warn!("{what}: {} more rows rejected", parsed.rejects.len() - 5);
    }
}

/// Counts from loading one input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub rows: usize,
    pub rejected: usize,
    pub out_of_range: usize,
    pub duplicates: usize,
    pub kept: usize,
}

impl LoadSummary {
    fn to_json(self) -> serde_json::Value {
        json!({
            "rows": self.rows,
            "rejected": self.rejected,
            "outside_dates": self.out_of_range,
            "duplicates": self.duplicates,
            "kept": self.kept,
        })
    }
}

pub fn load_checkins(cfg: &PipelineConfig) -> Result<(Vec<CheckIn>, LoadSummary)> {
    let input = cfg.require(&cfg.checkins, "inputs.checkins")?;
    let schema = schema(&cfg.checkin_schema, CHECKIN_FIELDS)?;
    let parsed = ingest::load_checkins(
        &input.path,
        InputFormat::for_path(&input.path, cfg.delimiter),
        &schema,
    )
    .with_context(|| format!("check-ins {}", input.path.display()))?;
    report_rejects("check-ins", &parsed);
    let rows = parsed.rows();
    let rejected = parsed.rejects.len();
    let in_range: Vec<CheckIn> = parsed
        .records
        .into_iter()
        .filter(|c| within_dates(&c.timestamp, cfg.from, cfg.to))
        .collect();
    let out_of_range = rows - rejected - in_range.len();
    let kept = dedupe_checkins(&in_range);
    let summary = LoadSummary {
        rows,
        rejected,
        out_of_range,
        duplicates: in_range.len() - kept.len(),
        kept: kept.len(),
    };
    if kept.is_empty() {
        return Err(EmptyDataset(format!(
            "{rows} rows, {rejected} rejected, {out_of_range} outside dates"
        ))
        .into());
    }
    Ok((kept, summary))
}

pub struct ClusterRun {
    pub checkins: Vec<CheckIn>,
    pub points: Vec<GeoPoint>,
    pub assignment: ClusterAssignment,
    pub load: LoadSummary,
}

pub fn cluster(cfg: &PipelineConfig) -> Result<ClusterRun> {
    let (checkins, load) = load_checkins(cfg)?;
    let points: Vec<GeoPoint> = checkins.iter().map(|c| c.location).collect();
    let assignment = name_clusters(dbscan(&points, &cfg.dbscan));
    info!(
        "{} check-ins -> {} clusters, {} noise points",
        points.len(),
        assignment.cluster_count(),
        assignment.noise().len()
    );
    Ok(ClusterRun {
        checkins,
        points,
        assignment,
        load,
    })
}

fn point(p: GeoPoint) -> serde_json::Value {
    json!({ "type": "Point", "coordinates": [p.lon(), p.lat()] })
}

impl ClusterRun {
    pub fn cluster_name(&self, label: Label) -> Option<&str> {
        label.cluster().and_then(|id| self.assignment.name(id))
    }

    /// GeoJSON with one feature per check-in (members and noise) and one
    /// centroid feature per cluster.
    pub fn geojson(&self) -> serde_json::Value {
        let a = &self.assignment;
        let mut features: Vec<serde_json::Value> = self
            .checkins
            .iter()
            .zip(a.labels())
            .enumerate()
            .map(|(i, (c, &label))| {
                json!({
                    "type": "Feature",
                    "geometry": point(c.location),
                    "properties": {
                        "layer": if label == Label::Noise { "noise" } else { "member" },
                        "cluster": self.cluster_name(label),
                        "core": a.is_core(i),
                        "user_id": c.user_id,
                        "venue": c.venue_key(),
                        "beer_style": c.beer_style,
                    }
                })
            })
            .collect();
        for id in a.cluster_ids() {
            if let Some(c) = a.centroid(id) {
                features.push(json!({
                    "type": "Feature",
                    "geometry": point(c),
                    "properties": {
                        "layer": "centroid",
                        "cluster": a.name(id),
                        "size": a.members(id).len(),
                    }
                }));
            }
        }
        json!({ "type": "FeatureCollection", "features": features })
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let a = &self.assignment;
        let rows = a.cluster_ids().map(|id| {
            let members = a.members(id);
            let core = members.iter().filter(|&&i| a.is_core(i)).count();
            let c = a.centroid(id).expect("every cluster has a centroid");
            vec![
                a.name(id).unwrap_or_default().to_string(),
                members.len().to_string(),
                core.to_string(),
                format!("{:.6}", c.lat()),
                format!("{:.6}", c.lon()),
            ]
        });
        csv_bytes(
            &[
                "cluster",
                "size",
                "core_points",
                "centroid_lat",
                "centroid_lon",
            ],
            rows,
        )
    }

    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        Ok(vec![
            Artifact::json("clusters.geojson", &self.geojson()),
            Artifact::new("clusters.csv", self.summary_csv()?),
        ])
    }
}

pub fn load_reports(cfg: &PipelineConfig) -> Result<(Vec<Report>, LoadSummary)> {
    let input = cfg.require(&cfg.reports, "inputs.reports")?;
    let schema = schema(&cfg.report_schema, REPORT_FIELDS)?;
    let parsed = ingest::load_reports(
        &input.path,
        InputFormat::for_path(&input.path, cfg.delimiter),
        &schema,
    )
    .with_context(|| format!("reports {}", input.path.display()))?;
    report_rejects("reports", &parsed);
    let rows = parsed.rows();
    let rejected = parsed.rejects.len();
    let kept: Vec<Report> = parsed
        .records
        .into_iter()
        .filter(|r| within_dates(&r.timestamp, cfg.from, cfg.to))
        .collect();
    let summary = LoadSummary {
        rows,
        rejected,
        out_of_range: rows - rejected - kept.len(),
        duplicates: 0,
        kept: kept.len(),
    };
    Ok((kept, summary))
}

pub fn category_map(cfg: &PipelineConfig) -> Result<CategoryMap> {
    match &cfg.category_map {
        Some(p) => {
            CategoryMap::load(&p.path).with_context(|| format!("category map {}", p.path.display()))
        }
        None => Ok(CategoryMap::builtin()),
    }
}

pub struct EnrichRun {
    pub reports: Vec<Report>,
    pub categories: Vec<MetaCategory>,
    pub assigned: ReportAssignment,
    pub stats: Vec<ClusterReportStats>,
    pub load: LoadSummary,
    /// Share of categorized, assigned reports held by the configured subset.
    pub share: Option<f64>,
}

impl EnrichRun {
    pub fn uncategorized(&self) -> usize {
        self.categories
            .iter()
            .filter(|&&c| c == MetaCategory::Uncategorized)
            .count()
    }

    /// Unassigned reports that do have a category.
    pub fn unassigned_categorized(&self) -> usize {
        self.assigned
            .unassigned
            .iter()
            .filter(|&&i| self.categories[i] != MetaCategory::Uncategorized)
            .count()
    }
}

pub fn enrich(cfg: &PipelineConfig, clusters: &ClusterRun) -> Result<EnrichRun> {
    let map = category_map(cfg)?;
    let (reports, load) = load_reports(cfg)?;
    let categories: Vec<MetaCategory> =
        reports.iter().map(|r| categorize_report(r, &map)).collect();
    let assigned = assign_reports(&reports, &clusters.assignment, &clusters.points, cfg.radius);
    let stats = compute_stats(
        &assigned,
        &categories,
        &clusters.assignment,
        &clusters.points,
        cfg.radius,
    )?;
    let share = if cfg.share_subset.is_empty() {
        None
    } else {
        Some(share_of_total(&stats, &cfg.share_subset)?)
    };
    let run = EnrichRun {
        reports,
        categories,
        assigned,
        stats,
        load,
        share,
    };
    for o in &run.assigned.overlaps {
        info!(
            "report {} lies in {} buffers; assigned to the nearest",
            run.reports[o.report].report_id,
            o.candidates.len()
        );
    }
    if let Some(s) = share {
        info!(
            "clusters {} hold {s:.2}% of categorized reports",
            cfg.share_subset.join("+")
        );
    }
    Ok(run)
}

fn stats_csv(stats: &[ClusterReportStats]) -> Result<Vec<u8>> {
    let mut header = vec!["cluster".to_string(), "area_m2".to_string()];
    header.extend(MetaCategory::ALL.iter().map(|c| c.ident().to_string()));
    header.extend(["uncategorized".to_string(), "total".to_string()]);
    header.extend(
        MetaCategory::ALL
            .iter()
            .map(|c| format!("{}_per_100m2", c.ident())),
    );
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = stats.iter().map(|s| {
        let mut row = vec![s.cluster.clone(), format!("{:.1}", s.area_m2)];
        row.extend(MetaCategory::ALL.iter().map(|&c| s.count(c).to_string()));
        row.push(s.uncategorized.to_string());
        row.push(s.total.to_string());
        row.extend(
            MetaCategory::ALL
                .iter()
                .map(|&c| format!("{:.6}", s.density(c))),
        );
        row
    });
    csv_bytes(&header, rows)
}

impl EnrichRun {
    pub fn counts_json(&self, cfg: &PipelineConfig) -> serde_json::Value {
        let common = most_common_category(&self.stats);
        let clusters: Vec<serde_json::Value> = self
            .stats
            .iter()
            .zip(&common.per_cluster)
            .map(|(s, (_, top))| {
                let counts: serde_json::Map<String, serde_json::Value> = MetaCategory::ALL
                    .iter()
                    .map(|&c| (c.ident().to_string(), s.count(c).into()))
                    .collect();
                let density: serde_json::Map<String, serde_json::Value> = MetaCategory::ALL
                    .iter()
                    .map(|&c| (c.ident().to_string(), s.density(c).into()))
                    .collect();
                json!({
                    "cluster": s.cluster,
                    "counts": counts,
                    "uncategorized": s.uncategorized,
                    "total": s.total,
                    "area_m2": s.area_m2,
                    "per_100m2": density,
                    "most_common": top.map(|c| c.ident()),
                })
            })
            .collect();
        json!({
            "categories": MetaCategory::ALL.iter().map(|c| json!({"id": c.ident(), "label": c.label()})).collect::<Vec<_>>(),
            "clusters": clusters,
            "reports": self.load.to_json(),
            "assigned": self.stats.iter().map(|s| s.total).sum::<u64>(),
            "unassigned": self.unassigned_categorized(),
            "uncategorized": self.uncategorized(),
            "overlaps": self.assigned.overlaps.len(),
            "most_common_overall": common.overall.map(|c| c.ident()),
            "share": self.share.map(|p| json!({
                "clusters": cfg.share_subset,
                "percent": p,
            })),
        })
    }

    pub fn artifacts(&self, cfg: &PipelineConfig) -> Result<Vec<Artifact>> {
        Ok(vec![
            Artifact::new("cluster_stats.csv", stats_csv(&self.stats)?),
            Artifact::json("category_counts.json", &self.counts_json(cfg)),
        ])
    }
}

pub struct ScoreRun {
    pub matrix: SiteMatrix,
    pub ranking: Vec<RankedSite>,
    pub warnings: Vec<String>,
}

pub fn score_sites(cfg: &PipelineConfig, enrich: &EnrichRun) -> Result<ScoreRun> {
    let flags: BTreeMap<String, ProblemFlags> = enrich
        .stats
        .iter()
        .map(|s| (s.cluster.clone(), derive_problem_flags(s, &cfg.thresholds)))
        .collect();
    let annotations = match &cfg.annotations {
        Some(p) => load_annotations(&p.path)
            .with_context(|| format!("annotations {}", p.path.display()))?,
        None => {
            warn!("no annotations configured; matrix holds data-derived columns only");
            Vec::new()
        }
    };
    let built = build_matrix(&flags, &annotations)?;
    if !annotations.is_empty() {
        for w in &built.warnings {
            warn!("{w}");
        }
    }
    let ranking = rank_candidates(&built.matrix);
    Ok(ScoreRun {
        matrix: built.matrix,
        ranking,
        warnings: built.warnings,
    })
}

impl ScoreRun {
    pub fn ranking_csv(&self) -> Result<Vec<u8>> {
        let rows = self.ranking.iter().enumerate().map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.cluster.clone(),
                r.marks.to_string(),
                r.unmet_features.to_string(),
                r.problems.to_string(),
            ]
        });
        csv_bytes(
            &["rank", "cluster", "marks", "unmet_features", "problems"],
            rows,
        )
    }

    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        Ok(vec![
            Artifact::new("site_matrix.csv", self.matrix.to_csv()),
            Artifact::new("site_ranking.csv", self.ranking_csv()?),
        ])
    }
}

/// Reads articles from a directory of `.txt` files (sorted by name) or from
/// one file whose articles are separated by lines holding only `---`.
pub fn load_articles(path: &Path) -> Result<Vec<String>> {
    let texts: Vec<String> = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .with_context(|| format!("cannot list {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
        files.sort();
        files
            .iter()
            .map(|p| fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())))
            .collect::<Result<_>>()?
    } else {
        let text =
            fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut parts = vec![String::new()];
        for line in text.lines() {
            if line.trim() == "---" {
                parts.push(String::new());
            } else {
                let cur = parts.last_mut().expect("never empty");
                cur.push_str(line);
                cur.push('\n');
            }
        }
        parts
    };
    Ok(texts.into_iter().filter(|t| !t.trim().is_empty()).collect())
}

pub fn language(cfg: &PipelineConfig) -> Result<LanguageConfig> {
    match &cfg.language_dir {
        Some(p) => LanguageConfig::load_dir(&p.path)
            .with_context(|| format!("language config {}", p.path.display())),
        None => LanguageConfig::builtin(&cfg.language)
            .with_context(|| format!("no bundled language config `{}`", cfg.language)),
    }
}

pub fn lexicon(cfg: &PipelineConfig) -> Result<Lexicon> {
    let lex = match &cfg.lexicon {
        Some(p) => {
            Lexicon::load(&p.path).with_context(|| format!("lexicon {}", p.path.display()))?
        }
        None => Lexicon::starter(),
    };
    for w in &lex.warnings {
        warn!("lexicon {w}");
    }
    Ok(lex)
}

pub struct ReactRun {
    pub comments: Vec<Comment>,
    pub topic: TopicProfile,
    pub ranked: Vec<RankedComment>,
    /// Sentiment per comment, by input position.
    pub scores: Vec<SentimentScore>,
    pub rejected: usize,
}

pub fn react(cfg: &PipelineConfig) -> Result<ReactRun> {
    let input = cfg.require(&cfg.comments, "inputs.comments")?;
    let articles_path = cfg.require(&cfg.articles, "inputs.articles")?;
    let schema = schema(&cfg.comment_schema, COMMENT_FIELDS)?;
    let parsed = ingest::load_comments(
        &input.path,
        InputFormat::for_path(&input.path, cfg.delimiter),
        &schema,
    )
    .with_context(|| format!("comments {}", input.path.display()))?;
    report_rejects("comments", &parsed);
    let articles = load_articles(&articles_path.path)?;
    if articles.is_empty() {
        bail!(
            "no articles found in {}; the topic is undefined",
            articles_path.path.display()
        );
    }
    let lang = language(cfg)?;
    let lex = lexicon(cfg)?;
    let (topic, ranked) = rank_by_relevance(&parsed.records, &articles, &lang)?;
    if topic.is_degenerate() {
        warn!("topic has no weighted terms; every comment scores 0");
    }
    let scores = parsed
        .records
        .iter()
        .map(|c| score_text_with(&c.text, &lex, &cfg.scoring))
        .collect();
    Ok(ReactRun {
        comments: parsed.records,
        topic,
        ranked,
        scores,
        rejected: parsed.rejects.len(),
    })
}

fn dist_json(d: &Distribution) -> serde_json::Value {
    let mut v = d.to_json();
    v["mean_text"] = json!(d.mean_text());
    v
}

impl ReactRun {
    fn distribution_of(&self, ranked: &[RankedComment]) -> Distribution {
        distribution(ranked.iter().map(|r| &self.scores[r.index]))
    }

    fn quartiles(&self, ranked: &[RankedComment]) -> Result<Vec<serde_json::Value>> {
        (1..=4u8)
            .map(|q| {
                let slice = quartile_slice(ranked, q)?;
                let mut v = dist_json(&self.distribution_of(slice));
                v["quartile"] = json!(q);
                Ok(v)
            })
            .collect()
    }

    pub fn zero_similarity(&self) -> usize {
        self.ranked.iter().filter(|r| r.score == 0.0).count()
    }

    pub fn nonzero(&self) -> Vec<RankedComment> {
        self.ranked
            .iter()
            .filter(|r| r.score > 0.0)
            .cloned()
            .collect()
    }

    pub fn sentiment_json(&self) -> Result<serde_json::Value> {
        let nonzero = self.nonzero();
        Ok(json!({
            "comments": self.comments.len(),
            "rejected": self.rejected,
            "zero_similarity": self.zero_similarity(),
            "overall": dist_json(&self.distribution_of(&self.ranked)),
            "quartiles": self.quartiles(&self.ranked)?,
            "nonzero": {
                "overall": dist_json(&self.distribution_of(&nonzero)),
                "quartiles": self.quartiles(&nonzero)?,
            },
            "topic": {
                "articles": self.topic.source_count,
                "degenerate": self.topic.is_degenerate(),
                "top_terms": self.topic.top(15).iter().map(|(t, w)| json!([t, w])).collect::<Vec<_>>(),
            },
        }))
    }

    pub fn ranked_csv(&self) -> Result<Vec<u8>> {
        let rows = self.ranked.iter().enumerate().map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.comment_id.clone(),
                format!("{:.6}", r.score),
                self.scores[r.index].polarity.to_string(),
            ]
        });
        csv_bytes(&["rank", "comment_id", "score", "polarity"], rows)
    }

    pub fn artifacts(&self) -> Result<Vec<Artifact>> {
        Ok(vec![
            Artifact::new("ranked_comments.csv", self.ranked_csv()?),
            Artifact::json("sentiment.json", &self.sentiment_json()?),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn articles_from_single_file() {
        let d = tempfile::tempdir().unwrap();
        let f = d.path().join("a.txt");
        fs::write(&f, "one\n---\ntwo\nlines\n---\n\n").unwrap();
        assert_eq!(load_articles(&f).unwrap(), vec!["one\n", "two\nlines\n"]);
    }

    #[test]
    fn articles_from_directory() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("b.txt"), "second").unwrap();
        fs::write(d.path().join("a.txt"), "first").unwrap();
        fs::write(d.path().join("notes.md"), "ignored").unwrap();
        assert_eq!(load_articles(d.path()).unwrap(), vec!["first", "second"]);
    }
}
