//! Pipeline configuration: a TOML file plus command-line overrides.
//!
//! Relative paths in the file are resolved against the file's directory.
//! Optional resources (category map, lexicon, language files) fall back to
//! the bundled defaults when not configured; a configured path that does
//! not exist is an error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;
use urbanlens::cluster::DbscanParams;
use urbanlens::geo::Meters;
use urbanlens::sentiment::ScoringOptions;
use urbanlens::sitescore::{Problem, Threshold, Thresholds};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{key}: file not found: {path}")]
    Missing { key: String, path: PathBuf },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    deterministic: Option<bool>,
    #[serde(default)]
    inputs: RawInputs,
    #[serde(default)]
    schema: RawSchema,
    #[serde(default)]
    filter: RawFilter,
    #[serde(default)]
    cluster: RawCluster,
    #[serde(default)]
    enrich: RawEnrich,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    text: RawText,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputs {
    checkins: Option<PathBuf>,
    reports: Option<PathBuf>,
    comments: Option<PathBuf>,
    articles: Option<PathBuf>,
    annotations: Option<PathBuf>,
    delimiter: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    checkins: Option<PathBuf>,
    reports: Option<PathBuf>,
    comments: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    eps_m: Option<f64>,
    min_pts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnrich {
    radius_m: Option<f64>,
    category_map: Option<PathBuf>,
    share_subset: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThreshold {
    min_count: u64,
    min_density: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    min_count: Option<u64>,
    min_density: Option<f64>,
    #[serde(default)]
    columns: BTreeMap<String, RawThreshold>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawText {
    language: Option<String>,
    language_dir: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    negation_window: Option<usize>,
    booster_window: Option<usize>,
}

/// Values given on the command line; each replaces the matching config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps_m: Option<f64>,
    pub min_pts: Option<usize>,
    pub radius_m: Option<f64>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub output_dir: Option<PathBuf>,
}

/// An input file and the string it was configured with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputPath {
    pub configured: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub checkins: Option<InputPath>,
    pub reports: Option<InputPath>,
    pub comments: Option<InputPath>,
    pub articles: Option<InputPath>,
    pub annotations: Option<InputPath>,
    pub delimiter: u8,
    pub checkin_schema: Option<InputPath>,
    pub report_schema: Option<InputPath>,
    pub comment_schema: Option<InputPath>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub dbscan: DbscanParams,
    pub radius: Meters,
    pub category_map: Option<InputPath>,
    pub share_subset: Vec<String>,
    pub thresholds: Thresholds,
    pub language: String,
    pub language_dir: Option<InputPath>,
    pub lexicon: Option<InputPath>,
    pub scoring: ScoringOptions,
    pub output_dir: PathBuf,
}

pub const DEFAULT_EPS_M: f64 = 250.0;
pub const DEFAULT_MIN_PTS: usize = 10;
pub const DEFAULT_RADIUS_M: f64 = 200.0;

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_toml(&text, base, overrides).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;

        if raw.deterministic == Some(false) {
            return Err(ConfigError::Invalid(
                "deterministic = false is not supported; every stage is deterministic".into(),
            ));
        }

        let input = |key: &str, p: Option<PathBuf>| -> Result<Option<InputPath>, ConfigError> {
            let Some(p) = p else { return Ok(None) };
            let path = base.join(&p);
            if !path.exists() {
                return Err(ConfigError::Missing {
                    key: key.to_string(),
                    path,
                });
            }
            Ok(Some(InputPath {
                configured: p.to_string_lossy().into_owned(),
                path,
            }))
        };

        let delimiter = match raw.inputs.delimiter.as_deref() {
            None => b',',
            Some("\\t") | Some("\t") => b'\t',
            Some(d) if d.len() == 1 => d.as_bytes()[0],
            Some(d) => {
                return Err(ConfigError::Invalid(format!(
                    "inputs.delimiter must be one ASCII character, got `{d}`"
                )))
            }
        };

        let eps = overrides
            .eps_m
            .or(raw.cluster.eps_m)
            .unwrap_or(DEFAULT_EPS_M);
        let min_pts = overrides
            .min_pts
            .or(raw.cluster.min_pts)
            .unwrap_or(DEFAULT_MIN_PTS);
        let dbscan =
            DbscanParams::new(eps, min_pts).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let radius_m = overrides
            .radius_m
            .or(raw.enrich.radius_m)
            .unwrap_or(DEFAULT_RADIUS_M);
        if !(radius_m > 0.0 && radius_m.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "buffer radius must be positive, got {radius_m}"
            )));
        }
        let radius = Meters::new(radius_m).map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let from = overrides.from.or(raw.filter.from);
        let to = overrides.to.or(raw.filter.to);
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(ConfigError::Invalid(format!(
                    "date filter: from {f} is after to {t}"
                )));
            }
        }

        let defaults = Thresholds::default();
        let threshold = |count: u64, density: f64| {
            Threshold::new(count, density).map_err(|e| ConfigError::Invalid(e.to_string()))
        };
        let mut thresholds = Thresholds::uniform(threshold(
            raw.thresholds
                .min_count
                .unwrap_or(defaults.default.min_count),
            raw.thresholds
                .min_density
                .unwrap_or(defaults.default.min_density),
        )?);
        for (name, t) in &raw.thresholds.columns {
            let column = Problem::ALL
                .into_iter()
                .find(|p| p.name().eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    ConfigError::Invalid(format!(
                        "thresholds.columns: unknown column `{name}` (expected Safety, Noise, StreetBlock, Parking or Health)"
                    ))
                })?;
            thresholds = thresholds.with(column, threshold(t.min_count, t.min_density)?);
        }

        let language = raw.text.language.unwrap_or_else(|| "pt".into());
        let language_dir = input("text.language_dir", raw.text.language_dir)?;
        if language_dir.is_none()
            && urbanlens::textrank::LanguageConfig::builtin(&language).is_none()
        {
            return Err(ConfigError::Invalid(format!(
                "text.language `{language}` has no bundled config; set text.language_dir"
            )));
        }
        let scoring = ScoringOptions {
            negation_window: raw.text.negation_window.unwrap_or(1),
            booster_window: raw.text.booster_window.unwrap_or(1),
        };

        let output_dir = match &overrides.output_dir {
            Some(dir) => dir.clone(),
            None => base.join(raw.output_dir.unwrap_or_else(|| PathBuf::from("out"))),
        };

        Ok(PipelineConfig {
            checkins: input("inputs.checkins", raw.inputs.checkins)?,
            reports: input("inputs.reports", raw.inputs.reports)?,
            comments: input("inputs.comments", raw.inputs.comments)?,
            articles: input("inputs.articles", raw.inputs.articles)?,
            annotations: input("inputs.annotations", raw.inputs.annotations)?,
            delimiter,
            checkin_schema: input("schema.checkins", raw.schema.checkins)?,
            report_schema: input("schema.reports", raw.schema.reports)?,
            comment_schema: input("schema.comments", raw.schema.comments)?,
            from,
            to,
            dbscan,
            radius,
            category_map: input("enrich.category_map", raw.enrich.category_map)?,
            share_subset: raw.enrich.share_subset.unwrap_or_default(),
            thresholds,
            language,
            language_dir,
            lexicon: input("text.lexicon", raw.text.lexicon)?,
            scoring,
            output_dir,
        })
    }

    /// Parameter set recorded in the manifest.
    pub fn parameters(&self) -> serde_json::Value {
        let columns: serde_json::Map<String, serde_json::Value> = Problem::ALL
            .into_iter()
            .map(|p| {
                let t = self.thresholds.for_column(p);
                (
                    p.name().to_string(),
                    serde_json::json!({ "min_count": t.min_count, "min_density": t.min_density }),
                )
            })
            .collect();
        let configured = |p: &Option<InputPath>| p.as_ref().map(|p| p.configured.clone());
        serde_json::json!({
            "eps_m": self.dbscan.eps().get(),
            "min_pts": self.dbscan.min_pts(),
            "radius_m": self.radius.get(),
            "from": self.from.map(|d| d.to_string()),
            "to": self.to.map(|d| d.to_string()),
            "delimiter": (self.delimiter as char).to_string(),
            "category_map": configured(&self.category_map).unwrap_or_else(|| "<bundled>".into()),
            "share_subset": self.share_subset,
            "thresholds": columns,
            "language": configured(&self.language_dir).unwrap_or_else(|| format!("<bundled:{}>", self.language)),
            "lexicon": configured(&self.lexicon).unwrap_or_else(|| "<bundled>".into()),
            "negation_window": self.scoring.negation_window,
            "booster_window": self.scoring.booster_window,
        })
    }

    pub fn require<'a>(
        &self,
        input: &'a Option<InputPath>,
        key: &str,
    ) -> Result<&'a InputPath, ConfigError> {
        input
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("{key} is not set in the config")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir() -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        std::fs::write(d.path().join("c.csv"), "x\n").unwrap();
        d
    }

    #[test]
    fn defaults_and_resolution() {
        let d = dir();
        let cfg = PipelineConfig::from_toml(
            "[inputs]\ncheckins = \"c.csv\"\n",
            d.path(),
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(cfg.checkins.unwrap().path, d.path().join("c.csv"));
        assert_eq!(cfg.dbscan.eps().get(), 250.0);
        assert_eq!(cfg.dbscan.min_pts(), 10);
        assert_eq!(cfg.radius.get(), 200.0);
        assert_eq!(cfg.output_dir, d.path().join("out"));
        assert_eq!(cfg.thresholds, Thresholds::default());
    }

    #[test]
    fn overrides_win() {
        let d = dir();
        let o = Overrides {
            eps_m: Some(100.0),
            min_pts: Some(5),
            radius_m: Some(50.0),
            from: NaiveDate::from_ymd_opt(2016, 6, 1),
            to: None,
            output_dir: Some(PathBuf::from("/tmp/x")),
        };
        let cfg =
            PipelineConfig::from_toml("[cluster]\neps_m = 250.0\nmin_pts = 10\n", d.path(), &o)
                .unwrap();
        assert_eq!(cfg.dbscan.eps().get(), 100.0);
        assert_eq!(cfg.dbscan.min_pts(), 5);
        assert_eq!(cfg.radius.get(), 50.0);
        assert_eq!(cfg.from, NaiveDate::from_ymd_opt(2016, 6, 1));
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_bad_values() {
        let d = dir();
        let o = Overrides::default();
        for bad in [
            "[cluster]\neps_m = 0.0\n",
            "[cluster]\nmin_pts = 0\n",
            "[enrich]\nradius_m = -1.0\n",
            "[enrich]\ncategory_map = \"nope.tsv\"\n",
            "[text]\nlanguage = \"xx\"\n",
            "[filter]\nfrom = \"2017-01-01\"\nto = \"2016-01-01\"\n",
            "[thresholds.columns.Traffic]\nmin_count = 1\nmin_density = 1.0\n",
            "deterministic = false\n",
            "unknown_key = 1\n",
        ] {
            assert!(
                PipelineConfig::from_toml(bad, d.path(), &o).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn column_thresholds() {
        let d = dir();
        let cfg = PipelineConfig::from_toml(
            "[thresholds]\nmin_count = 3\n[thresholds.columns.parking]\nmin_count = 20\nmin_density = 1.0\n",
            d.path(),
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(cfg.thresholds.for_column(Problem::Parking).min_count, 20);
        assert_eq!(cfg.thresholds.for_column(Problem::Noise).min_count, 3);
    }
}
