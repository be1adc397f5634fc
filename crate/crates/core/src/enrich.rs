//! Spatial join of municipal reports onto cluster buffers, and per-cluster
//! category statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cluster::{cmp_names, letter_name, ClusterAssignment, ClusterId};
use crate::geo::{haversine_distance, union_buffer_area, GeoError, GeoPoint, Meters};
use crate::ingest::Report;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("category map line {line}: {message}")]
    CategoryMap { line: usize, message: String },
    #[error("cannot read category map: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown cluster `{0}`")]
    UnknownCluster(String),
    #[error("cluster {0} has a zero-area buffer")]
    ZeroArea(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Coarse problem groups for report subdivisions. Declaration order is the
/// tie-break order wherever categories are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MetaCategory {
    StreetBlocking,
    TrafficIssues,
    HealthIssues,
    NoiseProblems,
    CitizenSafety,
    ParkingInfractions,
    Uncategorized,
}

impl MetaCategory {
    /// The six real categories, in tie-break order.
    pub const ALL: [MetaCategory; 6] = [
        MetaCategory::StreetBlocking,
        MetaCategory::TrafficIssues,
        MetaCategory::HealthIssues,
        MetaCategory::NoiseProblems,
        MetaCategory::CitizenSafety,
        MetaCategory::ParkingInfractions,
    ];

    pub fn ident(self) -> &'static str {
        match self {
            MetaCategory::StreetBlocking => "StreetBlocking",
            MetaCategory::TrafficIssues => "TrafficIssues",
            MetaCategory::HealthIssues => "HealthIssues",
            MetaCategory::NoiseProblems => "NoiseProblems",
            MetaCategory::CitizenSafety => "CitizenSafety",
            MetaCategory::ParkingInfractions => "ParkingInfractions",
            MetaCategory::Uncategorized => "Uncategorized",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetaCategory::StreetBlocking => "Street Blocking",
            MetaCategory::TrafficIssues => "Traffic Issues",
            MetaCategory::HealthIssues => "Health Issues",
            MetaCategory::NoiseProblems => "Noise Problems",
            MetaCategory::CitizenSafety => "Citizen Safety",
            MetaCategory::ParkingInfractions => "Parking Infractions",
            MetaCategory::Uncategorized => "Uncategorized",
        }
    }
}

impl fmt::Display for MetaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ident())
    }
}

impl FromStr for MetaCategory {
    type Err = String;

    /// Accepts `ParkingInfractions`, `Parking Infractions`, `parking_infractions`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        MetaCategory::ALL
            .into_iter()
            .chain([MetaCategory::Uncategorized])
            .find(|c| c.ident().to_lowercase() == squashed)
            .ok_or_else(|| format!("unknown meta-category `{s}`"))
    }
}

/// Subdivision to meta-category lookup, keyed by normalised subdivision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    entries: BTreeMap<String, MetaCategory>,
}

const DEFAULT_CATEGORY_MAP: &str = include_str!("../data/category_map.tsv");

pub fn normalize_subdivision(s: &str) -> String {
    s.trim().to_lowercase()
}

impl CategoryMap {
    /// Parses `subdivision<TAB>MetaCategory` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<CategoryMap, EnrichError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let (sub, cat) = raw
                .split_once('\t')
                .ok_or_else(|| EnrichError::CategoryMap {
                    line,
                    message: "expected subdivision<TAB>category".into(),
                })?;
            let key = normalize_subdivision(sub);
            if key.is_empty() {
                return Err(EnrichError::CategoryMap {
                    line,
                    message: "empty subdivision".into(),
                });
            }
            let cat = cat
                .trim()
                .parse::<MetaCategory>()
                .map_err(|message| EnrichError::CategoryMap { line, message })?;
            if entries.insert(key, cat).is_some() {
                return Err(EnrichError::CategoryMap {
                    line,
                    message: format!("duplicate subdivision `{}`", sub.trim()),
                });
            }
        }
        Ok(CategoryMap { entries })
    }

    pub fn load(path: &Path) -> Result<CategoryMap, EnrichError> {
        CategoryMap::parse(&std::fs::read_to_string(path)?)
    }

    /// The bundled map built from the published category examples.
    pub fn builtin() -> CategoryMap {
        CategoryMap::parse(DEFAULT_CATEGORY_MAP).expect("bundled category map is valid")
    }

    pub fn get(&self, subdivision: &str) -> MetaCategory {
        self.entries
            .get(&normalize_subdivision(subdivision))
            .copied()
            .unwrap_or(MetaCategory::Uncategorized)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn categorize_report(report: &Report, map: &CategoryMap) -> MetaCategory {
    map.get(&report.subdivision)
}

/// A report that fell inside more than one cluster buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub report: usize,
    /// Every cluster within the radius, nearest first.
    pub candidates: Vec<(ClusterId, Meters)>,
    pub assigned: ClusterId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportAssignment {
    /// Report indices per cluster; every cluster is present, possibly empty.
    pub by_cluster: BTreeMap<ClusterId, Vec<usize>>,
    pub unassigned: Vec<usize>,
    pub overlaps: Vec<Overlap>,
}

impl ReportAssignment {
    pub fn assigned_count(&self) -> usize {
        self.by_cluster.values().map(Vec::len).sum()
    }
}

/// Assigns each report to the cluster whose dissolved buffer contains it.
/// Reports inside several buffers go to the nearest cluster (then the lower
/// id) and are listed in `overlaps`.
pub fn assign_reports(
    reports: &[Report],
    assignment: &ClusterAssignment,
    points: &[GeoPoint],
    radius: Meters,
) -> ReportAssignment {
    let members: Vec<(ClusterId, Vec<GeoPoint>)> = assignment
        .cluster_ids()
        .map(|id| (id, assignment.member_points(id, points)))
        .collect();
    let r = radius.get();

    let hits: Vec<Vec<(ClusterId, Meters)>> = reports
        .par_iter()
        .map(|report| {
            let mut within: Vec<(ClusterId, Meters)> = members
                .iter()
                .filter_map(|(id, pts)| {
                    let d = pts
                        .iter()
                        .map(|&m| haversine_distance(report.location, m))
                        .min_by(|a, b| a.get().total_cmp(&b.get()))?;
                    (d.get() <= r).then_some((*id, d))
                })
                .collect();
            within.sort_by(|a, b| a.1.get().total_cmp(&b.1.get()).then(a.0.cmp(&b.0)));
            within
        })
        .collect();

    let mut out = ReportAssignment {
        by_cluster: members.iter().map(|(id, _)| (*id, Vec::new())).collect(),
        ..Default::default()
    };
    for (i, within) in hits.into_iter().enumerate() {
        match within.first() {
            None => out.unassigned.push(i),
            Some(&(best, _)) => {
                out.by_cluster.entry(best).or_default().push(i);
                if within.len() > 1 {
                    out.overlaps.push(Overlap {
                        report: i,
                        candidates: within,
                        assigned: best,
                    });
                }
            }
        }
    }
    out
}

/// Report counts and densities for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReportStats {
    pub cluster: String,
    #[serde(skip)]
    pub id: ClusterId,
    /// Counts for the six real categories (all present, possibly zero).
    pub counts: BTreeMap<MetaCategory, u64>,
    /// Reports in the buffer whose subdivision is not mapped; excluded from `total`.
    pub uncategorized: u64,
    pub area_m2: f64,
    /// Reports per 100 m² of dissolved buffer.
    pub density_per_100m2: BTreeMap<MetaCategory, f64>,
    pub total: u64,
}

impl ClusterReportStats {
    pub fn count(&self, cat: MetaCategory) -> u64 {
        self.counts.get(&cat).copied().unwrap_or(0)
    }

    pub fn density(&self, cat: MetaCategory) -> f64 {
        self.density_per_100m2.get(&cat).copied().unwrap_or(0.0)
    }

    /// Builds stats from raw counts and a buffer area.
    pub fn from_counts(
        cluster: &str,
        id: ClusterId,
        counts: &BTreeMap<MetaCategory, u64>,
        uncategorized: u64,
        area_m2: f64,
    ) -> Result<Self, EnrichError> {
        if !(area_m2 > 0.0 && area_m2.is_finite()) {
            return Err(EnrichError::ZeroArea(cluster.to_string()));
        }
        let counts: BTreeMap<MetaCategory, u64> = MetaCategory::ALL
            .into_iter()
            .map(|c| (c, counts.get(&c).copied().unwrap_or(0)))
            .collect();
        let units = area_m2 / 100.0;
        let density_per_100m2 = counts
            .iter()
            .map(|(&c, &n)| (c, n as f64 / units))
            .collect();
        Ok(ClusterReportStats {
            cluster: cluster.to_string(),
            id,
            total: counts.values().sum(),
            counts,
            uncategorized,
            area_m2,
            density_per_100m2,
        })
    }
}

/// Per-cluster category counts, buffer area and densities, ordered by
/// cluster name. `categories[i]` is the category of report `i`.
pub fn compute_stats(
    assigned: &ReportAssignment,
    categories: &[MetaCategory],
    assignment: &ClusterAssignment,
    points: &[GeoPoint],
    radius: Meters,
) -> Result<Vec<ClusterReportStats>, EnrichError> {
    let mut stats = assignment
        .cluster_ids()
        .map(|id| {
            let name = assignment
                .name(id)
                .map(str::to_string)
                .unwrap_or_else(|| letter_name(id.0));
            let mut counts = BTreeMap::new();
            let mut uncategorized = 0;
            for &r in assigned
                .by_cluster
                .get(&id)
                .map(Vec::as_slice)
                .unwrap_or(&[])
            {
                match categories[r] {
                    MetaCategory::Uncategorized => uncategorized += 1,
                    c => *counts.entry(c).or_insert(0) += 1,
                }
            }
            let area = union_buffer_area(&assignment.member_points(id, points), radius)?;
            ClusterReportStats::from_counts(&name, id, &counts, uncategorized, area)
        })
        .collect::<Result<Vec<_>, _>>()?;
    stats.sort_by(|a, b| cmp_names(&a.cluster, &b.cluster));
    Ok(stats)
}

/// Percentage of all categorized, assigned reports held by `subset`.
pub fn share_of_total<S: AsRef<str>>(
    stats: &[ClusterReportStats],
    subset: &[S],
) -> Result<f64, EnrichError> {
    let mut part = 0u64;
    for name in subset {
        let name = name.as_ref();
        let s = stats
            .iter()
            .find(|s| s.cluster == name)
            .ok_or_else(|| EnrichError::UnknownCluster(name.to_string()))?;
        part += s.total;
    }
    let whole: u64 = stats.iter().map(|s| s.total).sum();
    if whole == 0 {
        return Ok(0.0);
    }
    Ok(part as f64 * 100.0 / whole as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonCategories {
    /// Argmax per cluster; `None` when the cluster has no categorized reports.
    pub per_cluster: Vec<(String, Option<MetaCategory>)>,
    pub overall: Option<MetaCategory>,
}

fn argmax(counts: impl Fn(MetaCategory) -> u64) -> Option<MetaCategory> {
    let mut best: Option<(MetaCategory, u64)> = None;
    for c in MetaCategory::ALL {
        let n = counts(c);
        if n > 0 && best.is_none_or(|(_, m)| n > m) {
            best = Some((c, n));
        }
    }
    best.map(|(c, _)| c)
}

pub fn most_common_category(stats: &[ClusterReportStats]) -> CommonCategories {
    CommonCategories {
        per_cluster: stats
            .iter()
            .map(|s| (s.cluster.clone(), argmax(|c| s.count(c))))
            .collect(),
        overall: argmax(|c| stats.iter().map(|s| s.count(c)).sum()),
    }
}
