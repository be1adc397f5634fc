//! Site-suitability matrix: data-derived problem columns next to
//! analyst-judged feature columns, and a ranking of candidate areas.
//!
//! The four feature columns record planning requirements an area fails:
//!
//! * F1: the street can be closed for hours on weekends without a large
//!   traffic impact;
//! * F2: no nearby calm zones (hospitals, residential streets);
//! * F3: closing it does not hurt the businesses already there;
//! * F4: room for stages and stalls, and a crowd of at least 10k people.
//!
//! They come from annotation files, never from the report data.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::cluster::cmp_names;
use crate::enrich::{ClusterReportStats, MetaCategory};

#[derive(Debug, Error)]
pub enum SiteError {
    #[error("annotation refers to unknown cluster `{0}`")]
    UnknownCluster(String),
    #[error("annotation row {row}: {message}")]
    Annotation { row: usize, message: String },
    #[error("duplicate annotation for cluster `{0}`")]
    DuplicateAnnotation(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("cannot read annotations: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot read annotations: {0}")]
    Io(#[from] std::io::Error),
}

/// Problem columns of the matrix, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Problem {
    Safety,
    Noise,
    StreetBlock,
    Parking,
    Health,
}

impl Problem {
    pub const ALL: [Problem; 5] = [
        Problem::Safety,
        Problem::Noise,
        Problem::StreetBlock,
        Problem::Parking,
        Problem::Health,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Safety => "Safety",
            Problem::Noise => "Noise",
            Problem::StreetBlock => "StreetBlock",
            Problem::Parking => "Parking",
            Problem::Health => "Health",
        }
    }

    /// Meta-categories whose reports feed this column. Traffic reports count
    /// toward street blocking.
    pub fn sources(self) -> &'static [MetaCategory] {
        match self {
            Problem::Safety => &[MetaCategory::CitizenSafety],
            Problem::Noise => &[MetaCategory::NoiseProblems],
            Problem::StreetBlock => &[MetaCategory::StreetBlocking, MetaCategory::TrafficIssues],
            Problem::Parking => &[MetaCategory::ParkingInfractions],
            Problem::Health => &[MetaCategory::HealthIssues],
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Matrix column header, features first.
pub const MATRIX_COLUMNS: [&str; 9] = [
    "F1",
    "F2",
    "F3",
    "F4",
    "Safety",
    "Noise",
    "StreetBlock",
    "Parking",
    "Health",
];

/// Count and density cut-offs for one problem column. A column is flagged
/// when either is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub min_count: u64,
    pub min_density: f64,
}

impl Threshold {
    pub fn new(min_count: u64, min_density: f64) -> Result<Self, SiteError> {
        if min_count == 0 {
            return Err(SiteError::InvalidThreshold(
                "count threshold must be positive".into(),
            ));
        }
        if !(min_density > 0.0 && min_density.is_finite()) {
            return Err(SiteError::InvalidThreshold(format!(
                "density threshold must be positive, got {min_density}"
            )));
        }
        Ok(Threshold {
            min_count,
            min_density,
        })
    }
}

/// Per-column thresholds; defaults are 5 reports or 0.05 reports per 100 m².
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub default: Threshold,
    pub overrides: BTreeMap<Problem, Threshold>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            default: Threshold {
                min_count: 5,
                min_density: 0.05,
            },
            overrides: BTreeMap::new(),
        }
    }
}

impl Thresholds {
    pub fn uniform(t: Threshold) -> Self {
        Thresholds {
            default: t,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with(mut self, column: Problem, t: Threshold) -> Self {
        self.overrides.insert(column, t);
        self
    }

    pub fn for_column(&self, column: Problem) -> Threshold {
        self.overrides.get(&column).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProblemFlags([bool; 5]);

impl ProblemFlags {
    pub fn get(&self, p: Problem) -> bool {
        self.0[p as usize]
    }

    pub fn set(&mut self, p: Problem, value: bool) {
        self.0[p as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// Flags a column when the summed count of its source categories reaches the
/// count threshold, or their summed density reaches the density threshold.
pub fn derive_problem_flags(stats: &ClusterReportStats, thresholds: &Thresholds) -> ProblemFlags {
    let mut flags = ProblemFlags::default();
    for p in Problem::ALL {
        let t = thresholds.for_column(p);
        let count: u64 = p.sources().iter().map(|&c| stats.count(c)).sum();
        let density: f64 = p.sources().iter().map(|&c| stats.density(c)).sum();
        flags.set(p, count >= t.min_count || density >= t.min_density);
    }
    flags
}

/// Analyst judgement for one cluster: which features it fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureAnnotation {
    pub cluster: String,
    /// `unmet[k]` is true when feature F(k+1) is not met.
    pub unmet: [bool; 4],
    pub notes: String,
}

fn parse_mark(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "x" | "1" | "true" | "yes" | "unmet" => Some(true),
        "" | "0" | "false" | "no" | "met" => Some(false),
        _ => None,
    }
}

/// Reads annotations from CSV with header `cluster,f1,f2,f3,f4,notes`.
/// Feature cells accept `x`/`1`/`true`/`yes` for unmet and blank/`0`/`false`/`no` for met.
pub fn parse_annotations<R: Read>(source: R) -> Result<Vec<FeatureAnnotation>, SiteError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let cluster_col = col("cluster").ok_or(SiteError::Annotation {
        row: 0,
        message: "missing `cluster` column".into(),
    })?;
    let feature_cols: Vec<Option<usize>> =
        ["f1", "f2", "f3", "f4"].iter().map(|f| col(f)).collect();
    let notes_col = col("notes");

    let mut out: Vec<FeatureAnnotation> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cluster = record.get(cluster_col).unwrap_or("").trim().to_string();
        if cluster.is_empty() {
            return Err(SiteError::Annotation {
                row,
                message: "empty cluster name".into(),
            });
        }
        let mut unmet = [false; 4];
        for (k, c) in feature_cols.iter().enumerate() {
            let raw = c.and_then(|c| record.get(c)).unwrap_or("");
            unmet[k] = parse_mark(raw).ok_or_else(|| SiteError::Annotation {
                row,
                message: format!("F{} value `{raw}` is not a mark", k + 1),
            })?;
        }
        if out.iter().any(|a| a.cluster == cluster) {
            return Err(SiteError::DuplicateAnnotation(cluster));
        }
        out.push(FeatureAnnotation {
            cluster,
            unmet,
            notes: notes_col
                .and_then(|c| record.get(c))
                .unwrap_or("")
                .trim()
                .to_string(),
        });
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<FeatureAnnotation>, SiteError> {
    parse_annotations(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteRow {
    pub cluster: String,
    pub unmet: [bool; 4],
    pub problems: ProblemFlags,
}

impl SiteRow {
    pub fn unmet_count(&self) -> usize {
        self.unmet.iter().filter(|&&b| b).count()
    }

    /// Number of marked cells in the row.
    pub fn mark_count(&self) -> usize {
        self.unmet_count() + self.problems.count()
    }

    /// Cells in [`MATRIX_COLUMNS`] order.
    pub fn cells(&self) -> [bool; 9] {
        let mut out = [false; 9];
        out[..4].copy_from_slice(&self.unmet);
        for (k, p) in Problem::ALL.into_iter().enumerate() {
            out[4 + k] = self.problems.get(p);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SiteMatrix {
    pub rows: Vec<SiteRow>,
}

impl SiteMatrix {
    pub fn row(&self, cluster: &str) -> Option<&SiteRow> {
        self.rows.iter().find(|r| r.cluster == cluster)
    }

    /// CSV with a `cluster` column followed by the nine matrix columns;
    /// marked cells hold `x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cluster");
        for c in MATRIX_COLUMNS {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.cluster);
            for cell in row.cells() {
                out.push(',');
                if cell {
                    out.push('x');
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltMatrix {
    pub matrix: SiteMatrix,
    pub warnings: Vec<String>,
}

/// Combines data-derived flags with annotations. Clusters without an
/// annotation are treated as meeting every feature, with a warning.
pub fn build_matrix(
    flags: &BTreeMap<String, ProblemFlags>,
    annotations: &[FeatureAnnotation],
) -> Result<BuiltMatrix, SiteError> {
    if let Some(a) = annotations.iter().find(|a| !flags.contains_key(&a.cluster)) {
        return Err(SiteError::UnknownCluster(a.cluster.clone()));
    }
    let mut names: Vec<&String> = flags.keys().collect();
    names.sort_by(|a, b| cmp_names(a, b));
    let mut warnings = Vec::new();
    let rows = names
        .into_iter()
        .map(|name| {
            let unmet = match annotations.iter().find(|a| &a.cluster == name) {
                Some(a) => a.unmet,
                None => {
                    warnings.push(format!(
                        "no feature annotation for cluster {name}; treating F1-F4 as met"
                    ));
                    [false; 4]
                }
            };
            SiteRow {
                cluster: name.clone(),
                unmet,
                problems: flags[name],
            }
        })
        .collect();
    Ok(BuiltMatrix {
        matrix: SiteMatrix { rows },
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedSite {
    pub cluster: String,
    pub marks: usize,
    pub unmet_features: usize,
    pub problems: usize,
}

fn rank_cmp(a: &RankedSite, b: &RankedSite) -> Ordering {
    a.marks
        .cmp(&b.marks)
        .then(a.unmet_features.cmp(&b.unmet_features))
        .then_with(|| cmp_names(&a.cluster, &b.cluster))
}

/// Candidates from fewest marks to most; ties by fewer unmet features, then name.
pub fn rank_candidates(matrix: &SiteMatrix) -> Vec<RankedSite> {
    let mut ranked: Vec<RankedSite> = matrix
        .rows
        .iter()
        .map(|r| RankedSite {
            cluster: r.cluster.clone(),
            marks: r.mark_count(),
            unmet_features: r.unmet_count(),
            problems: r.problems.count(),
        })
        .collect();
    ranked.sort_by(rank_cmp);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterId;
    use proptest::prelude::*;

    fn stats(counts: &[(MetaCategory, u64)], area: f64) -> ClusterReportStats {
        let counts: BTreeMap<_, _> = counts.iter().copied().collect();
        ClusterReportStats::from_counts("A", ClusterId(0), &counts, 0, area).unwrap()
    }

    #[test]
    fn flag_thresholds() {
        let t = Thresholds::default();
        let f = derive_problem_flags(&stats(&[], 100_000.0), &t);
        assert!(!f.get(Problem::Parking));
        let f = derive_problem_flags(
            &stats(&[(MetaCategory::ParkingInfractions, 7)], 100_000.0),
            &t,
        );
        assert!(f.get(Problem::Parking));
        let f = derive_problem_flags(
            &stats(&[(MetaCategory::ParkingInfractions, 4)], 100_000.0),
            &t,
        );
        assert!(!f.get(Problem::Parking));
        // 4 reports on 4,000 m2 is 0.1 per 100 m2
        let f = derive_problem_flags(
            &stats(&[(MetaCategory::ParkingInfractions, 4)], 4_000.0),
            &t,
        );
        assert!(f.get(Problem::Parking));
        // traffic and street blocking add up
        let f = derive_problem_flags(
            &stats(
                &[
                    (MetaCategory::TrafficIssues, 3),
                    (MetaCategory::StreetBlocking, 2),
                ],
                100_000.0,
            ),
            &t,
        );
        assert!(f.get(Problem::StreetBlock));
        assert!(Threshold::new(0, 0.1).is_err());
        assert!(Threshold::new(1, 0.0).is_err());
    }

    #[test]
    fn per_column_override() {
        let t = Thresholds::default().with(Problem::Parking, Threshold::new(50, 10.0).unwrap());
        let f = derive_problem_flags(
            &stats(&[(MetaCategory::ParkingInfractions, 7)], 100_000.0),
            &t,
        );
        assert!(!f.get(Problem::Parking));
    }

    fn flags_of(names: &[&str]) -> BTreeMap<String, ProblemFlags> {
        names
            .iter()
            .map(|n| (n.to_string(), ProblemFlags::default()))
            .collect()
    }

    #[test]
    fn empty_row_and_unknown_cluster() {
        let built = build_matrix(&flags_of(&["A"]), &[]).unwrap();
        assert_eq!(built.matrix.rows[0].mark_count(), 0);
        assert_eq!(built.warnings.len(), 1);
        let bad = FeatureAnnotation {
            cluster: "Z".into(),
            unmet: [true; 4],
            notes: String::new(),
        };
        assert!(matches!(
            build_matrix(&flags_of(&["A"]), &[bad]),
            Err(SiteError::UnknownCluster(_))
        ));
    }

    #[test]
    fn ranking_ties() {
        let built = build_matrix(&flags_of(&["B", "A"]), &[]).unwrap();
        let ranked = rank_candidates(&built.matrix);
        assert_eq!(ranked[0].cluster, "A");
        let built = build_matrix(&flags_of(&["Q"]), &[]).unwrap();
        assert_eq!(rank_candidates(&built.matrix)[0].cluster, "Q");
    }

    #[test]
    fn annotation_parsing() {
        let text = "cluster,f1,f2,f3,f4,notes\nA,x,x,,,busy avenue\nH,,,,,\n";
        let a = parse_annotations(text.as_bytes()).unwrap();
        assert_eq!(a[0].unmet, [true, true, false, false]);
        assert_eq!(a[0].notes, "busy avenue");
        assert_eq!(a[1].unmet, [false; 4]);
        assert!(parse_annotations("cluster,f1\nA,maybe\n".as_bytes()).is_err());
        assert!(parse_annotations("cluster,f1\nA,x\nA,\n".as_bytes()).is_err());
        assert!(parse_annotations("name,f1\nA,x\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut problems = ProblemFlags::default();
        problems.set(Problem::Parking, true);
        let m = SiteMatrix {
            rows: vec![SiteRow {
                cluster: "H".into(),
                unmet: [false, true, false, false],
                problems,
            }],
        };
        assert_eq!(
            m.to_csv(),
            "cluster,F1,F2,F3,F4,Safety,Noise,StreetBlock,Parking,Health\nH,,x,,,,,,x,\n"
        );
    }

    fn any_row() -> impl Strategy<Value = (usize, [bool; 9])> {
        (0usize..30, proptest::array::uniform9(any::<bool>()))
    }

    fn matrix_from(rows: &[(usize, [bool; 9])]) -> SiteMatrix {
        let mut seen = std::collections::BTreeSet::new();
        let rows = rows
            .iter()
            .filter(|(k, _)| seen.insert(*k))
            .map(|(k, cells)| {
                let mut problems = ProblemFlags::default();
                for (j, p) in Problem::ALL.into_iter().enumerate() {
                    problems.set(p, cells[4 + j]);
                }
                SiteRow {
                    cluster: crate::cluster::letter_name(*k),
                    unmet: [cells[0], cells[1], cells[2], cells[3]],
                    problems,
                }
            })
            .collect();
        SiteMatrix { rows }
    }

    proptest! {
        #[test]
        fn ranking_is_a_total_order(rows in proptest::collection::vec(any_row(), 1..12)) {
            let m = matrix_from(&rows);
            let ranked = rank_candidates(&m);
            prop_assert_eq!(ranked.len(), m.rows.len());
            for w in ranked.windows(2) {
                prop_assert_eq!(rank_cmp(&w[0], &w[1]), Ordering::Less);
            }
            let mut reversed = m.clone();
            reversed.rows.reverse();
            prop_assert_eq!(rank_candidates(&reversed), ranked);
        }

        #[test]
        fn adding_a_mark_never_improves_rank(
            rows in proptest::collection::vec(any_row(), 1..12),
            pick in any::<prop::sample::Index>(),
            cell in 0usize..9,
        ) {
            let m = matrix_from(&rows);
            let target = pick.index(m.rows.len());
            let name = m.rows[target].cluster.clone();
            let before = rank_candidates(&m).iter().position(|r| r.cluster == name).unwrap();
            let mut marked = m.clone();
            let row = &mut marked.rows[target];
            if cell < 4 {
                row.unmet[cell] = true;
            } else {
                row.problems.set(Problem::ALL[cell - 4], true);
            }
            let after = rank_candidates(&marked).iter().position(|r| r.cluster == name).unwrap();
            prop_assert!(after >= before);
        }
    }
}
