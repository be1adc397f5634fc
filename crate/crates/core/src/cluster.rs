//! DBSCAN over geographic points with the haversine metric.
//!
//! Conventions:
//! * a point's eps-neighborhood includes the point itself, and membership is
//!   `distance <= eps`;
//! * core components are seeded in canonical `(lat, lon)` order, so cluster
//!   creation indices do not depend on input order;
//! * a border point reachable from several clusters joins the cluster of its
//!   nearest core neighbor, then the lowest creation index.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::geo::{haversine_distance, GeoPoint, Meters, EARTH_RADIUS_M};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("eps must be a positive distance, got {0}")]
    InvalidEps(f64),
    #[error("min_pts must be at least 1")]
    InvalidMinPts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    eps: Meters,
    min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps_m: f64, min_pts: usize) -> Result<Self, ClusterError> {
        let eps = Meters::new(eps_m).map_err(|_| ClusterError::InvalidEps(eps_m))?;
        if eps.get() <= 0.0 {
            return Err(ClusterError::InvalidEps(eps_m));
        }
        if min_pts == 0 {
            return Err(ClusterError::InvalidMinPts);
        }
        Ok(DbscanParams { eps, min_pts })
    }

    pub fn eps(&self) -> Meters {
        self.eps
    }

    pub fn min_pts(&self) -> usize {
        self.min_pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub usize);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Noise,
    Cluster(ClusterId),
}

impl Label {
    pub fn cluster(self) -> Option<ClusterId> {
        match self {
            Label::Noise => None,
            Label::Cluster(id) => Some(id),
        }
    }
}

/// Result of a DBSCAN run: per-point labels plus per-cluster members,
/// centroids and (after [`name_clusters`]) letter names.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<Label>,
    core: Vec<bool>,
    clusters: BTreeMap<ClusterId, Vec<usize>>,
    centroids: BTreeMap<ClusterId, GeoPoint>,
    names: BTreeMap<ClusterId, String>,
}

impl ClusterAssignment {
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_core(&self, index: usize) -> bool {
        self.core[index]
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Cluster ids in ascending order; after naming this is also name order.
    pub fn cluster_ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.keys().copied()
    }

    /// Member indices (ascending) of a cluster.
    pub fn members(&self, id: ClusterId) -> &[usize] {
        self.clusters.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn centroid(&self, id: ClusterId) -> Option<GeoPoint> {
        self.centroids.get(&id).copied()
    }

    pub fn name(&self, id: ClusterId) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    pub fn id_by_name(&self, name: &str) -> Option<ClusterId> {
        self.names
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(&id, _)| id)
    }

    pub fn noise(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Noise)
            .map(|(i, _)| i)
            .collect()
    }

    /// Member coordinates of a cluster, in member order.
    pub fn member_points(&self, id: ClusterId, points: &[GeoPoint]) -> Vec<GeoPoint> {
        self.members(id).iter().map(|&i| points[i]).collect()
    }
}

/// Letter name for the `k`-th cluster: A..Z, then AA, AB, ...
pub fn letter_name(mut k: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (k % 26) as u8);
        if k < 26 {
            break;
        }
        k = k / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Orders cluster names A < B < ... < Z < AA < AB.
pub fn cmp_names(a: &str, b: &str) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// Bucket grid that returns a superset of every point's eps-neighborhood.
///
/// Rows are latitude bands of angular height eps/R, which bounds the
/// latitude difference of any pair within eps. Columns are longitude
/// sectors wide enough to bound the longitude difference for the most
/// poleward point in the data, and wrap at the antimeridian.
struct GridIndex {
    row_deg: f64,
    col_deg: f64,
    cols: i64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    const SLACK: f64 = 1.0 + 1e-9;

    fn build(points: &[GeoPoint], eps: f64) -> Self {
        let ang = eps / EARTH_RADIUS_M;
        let row_deg = ang.to_degrees() * Self::SLACK;
        let min_cos = points
            .iter()
            .map(|p| p.lat().to_radians().cos())
            .fold(1.0f64, f64::min);
        let half = (ang / 2.0).sin();
        let max_dlon = if min_cos <= half {
            360.0
        } else {
            (2.0 * (half / min_cos).asin()).to_degrees() * Self::SLACK
        };
        let mut cols = (360.0 / max_dlon).floor() as i64;
        if cols < 3 {
            cols = 1;
        }
        let col_deg = 360.0 / cols as f64;
        let mut index = GridIndex {
            row_deg,
            col_deg,
            cols,
            cells: HashMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let key = index.key(p);
            index.cells.entry(key).or_default().push(i);
        }
        index
    }

    fn key(&self, p: &GeoPoint) -> (i64, i64) {
        let row = ((p.lat() + 90.0) / self.row_deg).floor() as i64;
        let col = (((p.lon() + 180.0) / self.col_deg).floor() as i64).rem_euclid(self.cols);
        (row, col)
    }

    fn candidates(&self, p: &GeoPoint) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = self.key(p);
        let col_offsets: &[i64] = if self.cols == 1 { &[0] } else { &[-1, 0, 1] };
        (-1..=1)
            .flat_map(move |dr| {
                col_offsets
                    .iter()
                    .map(move |dc| (row + dr, (col + dc).rem_euclid(self.cols)))
            })
            .filter_map(|key| self.cells.get(&key))
            .flatten()
            .copied()
    }
}

/// Every point's eps-neighborhood (itself included) as `(index, distance)`.
fn neighborhoods(points: &[GeoPoint], eps: f64) -> Vec<Vec<(usize, f64)>> {
    let grid = GridIndex::build(points, eps);
    points
        .par_iter()
        .map(|p| {
            let mut found: Vec<(usize, f64)> = grid
                .candidates(p)
                .filter_map(|j| {
                    let d = haversine_distance(*p, points[j]).get();
                    (d <= eps).then_some((j, d))
                })
                .collect();
            found.sort_unstable_by_key(|&(j, _)| j);
            found
        })
        .collect()
}

fn centroid_of(members: &[usize], points: &[GeoPoint]) -> GeoPoint {
    let mut pts: Vec<GeoPoint> = members.iter().map(|&i| points[i]).collect();
    pts.sort_by(GeoPoint::canonical_cmp);
    let n = pts.len() as f64;
    let lat = pts.iter().map(GeoPoint::lat).sum::<f64>() / n;
    let lon = pts.iter().map(GeoPoint::lon).sum::<f64>() / n;
    GeoPoint::new(lat, lon).expect("mean of valid coordinates is valid")
}

/// Runs DBSCAN. Cluster ids are creation indices in canonical point order
/// and carry no names; see [`name_clusters`].
pub fn dbscan(points: &[GeoPoint], params: &DbscanParams) -> ClusterAssignment {
    let n = points.len();
    let eps = params.eps.get();
    let hoods = neighborhoods(points, eps);
    let core: Vec<bool> = hoods.iter().map(|h| h.len() >= params.min_pts).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].canonical_cmp(&points[b]).then(a.cmp(&b)));

    let mut labels = vec![Label::Noise; n];
    let mut next = 0usize;
    let mut queue = VecDeque::new();
    for &seed in &order {
        if !core[seed] || labels[seed] != Label::Noise {
            continue;
        }
        let id = ClusterId(next);
        next += 1;
        labels[seed] = Label::Cluster(id);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &(q, _) in &hoods[p] {
                if core[q] && labels[q] == Label::Noise {
                    labels[q] = Label::Cluster(id);
                    queue.push_back(q);
                }
            }
        }
    }

    for i in 0..n {
        if core[i] {
            continue;
        }
        let best = hoods[i]
            .iter()
            .filter(|&&(q, _)| core[q])
            .filter_map(|&(q, d)| labels[q].cluster().map(|c| (d, c)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, c)) = best {
            labels[i] = Label::Cluster(c);
        }
    }

    let mut clusters: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        if let Label::Cluster(c) = label {
            clusters.entry(*c).or_default().push(i);
        }
    }
    let centroids = clusters
        .iter()
        .map(|(&id, m)| (id, centroid_of(m, points)))
        .collect();

    ClusterAssignment {
        labels,
        core,
        clusters,
        centroids,
        names: BTreeMap::new(),
    }
}

/// Renumbers and letters clusters: largest first, ties by westmost then
/// southmost centroid. Membership is unchanged; afterwards `ClusterId(k)`
/// carries the `k`-th letter name.
pub fn name_clusters(assignment: ClusterAssignment) -> ClusterAssignment {
    let ClusterAssignment {
        labels,
        core,
        clusters,
        centroids,
        ..
    } = assignment;

    let mut ranked: Vec<ClusterId> = clusters.keys().copied().collect();
    ranked.sort_by(|a, b| {
        let (ca, cb) = (centroids[a], centroids[b]);
        clusters[b]
            .len()
            .cmp(&clusters[a].len())
            .then(ca.lon().total_cmp(&cb.lon()))
            .then(ca.lat().total_cmp(&cb.lat()))
            .then(a.cmp(b))
    });
    let remap: HashMap<ClusterId, ClusterId> = ranked
        .iter()
        .enumerate()
        .map(|(k, &old)| (old, ClusterId(k)))
        .collect();

    let labels = labels
        .into_iter()
        .map(|l| match l {
            Label::Cluster(c) => Label::Cluster(remap[&c]),
            Label::Noise => Label::Noise,
        })
        .collect();
    let clusters = clusters.into_iter().map(|(c, m)| (remap[&c], m)).collect();
    let centroids = centroids.into_iter().map(|(c, p)| (remap[&c], p)).collect();
    let names = (0..ranked.len())
        .map(|k| (ClusterId(k), letter_name(k)))
        .collect();

    ClusterAssignment {
        labels,
        core,
        clusters,
        centroids,
        names,
    }
}
