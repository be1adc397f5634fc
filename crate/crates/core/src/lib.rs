//! Discover popular functional areas from geotagged check-ins, enrich them
//! with municipal complaint reports, and assess citizen reactions to a
//! planning announcement.
//!
//! The crate is organised as a pipeline of small, pure stages:
//!
//! * [`geo`] - haversine distance and dissolved-buffer area.
//! * [`cluster`] - DBSCAN over geographic points, with canonical lettering.
//! * [`ingest`] - schema-mapped parsing, filtering and deduplication of
//!   check-ins, reports and comments.
//! * [`enrich`] - spatial join of reports to cluster buffers and per-cluster
//!   category statistics.
//! * [`sitescore`] - the problem/feature suitability matrix and ranking.
//! * [`textrank`] - normalisation, TF-IDF topic profile and comment relevance.
//! * [`sentiment`] - lexicon polarity scoring in `[-4, +4]`.

pub mod cluster;
pub mod enrich;
pub mod geo;
pub mod ingest;
pub mod sentiment;
pub mod sitescore;
pub mod textrank;

pub use cluster::{dbscan, name_clusters, ClusterAssignment, ClusterId, DbscanParams, Label};
pub use geo::{haversine_distance, min_distance_to_set, union_buffer_area, GeoPoint, Meters};
