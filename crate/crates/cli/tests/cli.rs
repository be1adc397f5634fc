use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urbanlens"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn city() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/city")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Offsets a point by metres east/north of a reference latitude/longitude.
fn offset(lat: f64, lon: f64, east: f64, north: f64) -> (f64, f64) {
    let r = 6_371_000.0;
    (
        lat + (north / r).to_degrees(),
        lon + (east / (r * lat.to_radians().cos())).to_degrees(),
    )
}

/// Three tight groups of 8, 7 and 6 check-ins 2 km apart plus two strays.
fn three_groups(dir: &Path) {
    let mut csv = String::from("user_id,venue_id,beer_style,lat,lon,timestamp\n");
    let mut n = 0;
    for (g, (east, size)) in [(0.0, 8), (2000.0, 7), (4000.0, 6)].into_iter().enumerate() {
        for i in 0..size {
            let (lat, lon) = offset(-25.43, -49.27, east + 10.0 * i as f64, 5.0 * i as f64);
            csv.push_str(&format!(
                "u{n},g{g}v{i},IPA,{lat:.6},{lon:.6},2016-07-01T20:00:00Z\n"
            ));
            n += 1;
        }
    }
    for (i, east) in [8000.0, 11000.0].into_iter().enumerate() {
        let (lat, lon) = offset(-25.43, -49.27, east, 0.0);
        csv.push_str(&format!(
            "s{i},stray{i},Stout,{lat:.6},{lon:.6},2016-07-02T20:00:00Z\n"
        ));
    }
    fs::write(dir.join("checkins.csv"), csv).unwrap();
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn setup(body: &str) -> (TempDir, String) {
    let d = tempfile::tempdir().unwrap();
    three_groups(d.path());
    let cfg = write_config(d.path(), body);
    (d, cfg.to_string_lossy().into_owned())
}

const BASE: &str = "[inputs]\ncheckins = \"checkins.csv\"\n[cluster]\neps_m = 250.0\nmin_pts = 5\n";

fn geojson(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/clusters.geojson")).unwrap()).unwrap()
}

fn layer<'a>(g: &'a Value, name: &str) -> Vec<&'a Value> {
    g["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["properties"]["layer"] == name)
        .collect()
}

#[test]
fn cluster_finds_three_planted_groups() {
    let (d, cfg) = setup(BASE);
    let o = run(&["cluster", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = geojson(d.path());
    assert_eq!(g["type"], "FeatureCollection");
    let names: Vec<&str> = layer(&g, "centroid")
        .iter()
        .map(|f| f["properties"]["cluster"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["A", "B", "C"]);
    assert_eq!(layer(&g, "member").len(), 21);
    assert_eq!(layer(&g, "noise").len(), 2);
    let summary = fs::read_to_string(d.path().join("out/clusters.csv")).unwrap();
    let sizes: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(sizes, ["8", "7", "6"]);
}

#[test]
fn min_pts_above_dataset_size_gives_all_noise() {
    let (d, cfg) = setup(BASE);
    let o = run(&["cluster", "--config", &cfg, "--min-pts", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = geojson(d.path());
    assert!(layer(&g, "centroid").is_empty());
    assert_eq!(layer(&g, "noise").len(), 23);
}

#[test]
fn cluster_rerun_is_byte_identical() {
    let (d, cfg) = setup(BASE);
    assert!(run(&["cluster", "--config", &cfg]).status.success());
    let first = fs::read(d.path().join("out/clusters.geojson")).unwrap();
    let first_csv = fs::read(d.path().join("out/clusters.csv")).unwrap();
    assert!(run(&["cluster", "--config", &cfg]).status.success());
    assert_eq!(
        first,
        fs::read(d.path().join("out/clusters.geojson")).unwrap()
    );
    assert_eq!(
        first_csv,
        fs::read(d.path().join("out/clusters.csv")).unwrap()
    );
}

#[test]
fn empty_dataset_exits_with_status_3() {
    let (d, cfg) = setup(BASE);
    let o = run(&["cluster", "--config", &cfg, "--from", "2020-01-01"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("no check-ins left"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn missing_input_aborts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "[inputs]\ncheckins = \"nowhere.csv\"\n");
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.csv"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn missing_category_map_is_fatal() {
    let (d, _) = setup(BASE);
    fs::write(
        d.path().join("reports.csv"),
        "report_id,subdivision,lat,lon,timestamp\n",
    )
    .unwrap();
    let cfg = write_config(
        d.path(),
        &format!("{BASE}[enrich]\ncategory_map = \"gone.tsv\"\n")
            .replace("[inputs]\n", "[inputs]\nreports = \"reports.csv\"\n"),
    );
    let o = run(&["enrich", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gone.tsv"));
}

#[test]
fn enrich_with_no_reports_gives_zero_tables() {
    let (d, _) = setup(BASE);
    fs::write(
        d.path().join("reports.csv"),
        "report_id,subdivision,lat,lon,timestamp\n",
    )
    .unwrap();
    let cfg = write_config(
        d.path(),
        &BASE.replace("[inputs]\n", "[inputs]\nreports = \"reports.csv\"\n"),
    );
    let o = run(&["enrich", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let counts: Value = serde_json::from_str(
        &fs::read_to_string(d.path().join("out/category_counts.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(counts["clusters"].as_array().unwrap().len(), 3);
    assert!(counts["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["total"] == 0));
    assert_eq!(counts["assigned"], 0);
    let stats = fs::read_to_string(d.path().join("out/cluster_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 4);
}

#[test]
fn unknown_share_cluster_fails_without_outputs() {
    let (d, _) = setup(BASE);
    fs::write(
        d.path().join("reports.csv"),
        "report_id,subdivision,lat,lon,timestamp\n",
    )
    .unwrap();
    let body = format!("{BASE}[enrich]\nshare_subset = [\"A\", \"Z\"]\n")
        .replace("[inputs]\n", "[inputs]\nreports = \"reports.csv\"\n");
    let cfg = write_config(d.path(), &body);
    let o = run(&["enrich", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown cluster `Z`"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn score_sites_without_annotations_warns() {
    let (d, _) = setup(BASE);
    fs::write(
        d.path().join("reports.csv"),
        "report_id,subdivision,lat,lon,timestamp\n",
    )
    .unwrap();
    let cfg = write_config(
        d.path(),
        &BASE.replace("[inputs]\n", "[inputs]\nreports = \"reports.csv\"\n"),
    );
    let o = run(&["score-sites", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("no annotations"));
    let matrix = fs::read_to_string(d.path().join("out/site_matrix.csv")).unwrap();
    assert_eq!(
        matrix,
        "cluster,F1,F2,F3,F4,Safety,Noise,StreetBlock,Parking,Health\nA,,,,,,,,,\nB,,,,,,,,,\nC,,,,,,,,,\n"
    );
}

#[test]
fn annotation_for_unknown_cluster_is_an_error() {
    let (d, _) = setup(BASE);
    fs::write(
        d.path().join("reports.csv"),
        "report_id,subdivision,lat,lon,timestamp\n",
    )
    .unwrap();
    fs::write(
        d.path().join("ann.csv"),
        "cluster,f1,f2,f3,f4,notes\nQ,x,,,,\n",
    )
    .unwrap();
    let cfg = write_config(
        d.path(),
        &BASE.replace(
            "[inputs]\n",
            "[inputs]\nreports = \"reports.csv\"\nannotations = \"ann.csv\"\n",
        ),
    );
    let o = run(&["score-sites", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`Q`"));
}

fn react_setup(comments: &str, articles: &[&str]) -> (TempDir, PathBuf) {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("comments.csv"), comments).unwrap();
    fs::create_dir(d.path().join("articles")).unwrap();
    for (i, a) in articles.iter().enumerate() {
        fs::write(d.path().join(format!("articles/{i}.txt")), a).unwrap();
    }
    let cfg = write_config(
        d.path(),
        "[inputs]\ncomments = \"comments.csv\"\narticles = \"articles\"\n[text]\nlanguage = \"en\"\n",
    );
    (d, cfg)
}

#[test]
fn react_without_articles_is_fatal() {
    let (d, cfg) = react_setup("comment_id,text\nc1,hello\n", &[]);
    let o = run(&["react", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("topic is undefined"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn react_ranks_on_topic_first_and_counts_zero_similarity() {
    let comments = "comment_id,text\n\
        c1,The weather is cold\n\
        c2,Craft beer street downtown is great\n\
        c3,My football team lost\n\
        c4,Beer festival on the street\n\
        c5,Elections are next year\n";
    let (d, cfg) = react_setup(
        comments,
        &[
            "The city plans a craft beer street downtown.",
            "A beer festival will close the street.",
        ],
    );
    let o = run(&["react", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ranked = fs::read_to_string(d.path().join("out/ranked_comments.csv")).unwrap();
    let order: Vec<&str> = ranked
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    let mut top = order[..2].to_vec();
    top.sort();
    assert_eq!(top, ["c2", "c4"]);
    assert_eq!(order.len(), 5);
    let s: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("out/sentiment.json")).unwrap())
            .unwrap();
    assert_eq!(s["zero_similarity"], 3);
    assert_eq!(s["nonzero"]["overall"]["n"], 2);
    assert_eq!(s["quartiles"].as_array().unwrap().len(), 4);
}

#[test]
fn all_neutral_comments_have_mean_zero() {
    let comments = "comment_id,text\nc1,the street\nc2,a beer\nc3,city plans\n";
    let (d, cfg) = react_setup(comments, &["The city plans a beer street."]);
    assert!(run(&["react", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    let s: Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("out/sentiment.json")).unwrap())
            .unwrap();
    assert_eq!(s["overall"]["mean_text"], "0.00");
    assert_eq!(s["overall"]["bins"]["0"], 3);
}

#[test]
fn pipeline_manifest_lists_four_stages() {
    let out = tempfile::tempdir().unwrap();
    let cfg = city().join("pipeline.toml");
    let o = run(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap())
            .unwrap();
    let stages: Vec<&str> = m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["cluster", "enrich", "score-sites", "react"]);
    for s in m["stages"].as_array().unwrap() {
        for f in s["outputs"].as_array().unwrap() {
            let bytes = fs::read(out.path().join(f["file"].as_str().unwrap())).unwrap();
            assert_eq!(f["sha256"], urbanlens_cli::output::sha256_hex(&bytes));
        }
    }
    assert_eq!(m["parameters"]["min_pts"], 10);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 6);
}

#[test]
fn flags_override_config() {
    let out = tempfile::tempdir().unwrap();
    let cfg = city().join("pipeline.toml");
    let o = run(&[
        "cluster",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--eps",
        "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.path().join("clusters.csv")).unwrap();
    assert!(summary.lines().count() < 9);
}
