//! Writes the synthetic city fixture used by the CLI tests and the README
//! walkthrough: check-ins around eight planted areas, municipal reports,
//! feature annotations, news articles and reader comments.
//!
//! Usage: cargo run -p urbanlens --example synth_city -- <out-dir>

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbanlens::geo::{haversine_distance, GeoPoint, EARTH_RADIUS_M};
use urbanlens::textrank::{normalize, LanguageConfig};

const ORIGIN: (f64, f64) = (-25.43, -49.27);

/// Planted areas: name, offset east/north in km, 2016 check-ins, 2013 check-ins.
const AREAS: [(&str, f64, f64, usize, usize); 8] = [
    ("A", 0.0, 0.0, 30, 4),
    ("B", 1.8, 0.4, 27, 4),
    ("C", -1.7, 0.9, 24, 4),
    ("D", 0.3, 2.0, 22, 4),
    ("E", -0.6, -1.9, 20, 4),
    ("F", 2.2, -1.8, 17, 4),
    ("G", -2.4, -1.3, 15, 4),
    ("H", 1.0, -3.6, 13, 14),
];

const AREA_RADIUS_M: f64 = 120.0;
const NOISE_2016: usize = 232;
const NOISE_2013: usize = 29;

/// Report counts per area: street blocking, traffic, health, noise, safety, parking.
const REPORTS: [[usize; 6]; 8] = [
    [1, 1, 2, 5, 6, 9],
    [3, 3, 1, 5, 5, 8],
    [40, 30, 3, 60, 80, 160],
    [2, 2, 50, 70, 85, 174],
    [2, 1, 5, 5, 5, 9],
    [1, 1, 5, 2, 5, 7],
    [1, 0, 6, 1, 5, 8],
    [4, 3, 6, 1, 2, 10],
];

const SUBDIVISIONS: [[&str; 2]; 6] = [
    ["Events blocking streets", "Blocking street with vehicle"],
    ["Traffic inspection", "Speed excess"],
    ["Leptospirosis risk", "Open sewage"],
    ["Loud noise at night", "Loud noise at daytime"],
    [
        "Requesting greater security",
        "Drugged people on the street",
    ],
    ["Parking on sidewalk", "Parking at forbidden time"],
];

const STYLES: [&str; 8] = [
    "IPA",
    "American Pale Ale",
    "Weissbier",
    "Pilsner",
    "Stout",
    "Saison",
    "Catharina Sour",
    "Witbier",
];

const ANNOTATIONS: &str = "\
cluster,f1,f2,f3,f4,notes
A,x,x,,,busy arterial street; hospital two blocks away
B,,,x,x,small bars; narrow sidewalks
C,,,x,x,mostly residential buildings; no large open area
D,,,x,x,shops close early; small square
E,,,x,x,shops close early; small square
F,x,,,,main bus corridor
G,x,x,,,main bus corridor; residential towers
H,,,,,weekly tastings already happen on the street
";

const ARTICLES: [&str; 8] = [
    "Prefeitura anuncia Rua da Cerveja no Hauer\n\nA prefeitura de Curitiba anunciou a criação da Rua da Cerveja artesanal na Rua Carlos de Laet, no bairro Hauer. O local já recebe degustações de cerveja artesanal às sextas e sábados. Segundo Helena Vasconcelos, secretária de turismo, a ideia é fortalecer o polo cervejeiro da cidade.",
    "Primeira reunião discute a Rua da Cerveja\n\nCervejeiros, moradores do Hauer e a secretária Helena Vasconcelos participaram da primeira reunião sobre a Rua da Cerveja. O empresário Otávio Brandalise apresentou o roteiro de degustação das cervejarias artesanais da Rua Carlos de Laet.",
    "Eventos-teste vão avaliar impacto da Rua da Cerveja\n\nAntes de concluir o projeto, a prefeitura fará eventos-teste na Rua Carlos de Laet. A intenção é entender as necessidades dos moradores do Hauer e o impacto no trânsito e no estacionamento durante as degustações de cerveja artesanal.",
    "Curitiba quer ser capital da cerveja artesanal\n\nCom dezenas de cervejarias, Curitiba aposta na Rua da Cerveja como atrativo turístico. Otávio Brandalise, da associação de cervejeiros, lembra que o bairro Hauer concentra fábricas e bares de cerveja artesanal.",
    "Moradores do Hauer opinam sobre a Rua da Cerveja\n\nMoradores da Rua Carlos de Laet dividem opiniões sobre o projeto. Alguns apoiam a rua de cerveja artesanal e o movimento nos bares; outros temem barulho e falta de estacionamento nos fins de semana.",
    "Rua da Cerveja terá fechamento nas sextas e sábados\n\nO projeto prevê o fechamento da Rua Carlos de Laet para carros nas sextas e sábados. Helena Vasconcelos afirma que a prefeitura vai organizar o trânsito e o estacionamento no entorno do polo cervejeiro do Hauer.",
    "Cervejarias artesanais apoiam projeto da prefeitura\n\nA associação de cervejarias artesanais, presidida por Otávio Brandalise, apoia a Rua da Cerveja. Para ele, a degustação na rua atrai turistas e valoriza a cerveja produzida no Hauer.",
    "Rua da Cerveja entra na agenda de turismo de Curitiba\n\nA secretaria de turismo incluiu a Rua da Cerveja na agenda oficial. Roteiros vão ligar cervejarias artesanais do Hauer, degustações na Rua Carlos de Laet e eventos com música ao vivo.",
];

/// Comment building blocks. Topic fragments reuse article vocabulary;
/// off-topic fragments must share no normalized term with the articles.
const TOPIC_FRAGMENTS: [&str; 12] = [
    "a rua da cerveja artesanal no Hauer",
    "essa rua da cerveja na Carlos de Laet",
    "o projeto da rua da cerveja",
    "a degustação de cerveja artesanal nas sextas",
    "o polo cervejeiro do Hauer",
    "fechar a rua Carlos de Laet nos sábados",
    "as cervejarias artesanais de Curitiba",
    "o trânsito e o estacionamento no Hauer",
    "a prefeitura e a rua da cerveja",
    "turismo com cerveja artesanal",
    "os bares do bairro",
    "a reunião com a secretária Helena Vasconcelos",
];

const OFF_TOPIC_FRAGMENTS: [&str; 8] = [
    "esse governo",
    "o futebol de domingo",
    "a eleição do ano passado",
    "o imposto que sobe todo mês",
    "a chuva de ontem",
    "meu time",
    "o salário do deputado",
    "a fila do hospital",
];

const POSITIVE: [&str; 6] = [
    "é uma ótima proposta",
    "parabéns, excelente",
    "vai ser incrível",
    "adoro, muito bom",
    "apoio, acho legal",
    "fica lindo",
];

const NEGATIVE: [&str; 7] = [
    "é um absurdo",
    "vai ser um caos",
    "que vergonha",
    "muita sujeira e lixo",
    "é péssimo",
    "não gosto",
    "vai dar problema",
];

const NEUTRAL: [&str; 4] = ["vamos ver", "e agora", "alguém sabe quando", "li hoje"];

fn offset(east_m: f64, north_m: f64) -> GeoPoint {
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * ORIGIN.0.to_radians().cos())).to_degrees();
    GeoPoint::new(ORIGIN.0 + dlat, ORIGIN.1 + dlon).expect("fixture point in range")
}

fn center(k: usize) -> GeoPoint {
    offset(AREAS[k].1 * 1000.0, AREAS[k].2 * 1000.0)
}

fn within(rng: &mut ChaCha8Rng, c: GeoPoint, radius: f64) -> GeoPoint {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    let north = r * theta.sin();
    let east = r * theta.cos();
    let lat = c.lat() + (north / EARTH_RADIUS_M).to_degrees();
    let lon = c.lon() + (east / (EARTH_RADIUS_M * c.lat().to_radians().cos())).to_degrees();
    let p = GeoPoint::new(lat, lon).expect("fixture point in range");
    assert!(haversine_distance(p, c).get() <= radius + 0.01);
    p
}

/// Lattice sites 400 m apart, jittered by at most 50 m, at least `clearance`
/// metres from every planted center. No two sites end up within 300 m.
fn lattice(rng: &mut ChaCha8Rng, clearance: f64) -> Vec<GeoPoint> {
    let mut sites = Vec::new();
    for i in -10..=10 {
        for j in -10..=10 {
            let p = offset(
                i as f64 * 400.0 + rng.random_range(-50.0..50.0),
                j as f64 * 400.0 + rng.random_range(-50.0..50.0),
            );
            if (0..AREAS.len()).all(|k| haversine_distance(p, center(k)).get() >= clearance) {
                sites.push(p);
            }
        }
    }
    sites.shuffle(rng);
    sites
}

fn coord(x: f64) -> String {
    format!("{x:.6}")
}

struct CheckinRow {
    user: String,
    venue: String,
    style: String,
    at: GeoPoint,
    when: String,
}

fn write_checkins(path: &Path, rows: &[CheckinRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "user_id",
        "venue_id",
        "beer_style",
        "lat",
        "lon",
        "timestamp",
    ])?;
    for r in rows {
        w.write_record([
            r.user.as_str(),
            &r.venue,
            &r.style,
            &coord(r.at.lat()),
            &coord(r.at.lon()),
            &r.when,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn random_time(rng: &mut ChaCha8Rng, year: i32, months: &[(i32, u32)]) -> String {
    let &(dy, m) = months.choose(rng).unwrap();
    format!(
        "{}-{:02}-{:02}T{:02}:{:02}:00Z",
        year + dy,
        m,
        rng.random_range(1..=28),
        rng.random_range(12..24),
        rng.random_range(0..60)
    )
}

const SEASON: [(i32, u32); 10] = [
    (0, 6),
    (0, 7),
    (0, 8),
    (0, 9),
    (0, 10),
    (0, 11),
    (0, 12),
    (1, 1),
    (1, 2),
    (1, 3),
];

fn checkins_2016(rng: &mut ChaCha8Rng) -> Vec<CheckinRow> {
    let mut rows = Vec::new();
    let mut pairs = BTreeSet::new();
    let mut user = |rng: &mut ChaCha8Rng, venue: &str| loop {
        let u = format!("u{:03}", rng.random_range(0..180));
        if pairs.insert((u.clone(), venue.to_string())) {
            return u;
        }
    };
    for (k, &(name, _, _, size, _)) in AREAS.iter().enumerate() {
        let venues: Vec<(String, GeoPoint)> = (0..size.div_ceil(3))
            .map(|v| {
                (
                    format!("{name}-v{v:02}"),
                    within(rng, center(k), AREA_RADIUS_M),
                )
            })
            .collect();
        for i in 0..size {
            let (venue, at) = venues[i % venues.len()].clone();
            rows.push(CheckinRow {
                user: user(rng, &venue),
                style: STYLES.choose(rng).unwrap().to_string(),
                venue,
                at,
                when: random_time(rng, 2016, &SEASON),
            });
        }
    }
    for (i, at) in lattice(rng, 600.0).into_iter().take(NOISE_2016).enumerate() {
        let venue = format!("N-v{i:03}");
        rows.push(CheckinRow {
            user: user(rng, &venue),
            style: STYLES.choose(rng).unwrap().to_string(),
            venue,
            at,
            when: random_time(rng, 2016, &SEASON),
        });
    }
    assert_eq!(rows.len(), 400);

    // repeat visits (removed by deduplication) and unusable rows
    let repeats: Vec<CheckinRow> = rows
        .choose_multiple(rng, 25)
        .map(|r| CheckinRow {
            user: r.user.clone(),
            venue: r.venue.clone(),
            style: STYLES.choose(rng).unwrap().to_string(),
            at: r.at,
            when: random_time(rng, 2016, &SEASON),
        })
        .collect();
    let mut unusable: Vec<CheckinRow> = rows
        .choose_multiple(rng, 10)
        .map(|r| CheckinRow {
            user: format!("x{}", r.user),
            venue: r.venue.clone(),
            style: String::new(),
            at: r.at,
            when: r.when.clone(),
        })
        .collect();
    rows.extend(repeats);
    rows.append(&mut unusable);
    rows.shuffle(rng);
    rows
}

fn checkins_2013(rng: &mut ChaCha8Rng) -> Vec<CheckinRow> {
    let mut rows = Vec::new();
    for (k, &(name, _, _, _, size)) in AREAS.iter().enumerate() {
        for i in 0..size {
            rows.push(CheckinRow {
                user: format!("o{k}{i:02}"),
                venue: format!("{name}-old{i:02}"),
                style: STYLES.choose(rng).unwrap().to_string(),
                at: within(rng, center(k), AREA_RADIUS_M),
                when: random_time(rng, 2013, &SEASON),
            });
        }
    }
    for (i, at) in lattice(rng, 600.0).into_iter().take(NOISE_2013).enumerate() {
        rows.push(CheckinRow {
            user: format!("o9{i:02}"),
            venue: format!("N-old{i:02}"),
            style: STYLES.choose(rng).unwrap().to_string(),
            at,
            when: random_time(rng, 2013, &SEASON),
        });
    }
    assert_eq!(rows.len(), 71);
    rows.shuffle(rng);
    rows
}

fn local_time(rng: &mut ChaCha8Rng, year: i32, months: &[(i32, u32)]) -> String {
    let &(dy, m) = months.choose(rng).unwrap();
    format!(
        "{:02}/{:02}/{} {:02}:{:02}",
        rng.random_range(1..=28),
        m,
        year + dy,
        rng.random_range(0..24),
        rng.random_range(0..60)
    )
}

fn reports(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |subject: &str, subdivision: &str, at: GeoPoint, when: String, note: &str| {
        rows.push(vec![
            String::new(),
            subject.to_string(),
            subdivision.to_string(),
            coord(at.lat()),
            coord(at.lon()),
            when,
            note.to_string(),
        ]);
    };
    for (k, counts) in REPORTS.iter().enumerate() {
        for (cat, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let sub = SUBDIVISIONS[cat].choose(rng).unwrap();
                let at = within(rng, center(k), 60.0);
                let when = local_time(rng, 2016, &SEASON);
                push("Central 156", sub, at, when, "");
            }
        }
        // subdivisions outside the category map
        for _ in 0..3 {
            let at = within(rng, center(k), 60.0);
            let when = local_time(rng, 2016, &SEASON);
            push("Central 156", "Tree pruning", at, when, "");
        }
    }
    // reports far from every planted area
    for at in lattice(rng, 1000.0).into_iter().take(60) {
        let cat = rng.random_range(0..6);
        let sub = SUBDIVISIONS[cat].choose(rng).unwrap();
        let when = local_time(rng, 2016, &SEASON);
        push("Central 156", sub, at, when, "");
    }
    // outside the study period: safety and noise in H would change its row
    for i in 0..40 {
        let at = within(rng, center(7), 60.0);
        let when = local_time(rng, 2015, &[(0, 3), (0, 4), (0, 5)]);
        push(
            "Central 156",
            SUBDIVISIONS[3 + i % 2][0],
            at,
            when,
            "before the study period",
        );
    }
    rows.shuffle(rng);
    for (i, row) in rows.iter_mut().enumerate() {
        row[0] = format!("R{:05}", i + 1);
    }
    rows
}

fn write_reports(path: &Path, rows: &[Vec<String>]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record([
        "report_id",
        "subject",
        "subdivision",
        "lat",
        "lon",
        "timestamp",
        "comment",
    ])?;
    for row in rows {
        w.write_record(row)?;
    }
    // malformed rows
    w.write_record([
        "R90001",
        "Central 156",
        "Parking on sidewalk",
        "not-a-number",
        "-49.27",
        "01/08/2016 10:00",
        "",
    ])?;
    w.write_record([
        "R90002",
        "Central 156",
        "Parking on sidewalk",
        "-25.43",
        "-49.27",
        "",
        "",
    ])?;
    w.write_record(["R90003", "Central 156", "Parking on sidewalk"])?;
    w.flush()?;
    Ok(())
}

/// Builds the comment corpus. Each entry is (text, on_topic).
///
/// Comments naming more of the plan (more topic fragments) lean negative,
/// so the most relevant quarter is more negative than the corpus as a whole.
fn comments(rng: &mut ChaCha8Rng) -> Vec<(String, bool)> {
    // (topic fragments, neutral, positive, negative); 0 fragments = off-topic
    const PLAN: [(usize, usize, usize, usize); 4] = [
        (3, 8, 10, 16),
        (2, 12, 14, 12),
        (1, 18, 12, 8),
        (0, 27, 24, 39),
    ];
    let (mut next_pos, mut next_neg) = (0, 0);
    let mut out = Vec::new();
    for (fragments, neutral, positive, negative) in PLAN {
        let moods = [(0u8, neutral), (1, positive), (2, negative)];
        for (mood, count) in moods {
            for _ in 0..count {
                let subject = if fragments > 0 {
                    let mut parts: Vec<&str> = TOPIC_FRAGMENTS
                        .choose_multiple(rng, fragments)
                        .copied()
                        .collect();
                    parts.sort();
                    parts.join(" e ")
                } else {
                    OFF_TOPIC_FRAGMENTS.choose(rng).unwrap().to_string()
                };
                let text = match mood {
                    0 => format!("{}, {subject}", NEUTRAL.choose(rng).unwrap()),
                    1 => {
                        next_pos += 1;
                        format!("{subject} {}", POSITIVE[(next_pos - 1) % POSITIVE.len()])
                    }
                    _ => {
                        next_neg += 1;
                        format!("{subject} {}", NEGATIVE[(next_neg - 1) % NEGATIVE.len()])
                    }
                };
                let mut chars = text.chars();
                let first = chars.next().unwrap().to_uppercase().collect::<String>();
                out.push((first + chars.as_str(), fragments > 0));
            }
        }
    }
    out.shuffle(rng);
    out
}

fn write_comments(path: &Path, rows: &[(String, bool)], rng: &mut ChaCha8Rng) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["comment_id", "article_id", "text", "timestamp"])?;
    for (i, (text, _)) in rows.iter().enumerate() {
        let article = format!("art{}", rng.random_range(1..=8));
        let when = random_time(rng, 2017, &[(0, 4), (0, 5)]);
        w.write_record([format!("c{:03}", i + 1), article, text.clone(), when])?;
    }
    w.flush()?;
    Ok(())
}

const CONFIG: &str = r#"# Synthetic city walkthrough. Paths are relative to this file.
output_dir = "out"

[inputs]
checkins = "checkins_2016.csv"
reports = "reports.csv"
comments = "comments.csv"
articles = "articles"
annotations = "annotations.csv"

[filter]
from = "2016-06-01"
to = "2017-03-31"

[cluster]
eps_m = 250.0
min_pts = 10

[enrich]
radius_m = 200.0
category_map = "category_map.tsv"
share_subset = ["C", "D"]

[thresholds]
min_count = 5
min_density = 0.05

[text]
language = "pt"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/city".into()),
    );
    fs::create_dir_all(out.join("articles"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(20170315);

    for a in 0..AREAS.len() {
        for b in a + 1..AREAS.len() {
            assert!(haversine_distance(center(a), center(b)).get() >= 1500.0);
        }
    }

    write_checkins(&out.join("checkins_2016.csv"), &checkins_2016(&mut rng))?;
    write_checkins(&out.join("checkins_2013.csv"), &checkins_2013(&mut rng))?;
    write_reports(&out.join("reports.csv"), &reports(&mut rng))?;
    fs::write(out.join("annotations.csv"), ANNOTATIONS)?;
    fs::write(
        out.join("category_map.tsv"),
        include_str!("../data/category_map.tsv"),
    )?;
    fs::write(out.join("pipeline.toml"), CONFIG)?;

    for (i, text) in ARTICLES.iter().enumerate() {
        fs::write(
            out.join("articles").join(format!("art{}.txt", i + 1)),
            format!("{text}\n"),
        )?;
    }

    let pt = LanguageConfig::portuguese();
    let topic_terms: BTreeSet<String> = ARTICLES
        .iter()
        .flat_map(|a| normalize(a, &pt).tokens().to_vec())
        .collect();
    let corpus = comments(&mut rng);
    for (text, topical) in &corpus {
        let overlap = normalize(text, &pt)
            .tokens()
            .iter()
            .any(|t| topic_terms.contains(t));
        assert_eq!(overlap, *topical, "comment `{text}`");
    }
    write_comments(&out.join("comments.csv"), &corpus, &mut rng)?;
    println!("wrote fixture to {}", out.display());
    Ok(())
}
