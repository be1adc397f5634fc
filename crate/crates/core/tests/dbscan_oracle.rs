//! DBSCAN against a quadratic reference implementation.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbanlens::cluster::{dbscan, name_clusters, ClusterAssignment, DbscanParams, Label};
use urbanlens::geo::{haversine_distance, GeoPoint};

struct Reference {
    core: Vec<bool>,
    /// Connected components of core points.
    components: BTreeSet<BTreeSet<usize>>,
    /// For each border point, the components it may join (nearest core
    /// neighbours; several only on exact distance ties).
    border_options: BTreeMap<usize, BTreeSet<usize>>,
}

fn component_of(components: &BTreeSet<BTreeSet<usize>>, p: usize) -> usize {
    components.iter().position(|c| c.contains(&p)).unwrap()
}

fn reference(points: &[GeoPoint], eps: f64, min_pts: usize) -> Reference {
    let n = points.len();
    let d = |i: usize, j: usize| haversine_distance(points[i], points[j]).get();
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| d(i, j) <= eps).count() >= min_pts)
        .collect();

    let mut seen = vec![false; n];
    let mut components = BTreeSet::new();
    for s in 0..n {
        if !core[s] || seen[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(p) = stack.pop() {
            comp.insert(p);
            for q in 0..n {
                if core[q] && !seen[q] && d(p, q) <= eps {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        components.insert(comp);
    }

    let mut border_options = BTreeMap::new();
    for i in (0..n).filter(|&i| !core[i]) {
        let near: Vec<(f64, usize)> = (0..n)
            .filter(|&q| core[q] && d(i, q) <= eps)
            .map(|q| (d(i, q), q))
            .collect();
        if let Some(best) = near.iter().map(|x| x.0).min_by(f64::total_cmp) {
            let options = near
                .iter()
                .filter(|x| x.0 == best)
                .map(|x| component_of(&components, x.1))
                .collect();
            border_options.insert(i, options);
        }
    }
    Reference {
        core,
        components,
        border_options,
    }
}

fn check(points: &[GeoPoint], eps: f64, min_pts: usize) {
    let got = dbscan(points, &DbscanParams::new(eps, min_pts).unwrap());
    let want = reference(points, eps, min_pts);

    for i in 0..points.len() {
        assert_eq!(got.is_core(i), want.core[i], "core flag of {i}");
    }
    let got_cores: BTreeSet<BTreeSet<usize>> = got
        .cluster_ids()
        .map(|id| {
            got.members(id)
                .iter()
                .copied()
                .filter(|&i| want.core[i])
                .collect()
        })
        .collect();
    assert_eq!(got_cores, want.components);

    for (i, label) in got.labels().iter().enumerate() {
        if want.core[i] {
            continue;
        }
        match (label, want.border_options.get(&i)) {
            (Label::Noise, None) => {}
            (Label::Cluster(id), Some(options)) => {
                let core_member = got
                    .members(*id)
                    .iter()
                    .copied()
                    .find(|&m| want.core[m])
                    .unwrap();
                assert!(
                    options.contains(&component_of(&want.components, core_member)),
                    "border {i}"
                );
            }
            (l, o) => panic!("point {i}: got {l:?}, reference options {o:?}"),
        }
    }
}

fn scatter(rng: &mut ChaCha8Rng, n: usize) -> Vec<GeoPoint> {
    let blobs: Vec<(f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| (rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)))
        .collect();
    (0..n)
        .map(|_| {
            let (dlat, dlon) = if rng.random_bool(0.7) {
                let b = blobs[rng.random_range(0..blobs.len())];
                (
                    b.0 + rng.random_range(-0.002..0.002),
                    b.1 + rng.random_range(-0.002..0.002),
                )
            } else {
                (
                    rng.random_range(-0.015..0.015),
                    rng.random_range(-0.015..0.015),
                )
            };
            GeoPoint::new(-25.43 + dlat, -49.27 + dlon).unwrap()
        })
        .collect()
}

#[test]
fn matches_reference_on_seeded_scatters() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let n = rng.random_range(0..=200);
        let pts = scatter(&mut rng, n);
        check(&pts, rng.random_range(30.0..400.0), rng.random_range(1..12));
    }
}

#[test]
fn matches_reference_near_poles_and_antimeridian() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (lat, lon) in [
        (89.99f64, 0.0f64),
        (-89.995, 120.0),
        (10.0, 179.999),
        (-45.0, -179.9995),
    ] {
        let pts: Vec<GeoPoint> = (0..120)
            .map(|_| {
                let la = (lat + rng.random_range(-0.004f64..0.004)).clamp(-90.0, 90.0);
                let mut lo = lon + rng.random_range(-0.01..0.01);
                if lo > 180.0 {
                    lo -= 360.0;
                }
                if lo < -180.0 {
                    lo += 360.0;
                }
                GeoPoint::new(la, lo).unwrap()
            })
            .collect();
        check(&pts, 150.0, 4);
    }
}

fn membership(a: &ClusterAssignment, order: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    a.cluster_ids()
        .map(|id| a.members(id).iter().map(|&i| order[i]).collect())
        .collect()
}

fn names(a: &ClusterAssignment, order: &[usize]) -> BTreeMap<String, BTreeSet<usize>> {
    a.cluster_ids()
        .map(|id| {
            (
                a.name(id).unwrap().to_string(),
                a.members(id).iter().map(|&i| order[i]).collect(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reference_equivalence(seed in any::<u64>(), n in 0usize..150, eps in 20.0f64..500.0, min_pts in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(&scatter(&mut rng, n), eps, min_pts);
    }

    #[test]
    fn shuffling_keeps_membership_and_names(seed in any::<u64>(), n in 1usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = scatter(&mut rng, n);
        let params = DbscanParams::new(250.0, 5).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<GeoPoint> = order.iter().map(|&i| pts[i]).collect();
        let identity: Vec<usize> = (0..n).collect();
        let a = name_clusters(dbscan(&pts, &params));
        let b = name_clusters(dbscan(&shuffled, &params));
        prop_assert_eq!(membership(&a, &identity), membership(&b, &order));
        prop_assert_eq!(names(&a, &identity), names(&b, &order));
    }

    #[test]
    fn stricter_min_pts_cores_stay_inside_looser_clusters(seed in any::<u64>(), n in 1usize..150) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = scatter(&mut rng, n);
        let strict = dbscan(&pts, &DbscanParams::new(250.0, 10).unwrap());
        let loose = dbscan(&pts, &DbscanParams::new(250.0, 5).unwrap());
        for id in strict.cluster_ids() {
            let cores: Vec<usize> = strict.members(id).iter().copied().filter(|&i| strict.is_core(i)).collect();
            let home = loose.labels()[cores[0]];
            prop_assert!(home != Label::Noise);
            for &c in &cores {
                prop_assert_eq!(loose.labels()[c], home);
            }
        }
    }
}
