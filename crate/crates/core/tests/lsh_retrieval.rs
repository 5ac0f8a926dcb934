use proptest::prelude::*;
use pzsr_core::lsh::{build_index, tune_r_for_table, LshIndex};
use pzsr_core::LshParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn true_nearest_neighbour_recall_floor() {
    let dim = 8;
    let data = gaussian(10_000, dim, 1);
    let tuned = tune_r_for_table(&data, 3, 10, 2).unwrap();
    let params = LshParams {
        t: 1,
        r: tuned.r,
        ..LshParams::default()
    };
    let rows: Vec<(u64, Vec<f64>)> = data.iter().cloned().enumerate().map(|(i, v)| (i as u64, v)).collect();
    let index = build_index(&rows, &params).unwrap();

    // Queries are perturbed copies of stored points.
    let noise = gaussian(500, dim, 3);
    let mut found = 0;
    for (i, n) in noise.iter().enumerate() {
        let q: Vec<f64> = data[i * 20].iter().zip(n).map(|(a, b)| a + 0.05 * b).collect();
        let nearest = (0..data.len())
            .min_by(|&a, &b| l1(&data[a], &q).total_cmp(&l1(&data[b], &q)))
            .unwrap() as u64;
        if index.query(&q).unwrap().ids.contains(&nearest) {
            found += 1;
        }
    }
    let recall = found as f64 / noise.len() as f64;
    assert!(recall >= 0.8, "recall {recall}");
}

#[test]
fn closer_points_collide_in_more_tables() {
    let dim = 6;
    let data = gaussian(2000, dim, 4);
    let rows: Vec<(u64, Vec<f64>)> = data.iter().cloned().enumerate().map(|(i, v)| (i as u64, v)).collect();
    let params = LshParams {
        r: 2.0,
        ..LshParams::default()
    };
    let index = build_index(&rows, &params).unwrap();
    let shared = |a: &[f64], b: &[f64]| index.tables().iter().filter(|t| t.key(a) == t.key(b)).count();
    let dirs = gaussian(200, dim, 5);
    let (mut near, mut far) = (0, 0);
    for (i, d) in dirs.iter().enumerate() {
        let x = &data[i];
        let s: f64 = d.iter().map(|v| v.abs()).sum();
        let at = |step: f64| x.iter().zip(d).map(|(a, b)| a + step * b / s).collect::<Vec<f64>>();
        near += shared(x, &at(0.5));
        far += shared(x, &at(8.0));
    }
    assert!(near > 2 * far, "near {near} far {far}");
}

#[test]
fn saved_index_answers_identically() {
    let data = gaussian(1500, 10, 6);
    let rows: Vec<(u64, Vec<f64>)> = data.iter().cloned().enumerate().map(|(i, v)| (i as u64, v)).collect();
    let index = build_index(&rows, &LshParams { r: 3.0, ..LshParams::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.pzlsh");
    index.save(&path).unwrap();
    let back = LshIndex::load(&path).unwrap();
    for q in gaussian(100, 10, 7) {
        assert_eq!(index.query(&q).unwrap(), back.query(&q).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn query_results_are_unique_capped_and_stored(seed in any::<u64>(), t in 1usize..4, cap in 1usize..40) {
        let data = gaussian(300, 5, seed);
        let rows: Vec<(u64, Vec<f64>)> = data.iter().cloned().enumerate().map(|(i, v)| (i as u64, v)).collect();
        let params = LshParams { t, r: 4.0, max_candidates: cap, seed, ..LshParams::default() };
        let index = build_index(&rows, &params).unwrap();
        for q in data.iter().take(10) {
            let res = index.query(q).unwrap();
            prop_assert!(res.ids.len() <= cap);
            let mut ids = res.ids.clone();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), res.ids.len());
            prop_assert!(ids.iter().all(|&id| id < 300));
            prop_assert!(res.touched >= res.ids.len());
        }
    }
}
