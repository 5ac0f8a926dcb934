use pzsr_core::bench::{bench_run, exhaustive_knn, BenchOptions, Method};
use pzsr_core::pipeline::index_db_auto;
use pzsr_core::synth::{synthetic_corpus, synthetic_scene};
use pzsr_core::training::{build_db, DbConfig};
use pzsr_core::{Model, SampleSpec, SrConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model() -> Model {
    let train = synthetic_corpus(4, 160, 160, 300);
    let spec = SampleSpec {
        sub_image_size: 100,
        samples_per_image: 2,
    };
    let db = build_db(&train, &DbConfig::default(), &spec, 1).unwrap();
    let lsh = SrConfig::default().lsh;
    let (index, _) = index_db_auto(&db, &lsh, lsh.max_candidates).unwrap();
    Model::new(db, index).unwrap()
}

#[test]
fn exhaustive_knn_matches_rescan() {
    let model = small_model();
    let db = model.db();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dim = db.feature_dim();
    for _ in 0..1000 {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.3..0.3)).collect();
        let k = rng.random_range(1..=20);
        let got = exhaustive_knn(db, &q, k).unwrap();
        let mut all: Vec<(f64, u64)> = (0..db.len() as u64)
            .map(|id| {
                let d: f64 = db.feature(id).iter().zip(&q).map(|(&a, b)| (a as f64 - b).powi(2)).sum();
                (d, id)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u64> = all[..k].iter().map(|p| p.1).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn csv_is_deterministic_without_timing() {
    let model = small_model();
    let cfg = model.default_config();
    let tests = vec![("a".to_string(), synthetic_scene(64, 64, 1)), ("b".to_string(), synthetic_scene(72, 64, 2))];
    let opts = BenchOptions {
        record_timing: false,
        ..BenchOptions::default()
    };
    let csv = |_| {
        let mut out = Vec::new();
        bench_run(&tests, &model, &cfg, &opts).unwrap().write_csv(&mut out).unwrap();
        String::from_utf8(out).unwrap()
    };
    let first = csv(0);
    assert_eq!(first, csv(1));
    assert_eq!(first.lines().count(), 1 + tests.len() * Method::ALL.len());
}

#[test]
fn report_covers_every_method_and_ours_beats_bicubic() {
    let model = small_model();
    let cfg = model.default_config();
    let tests = vec![("a".to_string(), synthetic_scene(96, 96, 11))];
    let report = bench_run(&tests, &model, &cfg, &BenchOptions::default()).unwrap();
    for m in Method::ALL {
        assert_eq!(report.rows_for(m).count(), 1);
    }
    let s = report.summary();
    assert!(s.mean_mse_of(Method::Ours) < s.mean_mse_of(Method::Bicubic));
    assert!(report.rows_for(Method::Ours).all(|r| r.similarity_ops > 0));
}
