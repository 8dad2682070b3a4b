use inhibited_softmax::datasets::idx::{write_idx_images, write_idx_labels};
use inhibited_softmax::experiments::{
    load_data, ood_csv, perf_csv, run_ablation_with_data, run_ood_experiment_with_data,
    run_predictive_performance_with_data, run_wrong_prediction_experiment_with_data, wrongpred_csv, DataKind,
    ExperimentConfig, ABLATION_METRICS,
};
use inhibited_softmax::metrics::accuracy;
use inhibited_softmax::network::train_ensemble;
use inhibited_softmax::uncertainty::normalised_probs;
use inhibited_softmax::Error;

fn small_blobs() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.per_class = 80;
    cfg.train.epochs = 15;
    cfg.mc_passes = 5;
    cfg.ensemble_members = 3;
    cfg
}

#[test]
fn ood_csv_has_a_row_per_method_and_seed_plus_means() {
    let cfg = small_blobs();
    let data = load_data(&cfg.data).unwrap();
    assert_eq!(data.train.len(), 3 * 80);
    let rows = run_ood_experiment_with_data(&cfg, &data).unwrap();
    assert_eq!(rows.len(), 5 * 3);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.roc_auc) && (0.0..=1.0).contains(&r.average_precision)));
    let csv = ood_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,seed,roc_auc,average_precision");
    assert_eq!(lines.len(), 1 + 15 + 5);
    for m in ["IS", "BASE", "BASEE", "MCD", "DE"] {
        assert_eq!(lines.iter().filter(|l| l.starts_with(&format!("{m},"))).count(), 4);
        assert_eq!(lines.iter().filter(|l| l.starts_with(&format!("{m},mean,"))).count(), 1);
    }
    // Seeds run in parallel but rows stay in seed order.
    let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    assert!(seeds.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn experiments_are_deterministic() {
    let cfg = small_blobs();
    let data = load_data(&cfg.data).unwrap();
    let a = ood_csv(&run_ood_experiment_with_data(&cfg, &data).unwrap());
    let b = ood_csv(&run_ood_experiment_with_data(&cfg, &load_data(&cfg.data).unwrap()).unwrap());
    assert_eq!(a, b);
    let p = perf_csv(&run_predictive_performance_with_data(&cfg, &data).unwrap());
    let q = perf_csv(&run_predictive_performance_with_data(&cfg, &data).unwrap());
    assert_eq!(p, q);
}

#[test]
fn identical_test_and_ood_sets_are_indistinguishable() {
    let mut cfg = small_blobs();
    cfg.data.ood_same_as_test = true;
    cfg.methods = vec!["is".into(), "base".into()];
    let rows = run_ood_experiment_with_data(&cfg, &load_data(&cfg.data).unwrap()).unwrap();
    for r in rows {
        assert!((r.roc_auc - 0.5).abs() <= 0.05, "{r:?}");
    }
}

#[test]
fn noisy_xor_mistakes_are_flagged_as_uncertain() {
    let mut cfg = ExperimentConfig::xor_default();
    cfg.data.noise_sd = 0.5;
    cfg.methods = vec!["is".into(), "base".into()];
    let rows = run_wrong_prediction_experiment_with_data(&cfg, &load_data(&cfg.data).unwrap()).unwrap();
    let csv = wrongpred_csv(&rows);
    assert!(csv.starts_with("method,seed,roc_auc,status\n"));
    for r in rows.iter().filter(|r| r.method == "IS") {
        assert_eq!(r.status, "ok");
        assert!(r.roc_auc.unwrap() > 0.5, "{r:?}");
    }
}

#[test]
fn clean_xor_reports_skipped_wrong_prediction_rows() {
    let mut cfg = ExperimentConfig::xor_default();
    cfg.seeds = vec![0];
    let rows = run_wrong_prediction_experiment_with_data(&cfg, &load_data(&cfg.data).unwrap()).unwrap();
    assert_eq!(rows[0].status, "skipped: all predictions correct");
    assert!(wrongpred_csv(&rows).ends_with("IS,mean,NA,skipped\n"));
}

#[test]
fn ensemble_is_at_least_as_accurate_as_its_members() {
    let cfg = small_blobs();
    let data = load_data(&cfg.data).unwrap();
    let (mut ens_total, mut member_total) = (0.0, 0.0);
    for seed in [0, 1, 2] {
        let nets = train_ensemble(&cfg.baseline_spec(), &data.train, &cfg.train_config(seed), 5).unwrap();
        let probs: Vec<_> = nets
            .iter()
            .map(|n| normalised_probs(n.network.predict(data.test.features()).unwrap()).unwrap())
            .collect();
        let mut mean = probs[0].clone();
        for p in &probs[1..] {
            mean = mean.add(p).unwrap();
        }
        ens_total += accuracy(&mean, data.test.labels()).unwrap();
        member_total += probs.iter().map(|p| accuracy(p, data.test.labels()).unwrap()).sum::<f64>() / 5.0;
    }
    assert!(ens_total >= member_total, "{ens_total} vs {member_total}");
}

#[test]
fn ablation_covers_every_variant() {
    let mut cfg = small_blobs();
    cfg.seeds = vec![0];
    let rows = run_ablation_with_data(&cfg, &load_data(&cfg.data).unwrap()).unwrap();
    assert_eq!(rows.len(), 11 * ABLATION_METRICS.len());
    assert!(rows.iter().any(|r| r.variant == "penultimate=relu"));
    assert!(rows.iter().any(|r| r.variant == "lambda=1e-2"));
}

#[test]
fn xor_has_no_ood_set() {
    let cfg = ExperimentConfig::xor_default();
    let data = load_data(&cfg.data).unwrap();
    assert!(matches!(run_ood_experiment_with_data(&cfg, &data), Err(Error::Data(_))));
}

#[test]
fn idx_files_drive_a_held_out_class_experiment() {
    let dir = tempfile::tempdir().unwrap();
    // 4x4 images; class k lights up column k.
    let make = |n: usize| {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let k = i % 4;
            for r in 0..4 {
                for c in 0..4 {
                    pixels.push(if c == k { 200 + (r * 10) as u8 } else { (i % 7) as u8 });
                }
            }
            labels.push(k as u8);
        }
        (pixels, labels)
    };
    let (tp, tl) = make(200);
    let (vp, vl) = make(80);
    write_idx_images(dir.path().join("train-images"), 4, 4, &tp).unwrap();
    write_idx_labels(dir.path().join("train-labels"), &tl).unwrap();
    write_idx_images(dir.path().join("test-images"), 4, 4, &vp).unwrap();
    write_idx_labels(dir.path().join("test-labels"), &vl).unwrap();

    let toml = r#"
        seeds = [0]
        methods = ["is", "base"]
        network.widths = [16, 20, 3]
        train.epochs = 10
        data.kind = "idx_holdout"
        data.held_out = [3]
        data.paths = ["train-images", "train-labels", "test-images", "test-labels"]
    "#;
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, toml).unwrap();
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg.data.kind, DataKind::IdxHoldout);
    let data = load_data(&cfg.data).unwrap();
    assert_eq!(data.train.len(), 150);
    assert_eq!(data.ood.as_ref().unwrap().rows(), 20);
    assert!(data.train.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    let rows = run_ood_experiment_with_data(&cfg, &data).unwrap();
    assert_eq!(rows.len(), 2);
}
