use chebgibbs::data::{
    load_dataset, load_dataset_dir, planetoid_split, random_split, save_dataset_dir, sbm_generate, SbmConfig,
    EDGES_FILE, FEATURES_FILE, LABELS_FILE,
};
use chebgibbs::graph::node_homophily;
use chebgibbs::Error;

fn config(seed: u64) -> SbmConfig {
    SbmConfig { n: 120, classes: 3, p_in: 0.1, p_out: 0.02, feature_dim: 5, feature_noise: 0.7, seed }
}

#[test]
fn save_then_load_is_value_exact() {
    let ds = random_split(&sbm_generate(&config(3)).unwrap(), (0.6, 0.2, 0.2), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset_dir(&ds, dir.path()).unwrap();
    let back = load_dataset_dir(dir.path()).unwrap();
    assert_eq!(back.graph, ds.graph);
    assert_eq!(back.features, ds.features);
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.splits, ds.splits);
    let again_dir = tempfile::tempdir().unwrap();
    save_dataset_dir(&back, again_dir.path()).unwrap();
    let again = load_dataset_dir(again_dir.path()).unwrap();
    assert_eq!(again.features, back.features);
}

#[test]
fn mismatched_files_are_reported() {
    let ds = sbm_generate(&config(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset_dir(&ds, dir.path()).unwrap();
    let labels = dir.path().join(LABELS_FILE);
    let text = std::fs::read_to_string(&labels).unwrap();
    let fewer: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&labels, fewer).unwrap();
    let err = load_dataset(&dir.path().join(EDGES_FILE), &dir.path().join(FEATURES_FILE), &labels).unwrap_err();
    assert!(err.to_string().contains(LABELS_FILE), "{err}");
    assert!(matches!(
        load_dataset_dir(&dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn splits_are_disjoint_for_every_generator() {
    let ds = sbm_generate(&config(5)).unwrap();
    for seed in 0..20 {
        for split in [random_split(&ds, (0.6, 0.2, 0.2), seed).unwrap(), planetoid_split(&ds, 10, 30, 50, seed).unwrap()]
        {
            let s = split.splits.as_ref().unwrap();
            s.validate(ds.n()).unwrap();
            assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
        }
    }
}

#[test]
fn sbm_homophily_matches_expectation() {
    let cfg = SbmConfig { n: 300, classes: 3, p_in: 0.06, p_out: 0.015, feature_dim: 3, feature_noise: 1.0, seed: 0 };
    let samples: Vec<f64> = (0..50)
        .map(|seed| {
            let ds = sbm_generate(&SbmConfig { seed, ..cfg }).unwrap();
            node_homophily(&ds.graph, &ds.labels, None).unwrap().h
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expected = cfg.expected_homophily();
    // Node homophily averages per-node ratios, which is biased relative to
    // the edge-count ratio by low-degree nodes; 3σ of the sample spread
    // absorbs it at these densities.
    assert!((mean - expected).abs() <= 3.0 * sd, "mean {mean}, expected {expected}, sd {sd}");
}
