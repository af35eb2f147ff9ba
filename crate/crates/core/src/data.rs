//! Dataset files, train/validation/test splits and a stochastic block model
//! generator for desk-scale experiments.
//!
//! A dataset directory holds `edges.txt` (one `u v` pair per line),
//! `features.csv` (one comma-separated row per node), `labels.txt` (one
//! integer per line) and optionally `split.json`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLIT_FILE: &str = "split.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Checks ranges and pairwise disjointness.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut owner = vec![None; n];
        for (name, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in idx {
                if i >= n {
                    return Err(Error::Dataset(format!("{name} index {i} out of range for {n} nodes")));
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(Error::Dataset(format!("node {i} is in both {prev} and {name}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub splits: Option<Splits>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn splits(&self) -> Result<&Splits> {
        self.splits.as_ref().ok_or_else(|| Error::Dataset(format!("dataset {:?} has no split", self.name)))
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        splits.validate(self.n())?;
        self.splits = Some(splits);
        Ok(self)
    }

    fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let mut by = vec![Vec::new(); self.num_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            by[y].push(i);
        }
        by
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_features(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("non-numeric cell {:?}", cell.trim()),
            })?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("row has {width} columns, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::Dataset(e.to_string()))
}

fn parse_labels(text: &str, path: &Path) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("label {:?} is not a non-negative integer", l.trim()),
            })
        })
        .collect()
}

/// Reads the three dataset files. Edges are symmetrized and deduplicated;
/// the node count comes from the feature rows.
pub fn load_dataset(edge_file: &Path, feature_file: &Path, label_file: &Path) -> Result<Dataset> {
    let features = parse_features(&read(feature_file)?, feature_file)?;
    let labels = parse_labels(&read(label_file)?, label_file)?;
    if features.nrows() != labels.len() {
        return Err(Error::Dataset(format!(
            "{} has {} rows but {} has {} labels",
            feature_file.display(),
            features.nrows(),
            label_file.display(),
            labels.len()
        )));
    }
    let pairs = Graph::read_edge_file(edge_file)?;
    let (graph, _) = build_graph(labels.len(), &pairs).map_err(|e| match e {
        Error::IndexOutOfRange { u, v, n } => Error::Dataset(format!(
            "{}: edge ({u}, {v}) references a node beyond the {n} rows of {}",
            edge_file.display(),
            feature_file.display()
        )),
        other => other,
    })?;
    let name = feature_file
        .parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset { name, graph, features, labels, splits: None })
}

/// Loads a dataset directory, including `split.json` when present.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let mut ds = load_dataset(&dir.join(EDGES_FILE), &dir.join(FEATURES_FILE), &dir.join(LABELS_FILE))?;
    let split_path = dir.join(SPLIT_FILE);
    if split_path.exists() {
        let splits: Splits = serde_json::from_str(&read(&split_path)?)?;
        ds = ds.with_splits(splits)?;
    }
    Ok(ds)
}

fn write(path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes a dataset directory. Floats use the shortest representation that
/// parses back to the same value.
pub fn save_dataset_dir(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir.join(EDGES_FILE), ds.graph.to_edge_list_string())?;
    let mut feats = String::new();
    for row in ds.features.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        feats.push_str(&cells.join(","));
        feats.push('\n');
    }
    write(dir.join(FEATURES_FILE), feats)?;
    write(dir.join(LABELS_FILE), ds.labels.iter().map(|y| format!("{y}\n")).collect())?;
    if let Some(s) = &ds.splits {
        write(dir.join(SPLIT_FILE), serde_json::to_string(s)?)?;
    }
    Ok(())
}

/// Per-class stratified split. Leftovers from rounding go to test.
pub fn random_split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split fractions must be positive and sum to 1, got {fractions:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Splits::default();
    for (class, mut nodes) in ds.nodes_by_class().into_iter().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        if nodes.len() < 3 {
            return Err(Error::ClassTooSmall { class, count: nodes.len() });
        }
        nodes.shuffle(&mut rng);
        let n = nodes.len() as f64;
        let n_train = ((tr * n + 1e-9).floor() as usize).max(1);
        let n_val = ((va * n + 1e-9).floor() as usize).max(1);
        splits.train.extend_from_slice(&nodes[..n_train]);
        splits.val.extend_from_slice(&nodes[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&nodes[n_train + n_val..]);
    }
    finish(ds, splits)
}

/// Fixed-size semi-supervised split: `per_class_train` nodes of every class
/// for training, then `val_size` and `test_size` nodes drawn from the rest.
pub fn planetoid_split(
    ds: &Dataset,
    per_class_train: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<Dataset> {
    if per_class_train == 0 {
        return Err(Error::param("per-class training count must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Splits::default();
    let mut rest = Vec::new();
    for (class, mut nodes) in ds.nodes_by_class().into_iter().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        if nodes.len() < per_class_train {
            return Err(Error::param(format!(
                "class {class} has {} nodes, cannot take {per_class_train} for training",
                nodes.len()
            )));
        }
        nodes.shuffle(&mut rng);
        splits.train.extend_from_slice(&nodes[..per_class_train]);
        rest.extend_from_slice(&nodes[per_class_train..]);
    }
    if rest.len() < val_size + test_size {
        return Err(Error::param(format!(
            "only {} nodes remain for {val_size} validation + {test_size} test",
            rest.len()
        )));
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    splits.val = rest[..val_size].to_vec();
    splits.test = rest[val_size..val_size + test_size].to_vec();
    finish(ds, splits)
}

fn finish(ds: &Dataset, mut splits: Splits) -> Result<Dataset> {
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    ds.clone().with_splits(splits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl SbmConfig {
    /// Expected node homophily `p_in (m - 1) / (p_in (m - 1) + p_out (n - m))`
    /// with `m = n / classes` nodes per block.
    pub fn expected_homophily(&self) -> f64 {
        let m = (self.n / self.classes) as f64;
        let same = self.p_in * (m - 1.0);
        let other = self.p_out * (self.n as f64 - m);
        same / (same + other)
    }
}

/// Stochastic block model with equal blocks (node `i` is in block
/// `i / (n / classes)`), features `e_class + N(0, σ²)`.
pub fn sbm_generate(cfg: &SbmConfig) -> Result<Dataset> {
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if cfg.classes == 0 || !cfg.n.is_multiple_of(cfg.classes) {
        return Err(Error::param(format!("n = {} is not divisible by {} classes", cfg.n, cfg.classes)));
    }
    if cfg.feature_dim < cfg.classes {
        return Err(Error::param("feature_dim must be at least the number of classes"));
    }
    if !(cfg.feature_noise >= 0.0) {
        return Err(Error::param("feature_noise must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let block = cfg.n / cfg.classes;
    let labels: Vec<usize> = (0..cfg.n).map(|i| i / block).collect();
    let mut edges = Vec::new();
    for u in 0..cfg.n {
        for v in (u + 1)..cfg.n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let (graph, _) = build_graph(cfg.n, &edges)?;
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::param(e.to_string()))?;
    let mut features = Array2::from_shape_simple_fn((cfg.n, cfg.feature_dim), || noise.sample(&mut rng));
    for (i, &y) in labels.iter().enumerate() {
        features[[i, y]] += 1.0;
    }
    Ok(Dataset { name: format!("sbm-{}-{}", cfg.n, cfg.classes), graph, features, labels, splits: None })
}
