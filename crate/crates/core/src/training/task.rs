use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    load_iso_matrix, load_labeled_graph, save_graph, save_iso_matrix, Edge, IsostericityMatrix,
    NodeId, NodeLabelSet, TypedGraph,
};
use crate::tensor::Tensor;

pub const GRAPH_FILE: &str = "graph.json";
pub const ISO_FILE: &str = "iso.csv";
pub const SPLITS_FILE: &str = "splits.json";
pub const EMBEDDING_FILE: &str = "embedding.csv";

pub const DEFAULT_NODES: usize = 200;
pub const DEFAULT_RELATIONS: usize = 6;
pub const DEFAULT_EMBEDDING_DIM: usize = 4;
pub const DEFAULT_DENSITY: f64 = 0.025;
pub const BALANCE_RANGE: (f64, f64) = (0.45, 0.55);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<NodeId>,
    pub validation: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

/// A labelled graph with its relation prior and node splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub graph: TypedGraph,
    pub labels: Vec<u8>,
    pub splits: Splits,
    pub iso: IsostericityMatrix,
}

impl Task {
    pub fn new(
        graph: TypedGraph,
        labels: Vec<u8>,
        splits: Splits,
        iso: IsostericityMatrix,
    ) -> Result<Self> {
        if labels.len() != graph.num_nodes() {
            return Err(Error::Validation(format!(
                "{} labels for {} nodes",
                labels.len(),
                graph.num_nodes()
            )));
        }
        if iso.num_relations() != graph.num_relations() {
            return Err(Error::Validation(format!(
                "prior covers {} relations, graph has {}",
                iso.num_relations(),
                graph.num_relations()
            )));
        }
        for mask in [&splits.train, &splits.validation, &splits.test] {
            NodeLabelSet::new(labels.clone(), mask.clone())?;
        }
        if splits.train.is_empty() {
            return Err(Error::Validation("training split is empty".into()));
        }
        Ok(Task {
            graph,
            labels,
            splits,
            iso,
        })
    }

    pub fn label_set(&self, mask: &[NodeId]) -> Result<NodeLabelSet> {
        NodeLabelSet::new(self.labels.clone(), mask.to_vec())
    }

    /// Share of the majority class within `mask`.
    pub fn majority_rate(&self, mask: &[NodeId]) -> f64 {
        let pos = mask.iter().filter(|&&i| self.labels[i] == 1).count();
        pos.max(mask.len() - pos) as f64 / mask.len().max(1) as f64
    }
}

/// A generated task together with the relation embedding behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub task: Task,
    /// `|R| x K`; pairwise row distances equal the prior.
    pub embedding: Tensor,
}

/// Pairwise Euclidean distances between rows.
pub fn distance_matrix(points: &Tensor) -> Result<IsostericityMatrix> {
    let n = points.rows();
    let mut d = Tensor::zeros(&[n, n]);
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let dist = points
                    .row(a)
                    .iter()
                    .zip(points.row(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                d.data_mut()[a * n + b] = dist;
            }
        }
    }
    IsostericityMatrix::new(d)
}

/// Draws a node-classification task whose labels depend on the relation
/// embedding `z`.
///
/// Each relation gets `z_r ~ N(0, I_K)`, rescaled so the largest pairwise
/// distance is 1; the prior is the distance matrix of the rescaled points.
/// Every ordered pair of distinct nodes gets an edge with probability
/// `density` and a uniform relation. A node is positive when the sum of
/// `⟨z_r, w*⟩` over its in-edges exceeds the median. Every node carries the
/// single feature 1, so labels are a function of graph structure alone.
pub fn gen_synthetic_task(
    num_nodes: usize,
    num_relations: usize,
    dim: usize,
    density: f64,
    seed: u64,
) -> Result<SyntheticTask> {
    if num_relations < 2 {
        return Err(Error::Config("at least two relations are required".into()));
    }
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    if num_nodes < 5 {
        return Err(Error::Config(
            "at least five nodes are required for the splits".into(),
        ));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Config(format!(
            "edge density must lie in [0, 1], got {density}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..num_relations * dim)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let raw = Tensor::from_parts(vec![num_relations, dim], raw);
    let max = distance_matrix(&raw)?
        .values()
        .data()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate(
            "relation embedding collapsed to a point".into(),
        ));
    }
    let embedding = raw.scale(1.0 / max);
    let iso = distance_matrix(&embedding)?;

    let direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let relation_score: Vec<f64> = (0..num_relations)
        .map(|r| {
            embedding
                .row(r)
                .iter()
                .zip(&direction)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();

    let mut edges = Vec::new();
    for source in 0..num_nodes {
        for target in 0..num_nodes {
            if source != target && rng.random::<f64>() < density {
                edges.push(Edge::new(
                    source,
                    target,
                    rng.random_range(0..num_relations),
                ));
            }
        }
    }

    let features = Tensor::filled(&[num_nodes, 1], 1.0);

    let mut stat = vec![0.0; num_nodes];
    for e in &edges {
        stat[e.target] += relation_score[e.relation];
    }
    if stat.iter().all(|&s| s == stat[0]) {
        return Err(Error::Degenerate(
            "label statistic is constant across nodes".into(),
        ));
    }
    let mut sorted = stat.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if num_nodes % 2 == 1 {
        sorted[num_nodes / 2]
    } else {
        (sorted[num_nodes / 2 - 1] + sorted[num_nodes / 2]) / 2.0
    };
    let labels: Vec<u8> = stat.iter().map(|&s| u8::from(s > median)).collect();
    let balance = labels.iter().filter(|&&y| y == 1).count() as f64 / num_nodes as f64;
    if !(BALANCE_RANGE.0..=BALANCE_RANGE.1).contains(&balance) {
        return Err(Error::Degenerate(format!(
            "ties at the median leave a positive rate of {balance:.3}"
        )));
    }

    let mut order: Vec<NodeId> = (0..num_nodes).collect();
    order.shuffle(&mut rng);
    let n_train = (num_nodes as f64 * 0.6).round() as usize;
    let n_val = (num_nodes as f64 * 0.2).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();

    let graph = TypedGraph::new(num_nodes, num_relations, features, edges)?;
    let task = Task::new(
        graph,
        labels,
        Splits {
            train,
            validation,
            test,
        },
        iso,
    )?;
    Ok(SyntheticTask { task, embedding })
}

fn write_csv(path: &Path, t: &Tensor) -> Result<()> {
    let mut text = String::new();
    for i in 0..t.rows() {
        let row: Vec<String> = t.row(i).iter().map(|v| v.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the graph (labels, training mask), prior, splits and, when
/// known, the relation embedding into `dir`.
pub fn save_task(dir: impl AsRef<Path>, task: &Task, embedding: Option<&Tensor>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_graph(
        dir.join(GRAPH_FILE),
        &task.graph,
        Some(&task.label_set(&task.splits.train)?),
    )?;
    save_iso_matrix(dir.join(ISO_FILE), &task.iso)?;
    let splits =
        serde_json::to_string(&task.splits).map_err(|e| Error::Numeric(e.to_string()))? + "\n";
    let path = dir.join(SPLITS_FILE);
    fs::write(&path, splits).map_err(|e| Error::io(&path, e))?;
    if let Some(z) = embedding {
        write_csv(&dir.join(EMBEDDING_FILE), z)?;
    }
    Ok(())
}

/// Reads a task directory written by [`save_task`].
pub fn load_task(dir: impl AsRef<Path>, normalize_iso: bool) -> Result<Task> {
    let dir = dir.as_ref();
    let graph_path = dir.join(GRAPH_FILE);
    let (graph, labels) = load_labeled_graph(&graph_path)?;
    let labels = labels.ok_or_else(|| Error::parse(&graph_path, "graph has no labels"))?;
    let iso = load_iso_matrix(dir.join(ISO_FILE), normalize_iso)?;
    let path = dir.join(SPLITS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let splits: Splits = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
    Task::new(graph, labels.labels().to_vec(), splits, iso)
}
