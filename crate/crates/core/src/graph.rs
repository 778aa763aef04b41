//! Typed multigraphs, the relation dissimilarity prior, node labels, and
//! their on-disk formats.
//!
//! Graph files are JSON:
//!
//! ```json
//! {"num_nodes": 2, "num_relations": 1,
//!  "features": [[1.0], [0.5]],
//!  "edges": [[0, 1, 0]],
//!  "labels": [0, 1], "mask": [0, 1]}
//! ```
//!
//! `labels` and `mask` are optional. Edges are directed `[source, target,
//! relation]` triples; messages flow from source to target.
//!
//! The prior is a headerless CSV of `|R|` rows with `|R|` numbers each.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub relation: RelationId,
}

impl Edge {
    pub fn new(source: NodeId, target: NodeId, relation: RelationId) -> Self {
        Edge {
            source,
            target,
            relation,
        }
    }
}

/// Directed multigraph with node features and one relation id per edge.
///
/// Parallel edges are allowed as long as they are distinct records; edges
/// from a node to itself are not, since the self contribution is carried by
/// the layer's own self kernel.
#[derive(Clone, Debug)]
pub struct TypedGraph {
    num_nodes: usize,
    num_relations: usize,
    features: Tensor,
    edges: Vec<Edge>,
    // in_sources[v][r] lists u for every edge (u, v, r), in edge-list order.
    in_sources: Vec<Vec<Vec<NodeId>>>,
}

impl PartialEq for TypedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.num_nodes == other.num_nodes
            && self.num_relations == other.num_relations
            && self.features == other.features
            && self.edges == other.edges
    }
}

impl TypedGraph {
    pub fn new(
        num_nodes: usize,
        num_relations: usize,
        features: Tensor,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        if features.rank() != 2 || features.rows() != num_nodes {
            return Err(Error::Validation(format!(
                "feature matrix has shape {:?}, expected {} rows",
                features.shape(),
                num_nodes
            )));
        }
        if !features.all_finite() {
            return Err(Error::Validation(
                "node features contain non-finite values".into(),
            ));
        }
        for (i, e) in edges.iter().enumerate() {
            if e.source >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge {i}: source {} out of range for {num_nodes} nodes",
                    e.source
                )));
            }
            if e.target >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge {i}: target {} out of range for {num_nodes} nodes",
                    e.target
                )));
            }
            if e.relation >= num_relations {
                return Err(Error::Validation(format!(
                    "edge {i}: relation {} out of range for {num_relations} relations",
                    e.relation
                )));
            }
            if e.source == e.target {
                return Err(Error::Validation(format!(
                    "edge {i}: self-loop on node {}",
                    e.source
                )));
            }
        }

        let mut in_sources = vec![vec![Vec::new(); num_relations]; num_nodes];
        for e in &edges {
            in_sources[e.target][e.relation].push(e.source);
        }
        Ok(TypedGraph {
            num_nodes,
            num_relations,
            features,
            edges,
            in_sources,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sources of every edge `(u, v, r)`, in edge-list order.
    pub fn neighbors_by_relation(&self, v: NodeId, r: RelationId) -> Result<&[NodeId]> {
        if v >= self.num_nodes {
            return Err(Error::Argument(format!(
                "node {v} out of range for {} nodes",
                self.num_nodes
            )));
        }
        if r >= self.num_relations {
            return Err(Error::Argument(format!(
                "relation {r} out of range for {} relations",
                self.num_relations
            )));
        }
        Ok(&self.in_sources[v][r])
    }

    /// Same graph with edge `index` retyped to `relation`.
    pub fn with_edge_relation(&self, index: usize, relation: RelationId) -> Result<TypedGraph> {
        if index >= self.edges.len() {
            return Err(Error::Argument(format!("edge {index} out of range")));
        }
        let mut edges = self.edges.clone();
        edges[index].relation = relation;
        TypedGraph::new(
            self.num_nodes,
            self.num_relations,
            self.features.clone(),
            edges,
        )
    }

    /// Same graph with `features` replacing the node features.
    pub fn with_features(&self, features: Tensor) -> Result<TypedGraph> {
        TypedGraph::new(
            self.num_nodes,
            self.num_relations,
            features,
            self.edges.clone(),
        )
    }

    /// Dense `n x n` aggregation operator for relation `r`: entry `(v, u)`
    /// counts the edges `(u, v, r)`. With `mean` set, each row is divided by
    /// its in-degree under `r`.
    pub fn relation_operator(&self, r: RelationId, mean: bool) -> Tensor {
        let n = self.num_nodes;
        let mut op = Tensor::zeros(&[n, n]);
        let data = op.data_mut();
        for v in 0..n {
            let sources = &self.in_sources[v][r];
            let w = if mean && !sources.is_empty() {
                1.0 / sources.len() as f64
            } else {
                1.0
            };
            for &u in sources {
                data[v * n + u] += w;
            }
        }
        op
    }
}

/// Symmetric, nonnegative, zero-diagonal dissimilarity between relations.
/// Zero means the two relations should carry identical messages.
#[derive(Clone, Debug, PartialEq)]
pub struct IsostericityMatrix {
    values: Tensor,
}

/// Largest asymmetry tolerated when reading a matrix from a file.
pub const ISO_SYMMETRY_TOLERANCE: f64 = 1e-9;

impl IsostericityMatrix {
    /// Validates an exactly symmetric matrix.
    pub fn new(values: Tensor) -> Result<Self> {
        Self::with_tolerance(values, 0.0)
    }

    /// Accepts asymmetry up to `tol` and stores the symmetrized average.
    pub fn with_tolerance(values: Tensor, tol: f64) -> Result<Self> {
        if values.rank() != 2 || values.rows() != values.cols() {
            return Err(Error::Validation(format!(
                "isostericity matrix must be square, got {:?}",
                values.shape()
            )));
        }
        let n = values.rows();
        let mut sym = values.clone();
        for i in 0..n {
            for j in 0..n {
                let x = values.get(i, j);
                if !x.is_finite() {
                    return Err(Error::Validation(format!("entry ({i}, {j}) is not finite")));
                }
                if x < 0.0 {
                    return Err(Error::Validation(format!(
                        "entry ({i}, {j}) = {x} is negative"
                    )));
                }
                if i == j && x != 0.0 {
                    return Err(Error::Validation(format!(
                        "diagonal entry ({i}, {i}) = {x} is not zero"
                    )));
                }
                let y = values.get(j, i);
                if (x - y).abs() > tol {
                    return Err(Error::Validation(format!(
                        "asymmetric entries ({i}, {j}) = {x} and ({j}, {i}) = {y}"
                    )));
                }
                if i < j {
                    let avg = 0.5 * (x + y);
                    sym.data_mut()[i * n + j] = avg;
                    sym.data_mut()[j * n + i] = avg;
                }
            }
        }
        Ok(IsostericityMatrix { values: sym })
    }

    pub fn num_relations(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, a: RelationId, b: RelationId) -> f64 {
        self.values.get(a, b)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Divides every entry by the largest one. An all-zero matrix is
    /// returned unchanged.
    pub fn normalized(&self) -> IsostericityMatrix {
        let max = self.values.data().iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            IsostericityMatrix {
                values: self.values.map(|v| v / max),
            }
        } else {
            self.clone()
        }
    }
}

/// Binary node labels and the subset of nodes a loss or metric looks at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeLabelSet {
    labels: Vec<u8>,
    mask: Vec<NodeId>,
}

impl NodeLabelSet {
    pub fn new(labels: Vec<u8>, mask: Vec<NodeId>) -> Result<Self> {
        if let Some(bad) = labels.iter().position(|l| *l > 1) {
            return Err(Error::Validation(format!(
                "label of node {bad} is {}, expected 0 or 1",
                labels[bad]
            )));
        }
        let mut seen = vec![false; labels.len()];
        for &m in &mask {
            if m >= labels.len() {
                return Err(Error::Validation(format!(
                    "mask node {m} out of range for {} labels",
                    labels.len()
                )));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::Validation(format!("mask lists node {m} twice")));
            }
        }
        Ok(NodeLabelSet { labels, mask })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn mask(&self) -> &[NodeId] {
        &self.mask
    }

    /// Same labels restricted to a different node subset.
    pub fn with_mask(&self, mask: Vec<NodeId>) -> Result<NodeLabelSet> {
        NodeLabelSet::new(self.labels.clone(), mask)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    num_nodes: usize,
    num_relations: usize,
    features: Vec<Vec<f64>>,
    edges: Vec<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<NodeId>>,
}

fn graph_from_document(doc: GraphDocument) -> Result<(TypedGraph, Option<NodeLabelSet>)> {
    if doc.features.len() != doc.num_nodes {
        return Err(Error::Validation(format!(
            "features list {} rows for {} nodes",
            doc.features.len(),
            doc.num_nodes
        )));
    }
    let d_in = doc.features.first().map_or(0, Vec::len);
    if let Some(bad) = doc.features.iter().position(|f| f.len() != d_in) {
        return Err(Error::Validation(format!(
            "node {bad} has {} features, expected {d_in}",
            doc.features[bad].len()
        )));
    }
    let features = Tensor::matrix(doc.num_nodes, d_in, doc.features.concat())?;
    let edges = doc
        .edges
        .iter()
        .map(|[s, t, r]| Edge::new(*s, *t, *r))
        .collect();
    let graph = TypedGraph::new(doc.num_nodes, doc.num_relations, features, edges)?;

    let labels = match (doc.labels, doc.mask) {
        (Some(labels), mask) => {
            if labels.len() != doc.num_nodes {
                return Err(Error::Validation(format!(
                    "{} labels for {} nodes",
                    labels.len(),
                    doc.num_nodes
                )));
            }
            let mask = mask.unwrap_or_else(|| (0..doc.num_nodes).collect());
            Some(NodeLabelSet::new(labels, mask)?)
        }
        (None, Some(_)) => {
            return Err(Error::Validation("mask given without labels".into()));
        }
        (None, None) => None,
    };
    Ok((graph, labels))
}

/// Reads a graph file, returning the graph and its labels when present.
pub fn load_labeled_graph(path: impl AsRef<Path>) -> Result<(TypedGraph, Option<NodeLabelSet>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: GraphDocument = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    graph_from_document(doc)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<TypedGraph> {
    load_labeled_graph(path).map(|(g, _)| g)
}

pub fn graph_to_json(graph: &TypedGraph, labels: Option<&NodeLabelSet>) -> Result<String> {
    let doc = GraphDocument {
        num_nodes: graph.num_nodes,
        num_relations: graph.num_relations,
        features: (0..graph.num_nodes)
            .map(|i| graph.features.row(i).to_vec())
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| [e.source, e.target, e.relation])
            .collect(),
        labels: labels.map(|l| l.labels.clone()),
        mask: labels.map(|l| l.mask.clone()),
    };
    serde_json::to_string(&doc).map_err(|e| Error::Numeric(e.to_string()))
}

pub fn save_graph(
    path: impl AsRef<Path>,
    graph: &TypedGraph,
    labels: Option<&NodeLabelSet>,
) -> Result<()> {
    let path = path.as_ref();
    let mut text = graph_to_json(graph, labels)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a headerless CSV prior, optionally rescaling it to a maximum of 1.
pub fn load_iso_matrix(path: impl AsRef<Path>, normalize: bool) -> Result<IsostericityMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|e| {
                    Error::parse(path, format!("row {line}, column {col}: {field:?}: {e}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.iter().any(|r| r.len() != rows.len()) {
        return Err(Error::parse(
            path,
            format!(
                "expected a square table with {} columns per row",
                rows.len()
            ),
        ));
    }
    let values = Tensor::from_rows(&rows).map_err(|e| Error::parse(path, e))?;
    let iso = IsostericityMatrix::with_tolerance(values, ISO_SYMMETRY_TOLERANCE)?;
    Ok(if normalize { iso.normalized() } else { iso })
}

pub fn save_iso_matrix(path: impl AsRef<Path>, iso: &IsostericityMatrix) -> Result<()> {
    let path = path.as_ref();
    let n = iso.num_relations();
    let mut text = String::new();
    for i in 0..n {
        let line: Vec<String> = iso.values.row(i).iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_node_graph() -> TypedGraph {
        TypedGraph::new(
            2,
            1,
            Tensor::from_rows(&[vec![1.0], vec![0.5]]).unwrap(),
            vec![Edge::new(0, 1, 0)],
        )
        .unwrap()
    }

    #[test]
    fn loads_two_node_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        fs::write(
            &path,
            r#"{"num_nodes": 2, "num_relations": 1, "features": [[1.0], [0.5]], "edges": [[0, 1, 0]]}"#,
        )
        .unwrap();
        let g = load_graph(&path).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g, two_node_graph());
    }

    #[test]
    fn dangling_target_names_the_edge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        fs::write(
            &path,
            r#"{"num_nodes": 2, "num_relations": 1, "features": [[1.0], [0.5]], "edges": [[1, 0, 0], [0, 2, 0]]}"#,
        )
        .unwrap();
        let err = load_graph(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("edge 1"), "{err}");
    }

    #[test]
    fn rejects_bad_relation_self_loop_and_malformed_json() {
        let f = Tensor::zeros(&[3, 1]);
        assert!(TypedGraph::new(3, 2, f.clone(), vec![Edge::new(0, 1, 2)]).is_err());
        assert!(TypedGraph::new(3, 2, f.clone(), vec![Edge::new(1, 1, 0)]).is_err());
        assert!(TypedGraph::new(2, 2, f, vec![]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        fs::write(&path, "{\"num_nodes\": 2,").unwrap();
        assert!(matches!(load_graph(&path), Err(Error::Parse { .. })));
        assert!(matches!(
            load_graph(dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn labels_and_mask_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        fs::write(
            &path,
            r#"{"num_nodes": 2, "num_relations": 1, "features": [[1.0], [0.5]], "edges": [], "labels": [0, 2]}"#,
        )
        .unwrap();
        assert!(load_labeled_graph(&path).is_err());
        fs::write(
            &path,
            r#"{"num_nodes": 2, "num_relations": 1, "features": [[1.0], [0.5]], "edges": [], "labels": [0, 1], "mask": [1, 5]}"#,
        )
        .unwrap();
        assert!(load_labeled_graph(&path).is_err());
    }

    #[test]
    fn parallel_edges_with_distinct_relations_are_allowed() {
        let g = TypedGraph::new(
            2,
            2,
            Tensor::zeros(&[2, 1]),
            vec![Edge::new(0, 1, 0), Edge::new(0, 1, 1)],
        )
        .unwrap();
        assert_eq!(g.neighbors_by_relation(1, 0).unwrap(), &[0]);
        assert_eq!(g.neighbors_by_relation(1, 1).unwrap(), &[0]);
    }

    #[test]
    fn neighbors_examples() {
        let g = two_node_graph();
        assert_eq!(g.neighbors_by_relation(1, 0).unwrap(), &[0]);
        assert!(g.neighbors_by_relation(0, 0).unwrap().is_empty());
        assert!(matches!(
            g.neighbors_by_relation(2, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            g.neighbors_by_relation(0, 1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn iso_examples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iso.csv");

        fs::write(&path, "0,0,0\n0,0,0\n0,0,0\n").unwrap();
        let zeros = load_iso_matrix(&path, true).unwrap();
        assert_eq!(zeros.num_relations(), 3);
        assert_eq!(zeros.values(), &Tensor::zeros(&[3, 3]));

        fs::write(&path, "0,1\n1,0\n").unwrap();
        let two = load_iso_matrix(&path, false).unwrap();
        assert_eq!(two.get(0, 1), 1.0);

        fs::write(&path, "0,1\n2,0\n").unwrap();
        let err = load_iso_matrix(&path, false).unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");

        fs::write(&path, "0,-1\n-1,0\n").unwrap();
        assert!(matches!(
            load_iso_matrix(&path, false),
            Err(Error::Validation(_))
        ));

        fs::write(&path, "0.5,1\n1,0\n").unwrap();
        assert!(matches!(
            load_iso_matrix(&path, false),
            Err(Error::Validation(_))
        ));

        fs::write(&path, "0,1,2\n1,0\n").unwrap();
        assert!(load_iso_matrix(&path, false).is_err());

        fs::write(&path, "0,x\nx,0\n").unwrap();
        assert!(matches!(
            load_iso_matrix(&path, false),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn iso_small_asymmetry_is_symmetrized_and_normalization_scales() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iso.csv");
        fs::write(&path, "0,4,2\n4.0000000001,0,1\n2,1,0\n").unwrap();
        let iso = load_iso_matrix(&path, false).unwrap();
        assert_eq!(iso.get(0, 1), iso.get(1, 0));
        let norm = load_iso_matrix(&path, true).unwrap();
        assert_eq!(norm.get(0, 2), 2.0 / iso.get(0, 1));
        assert!((norm.get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn iso_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iso.csv");
        let iso = IsostericityMatrix::new(
            Tensor::from_rows(&[
                vec![0.0, 0.1, 0.7],
                vec![0.1, 0.0, 1.0 / 3.0],
                vec![0.7, 1.0 / 3.0, 0.0],
            ])
            .unwrap(),
        )
        .unwrap();
        save_iso_matrix(&path, &iso).unwrap();
        assert_eq!(load_iso_matrix(&path, false).unwrap(), iso);
    }

    fn random_graph() -> impl Strategy<Value = TypedGraph> {
        (2usize..9, 1usize..4).prop_flat_map(|(n, r)| {
            let edge = (0..n, 0..n - 1, 0..r).prop_map(move |(s, t, rel)| {
                // Skip over `s` so the target never equals the source.
                let t = if t >= s { t + 1 } else { t };
                Edge::new(s, t, rel)
            });
            (
                proptest::collection::vec(edge, 0..30),
                proptest::collection::vec(-1.0f64..1.0, n * 2),
            )
                .prop_map(move |(edges, f)| {
                    TypedGraph::new(n, r, Tensor::matrix(n, 2, f).unwrap(), edges).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn neighbors_agree_with_edge_scan(g in random_graph()) {
            for v in 0..g.num_nodes() {
                let mut union = Vec::new();
                for r in 0..g.num_relations() {
                    let scan: Vec<NodeId> = g
                        .edges()
                        .iter()
                        .filter(|e| e.target == v && e.relation == r)
                        .map(|e| e.source)
                        .collect();
                    let got = g.neighbors_by_relation(v, r).unwrap();
                    prop_assert_eq!(got, scan.as_slice());
                    union.extend_from_slice(got);
                }
                let mut all_in: Vec<NodeId> = g.edges().iter().filter(|e| e.target == v).map(|e| e.source).collect();
                union.sort_unstable();
                all_in.sort_unstable();
                prop_assert_eq!(union, all_in);
            }
        }

        #[test]
        fn save_then_load_is_identity(g in random_graph()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("g.json");
            let labels = NodeLabelSet::new(
                (0..g.num_nodes()).map(|i| (i % 2) as u8).collect(),
                (0..g.num_nodes()).rev().collect(),
            ).unwrap();
            save_graph(&path, &g, Some(&labels)).unwrap();
            let (back, back_labels) = load_labeled_graph(&path).unwrap();
            prop_assert_eq!(back, g);
            prop_assert_eq!(back_labels, Some(labels));
        }
    }
}
