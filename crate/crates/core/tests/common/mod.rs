#![allow(dead_code)]

use isogcn::graph::{Edge, TypedGraph};
use isogcn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// A graph with `edges` random typed edges (no self-loops) and features
/// uniform in [-1, 1].
pub fn random_graph(
    rng: &mut impl Rng,
    n: usize,
    relations: usize,
    d_in: usize,
    edges: usize,
) -> TypedGraph {
    let features = random_tensor(rng, n, d_in);
    let edges = (0..edges)
        .map(|_| {
            let s = rng.random_range(0..n);
            let t = (s + rng.random_range(1..n)) % n;
            Edge::new(s, t, rng.random_range(0..relations))
        })
        .collect();
    TypedGraph::new(n, relations, features, edges).unwrap()
}
