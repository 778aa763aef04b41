//! Task loss, edge-swap sampling and the attention-distance prior.
//!
//! The prior asks that the Euclidean distance between the attention vectors
//! of two relations match their dissimilarity:
//!
//! `L = Σ_{e∈S} (‖α_{r_e} − α_{σ(e)}‖ − Iso(r_e, σ(e)))²`
//!
//! where `S` is a random subset of edges and `σ(e)` a different relation
//! assigned to each. The scaled variant weights each term by
//! `w(e) = |S| ‖α_{r_e}‖ ‖α_{σ(e)}‖ / Σ_{i∈S} ‖α_{r_i}‖ ‖α_{σ(i)}‖`, so pairs
//! involving near-silent relations matter less. Gradients flow through the
//! weights as well as the residuals.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{IsostericityMatrix, NodeLabelSet, RelationId, TypedGraph};
use crate::layers::AttentionTable;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeSwap {
    pub edge: usize,
    pub original: RelationId,
    pub swapped: RelationId,
}

/// Edges picked for the prior, each with a replacement relation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeSwapSample {
    swaps: Vec<EdgeSwap>,
}

impl EdgeSwapSample {
    pub fn new(swaps: Vec<EdgeSwap>, num_relations: usize) -> Result<Self> {
        for (i, s) in swaps.iter().enumerate() {
            if s.original >= num_relations || s.swapped >= num_relations {
                return Err(Error::Validation(format!(
                    "swap {i}: relation out of range for {num_relations} relations"
                )));
            }
            if s.original == s.swapped {
                return Err(Error::Validation(format!(
                    "swap {i}: replacement relation equals the original ({})",
                    s.original
                )));
            }
        }
        Ok(EdgeSwapSample { swaps })
    }

    /// Every ordered pair of distinct relations once, indexed by position.
    pub fn all_pairs(num_relations: usize) -> Self {
        let mut swaps = Vec::with_capacity(num_relations * num_relations.saturating_sub(1));
        for a in 0..num_relations {
            for b in 0..num_relations {
                if a != b {
                    swaps.push(EdgeSwap {
                        edge: swaps.len(),
                        original: a,
                        swapped: b,
                    });
                }
            }
        }
        EdgeSwapSample { swaps }
    }

    pub fn swaps(&self) -> &[EdgeSwap] {
        &self.swaps
    }

    pub fn len(&self) -> usize {
        self.swaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.swaps.is_empty()
    }
}

/// Picks `⌈fraction·|E|⌉` distinct edges uniformly and gives each a
/// replacement relation drawn uniformly from the other `|R| − 1`.
pub fn sample_edge_swaps(graph: &TypedGraph, fraction: f64, seed: u64) -> Result<EdgeSwapSample> {
    let num_relations = graph.num_relations();
    if num_relations < 2 {
        return Err(Error::Config(
            "edge swapping needs at least two relations".into(),
        ));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "sampling fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let edges = graph.edges();
    if edges.is_empty() {
        return Err(Error::Config("graph has no edges to sample".into()));
    }
    let count = ((fraction * edges.len() as f64).ceil() as usize).clamp(1, edges.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, edges.len(), count).into_vec();
    chosen.sort_unstable();
    let swaps = chosen
        .into_iter()
        .map(|e| {
            let original = edges[e].relation;
            let pick = rng.random_range(0..num_relations - 1);
            let swapped = if pick >= original { pick + 1 } else { pick };
            EdgeSwap {
                edge: e,
                original,
                swapped,
            }
        })
        .collect();
    Ok(EdgeSwapSample { swaps })
}

fn check_dims(
    alpha: &[usize],
    sample: &EdgeSwapSample,
    iso: Option<&IsostericityMatrix>,
) -> Result<()> {
    if alpha.len() != 2 {
        return Err(Error::shape("iso_loss", alpha, &[]));
    }
    if let Some(iso) = iso {
        if iso.num_relations() != alpha[0] {
            return Err(Error::shape(
                "iso_loss",
                alpha,
                &[iso.num_relations(), iso.num_relations()],
            ));
        }
    }
    if let Some(bad) = sample
        .swaps
        .iter()
        .find(|s| s.original >= alpha[0] || s.swapped >= alpha[0])
    {
        return Err(Error::Argument(format!(
            "swap of edge {} references a relation outside the {}-row attention table",
            bad.edge, alpha[0]
        )));
    }
    Ok(())
}

/// Tape-side helper that records each relation row and pair distance once.
struct PairTerms<'t> {
    alpha: Var<'t>,
    rows: HashMap<usize, Var<'t>>,
    norms: HashMap<usize, Var<'t>>,
    dists: HashMap<(usize, usize), Var<'t>>,
}

impl<'t> PairTerms<'t> {
    fn new(alpha: Var<'t>) -> Self {
        PairTerms {
            alpha,
            rows: HashMap::new(),
            norms: HashMap::new(),
            dists: HashMap::new(),
        }
    }

    fn row(&mut self, r: usize) -> Result<Var<'t>> {
        if let Some(v) = self.rows.get(&r) {
            return Ok(*v);
        }
        let v = self.alpha.row(r)?;
        self.rows.insert(r, v);
        Ok(v)
    }

    fn norm(&mut self, r: usize) -> Result<Var<'t>> {
        if let Some(v) = self.norms.get(&r) {
            return Ok(*v);
        }
        let v = self.row(r)?.l2_norm()?;
        self.norms.insert(r, v);
        Ok(v)
    }

    fn distance(&mut self, a: usize, b: usize) -> Result<Var<'t>> {
        let key = (a.min(b), a.max(b));
        if let Some(v) = self.dists.get(&key) {
            return Ok(*v);
        }
        let v = self.row(key.0)?.sub(self.row(key.1)?)?.l2_norm()?;
        self.dists.insert(key, v);
        Ok(v)
    }

    /// `(‖α_a − α_b‖ − target)²`.
    fn squared_residual(&mut self, a: usize, b: usize, target: f64) -> Result<Var<'t>> {
        let tape = self.alpha.tape();
        let res = self
            .distance(a, b)?
            .sub(tape.constant(Tensor::scalar(target)))?;
        res.mul(res)
    }
}

fn zero<'t>(tape: &'t Tape) -> Var<'t> {
    tape.constant(Tensor::scalar(0.0))
}

/// Unweighted prior loss over the sampled pairs.
pub fn iso_loss<'t>(
    alpha: Var<'t>,
    sample: &EdgeSwapSample,
    iso: &IsostericityMatrix,
) -> Result<Var<'t>> {
    check_dims(&alpha.shape(), sample, Some(iso))?;
    if sample.is_empty() {
        return Ok(zero(alpha.tape()));
    }
    let mut terms = PairTerms::new(alpha);
    let residuals = sample
        .swaps
        .iter()
        .map(|s| terms.squared_residual(s.original, s.swapped, iso.get(s.original, s.swapped)))
        .collect::<Result<Vec<_>>>()?;
    Var::add_all(&residuals)
}

/// Norm-weighted prior loss. When every sampled norm product is zero the
/// weights are undefined; a warning is logged and the unweighted loss is
/// returned instead.
pub fn scaled_iso_loss<'t>(
    alpha: Var<'t>,
    sample: &EdgeSwapSample,
    iso: &IsostericityMatrix,
) -> Result<Var<'t>> {
    check_dims(&alpha.shape(), sample, Some(iso))?;
    if sample.is_empty() {
        return Ok(zero(alpha.tape()));
    }
    let mut terms = PairTerms::new(alpha);
    let products = sample
        .swaps
        .iter()
        .map(|s| terms.norm(s.original)?.mul(terms.norm(s.swapped)?))
        .collect::<Result<Vec<_>>>()?;
    let denom = Var::add_all(&products)?;
    if denom.item() == 0.0 {
        log::warn!("all attention norm products are zero; using unscaled prior loss for this step");
        return iso_loss(alpha, sample, iso);
    }
    let size = sample.len() as f64;
    let weighted = sample
        .swaps
        .iter()
        .zip(products)
        .map(|(s, p)| {
            let w = p.div_scalar(denom)?.scale(size)?;
            let r =
                terms.squared_residual(s.original, s.swapped, iso.get(s.original, s.swapped))?;
            w.mul(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Var::add_all(&weighted)
}

pub fn iso_loss_value(
    alpha: &AttentionTable,
    sample: &EdgeSwapSample,
    iso: &IsostericityMatrix,
) -> Result<f64> {
    let tape = Tape::new();
    Ok(iso_loss(tape.constant(alpha.as_tensor().clone()), sample, iso)?.item())
}

pub fn scaled_iso_loss_value(
    alpha: &AttentionTable,
    sample: &EdgeSwapSample,
    iso: &IsostericityMatrix,
) -> Result<f64> {
    let tape = Tape::new();
    Ok(scaled_iso_loss(tape.constant(alpha.as_tensor().clone()), sample, iso)?.item())
}

/// Per-swap weights `w(e)`; they average to one.
pub fn swap_weights(alpha: &AttentionTable, sample: &EdgeSwapSample) -> Result<Vec<f64>> {
    check_dims(alpha.as_tensor().shape(), sample, None)?;
    if sample.is_empty() {
        return Err(Error::Argument("swap weights of an empty sample".into()));
    }
    let norms: Vec<f64> = (0..alpha.num_relations())
        .map(|r| alpha.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let products: Vec<f64> = sample
        .swaps
        .iter()
        .map(|s| norms[s.original] * norms[s.swapped])
        .collect();
    let denom: f64 = products.iter().sum();
    if denom == 0.0 {
        return Err(Error::DegenerateAttention);
    }
    let size = sample.len() as f64;
    Ok(products.iter().map(|p| size * p / denom).collect())
}

/// Mean binary cross-entropy with logits over the masked nodes, in the
/// overflow-free form `softplus(x) − y·x`.
pub fn node_bce_loss<'t>(logits: Var<'t>, labels: &NodeLabelSet) -> Result<Var<'t>> {
    let mask = labels.mask();
    if mask.is_empty() {
        return Err(Error::Argument("loss mask is empty".into()));
    }
    let shape = logits.shape();
    let n: usize = shape.iter().product();
    if n != labels.labels().len() {
        return Err(Error::shape(
            "node_bce_loss",
            &shape,
            &[labels.labels().len()],
        ));
    }
    let tape = logits.tape();
    let y = labels.labels().iter().map(|&l| l as f64).collect();
    let mut weights = vec![0.0; n];
    let w = 1.0 / mask.len() as f64;
    for &m in mask {
        weights[m] = w;
    }
    let y = tape.constant(Tensor::from_parts(shape.clone(), y));
    let weights = tape.constant(Tensor::from_parts(shape, weights));
    logits.softplus()?.sub(y.mul(logits)?)?.mul(weights)?.sum()
}

pub fn node_bce_loss_value(logits: &Tensor, labels: &NodeLabelSet) -> Result<f64> {
    let tape = Tape::new();
    Ok(node_bce_loss(tape.constant(logits.clone()), labels)?.item())
}

/// Task loss, prior loss and their weighted sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub task_loss: f64,
    pub iso_loss: f64,
    pub total: f64,
    pub lambda: f64,
}

pub fn total_loss(task: f64, iso: f64, lambda: f64) -> Result<LossReport> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Config(format!(
            "prior weight must be >= 0, got {lambda}"
        )));
    }
    Ok(LossReport {
        task_loss: task,
        iso_loss: iso,
        total: task + lambda * iso,
        lambda,
    })
}

/// Records `task + lambda * iso`; matches [`total_loss`] bit for bit.
pub fn total_loss_var<'t>(task: Var<'t>, iso: Var<'t>, lambda: f64) -> Result<Var<'t>> {
    task.add(iso.scale(lambda)?)
}
