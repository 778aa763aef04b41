//! Relational message-passing layers.
//!
//! Two families share one aggregation scheme. For every relation `r` the
//! graph supplies a dense operator `A_r` with `A_r[v][u]` counting edges
//! `(u, v, r)`, so the neighbourhood sum over `N_r(v)` becomes `A_r X`.
//!
//! * Relational convolution: `h'_v = ReLU(W0 h_v + Σ_r Σ_{u∈N_r(v)} c_r W_r h_u)`
//!   with per-relation kernels (optionally generated from shared bases) and
//!   fixed per-relation scalars `c_r` (all ones for the plain model).
//! * Attention-vector convolution: one shared kernel `W`, a learnable
//!   `|R| x K` attention table, and head outputs concatenated:
//!   `h'_v = ReLU(W0 h_v + Σ_r Σ_{u∈N_r(v)} ⊕_k α[r][k] W h_u)`.
//!
//! Neither family normalizes by degree unless [`Aggregation::Mean`] is asked
//! for.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::TypedGraph;
use crate::tensor::{Tape, Tensor, Var};

/// How messages arriving over one relation are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    #[default]
    Sum,
    /// Divide each `(v, r)` sum by the number of type-`r` in-edges of `v`.
    Mean,
}

/// Precomputed dense aggregation operators, one per relation.
#[derive(Clone, Debug)]
pub struct RelationOperators {
    ops: Vec<Tensor>,
    nonempty: Vec<bool>,
    num_nodes: usize,
}

impl RelationOperators {
    pub fn new(graph: &TypedGraph, aggregation: Aggregation) -> Self {
        let mean = aggregation == Aggregation::Mean;
        let mut nonempty = vec![false; graph.num_relations()];
        for e in graph.edges() {
            nonempty[e.relation] = true;
        }
        RelationOperators {
            ops: (0..graph.num_relations())
                .map(|r| graph.relation_operator(r, mean))
                .collect(),
            nonempty,
            num_nodes: graph.num_nodes(),
        }
    }

    pub fn num_relations(&self) -> usize {
        self.ops.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Records the operators as constants. Relations without edges map to
    /// `None` and are skipped by the layers.
    pub fn record<'t>(&self, tape: &'t Tape) -> BoundOperators<'t> {
        BoundOperators {
            ops: self
                .ops
                .iter()
                .zip(&self.nonempty)
                .map(|(op, &used)| used.then(|| tape.constant(op.clone())))
                .collect(),
            num_nodes: self.num_nodes,
        }
    }
}

pub struct BoundOperators<'t> {
    ops: Vec<Option<Var<'t>>>,
    num_nodes: usize,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::from_parts(vec![rows, cols], data)
}

fn check_kernel(op: &'static str, t: &Tensor, rows: usize, cols: usize) -> Result<()> {
    if t.shape() != [rows, cols] {
        return Err(Error::shape(op, t.shape(), &[rows, cols]));
    }
    Ok(())
}

/// `W_r = Σ_b a[r][b] V_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisParams {
    pub bases: Vec<Tensor>,
    /// `|R| x B` mixing coefficients.
    pub coefficients: Tensor,
}

impl BasisParams {
    pub fn init(
        rng: &mut impl Rng,
        d_out: usize,
        d_in: usize,
        num_relations: usize,
        num_bases: usize,
    ) -> Result<Self> {
        if num_bases == 0 {
            return Err(Error::Config("basis count must be at least 1".into()));
        }
        if num_bases > num_relations {
            log::warn!(
                "{num_bases} bases for {num_relations} relations imposes no rank constraint"
            );
        }
        Ok(BasisParams {
            bases: (0..num_bases).map(|_| glorot(rng, d_out, d_in)).collect(),
            coefficients: glorot(rng, num_relations, num_bases),
        })
    }

    fn validate(&self) -> Result<(usize, usize)> {
        let first = self
            .bases
            .first()
            .ok_or_else(|| Error::Config("basis count must be at least 1".into()))?;
        if first.rank() != 2 {
            return Err(Error::shape("basis_expand", first.shape(), &[]));
        }
        for b in &self.bases {
            if b.shape() != first.shape() {
                return Err(Error::shape("basis_expand", first.shape(), b.shape()));
            }
        }
        if self.coefficients.rank() != 2 || self.coefficients.cols() != self.bases.len() {
            return Err(Error::shape(
                "basis_expand",
                self.coefficients.shape(),
                &[self.coefficients.rows(), self.bases.len()],
            ));
        }
        Ok((first.rows(), first.cols()))
    }
}

/// Materializes every relation kernel from its basis mixture.
pub fn basis_expand(p: &BasisParams) -> Result<Vec<Tensor>> {
    p.validate()?;
    (0..p.coefficients.rows())
        .map(|r| {
            let mut w = Tensor::zeros(p.bases[0].shape());
            for (b, basis) in p.bases.iter().enumerate() {
                w = w.add(&basis.scale(p.coefficients.get(r, b)))?;
            }
            Ok(w)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum RelationKernels {
    PerRelation(Vec<Tensor>),
    Basis(BasisParams),
}

/// Parameters of one relational convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RgcnLayerParams {
    /// `d_out x d_in`.
    pub self_kernel: Tensor,
    pub kernels: RelationKernels,
    /// Fixed per-relation message scale; all ones for the plain model.
    pub relation_scale: Vec<f64>,
}

impl RgcnLayerParams {
    /// Glorot-initialized layer; `num_bases = None` gives one free kernel
    /// per relation.
    pub fn init(
        rng: &mut impl Rng,
        d_in: usize,
        d_out: usize,
        num_relations: usize,
        num_bases: Option<usize>,
    ) -> Result<Self> {
        let self_kernel = glorot(rng, d_out, d_in);
        let kernels = match num_bases {
            None => RelationKernels::PerRelation(
                (0..num_relations)
                    .map(|_| glorot(rng, d_out, d_in))
                    .collect(),
            ),
            Some(b) => {
                RelationKernels::Basis(BasisParams::init(rng, d_out, d_in, num_relations, b)?)
            }
        };
        Ok(RgcnLayerParams {
            self_kernel,
            kernels,
            relation_scale: vec![1.0; num_relations],
        })
    }

    pub fn d_in(&self) -> usize {
        self.self_kernel.cols()
    }

    pub fn d_out(&self) -> usize {
        self.self_kernel.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_scale.len()
    }

    fn validate(&self) -> Result<()> {
        let (d_out, d_in) = (self.d_out(), self.d_in());
        match &self.kernels {
            RelationKernels::PerRelation(ws) => {
                if ws.len() != self.num_relations() {
                    return Err(Error::shape(
                        "rgcn_forward",
                        &[ws.len()],
                        &[self.num_relations()],
                    ));
                }
                for w in ws {
                    check_kernel("rgcn_forward", w, d_out, d_in)?;
                }
            }
            RelationKernels::Basis(b) => {
                if b.validate()? != (d_out, d_in) {
                    return Err(Error::shape(
                        "rgcn_forward",
                        b.bases[0].shape(),
                        &[d_out, d_in],
                    ));
                }
                if b.coefficients.rows() != self.num_relations() {
                    return Err(Error::shape(
                        "rgcn_forward",
                        b.coefficients.shape(),
                        &[self.num_relations(), b.bases.len()],
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.self_kernel];
        match &self.kernels {
            RelationKernels::PerRelation(ws) => out.extend(ws.iter()),
            RelationKernels::Basis(b) => {
                out.extend(b.bases.iter());
                out.push(&b.coefficients);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.self_kernel];
        match &mut self.kernels {
            RelationKernels::PerRelation(ws) => out.extend(ws.iter_mut()),
            RelationKernels::Basis(b) => {
                out.extend(b.bases.iter_mut());
                out.push(&mut b.coefficients);
            }
        }
        out
    }

    /// Pairs this layout with tape variables, consuming them in the order
    /// of [`RgcnLayerParams::tensors`].
    pub fn bind<'t>(&self, vars: &mut impl Iterator<Item = Var<'t>>) -> Result<RgcnVars<'t>> {
        let mut next = || {
            vars.next()
                .ok_or_else(|| Error::Argument("too few variables for layer".into()))
        };
        let self_kernel = next()?;
        let kernels = match &self.kernels {
            RelationKernels::PerRelation(ws) => {
                KernelVars::PerRelation(ws.iter().map(|_| next()).collect::<Result<_>>()?)
            }
            RelationKernels::Basis(b) => KernelVars::Basis {
                bases: b.bases.iter().map(|_| next()).collect::<Result<_>>()?,
                coefficients: next()?,
            },
        };
        Ok(RgcnVars {
            self_kernel,
            kernels,
            relation_scale: self.relation_scale.clone(),
        })
    }
}

pub enum KernelVars<'t> {
    PerRelation(Vec<Var<'t>>),
    Basis {
        bases: Vec<Var<'t>>,
        coefficients: Var<'t>,
    },
}

pub struct RgcnVars<'t> {
    pub self_kernel: Var<'t>,
    pub kernels: KernelVars<'t>,
    pub relation_scale: Vec<f64>,
}

/// Differentiable counterpart of [`basis_expand`].
pub fn basis_expand_vars<'t>(bases: &[Var<'t>], coefficients: Var<'t>) -> Result<Vec<Var<'t>>> {
    let shape = coefficients.shape();
    if shape.len() != 2 || shape[1] != bases.len() {
        return Err(Error::shape(
            "basis_expand",
            &shape,
            &[shape[0], bases.len()],
        ));
    }
    (0..shape[0])
        .map(|r| {
            let terms = bases
                .iter()
                .enumerate()
                .map(|(b, v)| v.mul_scalar(coefficients.entry(r, b)?))
                .collect::<Result<Vec<_>>>()?;
            Var::add_all(&terms)
        })
        .collect()
}

fn check_input(
    op: &'static str,
    ops: &BoundOperators<'_>,
    h: &Var<'_>,
    d_in: usize,
    num_relations: usize,
) -> Result<()> {
    let shape = h.shape();
    if shape != [ops.num_nodes, d_in] {
        return Err(Error::shape(op, &shape, &[ops.num_nodes, d_in]));
    }
    if ops.ops.len() != num_relations {
        return Err(Error::shape(op, &[ops.ops.len()], &[num_relations]));
    }
    Ok(())
}

/// Sum of the non-empty relation messages, or `None` when no relation has
/// edges.
fn sum_messages<'t>(messages: Vec<Var<'t>>) -> Result<Option<Var<'t>>> {
    if messages.is_empty() {
        Ok(None)
    } else {
        Var::add_all(&messages).map(Some)
    }
}

/// Pre-activation `W0 h_v + Σ_r c_r Σ_{u∈N_r(v)} W_r h_u` for all nodes.
pub fn rgcn_preactivation<'t>(
    ops: &BoundOperators<'t>,
    h: Var<'t>,
    p: &RgcnVars<'t>,
) -> Result<Var<'t>> {
    let d_in = p.self_kernel.shape()[1];
    check_input("rgcn_forward", ops, &h, d_in, p.relation_scale.len())?;
    let kernels: Vec<Var<'t>> = match &p.kernels {
        KernelVars::PerRelation(ws) => ws.clone(),
        KernelVars::Basis {
            bases,
            coefficients,
        } => basis_expand_vars(bases, *coefficients)?,
    };
    let self_term = h.matmul(p.self_kernel.transpose()?)?;
    let mut messages = Vec::new();
    for (r, op) in ops.ops.iter().enumerate() {
        let Some(op) = op else { continue };
        let mut msg = op.matmul(h.matmul(kernels[r].transpose()?)?)?;
        if p.relation_scale[r] != 1.0 {
            msg = msg.scale(p.relation_scale[r])?;
        }
        messages.push(msg);
    }
    match sum_messages(messages)? {
        Some(agg) => self_term.add(agg),
        None => Ok(self_term),
    }
}

pub fn rgcn_layer<'t>(ops: &BoundOperators<'t>, h: Var<'t>, p: &RgcnVars<'t>) -> Result<Var<'t>> {
    rgcn_preactivation(ops, h, p)?.relu()
}

/// One relational convolution on plain tensors.
pub fn rgcn_forward(
    graph: &TypedGraph,
    h: &Tensor,
    p: &RgcnLayerParams,
    aggregation: Aggregation,
) -> Result<Tensor> {
    p.validate()?;
    if p.num_relations() != graph.num_relations() {
        return Err(Error::shape(
            "rgcn_forward",
            &[p.num_relations()],
            &[graph.num_relations()],
        ));
    }
    let tape = Tape::new();
    let ops = RelationOperators::new(graph, aggregation).record(&tape);
    let mut vars = p.tensors().into_iter().map(|t| tape.constant(t.clone()));
    let bound = p.bind(&mut vars)?;
    Ok(rgcn_layer(&ops, tape.constant(h.clone()), &bound)?.value())
}

/// Learnable `|R| x K` table whose row `r` is the attention vector of
/// relation `r`. Entries are unconstrained in sign and never normalized
/// across relations.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTable(Tensor);

impl AttentionTable {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 2 || values.cols() == 0 {
            return Err(Error::shape("attention table", values.shape(), &[]));
        }
        if !values.all_finite() {
            return Err(Error::Validation(
                "attention table has non-finite entries".into(),
            ));
        }
        Ok(AttentionTable(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        AttentionTable::new(Tensor::from_rows(rows)?)
    }

    /// Entries uniform in `[0.5, 1.5]`.
    pub fn init(rng: &mut impl Rng, num_relations: usize, heads: usize) -> Self {
        let data = (0..num_relations * heads)
            .map(|_| rng.random_range(0.5..1.5))
            .collect();
        AttentionTable(Tensor::from_parts(vec![num_relations, heads], data))
    }

    pub fn num_relations(&self) -> usize {
        self.0.rows()
    }

    pub fn heads(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.0.row(r)
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.0
    }

    /// Euclidean distance between the vectors of two relations.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.row(a)
            .iter()
            .zip(self.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Parameters of one shared-kernel multi-head attention layer.
#[derive(Clone, Debug, PartialEq)]
pub struct IsoAttnLayerParams {
    /// `d_msg x d_in`, shared by every relation and head.
    pub kernel: Tensor,
    pub attention: AttentionTable,
    /// `(K * d_msg) x d_in`.
    pub self_kernel: Tensor,
}

impl IsoAttnLayerParams {
    pub fn init(
        rng: &mut impl Rng,
        d_in: usize,
        d_msg: usize,
        num_relations: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || d_msg == 0 || d_in == 0 {
            return Err(Error::Config(
                "layer dimensions and head count must be positive".into(),
            ));
        }
        let kernel = glorot(rng, d_msg, d_in);
        let self_kernel = glorot(rng, heads * d_msg, d_in);
        let attention = AttentionTable::init(rng, num_relations, heads);
        Ok(IsoAttnLayerParams {
            kernel,
            attention,
            self_kernel,
        })
    }

    pub fn d_in(&self) -> usize {
        self.kernel.cols()
    }

    pub fn d_msg(&self) -> usize {
        self.kernel.rows()
    }

    pub fn heads(&self) -> usize {
        self.attention.heads()
    }

    pub fn d_out(&self) -> usize {
        self.heads() * self.d_msg()
    }

    fn validate(&self) -> Result<()> {
        check_kernel(
            "isoattn_forward",
            &self.self_kernel,
            self.d_out(),
            self.d_in(),
        )
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.kernel, self.attention.as_tensor(), &self.self_kernel]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.kernel,
            self.attention.tensor_mut(),
            &mut self.self_kernel,
        ]
    }

    pub fn bind<'t>(&self, vars: &mut impl Iterator<Item = Var<'t>>) -> Result<IsoAttnVars<'t>> {
        let mut next = || {
            vars.next()
                .ok_or_else(|| Error::Argument("too few variables for layer".into()))
        };
        Ok(IsoAttnVars {
            kernel: next()?,
            attention: next()?,
            self_kernel: next()?,
        })
    }
}

pub struct IsoAttnVars<'t> {
    pub kernel: Var<'t>,
    pub attention: Var<'t>,
    pub self_kernel: Var<'t>,
}

/// Pre-activation `W0 h_v + Σ_r Σ_{u∈N_r(v)} ⊕_k α[r][k] W h_u`.
///
/// `W h_u` is computed once for all nodes; each head's block is
/// `Σ_r α[r][k] A_r (H Wᵀ)`.
pub fn isoattn_preactivation<'t>(
    ops: &BoundOperators<'t>,
    h: Var<'t>,
    p: &IsoAttnVars<'t>,
) -> Result<Var<'t>> {
    let kshape = p.kernel.shape();
    let ashape = p.attention.shape();
    if ashape.len() != 2 {
        return Err(Error::shape("isoattn_forward", &ashape, &[]));
    }
    let (num_relations, heads) = (ashape[0], ashape[1]);
    check_input("isoattn_forward", ops, &h, kshape[1], num_relations)?;
    let sshape = p.self_kernel.shape();
    if sshape != [heads * kshape[0], kshape[1]] {
        return Err(Error::shape(
            "isoattn_forward",
            &sshape,
            &[heads * kshape[0], kshape[1]],
        ));
    }

    let self_term = h.matmul(p.self_kernel.transpose()?)?;
    let projected = h.matmul(p.kernel.transpose()?)?;
    let per_relation: Vec<(usize, Var<'t>)> = ops
        .ops
        .iter()
        .enumerate()
        .filter_map(|(r, op)| op.map(|op| (r, op)))
        .map(|(r, op)| Ok((r, op.matmul(projected)?)))
        .collect::<Result<_>>()?;
    if per_relation.is_empty() {
        return Ok(self_term);
    }

    let blocks = (0..heads)
        .map(|k| {
            let terms = per_relation
                .iter()
                .map(|(r, s)| s.mul_scalar(p.attention.entry(*r, k)?))
                .collect::<Result<Vec<_>>>()?;
            Var::add_all(&terms)
        })
        .collect::<Result<Vec<_>>>()?;
    self_term.add(Var::concat(&blocks)?)
}

pub fn isoattn_layer<'t>(
    ops: &BoundOperators<'t>,
    h: Var<'t>,
    p: &IsoAttnVars<'t>,
) -> Result<Var<'t>> {
    isoattn_preactivation(ops, h, p)?.relu()
}

/// One attention-vector convolution on plain tensors.
pub fn isoattn_forward(
    graph: &TypedGraph,
    h: &Tensor,
    p: &IsoAttnLayerParams,
    aggregation: Aggregation,
) -> Result<Tensor> {
    p.validate()?;
    if p.attention.num_relations() != graph.num_relations() {
        return Err(Error::shape(
            "isoattn_forward",
            &[p.attention.num_relations()],
            &[graph.num_relations()],
        ));
    }
    let tape = Tape::new();
    let ops = RelationOperators::new(graph, aggregation).record(&tape);
    let mut vars = p.tensors().into_iter().map(|t| tape.constant(t.clone()));
    let bound = p.bind(&mut vars)?;
    Ok(isoattn_layer(&ops, tape.constant(h.clone()), &bound)?.value())
}

/// Pre-activations of an attention layer on plain tensors.
pub fn isoattn_preactivation_values(
    graph: &TypedGraph,
    h: &Tensor,
    p: &IsoAttnLayerParams,
) -> Result<Tensor> {
    p.validate()?;
    let tape = Tape::new();
    let ops = RelationOperators::new(graph, Aggregation::Sum).record(&tape);
    let mut vars = p.tensors().into_iter().map(|t| tape.constant(t.clone()));
    let bound = p.bind(&mut vars)?;
    Ok(isoattn_preactivation(&ops, tape.constant(h.clone()), &bound)?.value())
}
