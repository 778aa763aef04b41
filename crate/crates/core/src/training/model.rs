use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{IsostericityMatrix, NodeLabelSet, TypedGraph};
use crate::layers::{
    isoattn_layer, rgcn_layer, Aggregation, AttentionTable, BoundOperators, IsoAttnLayerParams,
    IsoAttnVars, RelationOperators, RgcnLayerParams, RgcnVars,
};
use crate::losses::{iso_loss, node_bce_loss, scaled_iso_loss, total_loss_var, EdgeSwapSample};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    BaselineRgcn,
    IsoGcnUnscaled,
    IsoGcnScaled,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::BaselineRgcn,
        ModelKind::IsoGcnUnscaled,
        ModelKind::IsoGcnScaled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BaselineRgcn => "baseline-rgcn",
            ModelKind::IsoGcnUnscaled => "iso-gcn-unscaled",
            ModelKind::IsoGcnScaled => "iso-gcn-scaled",
        }
    }

    /// True for the attention models that carry the prior.
    pub fn uses_attention(self) -> bool {
        self != ModelKind::BaselineRgcn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Rgcn(RgcnLayerParams),
    IsoAttn(IsoAttnLayerParams),
}

impl LayerParams {
    pub fn d_out(&self) -> usize {
        match self {
            LayerParams::Rgcn(p) => p.d_out(),
            LayerParams::IsoAttn(p) => p.d_out(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::Rgcn(p) => p.tensors(),
            LayerParams::IsoAttn(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::Rgcn(p) => p.tensors_mut(),
            LayerParams::IsoAttn(p) => p.tensors_mut(),
        }
    }
}

/// Architecture choices shared by initialization and reloading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub kind: ModelKind,
    pub layers: usize,
    pub d_msg: usize,
    pub heads: usize,
    /// Basis count for the baseline's relation kernels.
    pub bases: Option<usize>,
    pub aggregation: Aggregation,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.d_msg == 0 || self.heads == 0 {
            return Err(Error::Config(
                "layer count, message width and head count must be positive".into(),
            ));
        }
        if self.bases == Some(0) {
            return Err(Error::Config("basis count must be at least 1".into()));
        }
        Ok(())
    }

    /// Hidden width; the baseline matches the concatenated-head width.
    pub fn width(&self) -> usize {
        self.heads * self.d_msg
    }
}

/// A layer stack followed by a linear readout to one logit per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub aggregation: Aggregation,
    pub layers: Vec<LayerParams>,
    /// `width x 1`.
    pub readout: Tensor,
    /// `1 x 1`.
    pub bias: Tensor,
}

impl ModelParams {
    pub fn init(
        rng: &mut impl Rng,
        arch: &Architecture,
        d_in: usize,
        num_relations: usize,
    ) -> Result<Self> {
        arch.validate()?;
        if d_in == 0 {
            return Err(Error::Config(
                "node features must have at least one column".into(),
            ));
        }
        let mut layers = Vec::with_capacity(arch.layers);
        let mut width = d_in;
        for _ in 0..arch.layers {
            let layer = match arch.kind {
                ModelKind::BaselineRgcn => LayerParams::Rgcn(RgcnLayerParams::init(
                    rng,
                    width,
                    arch.width(),
                    num_relations,
                    arch.bases,
                )?),
                _ => LayerParams::IsoAttn(IsoAttnLayerParams::init(
                    rng,
                    width,
                    arch.d_msg,
                    num_relations,
                    arch.heads,
                )?),
            };
            width = layer.d_out();
            layers.push(layer);
        }
        let limit = (6.0 / (width + 1) as f64).sqrt();
        let readout = (0..width)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(ModelParams {
            kind: arch.kind,
            aggregation: arch.aggregation,
            layers,
            readout: Tensor::from_parts(vec![width, 1], readout),
            bias: Tensor::zeros(&[1, 1]),
        })
    }

    /// Every trainable tensor: layers in order, then readout and bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.layers.iter().flat_map(LayerParams::tensors).collect();
        out.push(&self.readout);
        out.push(&self.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .layers
            .iter_mut()
            .flat_map(LayerParams::tensors_mut)
            .collect();
        out.push(&mut self.readout);
        out.push(&mut self.bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn attention_tables(&self) -> Vec<&AttentionTable> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerParams::IsoAttn(p) => Some(&p.attention),
                LayerParams::Rgcn(_) => None,
            })
            .collect()
    }

    /// One logit per node, computed without gradients.
    pub fn logits(&self, graph: &TypedGraph) -> Result<Vec<f64>> {
        let ops = RelationOperators::new(graph, self.aggregation);
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self
            .tensors()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        let bound = self.bind(&vars)?;
        let logits = bound.logits(&ops.record(&tape), tape.constant(graph.features().clone()))?;
        Ok(logits.value().into_data())
    }

    /// Pairs the layout with tape variables given in [`ModelParams::tensors`]
    /// order.
    pub fn bind<'t>(&self, vars: &[Var<'t>]) -> Result<BoundModel<'t>> {
        let expected = self.tensors().len();
        if vars.len() != expected {
            return Err(Error::Argument(format!(
                "model expects {expected} variables, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(match l {
                    LayerParams::Rgcn(p) => BoundLayer::Rgcn(p.bind(&mut it)?),
                    LayerParams::IsoAttn(p) => BoundLayer::IsoAttn(p.bind(&mut it)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundModel {
            layers,
            readout: it.next().expect("counted above"),
            bias: it.next().expect("counted above"),
        })
    }
}

pub enum BoundLayer<'t> {
    Rgcn(RgcnVars<'t>),
    IsoAttn(IsoAttnVars<'t>),
}

pub struct BoundModel<'t> {
    pub layers: Vec<BoundLayer<'t>>,
    pub readout: Var<'t>,
    pub bias: Var<'t>,
}

impl<'t> BoundModel<'t> {
    /// `n x 1` logits: every layer with ReLU, then `H r + 1 b`.
    pub fn logits(&self, ops: &BoundOperators<'t>, features: Var<'t>) -> Result<Var<'t>> {
        let mut h = features;
        for layer in &self.layers {
            h = match layer {
                BoundLayer::Rgcn(p) => rgcn_layer(ops, h, p)?,
                BoundLayer::IsoAttn(p) => isoattn_layer(ops, h, p)?,
            };
        }
        let n = h.shape()[0];
        let ones = features.tape().constant(Tensor::filled(&[n, 1], 1.0));
        h.matmul(self.readout)?.add(ones.matmul(self.bias)?)
    }

    pub fn attention_vars(&self) -> Vec<Var<'t>> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                BoundLayer::IsoAttn(p) => Some(p.attention),
                BoundLayer::Rgcn(_) => None,
            })
            .collect()
    }
}

/// The prior term of one step: a swap sample and the dissimilarities.
pub struct PriorTerm<'a> {
    pub sample: &'a EdgeSwapSample,
    pub iso: &'a IsostericityMatrix,
    pub lambda: f64,
}

/// Everything a training objective needs besides the parameters.
pub struct Objective<'a> {
    pub model: &'a ModelParams,
    pub graph: &'a TypedGraph,
    pub operators: &'a RelationOperators,
    pub labels: &'a NodeLabelSet,
    /// `None` leaves the prior out of the graph entirely.
    pub prior: Option<PriorTerm<'a>>,
}

pub struct RecordedObjective<'t> {
    pub logits: Var<'t>,
    pub task: Var<'t>,
    /// Prior loss summed over the attention layers.
    pub iso: Option<Var<'t>>,
    pub total: Var<'t>,
}

impl Objective<'_> {
    pub fn record<'t>(&self, tape: &'t Tape, vars: &[Var<'t>]) -> Result<RecordedObjective<'t>> {
        let bound = self.model.bind(vars)?;
        let ops = self.operators.record(tape);
        let logits = bound.logits(&ops, tape.constant(self.graph.features().clone()))?;
        let task = node_bce_loss(logits, self.labels)?;
        let (iso, total) = match &self.prior {
            Some(prior) if self.model.kind.uses_attention() => {
                let per_layer = bound
                    .attention_vars()
                    .into_iter()
                    .map(|alpha| match self.model.kind {
                        ModelKind::IsoGcnScaled => scaled_iso_loss(alpha, prior.sample, prior.iso),
                        _ => iso_loss(alpha, prior.sample, prior.iso),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let iso = Var::add_all(&per_layer)?;
                (Some(iso), total_loss_var(task, iso, prior.lambda)?)
            }
            _ => (None, task),
        };
        Ok(RecordedObjective {
            logits,
            task,
            iso,
            total,
        })
    }
}
