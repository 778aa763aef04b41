//! Full-batch training on a single typed graph, evaluation, and the
//! attention-only fit of a dissimilarity matrix.

mod metrics;
mod model;
mod optim;
mod params_io;
mod task;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{IsostericityMatrix, NodeId};
use crate::layers::{Aggregation, AttentionTable, RelationOperators};
use crate::losses::{iso_loss, iso_loss_value, sample_edge_swaps, EdgeSwapSample};
use crate::tensor::{Tape, Var};

pub use metrics::{accuracy, auc};
pub use model::{
    Architecture, BoundLayer, BoundModel, LayerParams, ModelKind, ModelParams, Objective,
    PriorTerm, RecordedObjective,
};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use params_io::{load_params, params_to_string, save_params, PARAMS_HEADER};
pub use task::{
    distance_matrix, gen_synthetic_task, load_task, save_task, Splits, SyntheticTask, Task,
    BALANCE_RANGE, DEFAULT_DENSITY, DEFAULT_EMBEDDING_DIM, DEFAULT_NODES, DEFAULT_RELATIONS,
    EMBEDDING_FILE, GRAPH_FILE, ISO_FILE, SPLITS_FILE,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub layers: usize,
    pub d_msg: usize,
    /// Attention heads; also sets the baseline width to `heads * d_msg`.
    pub heads: usize,
    pub bases: Option<usize>,
    pub lambda: f64,
    /// Share of edges swapped in each step's prior sample.
    pub fraction: f64,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    /// Average rather than sum messages within each relation.
    pub degree_norm: bool,
    /// Metrics are recorded every this many steps and at the last step.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::IsoGcnScaled,
            layers: 2,
            d_msg: 8,
            heads: 4,
            bases: None,
            lambda: 1.0,
            fraction: 0.25,
            lr: 1e-2,
            steps: 500,
            seed: 0,
            degree_norm: false,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            kind: self.model,
            layers: self.layers,
            d_msg: self.d_msg,
            heads: self.heads,
            bases: self.bases,
            aggregation: if self.degree_norm {
                Aggregation::Mean
            } else {
                Aggregation::Sum
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture().validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "prior weight must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!(
                "swap fraction must lie in (0, 1], got {}",
                self.fraction
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("evaluation interval must be positive".into()));
        }
        Ok(())
    }

    /// True when the prior term is part of the objective.
    pub fn uses_prior(&self) -> bool {
        self.model.uses_attention() && self.lambda > 0.0
    }
}

/// One row of training history. `iso_loss` is absent when the prior is not
/// evaluated; `auc` is absent when the evaluation split holds one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub task_loss: f64,
    pub iso_loss: Option<f64>,
    pub total: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<MetricsRecord>,
    /// Number of per-layer prior evaluations performed.
    pub iso_evaluations: usize,
    /// Full-pair prior residual before and after training (attention
    /// models only).
    pub initial_residual: Option<f64>,
    pub final_residual: Option<f64>,
}

/// Seed of the swap sample drawn at `step`.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Sum over attention layers of the prior loss with every ordered pair of
/// distinct relations as the sample.
pub fn iso_residual(params: &ModelParams, iso: &IsostericityMatrix) -> Result<Option<f64>> {
    let tables = params.attention_tables();
    if tables.is_empty() {
        return Ok(None);
    }
    let sample = EdgeSwapSample::all_pairs(iso.num_relations());
    let mut total = 0.0;
    for t in tables {
        total += iso_loss_value(t, &sample, iso)?;
    }
    Ok(Some(total))
}

/// Trains from a seeded initialization with Adam on the training split and
/// records validation metrics.
pub fn train(cfg: &TrainConfig, task: &Task) -> Result<TrainOutcome> {
    cfg.validate()?;
    let graph = &task.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(
        &mut rng,
        &cfg.architecture(),
        graph.feature_dim(),
        graph.num_relations(),
    )?;
    let operators = RelationOperators::new(graph, params.aggregation);
    let train_labels = task.label_set(&task.splits.train)?;
    let mut adam = Adam::new(&params.tensors());
    let initial_residual = iso_residual(&params, &task.iso)?;
    let attention_layers = params.attention_tables().len();

    let mut history = Vec::new();
    let mut iso_evaluations = 0;
    for step in 0..cfg.steps {
        let sample = if cfg.uses_prior() {
            Some(sample_edge_swaps(
                graph,
                cfg.fraction,
                step_seed(cfg.seed, step),
            )?)
        } else {
            None
        };
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params
            .tensors()
            .into_iter()
            .map(|t| tape.param(t.clone()))
            .collect();
        let objective = Objective {
            model: &params,
            graph,
            operators: &operators,
            labels: &train_labels,
            prior: sample.as_ref().map(|sample| PriorTerm {
                sample,
                iso: &task.iso,
                lambda: cfg.lambda,
            }),
        };
        let rec = objective.record(&tape, &vars)?;
        if rec.iso.is_some() {
            iso_evaluations += attention_layers;
        }
        let total = rec.total.item();
        if !total.is_finite() {
            return Err(Error::Divergence {
                step,
                message: format!("objective is {total}"),
            });
        }
        let grads = tape.backward(rec.total)?.params();
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Divergence {
                step,
                message: "non-finite gradient".into(),
            });
        }

        if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps {
            let logits = rec.logits.value().into_data();
            let mask = &task.splits.validation;
            let mask = if mask.is_empty() {
                &task.splits.train
            } else {
                mask
            };
            let record = MetricsRecord {
                step,
                task_loss: rec.task.item(),
                iso_loss: rec.iso.map(|v| v.item()),
                total,
                accuracy: accuracy(&logits, &task.labels, mask)?,
                auc: auc(&logits, &task.labels, mask).ok(),
            };
            log::info!(
                "step {step}: task {:.5} total {:.5} accuracy {:.3}",
                record.task_loss,
                record.total,
                record.accuracy
            );
            history.push(record);
        }
        adam.update(params.tensors_mut(), &grads, cfg.lr)?;
    }
    let final_residual = iso_residual(&params, &task.iso)?;
    Ok(TrainOutcome {
        params,
        history,
        iso_evaluations,
        initial_residual,
        final_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Absent when the mask holds a single class.
    pub auc: Option<f64>,
}

pub fn evaluate(params: &ModelParams, task: &Task, mask: &[NodeId]) -> Result<Evaluation> {
    let logits = params.logits(&task.graph)?;
    let accuracy = accuracy(&logits, &task.labels, mask)?;
    let auc = match auc(&logits, &task.labels, mask) {
        Ok(a) => Some(a),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    };
    Ok(Evaluation { accuracy, auc })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub train: Evaluation,
    pub validation: Evaluation,
    pub test: Evaluation,
    /// Majority-class rate on the test split.
    pub test_majority: f64,
}

pub fn evaluate_splits(params: &ModelParams, task: &Task) -> Result<SplitEvaluation> {
    let eval = |mask: &[NodeId]| -> Result<Evaluation> {
        if mask.is_empty() {
            Ok(Evaluation {
                accuracy: f64::NAN,
                auc: None,
            })
        } else {
            evaluate(params, task, mask)
        }
    };
    Ok(SplitEvaluation {
        train: eval(&task.splits.train)?,
        validation: eval(&task.splits.validation)?,
        test: eval(&task.splits.test)?,
        test_majority: task.majority_rate(&task.splits.test),
    })
}

pub const FIT_LR_START: f64 = 0.05;
pub const FIT_LR_END: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaFit {
    pub table: AttentionTable,
    pub initial_loss: f64,
    /// Full-pair prior loss of the returned table.
    pub loss: f64,
}

impl AlphaFit {
    /// Largest entrywise gap between fitted distances and the targets.
    pub fn max_distance_error(&self, iso: &IsostericityMatrix) -> f64 {
        let n = iso.num_relations();
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| (self.table.distance(a, b) - iso.get(a, b)).abs())
            .fold(0.0, f64::max)
    }
}

/// Fits a `|R| x heads` attention table to the dissimilarities alone by
/// minimizing the full-pair prior loss with Adam. The learning rate decays
/// geometrically from [`FIT_LR_START`] to [`FIT_LR_END`].
pub fn fit_alpha_to_iso(
    iso: &IsostericityMatrix,
    heads: usize,
    steps: usize,
    seed: u64,
) -> Result<AlphaFit> {
    if heads == 0 {
        return Err(Error::Config("head count must be positive".into()));
    }
    if iso.num_relations() < 2 {
        return Err(Error::Config("at least two relations are required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = AttentionTable::init(&mut rng, iso.num_relations(), heads);
    let sample = EdgeSwapSample::all_pairs(iso.num_relations());
    let initial_loss = iso_loss_value(&table, &sample, iso)?;
    let mut adam = Adam::new(&[table.as_tensor()]);
    for step in 0..steps {
        let tape = Tape::new();
        let alpha = tape.param(table.as_tensor().clone());
        let loss = iso_loss(alpha, &sample, iso)?;
        if !loss.item().is_finite() {
            return Err(Error::Divergence {
                step,
                message: format!("prior loss is {}", loss.item()),
            });
        }
        let grads = tape.backward(loss)?.params();
        let progress = step as f64 / steps.max(1) as f64;
        let lr = FIT_LR_START * (FIT_LR_END / FIT_LR_START).powf(progress);
        adam.update(vec![table.tensor_mut()], &grads, lr)?;
    }
    let loss = iso_loss_value(&table, &sample, iso)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: steps,
            message: format!("prior loss is {loss}"),
        });
    }
    Ok(AlphaFit {
        table,
        initial_loss,
        loss,
    })
}

/// Serializes history as JSON lines, one record per line.
pub fn history_to_string(history: &[MetricsRecord]) -> Result<String> {
    let mut out = String::new();
    for r in history {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Numeric(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_history(path: impl AsRef<Path>, history: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, history_to_string(history)?).map_err(|e| Error::io(path, e))
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::parse(path, e)))
        .collect()
}
