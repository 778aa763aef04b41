//! Line-oriented text format for trained parameters.
//!
//! ```text
//! isogcn-params v1
//! model <kind> aggregation <sum|mean>
//! layer isoattn                      (kernel, attention, self kernel follow)
//! layer rgcn per-relation <R>        (self kernel, then R kernels)
//! layer rgcn basis <R> <B>           (self kernel, B bases, coefficients)
//! readout
//! bias
//! ```
//! Each tensor is a `tensor <dims...>` line followed by one line of values.
//! Values use the shortest representation that reads back exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{
    Aggregation, AttentionTable, BasisParams, IsoAttnLayerParams, RelationKernels, RgcnLayerParams,
};
use crate::tensor::Tensor;

use super::model::{LayerParams, ModelKind, ModelParams};

pub const PARAMS_HEADER: &str = "isogcn-params v1";

fn push_tensor(out: &mut String, t: &Tensor) {
    let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
    out.push_str("tensor ");
    out.push_str(&dims.join(" "));
    out.push('\n');
    let values: Vec<String> = t.data().iter().map(f64::to_string).collect();
    out.push_str(&values.join(" "));
    out.push('\n');
}

fn aggregation_name(a: Aggregation) -> &'static str {
    match a {
        Aggregation::Sum => "sum",
        Aggregation::Mean => "mean",
    }
}

pub fn params_to_string(p: &ModelParams) -> String {
    let mut out = format!(
        "{PARAMS_HEADER}\nmodel {} aggregation {}\n",
        p.kind,
        aggregation_name(p.aggregation)
    );
    for layer in &p.layers {
        match layer {
            LayerParams::IsoAttn(_) => out.push_str("layer isoattn\n"),
            LayerParams::Rgcn(l) => match &l.kernels {
                RelationKernels::PerRelation(ws) => {
                    out.push_str(&format!("layer rgcn per-relation {}\n", ws.len()))
                }
                RelationKernels::Basis(b) => out.push_str(&format!(
                    "layer rgcn basis {} {}\n",
                    l.num_relations(),
                    b.bases.len()
                )),
            },
        }
        for t in layer.tensors() {
            push_tensor(&mut out, t);
        }
    }
    out.push_str("readout\n");
    push_tensor(&mut out, &p.readout);
    out.push_str("bias\n");
    push_tensor(&mut out, &p.bias);
    out
}

pub fn save_params(path: impl AsRef<Path>, p: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, params_to_string(p)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_params(&text).map_err(|message| Error::parse(path, message))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, String> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    if !l.trim().is_empty() {
                        return Ok(l.trim());
                    }
                }
                None => return Err("unexpected end of file".into()),
            }
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> String {
        format!("line {}: {msg}", self.line)
    }

    fn tensor(&mut self) -> Result<Tensor, String> {
        let head = self.next()?;
        let dims = head
            .strip_prefix("tensor")
            .ok_or_else(|| self.err(format!("expected a tensor header, found {head:?}")))?;
        let shape = dims
            .split_whitespace()
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|e| self.err(format!("bad dimension {d:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let values = self
            .next()?
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| self.err(format!("bad value {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tensor::new(shape, values).map_err(|e| self.err(e))
    }

    fn expect(&mut self, word: &str) -> Result<(), String> {
        let l = self.next()?;
        if l == word {
            Ok(())
        } else {
            Err(self.err(format!("expected {word:?}, found {l:?}")))
        }
    }
}

fn parse_params(text: &str) -> Result<ModelParams, String> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next()?;
    if header != PARAMS_HEADER {
        return Err(lines.err(format!("unsupported header {header:?}")));
    }
    let model_line: Vec<&str> = lines.next()?.split_whitespace().collect();
    let (kind, aggregation) = match model_line.as_slice() {
        ["model", kind, "aggregation", agg] => {
            let kind: ModelKind = kind.parse().map_err(|e| lines.err(e))?;
            let agg = match *agg {
                "sum" => Aggregation::Sum,
                "mean" => Aggregation::Mean,
                other => return Err(lines.err(format!("unknown aggregation {other:?}"))),
            };
            (kind, agg)
        }
        _ => return Err(lines.err("expected `model <kind> aggregation <sum|mean>`")),
    };

    let mut layers = Vec::new();
    let readout = loop {
        let l = lines.next()?;
        let words: Vec<&str> = l.split_whitespace().collect();
        match words.as_slice() {
            ["readout"] => break lines.tensor()?,
            ["layer", "isoattn"] => {
                let kernel = lines.tensor()?;
                let attention = AttentionTable::new(lines.tensor()?).map_err(|e| lines.err(e))?;
                let self_kernel = lines.tensor()?;
                layers.push(LayerParams::IsoAttn(IsoAttnLayerParams {
                    kernel,
                    attention,
                    self_kernel,
                }));
            }
            ["layer", "rgcn", "per-relation", r] => {
                let r: usize = r.parse().map_err(|e| lines.err(e))?;
                let self_kernel = lines.tensor()?;
                let kernels = (0..r)
                    .map(|_| lines.tensor())
                    .collect::<Result<Vec<_>, _>>()?;
                layers.push(LayerParams::Rgcn(RgcnLayerParams {
                    self_kernel,
                    kernels: RelationKernels::PerRelation(kernels),
                    relation_scale: vec![1.0; r],
                }));
            }
            ["layer", "rgcn", "basis", r, b] => {
                let r: usize = r.parse().map_err(|e| lines.err(e))?;
                let b: usize = b.parse().map_err(|e| lines.err(e))?;
                let self_kernel = lines.tensor()?;
                let bases = (0..b)
                    .map(|_| lines.tensor())
                    .collect::<Result<Vec<_>, _>>()?;
                let coefficients = lines.tensor()?;
                layers.push(LayerParams::Rgcn(RgcnLayerParams {
                    self_kernel,
                    kernels: RelationKernels::Basis(BasisParams {
                        bases,
                        coefficients,
                    }),
                    relation_scale: vec![1.0; r],
                }));
            }
            _ => return Err(lines.err(format!("unexpected line {l:?}"))),
        }
    };
    lines.expect("bias")?;
    let bias = lines.tensor()?;
    if layers.is_empty() {
        return Err("model has no layers".into());
    }
    let consistent = layers
        .iter()
        .all(|l| matches!(l, LayerParams::IsoAttn(_)) == kind.uses_attention());
    if !consistent {
        return Err(format!("layer types do not match model kind {kind}"));
    }
    let width = layers.last().map(LayerParams::d_out).unwrap_or(0);
    if readout.shape() != [width, 1] || bias.shape() != [1, 1] {
        return Err(format!(
            "readout {:?} / bias {:?} do not fit width {width}",
            readout.shape(),
            bias.shape()
        ));
    }
    Ok(ModelParams {
        kind,
        aggregation,
        layers,
        readout,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::model::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(kind: ModelKind, bases: Option<usize>, aggregation: Aggregation) -> Architecture {
        Architecture {
            kind,
            layers: 2,
            d_msg: 3,
            heads: 2,
            bases,
            aggregation,
        }
    }

    #[test]
    fn round_trip_is_exact_for_every_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for a in [
            arch(ModelKind::BaselineRgcn, None, Aggregation::Sum),
            arch(ModelKind::BaselineRgcn, Some(2), Aggregation::Mean),
            arch(ModelKind::IsoGcnUnscaled, None, Aggregation::Sum),
            arch(ModelKind::IsoGcnScaled, None, Aggregation::Mean),
        ] {
            let p = ModelParams::init(&mut rng, &a, 4, 3).unwrap();
            let text = params_to_string(&p);
            assert_eq!(parse_params(&text).unwrap(), p);
            assert_eq!(params_to_string(&parse_params(&text).unwrap()), text);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init(
            &mut rng,
            &arch(ModelKind::IsoGcnScaled, None, Aggregation::Sum),
            2,
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        save_params(&path, &p).unwrap();
        assert_eq!(load_params(&path).unwrap(), p);

        let text = params_to_string(&p);
        assert!(parse_params(&text.replacen("v1", "v9", 1)).is_err());
        assert!(parse_params(&text.replacen("iso-gcn-scaled", "baseline-rgcn", 1)).is_err());
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(parse_params(&truncated).is_err());
        std::fs::write(&path, "isogcn-params v1\nmodel nope aggregation sum\n").unwrap();
        assert!(matches!(load_params(&path), Err(Error::Parse { .. })));
    }
}
