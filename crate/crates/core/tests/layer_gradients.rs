mod common;

use common::{random_graph, random_tensor, rng};
use isogcn::layers::{
    isoattn_layer, rgcn_layer, Aggregation, IsoAttnLayerParams, RelationOperators, RgcnLayerParams,
};
use isogcn::tensor::grad_check;
use isogcn::{Tensor, Var};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

/// Contracts an `n x d` output with a fixed random weight to get a scalar.
fn readout<'t>(out: Var<'t>, weights: &Tensor) -> isogcn::Result<Var<'t>> {
    out.mul(out.tape().constant(weights.clone()))?.sum()
}

#[test]
fn rgcn_kernels_match_finite_differences() {
    for (seed, aggregation) in [(1, Aggregation::Sum), (2, Aggregation::Mean)] {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 7, 3, 4, 16);
        let p = RgcnLayerParams::init(&mut r, 4, 5, 3, None).unwrap();
        let weights = random_tensor(&mut r, 7, 5);
        let ops = RelationOperators::new(&g, aggregation);
        let params: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        let report = grad_check(
            |tape, vars| {
                let bound = p.bind(&mut vars.iter().copied())?;
                let out = rgcn_layer(
                    &ops.record(tape),
                    tape.constant(g.features().clone()),
                    &bound,
                )?;
                readout(out, &weights)
            },
            &params,
            STEP,
        )
        .unwrap();
        assert_eq!(report.entries, 4 * 5 * 4);
        assert!(report.max_rel_error < TOL, "{report:?}");
    }
}

#[test]
fn basis_parameters_match_finite_differences() {
    let mut r = rng(3);
    let g = random_graph(&mut r, 7, 4, 3, 16);
    let p = RgcnLayerParams::init(&mut r, 3, 4, 4, Some(2)).unwrap();
    let weights = random_tensor(&mut r, 7, 4);
    let ops = RelationOperators::new(&g, Aggregation::Sum);
    let params: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
    // W0, V_0, V_1 and the coefficients a.
    assert_eq!(params.len(), 4);
    let report = grad_check(
        |tape, vars| {
            let bound = p.bind(&mut vars.iter().copied())?;
            let out = rgcn_layer(
                &ops.record(tape),
                tape.constant(g.features().clone()),
                &bound,
            )?;
            readout(out, &weights)
        },
        &params,
        STEP,
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn attention_layer_matches_finite_differences() {
    for heads in [1, 3] {
        let mut r = rng(10 + heads as u64);
        let g = random_graph(&mut r, 8, 3, 3, 18);
        let mut p = IsoAttnLayerParams::init(&mut r, 3, 2, 3, heads).unwrap();
        *p.attention.tensor_mut() = random_tensor(&mut r, 3, heads);
        let weights = random_tensor(&mut r, 8, 2 * heads);
        let ops = RelationOperators::new(&g, Aggregation::Sum);
        // W, α and W0.
        let params: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        let report = grad_check(
            |tape, vars| {
                let bound = p.bind(&mut vars.iter().copied())?;
                let out = isoattn_layer(
                    &ops.record(tape),
                    tape.constant(g.features().clone()),
                    &bound,
                )?;
                readout(out, &weights)
            },
            &params,
            STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "heads {heads}: {report:?}");
    }
}
