use ndarray::{Array2, Axis};

use super::forward::{standard, ForwardTrace, LayerRecord};
use super::matrix::DenseMatrix;
use super::model::{Activation, ModelKind, ModelParams};
use crate::error::{Error, Result};

fn check_record(rec: &LayerRecord, weight: &Array2<f64>, layer: usize) -> Result<()> {
    if rec.input.ncols() != weight.nrows() || rec.pre.ncols() != weight.ncols() {
        return Err(Error::State(format!(
            "trace layer {layer} does not match parameter shape {:?}",
            weight.dim()
        )));
    }
    Ok(())
}

fn activation_grad(act: Activation, upstream: &Array2<f64>, rec: &LayerRecord) -> Array2<f64> {
    let mut g = upstream.clone();
    ndarray::Zip::from(&mut g)
        .and(&rec.pre)
        .and(&rec.act)
        .for_each(|g, &z, &a| *g *= act.derivative(z, a));
    g
}

fn accumulate(grads: &mut ModelParams, layer: usize, input: &Array2<f64>, delta: &Array2<f64>) {
    let dw = standard(input.t().dot(delta));
    let db = delta.sum_axis(Axis(0));
    let target = &mut grads.layers_mut()[layer];
    for (g, v) in target.weight.values_mut().iter_mut().zip(dw.iter()) {
        *g += v;
    }
    for (g, v) in target.bias.iter_mut().zip(db.iter()) {
        *g += v;
    }
}

/// Reverse-mode gradients of `sum(logit_grad ⊙ logits)` with respect to every
/// weight and bias, i.e. the parameter gradient of any loss whose gradient
/// with respect to the logits is `logit_grad`.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    logit_grad: &DenseMatrix,
) -> Result<ModelParams> {
    let spec = params.spec();
    if trace.kind != spec.model_kind || trace.activation != spec.activation {
        return Err(Error::State("trace was produced by a different model".into()));
    }
    if trace.depth() != params.layers().len() {
        return Err(Error::State(format!(
            "trace depth {} but model has {} layers",
            trace.depth(),
            params.layers().len()
        )));
    }
    if logit_grad.shape() != trace.logits().shape() {
        return Err(Error::Dimension(format!(
            "logit gradient {:?} does not match logits {:?}",
            logit_grad.shape(),
            trace.logits().shape()
        )));
    }
    let act = spec.activation;
    let mut grads = params.zeros_like();
    let upstream = logit_grad.as_array();
    match trace.kind {
        ModelKind::Mlp => {
            let mut delta = upstream.clone();
            for l in (0..trace.dense.len()).rev() {
                let rec = &trace.dense[l];
                let weight = params.weight_array(l);
                check_record(rec, weight, l)?;
                accumulate(&mut grads, l, &rec.input, &delta);
                if l > 0 {
                    let da = standard(delta.dot(&weight.t()));
                    delta = activation_grad(act, &da, &trace.dense[l - 1]);
                }
            }
        }
        ModelKind::Gcn => {
            let out_index = params.layers().len() - 1;
            let out_rec = &trace.dense[0];
            let out_weight = params.weight_array(out_index);
            check_record(out_rec, out_weight, out_index)?;
            accumulate(&mut grads, out_index, &out_rec.input, upstream);
            let d_pooled = standard(upstream.dot(&out_weight.t()));
            for (gi, g) in trace.graphs.iter().enumerate() {
                let nodes = g.adjacency.nrows();
                let row = d_pooled.row(gi).mapv(|v| v / nodes as f64);
                let mut da = Array2::from_shape_fn((nodes, row.len()), |(_, j)| row[j]);
                for l in (0..g.convs.len()).rev() {
                    let rec = &g.convs[l];
                    let weight = params.weight_array(l);
                    check_record(rec, weight, l)?;
                    let dz = activation_grad(act, &da, rec);
                    accumulate(&mut grads, l, &rec.input, &dz);
                    if l > 0 {
                        // Â is symmetric, so Âᵀ = Â.
                        da = standard(g.adjacency.dot(&dz.dot(&weight.t())));
                    }
                }
            }
        }
    }
    Ok(grads)
}
