//! Forward pass and hand-derived reverse pass.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::batch::{Batch, SetBatch};
use super::params::{Dense, MscnParams, SetModule};
use super::{MscnError, Real};

/// Training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean q-error on denormalized cardinalities.
    #[default]
    QError,
    /// Mean squared error on normalized log labels.
    LogMse,
}

fn relu<F: Real>(mut a: Array2<F>) -> Array2<F> {
    a.mapv_inplace(|v| v.max(F::zero()));
    a
}

fn affine<F: Real>(x: &Array2<F>, layer: &Dense<F>) -> Array2<F> {
    x.dot(&layer.weight) + &layer.bias
}

struct SetCache<F> {
    hidden: Array2<F>,
    output: Array2<F>,
}

/// Shared MLP on every row, then masked mean per query. Empty sets pool to
/// zero.
fn set_forward<F: Real>(module: &SetModule<F>, set: &SetBatch<F>) -> (Array2<F>, SetCache<F>) {
    let hidden = relu(affine(&set.features, &module.hidden));
    let output = relu(affine(&hidden, &module.output));
    let h = output.ncols();
    let mut pooled = Array2::zeros((set.counts.len(), h));
    // f64 accumulation keeps f32 sums exact for any set order
    let mut acc = vec![0f64; h];
    for (b, &count) in set.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        acc.fill(0.0);
        for l in 0..set.max_len {
            let m = set.mask[[b, l]].to_f64().expect("finite");
            if m != 0.0 {
                for (a, v) in acc.iter_mut().zip(output.row(b * set.max_len + l)) {
                    *a += m * v.to_f64().expect("finite");
                }
            }
        }
        let denom = count as f64;
        for (p, a) in pooled.row_mut(b).iter_mut().zip(&acc) {
            *p = F::from_f64(a / denom).expect("finite");
        }
    }
    (pooled, SetCache { hidden, output })
}

fn dense_backward<F: Real>(x: &Array2<F>, dz: &Array2<F>, grad: &mut Dense<F>) {
    grad.weight += &x.t().dot(dz);
    grad.bias += &dz.sum_axis(Axis(0));
}

fn relu_backward<F: Real>(mut grad: Array2<F>, activation: &Array2<F>) -> Array2<F> {
    ndarray::Zip::from(&mut grad).and(activation).for_each(|g, &a| {
        if a <= F::zero() {
            *g = F::zero();
        }
    });
    grad
}

fn set_backward<F: Real>(
    module: &SetModule<F>,
    set: &SetBatch<F>,
    cache: &SetCache<F>,
    d_pooled: Array2<F>,
    grad: &mut SetModule<F>,
) {
    let h = cache.output.ncols();
    let mut d_output = Array2::zeros((set.counts.len() * set.max_len, h));
    for (b, &count) in set.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let denom = F::from_usize(count).expect("count");
        for l in 0..set.max_len {
            let m = set.mask[[b, l]];
            if m != F::zero() {
                d_output
                    .row_mut(b * set.max_len + l)
                    .scaled_add(m / denom, &d_pooled.row(b));
            }
        }
    }
    let dz2 = relu_backward(d_output, &cache.output);
    dense_backward(&cache.hidden, &dz2, &mut grad.output);
    let dz1 = relu_backward(dz2.dot(&module.output.weight.t()), &cache.hidden);
    dense_backward(&set.features, &dz1, &mut grad.hidden);
}

/// Intermediate values of a forward pass, kept for the reverse pass.
pub struct Forward<F> {
    tables: SetCache<F>,
    joins: SetCache<F>,
    predicates: SetCache<F>,
    merged_in: Array2<F>,
    merged: Array2<F>,
    /// Sigmoid outputs, one per query.
    pub predictions: Array1<F>,
}

pub fn forward<F: Real>(params: &MscnParams<F>, batch: &Batch<F>) -> Result<Forward<F>, MscnError> {
    check_shapes(params, batch)?;
    let (pt, tables) = set_forward(&params.tables, &batch.tables);
    let (pj, joins) = set_forward(&params.joins, &batch.joins);
    let (pp, predicates) = set_forward(&params.predicates, &batch.predicates);
    let merged_in = ndarray::concatenate(Axis(1), &[pt.view(), pj.view(), pp.view()]).expect("same batch size");
    let merged = relu(affine(&merged_in, &params.merge));
    let logits = affine(&merged, &params.head);
    let predictions = logits.column(0).mapv(|z| F::one() / (F::one() + (-z).exp()));
    if predictions.iter().any(|v| !v.is_finite()) {
        return Err(MscnError::NonFiniteValue("prediction".into()));
    }
    Ok(Forward {
        tables,
        joins,
        predicates,
        merged_in,
        merged,
        predictions,
    })
}

fn check_shapes<F: Real>(params: &MscnParams<F>, batch: &Batch<F>) -> Result<(), MscnError> {
    let pairs = [
        ("table", &params.tables, &batch.tables),
        ("join", &params.joins, &batch.joins),
        ("predicate", &params.predicates, &batch.predicates),
    ];
    for (name, module, set) in pairs {
        if module.hidden.inputs() != set.features.ncols() {
            return Err(MscnError::ShapeMismatch(format!(
                "{name} features have width {}, network expects {}",
                set.features.ncols(),
                module.hidden.inputs()
            )));
        }
        if set.counts.len() != batch.tables.counts.len() {
            return Err(MscnError::ShapeMismatch(format!(
                "{name} set has a different batch size"
            )));
        }
    }
    Ok(())
}

/// Pooled output of a single set module, exposed for tests of the pooling
/// semantics.
pub fn set_module_forward<F: Real>(module: &SetModule<F>, set: &SetBatch<F>) -> Result<Array2<F>, MscnError> {
    if module.hidden.inputs() != set.features.ncols() {
        return Err(MscnError::ShapeMismatch(format!(
            "features have width {}, module expects {}",
            set.features.ncols(),
            module.hidden.inputs()
        )));
    }
    Ok(set_forward(module, set).0)
}

/// Reverse pass from the gradient of the loss w.r.t. each query's logit.
fn backward<F: Real>(params: &MscnParams<F>, batch: &Batch<F>, fw: &Forward<F>, d_logits: Array1<F>) -> MscnParams<F> {
    let mut grad = MscnParams::zeros(params.shape());
    let h = params.merge.outputs();
    let dz4 = d_logits.insert_axis(Axis(1));
    dense_backward(&fw.merged, &dz4, &mut grad.head);
    let dz3 = relu_backward(dz4.dot(&params.head.weight.t()), &fw.merged);
    dense_backward(&fw.merged_in, &dz3, &mut grad.merge);
    let d_in = dz3.dot(&params.merge.weight.t());
    set_backward(
        &params.tables,
        &batch.tables,
        &fw.tables,
        d_in.slice(s![.., 0..h]).to_owned(),
        &mut grad.tables,
    );
    set_backward(
        &params.joins,
        &batch.joins,
        &fw.joins,
        d_in.slice(s![.., h..2 * h]).to_owned(),
        &mut grad.joins,
    );
    set_backward(
        &params.predicates,
        &batch.predicates,
        &fw.predicates,
        d_in.slice(s![.., 2 * h..3 * h]).to_owned(),
        &mut grad.predicates,
    );
    grad
}

/// `max(est/truth, truth/est)` with both operands clamped to at least
/// `floor`.
pub fn qerror(estimate: f64, truth: f64, floor: f64) -> f64 {
    let e = estimate.max(floor);
    let t = truth.max(floor);
    if e > t {
        e / t
    } else {
        t / e
    }
}

/// Loss settings shared by [`loss_and_grads`] and evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub label_log_max: f64,
    pub floor: f64,
}

/// Mean loss, mean q-error and the gradient of the mean loss w.r.t. the
/// logits.
fn loss_terms<F: Real>(predictions: &Array1<F>, labels: &[F], cards: &[f64], spec: &LossSpec) -> (f64, f64, Array1<F>) {
    let n = predictions.len();
    let inv_n = F::one() / F::from_usize(n).expect("batch size");
    let l = F::from_f64(spec.label_log_max).expect("finite");
    let floor = F::from_f64(spec.floor).expect("finite");
    let mut total = 0.0;
    let mut qsum = 0.0;
    let mut d = Array1::zeros(n);
    for i in 0..n {
        let y = predictions[i];
        let y64 = y.to_f64().expect("finite");
        qsum += qerror((y64 * spec.label_log_max).exp_m1(), cards[i], spec.floor);
        let dy_dz = y * (F::one() - y);
        match spec.kind {
            LossKind::QError => {
                let est = (y * l).exp_m1().max(F::zero());
                let truth = F::from_f64(cards[i]).expect("finite").max(floor);
                let e = est.max(floor);
                let (q, dq_de) = if e > truth {
                    (e / truth, F::one() / truth)
                } else if e < truth {
                    (truth / e, -truth / (e * e))
                } else {
                    (F::one(), F::zero())
                };
                let de_dest = if est > floor { F::one() } else { F::zero() };
                let dest_dy = l * (y * l).exp();
                total += q.to_f64().expect("finite");
                d[i] = inv_n * dq_de * de_dest * dest_dy * dy_dz;
            }
            LossKind::LogMse => {
                let diff = y - labels[i];
                total += (diff * diff).to_f64().expect("finite");
                d[i] = inv_n * (diff + diff) * dy_dz;
            }
        }
    }
    (total / n as f64, qsum / n as f64, d)
}

/// Mean loss over the batch and its gradient w.r.t. every parameter.
/// `labels` are normalized, `cards` the raw cardinalities.
pub fn loss_and_grads<F: Real>(
    params: &MscnParams<F>,
    batch: &Batch<F>,
    labels: &[F],
    cards: &[f64],
    spec: &LossSpec,
) -> Result<(f64, MscnParams<F>), MscnError> {
    let (loss, _, grads) = train_step(params, batch, labels, cards, spec)?;
    Ok((loss, grads))
}

/// [`loss_and_grads`] that also reports the batch mean q-error.
pub(super) fn train_step<F: Real>(
    params: &MscnParams<F>,
    batch: &Batch<F>,
    labels: &[F],
    cards: &[f64],
    spec: &LossSpec,
) -> Result<(f64, f64, MscnParams<F>), MscnError> {
    if labels.len() != batch.len() || cards.len() != batch.len() {
        return Err(MscnError::ShapeMismatch("label count differs from batch size".into()));
    }
    let fw = forward(params, batch)?;
    let (loss, mean_q, d_logits) = loss_terms(&fw.predictions, labels, cards, spec);
    if !loss.is_finite() {
        return Err(MscnError::NonFiniteValue("loss".into()));
    }
    Ok((loss, mean_q, backward(params, batch, &fw, d_logits)))
}

/// Loss only, for evaluation and finite differences.
pub fn loss<F: Real>(
    params: &MscnParams<F>,
    batch: &Batch<F>,
    labels: &[F],
    cards: &[f64],
    spec: &LossSpec,
) -> Result<f64, MscnError> {
    let fw = forward(params, batch)?;
    Ok(loss_terms(&fw.predictions, labels, cards, spec).0)
}
