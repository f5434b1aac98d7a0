//! Multiclass negative log likelihood over sampled candidate tails, with an
//! Lp penalty on the positive triple's rows.
//!
//! For a positive (h, r, t) with sampled corruption tails t'₁..t'ₙ, the
//! candidate set is {t, t'₁..t'ₙ} and the per-example loss is
//! `-log softmax(s_t)` over candidate scores `s_w = -‖h + r − w‖_p`, plus
//! `λ·(‖h‖_q^q + ‖r‖_q^q + ‖t‖_q^q)` with q the regularizer order. The batch
//! loss is the mean over examples, so uniform scores over n candidates give
//! exactly ln(n).

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::embed::{EmbeddingModel, Norm, TrainingConfig};

/// One positive triple with its sampled corruption tails, all as model rows.
#[derive(Debug, Clone)]
pub struct Example {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub negative_tails: Vec<usize>,
}

/// A batch of positive triples with sampled candidate tails.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub examples: Vec<Example>,
}

/// Sparse gradients keyed by model row. BTreeMap keeps update order
/// deterministic.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub entity: BTreeMap<usize, Vec<f64>>,
    pub relation: BTreeMap<usize, Vec<f64>>,
}

impl Gradients {
    fn merge(&mut self, other: Gradients, dim: usize) {
        for (row, g) in other.entity {
            add_into(self.entity.entry(row).or_insert_with(|| vec![0.0; dim]), &g);
        }
        for (row, g) in other.relation {
            add_into(self.relation.entry(row).or_insert_with(|| vec![0.0; dim]), &g);
        }
    }

    fn scale(&mut self, factor: f64) {
        for g in self.entity.values_mut().chain(self.relation.values_mut()) {
            for x in g {
                *x *= factor;
            }
        }
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Examples per parallel work unit. Fixed so that the merge order, and hence
/// every floating-point sum, is identical for any thread count.
const CHUNK: usize = 64;

/// Mean NLL + regularizer over the batch, with analytic gradients for every
/// touched row.
pub fn loss_and_gradient(
    model: &EmbeddingModel,
    batch: &Batch,
    config: &TrainingConfig,
) -> (f64, Gradients) {
    if batch.examples.is_empty() {
        return (0.0, Gradients::default());
    }
    let partials: Vec<(f64, Gradients)> = batch
        .examples
        .par_chunks(CHUNK)
        .map(|chunk| accumulate(model, chunk, config))
        .collect();

    let dim = model.dim();
    let mut total = 0.0;
    let mut grads = Gradients::default();
    for (loss, partial) in partials {
        total += loss;
        grads.merge(partial, dim);
    }
    let scale = 1.0 / batch.examples.len() as f64;
    grads.scale(scale);
    (total * scale, grads)
}

fn accumulate(model: &EmbeddingModel, chunk: &[Example], config: &TrainingConfig) -> (f64, Gradients) {
    let dim = model.dim();
    let mut loss = 0.0;
    let mut grads = Gradients::default();

    let mut diffs: Vec<Vec<f64>> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();

    for ex in chunk {
        let h = to_f64(model.entity_slice(ex.head));
        let r = to_f64(model.relation_slice(ex.relation));

        diffs.clear();
        scores.clear();
        let candidates: Vec<usize> =
            std::iter::once(ex.tail).chain(ex.negative_tails.iter().copied()).collect();
        for &w in &candidates {
            let wv = model.entity_slice(w);
            let diff: Vec<f64> =
                (0..dim).map(|i| h[i] + r[i] - wv[i] as f64).collect();
            scores.push(-model.norm().apply(&diff));
            diffs.push(diff);
        }

        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        loss += lse - scores[0];

        for (ci, &w) in candidates.iter().enumerate() {
            let q = (scores[ci] - lse).exp();
            let coeff = q - if ci == 0 { 1.0 } else { 0.0 };
            if coeff == 0.0 {
                continue;
            }
            // ds/d(diff) per norm; d(diff)/dh = d(diff)/dr = I, d(diff)/dw = -I.
            let direction: Vec<f64> = match model.norm() {
                Norm::L1 => diffs[ci].iter().map(|d| -d.signum()).collect(),
                Norm::L2 => {
                    let n = -scores[ci];
                    if n < 1e-12 {
                        vec![0.0; dim]
                    } else {
                        diffs[ci].iter().map(|d| -d / n).collect()
                    }
                }
            };
            let gh = grads.entity.entry(ex.head).or_insert_with(|| vec![0.0; dim]);
            for i in 0..dim {
                gh[i] += coeff * direction[i];
            }
            let gr = grads.relation.entry(ex.relation).or_insert_with(|| vec![0.0; dim]);
            for i in 0..dim {
                gr[i] += coeff * direction[i];
            }
            let gw = grads.entity.entry(w).or_insert_with(|| vec![0.0; dim]);
            for i in 0..dim {
                gw[i] -= coeff * direction[i];
            }
        }

        // Lp penalty on the positive triple's rows.
        let lambda = config.regularizer_weight;
        if lambda > 0.0 {
            let p = config.regularizer_order as f64;
            let t = to_f64(model.entity_slice(ex.tail));
            for x in h.iter().chain(r.iter()).chain(t.iter()) {
                loss += lambda * x.abs().powf(p);
            }
            let penalty_grad = |g: &mut [f64], vec: &[f64]| {
                for i in 0..dim {
                    g[i] += lambda * p * vec[i].abs().powf(p - 1.0) * vec[i].signum();
                }
            };
            penalty_grad(grads.entity.entry(ex.head).or_insert_with(|| vec![0.0; dim]), &h);
            penalty_grad(grads.relation.entry(ex.relation).or_insert_with(|| vec![0.0; dim]), &r);
            penalty_grad(grads.entity.entry(ex.tail).or_insert_with(|| vec![0.0; dim]), &t);
        }
    }
    (loss, grads)
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}
