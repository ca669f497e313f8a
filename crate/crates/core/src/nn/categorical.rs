use rand::Rng as _;

use crate::seeding::Rng;

/// Max-shifted log Σ exp.
pub fn logsumexp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn categorical_entropy(logits: &[f64]) -> f64 {
    log_softmax(logits)
        .into_iter()
        .map(|lp| if lp.is_finite() { -lp.exp() * lp } else { 0.0 })
        .sum()
}

/// Draws an index from softmax(logits); returns it with its log-probability.
pub fn categorical_sample(logits: &[f64], rng: &mut Rng) -> (usize, f64) {
    let logp = log_softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = logp.len() - 1;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            chosen = i;
            break;
        }
    }
    // the fallback index can carry ~zero mass after rounding; pick the last
    // index with support instead
    if !logp[chosen].is_finite() || logp[chosen] < -700.0 {
        chosen = logp
            .iter()
            .rposition(|lp| *lp > -700.0)
            .unwrap_or(chosen);
    }
    (chosen, logp[chosen])
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
