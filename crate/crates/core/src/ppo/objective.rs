//! Clipped surrogate and the composite per-sample objective with its
//! gradient with respect to the network outputs.

use crate::nn::{log_softmax, HeadOutputs, ALTITUDE_HEAD, SCHEDULE_HEAD, VALUE_HEAD};

/// min(r·A, clip(r, 1−ε, 1+ε)·A) with r = exp(new − old).
pub fn clip_objective(new_log_prob: f64, old_log_prob: f64, advantage: f64, epsilon: f64) -> f64 {
    let ratio = (new_log_prob - old_log_prob).exp();
    clip_from_ratio(ratio, advantage, epsilon)
}

pub(crate) fn clip_from_ratio(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Loss weights of the composite objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveWeights {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Terms of the composite objective for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleTerms {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratio: f64,
    pub new_log_prob: f64,
}

impl SampleTerms {
    pub fn objective(&self, w: &ObjectiveWeights) -> f64 {
        self.surrogate - w.value_coef * self.value_loss + w.entropy_coef * self.entropy
    }
}

pub struct SampleTarget {
    pub schedule: usize,
    pub altitude: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
}

fn entropy_and_grad(logp: &[f64]) -> (f64, Vec<f64>) {
    let h: f64 = logp.iter().map(|lp| -lp.exp() * lp).sum();
    // ∂H/∂z_k = −p_k (log p_k + H)
    let g = logp.iter().map(|lp| -lp.exp() * (lp + h)).collect();
    (h, g)
}

/// Evaluates the composite objective for one sample and, when `scale` is
/// non-zero, returns `scale · ∂objective/∂outputs` per head.
pub fn sample_objective(
    outputs: &HeadOutputs,
    target: &SampleTarget,
    w: &ObjectiveWeights,
    scale: f64,
) -> (SampleTerms, HeadOutputs) {
    let lp_s = log_softmax(&outputs[SCHEDULE_HEAD]);
    let lp_a = log_softmax(&outputs[ALTITUDE_HEAD]);
    let value = outputs[VALUE_HEAD][0];
    let new_log_prob = lp_s[target.schedule] + lp_a[target.altitude];
    let ratio = (new_log_prob - target.old_log_prob).exp();
    let surrogate = clip_from_ratio(ratio, target.advantage, w.clip_epsilon);
    let (h_s, dh_s) = entropy_and_grad(&lp_s);
    let (h_a, dh_a) = entropy_and_grad(&lp_a);
    let diff = value - target.value_target;
    let terms = SampleTerms {
        surrogate,
        value_loss: diff * diff,
        entropy: h_s + h_a,
        ratio,
        new_log_prob,
    };

    // unclipped branch active ⇒ ∂/∂logπ = r·A, otherwise the clipped branch is flat
    let d_logp = if ratio * target.advantage <= surrogate { ratio * target.advantage } else { 0.0 };
    let head_grad = |lp: &[f64], dh: &[f64], taken: usize| -> Vec<f64> {
        lp.iter()
            .zip(dh)
            .enumerate()
            .map(|(k, (l, d))| {
                let onehot = if k == taken { 1.0 } else { 0.0 };
                scale * (d_logp * (onehot - l.exp()) + w.entropy_coef * d)
            })
            .collect()
    };
    let grads = vec![
        head_grad(&lp_s, &dh_s, target.schedule),
        head_grad(&lp_a, &dh_a, target.altitude),
        vec![scale * (-2.0 * w.value_coef * diff)],
    ];
    (terms, grads)
}
