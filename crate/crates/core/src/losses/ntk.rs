//! Loss-term balancing from approximate Neural Tangent Kernel traces.
//!
//! The trace of term k's kernel block is estimated by the squared norm of
//! the term's parameter gradient, averaged over its evaluation points.

use super::scaling::LossWeights;

/// Mean over points of `‖∂r/∂θ‖²`. Each entry of `per_point` is the full
/// parameter gradient of one residual.
pub fn trace_estimate(per_point: &[Vec<f64>]) -> f64 {
    if per_point.is_empty() {
        return 0.0;
    }
    let total: f64 = per_point
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum();
    total / per_point.len() as f64
}

/// New weights `ω_k ∝ (Σ_j tr_j) / tr_k`, scaled so the weights have mean 1.
///
/// Terms whose trace is zero or not finite keep their previous weight; the
/// remaining terms share what is left of the total `n`.
pub fn adapt_weights_ntk(traces: &[f64], previous: &[f64]) -> Vec<f64> {
    assert_eq!(traces.len(), previous.len());
    let usable = |t: f64| t > 0.0 && t.is_finite();
    let total: f64 = traces.iter().copied().filter(|t| usable(*t)).sum();
    let raw: Vec<Option<f64>> = traces
        .iter()
        .map(|&t| usable(t).then(|| total / t))
        .collect();
    let raw_sum: f64 = raw.iter().flatten().sum();
    let kept: f64 = raw
        .iter()
        .zip(previous)
        .filter(|(r, _)| r.is_none())
        .map(|(_, p)| p)
        .sum();
    let budget = traces.len() as f64 - kept;
    if raw_sum == 0.0 || budget <= 0.0 {
        return previous.to_vec();
    }
    raw.iter()
        .zip(previous)
        .map(|(r, p)| r.map_or(*p, |r| r / raw_sum * budget))
        .collect()
}

/// Exponential smoothing `α·old + (1 − α)·new`.
pub fn smooth(previous: &[f64], target: &[f64], alpha: f64) -> Vec<f64> {
    previous
        .iter()
        .zip(target)
        .map(|(p, t)| alpha * p + (1.0 - alpha) * t)
        .collect()
}

/// Convenience for the seven weights of the full model.
pub fn adapt_loss_weights(traces: [f64; 7], previous: &LossWeights, alpha: f64) -> LossWeights {
    let prev = previous.as_array();
    let target = adapt_weights_ntk(&traces, &prev);
    let w = smooth(&prev, &target, alpha);
    LossWeights::from_array(std::array::from_fn(|k| w[k]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn equal_traces_give_unit_weights() {
        let w = adapt_weights_ntk(&[2.5; 7], &[0.3, 2.0, 1.0, 1.0, 1.0, 0.7, 1.0]);
        assert!(close(&w, &[1.0; 7]));
    }

    #[test]
    fn two_term_hand_normalization() {
        let w = adapt_weights_ntk(&[1.0, 4.0], &[1.0, 1.0]);
        assert!(close(&w, &[1.6, 0.4]), "{w:?}");
    }

    #[test]
    fn largest_trace_gets_smallest_weight() {
        let w = adapt_weights_ntk(&[1.0, 100.0, 1.0, 1.0], &[1.0; 4]);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(w[1], min);
        assert!((w.iter().sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_keeps_previous_weight() {
        let w = adapt_weights_ntk(&[1.0, 0.0, 4.0], &[1.0, 0.5, 1.5]);
        assert_eq!(w[1], 0.5);
        assert!((w.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!((w[0] / w[2] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn trace_of_per_point_gradients() {
        let t = trace_estimate(&[vec![1.0, 2.0], vec![0.0, 3.0]]);
        assert_eq!(t, (5.0 + 9.0) / 2.0);
        assert_eq!(trace_estimate(&[]), 0.0);
    }

    #[test]
    fn smoothing_preserves_mean() {
        let prev = LossWeights::default();
        let w = adapt_loss_weights([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &prev, 0.5);
        let mean = w.as_array().iter().sum::<f64>() / 7.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }
}
