//! Truncated generalized advantage estimation.

/// Advantages for `rewards[0..N]` given `values[0..=N]` (the last entry
/// bootstraps the state after the final step; pass 0 for a terminal state).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1, "values must have one more entry than rewards");
    let n = rewards.len();
    let deltas: Vec<f64> = (0..n)
        .map(|i| rewards[i] + gamma * values[i + 1] - values[i])
        .collect();
    // direct weighted sum Â_n = Σ_{i≥n} (γλ)^{i−n} δ_i
    (0..n)
        .map(|t| {
            let mut w = 1.0;
            let mut acc = 0.0;
            for d in &deltas[t..] {
                acc += w * d;
                w *= gamma * lambda;
            }
            acc
        })
        .collect()
}

/// λ-returns `Â_n + V(s_n)` used as critic targets.
pub fn lambda_returns(advantages: &[f64], values: &[f64]) -> Vec<f64> {
    advantages.iter().zip(values).map(|(a, v)| a + v).collect()
}

/// Shifts and scales to zero mean and unit variance; constant input maps to zeros.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}
