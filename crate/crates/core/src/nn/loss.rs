//! Binary cross-entropy with prediction clamping.

/// Clamp bound applied to predictions before the log.
pub const BCE_EPS: f64 = 1e-7;

/// Mean of -[y ln p + (1-y) ln(1-p)] with p clamped to
/// [BCE_EPS, 1 - BCE_EPS]. Also returns dL/dp per prediction.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(predictions.len(), labels.len());
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; predictions.len()];
    for (i, (&p, &y)) in predictions.iter().zip(labels).enumerate() {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad[i] = (-y / p + (1.0 - y) / (1.0 - p)) / n;
    }
    (loss / n, grad)
}

/// Loss and gradient for a single prediction (batch helpers accumulate the
/// 1/n factor themselves).
pub fn bce_single(p: f64, y: f64) -> (f64, f64) {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let grad = -y / p + (1.0 - y) / (1.0 - p);
    (loss, grad)
}
