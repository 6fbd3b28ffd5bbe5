use crate::error::{Error, Result};
use crate::nn::tape;

/// Probabilities are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Input("softmax of an empty vector".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax logit {bad}")));
    }
    let mut out = vec![0.0; logits.len()];
    tape::softmax_into(logits, &mut out);
    Ok(out)
}

/// `H(x, y) = -[y ln x + (1 - y) ln(1 - x)]` with `x` clamped.
pub fn bce(x: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Input(format!("BCE target must be 0 or 1, got {y}")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("BCE probability {x}")));
    }
    Ok(tape::bce(x, y, BCE_CLAMP))
}

/// `dH/dx`; zero where the clamp is active.
pub fn bce_grad(x: f64, y: f64) -> Result<f64> {
    bce(x, y)?;
    Ok(tape::bce_grad(x, y, BCE_CLAMP))
}

pub fn sigmoid(x: f64) -> f64 {
    tape::sigmoid(x)
}
