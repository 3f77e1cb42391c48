use crate::{Error, Result};

/// Relaxed categorical sample
/// `y_i = exp((ln pi_i + g_i) / gamma) / sum_j exp((ln pi_j + g_j) / gamma)`.
pub fn gumbel_softmax_sample(pi: &[f64], g: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {gamma}")));
    }
    if pi.len() != g.len() || pi.is_empty() {
        return Err(Error::invalid("probability and noise vectors differ in length"));
    }
    if let Some(p) = pi.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("class probability {p} is not positive")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("class probabilities sum to {total}")));
    }
    let mut y: Vec<f64> = pi
        .iter()
        .zip(g)
        .map(|(p, n)| (p.ln() + n) / gamma)
        .collect();
    crate::linalg::softmax_in_place(&mut y);
    Ok(y)
}
