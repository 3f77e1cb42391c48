//! Adaptive moment estimation over lists of parameter tensors.

use crate::linalg::Matrix;

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update. `params` and `grads` must list tensors in the same
    /// order on every call.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: Vec<&Matrix>) {
        assert_eq!(params.len(), grads.len());
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.data().len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (slot, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: Vec<&mut Matrix>, max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.squared_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads {
            g.scale(s);
        }
    }
    norm
}
