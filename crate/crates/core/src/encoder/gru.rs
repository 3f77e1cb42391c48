//! Gated recurrent unit cell.
//!
//! ```text
//! z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//! h_t = (1 - z_t) * h_{t-1} + z_t * tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
//! ```

use rand::Rng;

use crate::linalg::{sigmoid, Matrix};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_h: Matrix,
}

pub(crate) const GRU_TENSOR_NAMES: [&str; 9] =
    ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        Self {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        p.w_z = Matrix::uniform_fan_in(hidden_dim, input_dim, rng);
        p.w_r = Matrix::uniform_fan_in(hidden_dim, input_dim, rng);
        p.w_h = Matrix::uniform_fan_in(hidden_dim, input_dim, rng);
        p.u_z = Matrix::uniform_fan_in(hidden_dim, hidden_dim, rng);
        p.u_r = Matrix::uniform_fan_in(hidden_dim, hidden_dim, rng);
        p.u_h = Matrix::uniform_fan_in(hidden_dim, hidden_dim, rng);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn tensors(&self) -> [&Matrix; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z,
            &self.b_r, &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    /// Checks that all shapes agree and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let ok = [&self.w_z, &self.w_r, &self.w_h]
            .iter()
            .all(|m| m.shape() == (h, i))
            && [&self.u_z, &self.u_r, &self.u_h]
                .iter()
                .all(|m| m.shape() == (h, h))
            && [&self.b_z, &self.b_r, &self.b_h]
                .iter()
                .all(|m| m.shape() == (h, 1));
        if !ok {
            return Err(Error::invalid("inconsistent GRU parameter shapes"));
        }
        if !self.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::Numerical("non-finite GRU parameter".into()));
        }
        Ok(())
    }
}

/// One recurrence step, checked.
pub fn gru_step(params: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.input_dim() || h_prev.len() != params.hidden_dim() {
        return Err(Error::invalid(format!(
            "gru_step expects input {} / hidden {}, got {} / {}",
            params.input_dim(),
            params.hidden_dim(),
            x.len(),
            h_prev.len()
        )));
    }
    Ok(forward_step(params, x, h_prev).h)
}

/// Gate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct StepCache {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn forward_step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> StepCache {
    let hd = p.hidden_dim();
    let mut z = p.b_z.data().to_vec();
    p.w_z.add_matvec(x, &mut z);
    p.u_z.add_matvec(h_prev, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = p.b_r.data().to_vec();
    p.w_r.add_matvec(x, &mut r);
    p.u_r.add_matvec(h_prev, &mut r);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut n = p.b_h.data().to_vec();
    p.w_h.add_matvec(x, &mut n);
    p.u_h.add_matvec(&rh, &mut n);
    n.iter_mut().for_each(|v| *v = v.tanh());

    let h = (0..hd)
        .map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * n[j])
        .collect();
    StepCache { z, r, n, h }
}

/// Accumulates parameter gradients for one step and adds the input and
/// previous-state gradients into `dx` / `dh_prev`.
pub(crate) fn backward_step(
    p: &GruParams,
    g: &mut GruParams,
    x: &[f64],
    h_prev: &[f64],
    c: &StepCache,
    dh: &[f64],
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let hd = p.hidden_dim();
    let mut da_z = vec![0.0; hd];
    let mut da_n = vec![0.0; hd];
    for j in 0..hd {
        let dz = dh[j] * (c.n[j] - h_prev[j]);
        let dn = dh[j] * c.z[j];
        dh_prev[j] += dh[j] * (1.0 - c.z[j]);
        da_n[j] = dn * (1.0 - c.n[j] * c.n[j]);
        da_z[j] = dz * c.z[j] * (1.0 - c.z[j]);
    }

    let rh: Vec<f64> = c.r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    g.w_h.add_outer(&da_n, x);
    g.u_h.add_outer(&da_n, &rh);
    crate::linalg::axpy(1.0, &da_n, g.b_h.data_mut());
    p.w_h.add_matvec_t(&da_n, dx);
    let mut drh = vec![0.0; hd];
    p.u_h.add_matvec_t(&da_n, &mut drh);

    let mut da_r = vec![0.0; hd];
    for j in 0..hd {
        let dr = drh[j] * h_prev[j];
        dh_prev[j] += drh[j] * c.r[j];
        da_r[j] = dr * c.r[j] * (1.0 - c.r[j]);
    }

    g.w_z.add_outer(&da_z, x);
    g.u_z.add_outer(&da_z, h_prev);
    crate::linalg::axpy(1.0, &da_z, g.b_z.data_mut());
    p.w_z.add_matvec_t(&da_z, dx);
    p.u_z.add_matvec_t(&da_z, dh_prev);

    g.w_r.add_outer(&da_r, x);
    g.u_r.add_outer(&da_r, h_prev);
    crate::linalg::axpy(1.0, &da_r, g.b_r.data_mut());
    p.w_r.add_matvec_t(&da_r, dx);
    p.u_r.add_matvec_t(&da_r, dh_prev);
}
