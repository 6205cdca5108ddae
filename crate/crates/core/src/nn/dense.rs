use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Row-major real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix data".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Affine layer `y = b + x W` with `W` stored input-major (`inputs x outputs`),
/// so a zero input skips a whole contiguous row. Grid inputs are mostly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
        let mut layer = Dense::zeros(inputs, outputs);
        for w in layer.weight.data_mut() {
            *w = dist.sample(rng);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs());
        let mut y = self.bias.clone();
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.weight.row(j), &mut y);
            }
        }
        y
    }

    /// Gradient with respect to the layer input, given the output gradient.
    pub fn backward_input(&self, dy: &[f64]) -> Vec<f64> {
        (0..self.inputs()).map(|j| dot(self.weight.row(j), dy)).collect()
    }

    /// Accumulates `x (x) dy` into the weight gradient and `dy` into the bias.
    pub fn accumulate(&mut self, x: &[f64], dy: &[f64]) {
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, dy, self.weight.row_mut(j));
            }
        }
        for (b, d) in self.bias.iter_mut().zip(dy) {
            *b += d;
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.data().iter().chain(self.bias.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.data.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn same_shape(&self, other: &Dense) -> bool {
        self.inputs() == other.inputs() && self.outputs() == other.outputs()
    }
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Smallest distance the output keeps from 0 and 1.
pub const PROB_FLOOR: f64 = 1e-12;

pub(crate) fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_backward_small() {
        let layer = Dense {
            weight: Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            bias: vec![0.5, 0.0, -0.5],
        };
        assert_eq!(layer.forward(&[1.0, -1.0]), vec![-2.5, -3.0, -3.5]);
        assert_eq!(layer.backward_input(&[1.0, 0.0, 1.0]), vec![4.0, 10.0]);
        let mut g = Dense::zeros(2, 3);
        g.accumulate(&[2.0, 0.0], &[1.0, 1.0, 1.0]);
        assert_eq!(g.weight.data(), &[2.0, 2.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.bias, vec![1.0; 3]);
    }

    #[test]
    fn sigmoid_stays_open() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) < 1.0);
        assert!(sigmoid(-800.0) > 0.0);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = crate::seed::rng(3);
        let l = Dense::glorot(10, 6, &mut rng);
        let a = (6.0f64 / 16.0).sqrt();
        assert!(l.weight.data().iter().all(|w| w.abs() <= a));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn matrix_rejects_nan() {
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![0.0]).is_err());
    }
}
