//! Learned affine-plus-tanh feature map for higher-dimensional inputs.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

/// `x -> tanh(W x + b)`, squashing raw inputs into the grid cube [-1, 1]^d.
#[derive(Clone, Debug)]
pub struct ProjectionMap<T: Scalar> {
    weight: DMatrix<T>,
    bias: DVector<T>,
}

impl<T: Scalar> ProjectionMap<T> {
    pub fn new(weight: DMatrix<T>, bias: DVector<T>) -> Self {
        debug_assert_eq!(weight.nrows(), bias.len());
        ProjectionMap { weight, bias }
    }

    /// Identity-like initialization mapping the first `output_dims` raw
    /// coordinates through tanh.
    pub fn eye(input_dims: usize, output_dims: usize) -> Self {
        let mut weight = DMatrix::zeros(output_dims, input_dims);
        for i in 0..output_dims.min(input_dims) {
            weight[(i, i)] = T::one();
        }
        ProjectionMap {
            weight,
            bias: DVector::zeros(output_dims),
        }
    }

    pub fn input_dims(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dims(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let xv = DVector::from_row_slice(x);
        let z = &self.weight * xv + &self.bias;
        z.iter().map(|v| v.tanh()).collect()
    }

    /// Flattened parameters: weight in column-major order, then the bias.
    pub fn params_vec(&self) -> Vec<T> {
        let mut out: Vec<T> = self.weight.iter().copied().collect();
        out.extend(self.bias.iter().copied());
        out
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn with_params(&self, phi: &[T]) -> Self {
        debug_assert_eq!(phi.len(), self.param_count());
        let (rows, cols) = self.weight.shape();
        let weight = DMatrix::from_column_slice(rows, cols, &phi[..rows * cols]);
        let bias = DVector::from_row_slice(&phi[rows * cols..]);
        ProjectionMap { weight, bias }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_stays_in_unit_cube() {
        let w = DMatrix::from_row_slice(2, 3, &[5.0, -2.0, 1.0, 0.3, 10.0, -7.0]);
        let b = DVector::from_vec(vec![1.0, -4.0]);
        let p = ProjectionMap::new(w, b);
        let out = p.apply(&[3.0, -8.0, 2.0]);
        assert_eq!(out.len(), 2);
        for v in out {
            // tanh saturates to exactly +-1.0 in floating point
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn params_round_trip() {
        let p = ProjectionMap::<f64>::eye(3, 2);
        let phi = p.params_vec();
        assert_eq!(phi.len(), 8);
        let q = p.with_params(&phi);
        assert_eq!(p.apply(&[0.1, 0.2, 0.3]), q.apply(&[0.1, 0.2, 0.3]));
    }
}
