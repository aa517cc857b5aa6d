//! Kronecker product of symmetric Toeplitz factors.

use nalgebra::DVector;
use rustfft::num_complex::Complex;

use super::{LinearOperator, ToeplitzOperator};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `T_1 (x) ... (x) T_d` with one Toeplitz factor per input dimension.
///
/// Flat indexing is row-major with the last dimension fastest, so factor 0
/// corresponds to the slowest-varying index.
pub struct KroneckerToeplitzOperator<T: Scalar> {
    factors: Vec<ToeplitzOperator<T>>,
    total_dim: usize,
}

impl<T: Scalar> KroneckerToeplitzOperator<T> {
    pub fn new(factors: Vec<ToeplitzOperator<T>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument(
                "Kronecker operator needs at least one factor".into(),
            ));
        }
        let total_dim = factors.iter().map(|f| f.len()).product();
        Ok(KroneckerToeplitzOperator { factors, total_dim })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn factors(&self) -> &[ToeplitzOperator<T>] {
        &self.factors
    }

    /// Apply the Kronecker product factor by factor: each factor acts along its
    /// own tensor axis, gathering strided lines, multiplying, and scattering back.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.total_dim {
            return Err(Error::dims(self.total_dim, v.len()));
        }
        let mut x = v.to_vec();
        let mut scratch = KronScratch::for_operator(self);
        self.matvec_in_place(&mut x, &mut scratch);
        Ok(x)
    }

    /// In-place matvec with caller-provided scratch; `x` must have length
    /// `total_dim`.
    pub fn matvec_in_place(&self, x: &mut [T], scratch: &mut KronScratch<T>) {
        debug_assert_eq!(x.len(), self.total_dim);
        let sizes: Vec<usize> = self.factors.iter().map(|f| f.len()).collect();
        for (axis, factor) in self.factors.iter().enumerate() {
            let p = sizes[axis];
            let stride: usize = sizes[axis + 1..].iter().product();
            let block = stride * p;
            let outer = self.total_dim / block;
            for o in 0..outer {
                let base = o * block;
                for s in 0..stride {
                    for k in 0..p {
                        scratch.line[k] = x[base + s + k * stride];
                    }
                    factor.matvec_into(
                        &scratch.line[..p],
                        &mut scratch.line_out[..p],
                        &mut scratch.complex[..factor.fft_len()],
                    );
                    for k in 0..p {
                        x[base + s + k * stride] = scratch.line_out[k];
                    }
                }
            }
        }
    }
}

/// Reusable buffers for [`KroneckerToeplitzOperator::matvec_in_place`].
pub struct KronScratch<T: Scalar> {
    line: Vec<T>,
    line_out: Vec<T>,
    complex: Vec<Complex<T>>,
}

impl<T: Scalar> KronScratch<T> {
    pub fn for_operator(op: &KroneckerToeplitzOperator<T>) -> Self {
        let max_fft = op.factors.iter().map(|f| f.fft_len()).max().unwrap_or(1);
        let max_p = op.factors.iter().map(|f| f.len()).max().unwrap_or(1);
        KronScratch {
            line: vec![T::zero(); max_p],
            line_out: vec![T::zero(); max_p],
            complex: vec![Complex::new(T::zero(), T::zero()); max_fft],
        }
    }
}

impl<T: Scalar> LinearOperator<T> for KroneckerToeplitzOperator<T> {
    fn dim(&self) -> usize {
        self.total_dim
    }

    fn apply(&self, v: &DVector<T>) -> DVector<T> {
        DVector::from_vec(self.matvec(v.as_slice()).expect("dimension checked"))
    }

    /// Columns are transformed in place with shared scratch buffers.
    fn apply_mat(&self, m: &nalgebra::DMatrix<T>) -> nalgebra::DMatrix<T> {
        assert_eq!(m.nrows(), self.total_dim);
        let mut out = m.clone_owned();
        let rows = self.total_dim;
        let mut scratch = KronScratch::for_operator(self);
        let data = out.as_mut_slice();
        for c in 0..m.ncols() {
            self.matvec_in_place(&mut data[c * rows..(c + 1) * rows], &mut scratch);
        }
        out
    }
}

/// Kronecker-of-Toeplitz matvec, dimension-checked.
pub fn kronecker_mvm<T: Scalar>(op: &KroneckerToeplitzOperator<T>, v: &[T]) -> Result<Vec<T>> {
    op.matvec(v)
}
