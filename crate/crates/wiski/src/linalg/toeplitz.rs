//! Symmetric Toeplitz operator with an FFT-based matvec.

use std::sync::Arc;

use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric Toeplitz matrix represented by its first column, multiplied via
/// circulant embedding and the FFT in O(p log p).
///
/// The embedding places the first column at the head of a circulant vector and
/// its reversal at the tail, zero-padded up to the FFT length, so the top-left
/// p x p block of the circulant equals the Toeplitz matrix.
pub struct ToeplitzOperator<T: Scalar> {
    first_column: Vec<T>,
    spectrum: Vec<Complex<T>>,
    fft_fwd: Arc<dyn Fft<T>>,
    fft_inv: Arc<dyn Fft<T>>,
    fft_len: usize,
}

impl<T: Scalar> ToeplitzOperator<T> {
    pub fn new(first_column: Vec<T>) -> Result<Self> {
        let p = first_column.len();
        if p == 0 {
            return Err(Error::InvalidArgument(
                "Toeplitz first column must be non-empty".into(),
            ));
        }
        if first_column.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "Toeplitz first column must be finite".into(),
            ));
        }
        // Zero-padded circulant embedding: minimum length 2p-1, rounded up to a
        // power of two for the FFT.
        let fft_len = (2 * p - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(fft_len);
        let fft_inv = planner.plan_fft_inverse(fft_len);

        let mut embed = vec![Complex::new(T::zero(), T::zero()); fft_len];
        for (i, &v) in first_column.iter().enumerate() {
            embed[i] = Complex::new(v, T::zero());
        }
        for i in 1..p {
            embed[fft_len - i] = Complex::new(first_column[i], T::zero());
        }
        fft_fwd.process(&mut embed);

        Ok(ToeplitzOperator {
            first_column,
            spectrum: embed,
            fft_fwd,
            fft_inv,
            fft_len,
        })
    }

    /// Length of the first column (the operator is p x p).
    pub fn len(&self) -> usize {
        self.first_column.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_column.is_empty()
    }

    pub fn first_column(&self) -> &[T] {
        &self.first_column
    }

    /// Multiply the implied symmetric Toeplitz matrix onto `v`.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.len() {
            return Err(Error::dims(self.len(), v.len()));
        }
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft_len];
        let mut out = vec![T::zero(); self.len()];
        self.matvec_into(v, &mut out, &mut scratch);
        Ok(out)
    }

    /// Matvec into preallocated buffers; `scratch` must have length [`Self::fft_len`].
    pub(crate) fn matvec_into(&self, v: &[T], out: &mut [T], scratch: &mut [Complex<T>]) {
        debug_assert_eq!(v.len(), self.len());
        debug_assert_eq!(scratch.len(), self.fft_len);
        let zero = Complex::new(T::zero(), T::zero());
        scratch.fill(zero);
        for (s, &x) in scratch.iter_mut().zip(v.iter()) {
            s.re = x;
        }
        self.fft_fwd.process(scratch);
        for (s, f) in scratch.iter_mut().zip(self.spectrum.iter()) {
            *s *= *f;
        }
        self.fft_inv.process(scratch);
        let scale = T::one() / crate::scalar::from_usize::<T>(self.fft_len);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = s.re * scale;
        }
    }

    pub(crate) fn fft_len(&self) -> usize {
        self.fft_len
    }
}

impl<T: Scalar> LinearOperator<T> for ToeplitzOperator<T> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, v: &DVector<T>) -> DVector<T> {
        DVector::from_vec(self.matvec(v.as_slice()).expect("dimension checked"))
    }
}

/// O(p log p) Toeplitz matvec, dimension-checked.
pub fn toeplitz_mvm<T: Scalar>(op: &ToeplitzOperator<T>, v: &[T]) -> Result<Vec<T>> {
    op.matvec(v)
}
