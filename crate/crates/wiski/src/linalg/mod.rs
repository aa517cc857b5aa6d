//! Matrix-free structured linear algebra: fast Toeplitz/Kronecker matvecs,
//! conjugate gradients, Lanczos tridiagonalization, stochastic Lanczos
//! quadrature, and rank-one updates to root decompositions.

mod cg;
mod kronecker;
mod lanczos;
mod root;
mod slq;
mod toeplitz;

pub use cg::{conjugate_gradients, CgOutcome};
pub use kronecker::{kronecker_mvm, KroneckerToeplitzOperator};
pub use lanczos::{lanczos, TridiagonalPair};
pub use root::{gram_rel_err, rank_one_root_update, root_decomposition, LowRankRoot};
pub use slq::slq_logdet;
pub use toeplitz::{toeplitz_mvm, ToeplitzOperator};

use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};

/// A symmetric linear map applied without materializing the matrix.
pub trait LinearOperator<T: Scalar> {
    /// Dimension of the (square) operator.
    fn dim(&self) -> usize;

    /// Apply the operator to a vector.
    fn apply(&self, v: &DVector<T>) -> DVector<T>;

    /// Apply the operator to each column of a matrix.
    fn apply_mat(&self, m: &DMatrix<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, col) in m.column_iter().enumerate() {
            let r = self.apply(&col.into_owned());
            out.set_column(i, &r);
        }
        out
    }
}

impl<T: Scalar> LinearOperator<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &DVector<T>) -> DVector<T> {
        self * v
    }

    fn apply_mat(&self, m: &DMatrix<T>) -> DMatrix<T> {
        self * m
    }
}

/// Wrap a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new<T: Scalar>(dim: usize, f: F) -> Self
    where
        F: Fn(&DVector<T>) -> DVector<T>,
    {
        FnOperator { dim, f }
    }
}

impl<T: Scalar, F: Fn(&DVector<T>) -> DVector<T>> LinearOperator<T> for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &DVector<T>) -> DVector<T> {
        (self.f)(v)
    }
}

/// Materialize an operator by applying it to the standard basis.
pub fn densify<T: Scalar>(op: &impl LinearOperator<T>) -> DMatrix<T> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = T::one();
        out.set_column(j, &op.apply(&e));
        e[j] = T::zero();
    }
    out
}
