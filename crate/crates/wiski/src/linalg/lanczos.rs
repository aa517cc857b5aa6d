//! Lanczos tridiagonalization with full reorthogonalization.

use nalgebra::{DMatrix, DVector};

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Orthonormal Krylov basis together with the tridiagonal coefficients
/// `Q' A Q = tridiag(alpha, beta)`.
pub struct TridiagonalPair<T: Scalar> {
    pub q_basis: DMatrix<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> TridiagonalPair<T> {
    /// Number of Lanczos steps actually taken (may be fewer than requested on
    /// rank deficiency).
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// Materialize the small tridiagonal matrix.
    pub fn tridiagonal_dense(&self) -> DMatrix<T> {
        let k = self.steps();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = self.alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }
}

/// Run `k` Lanczos steps of `op` from `probe`, fully reorthogonalizing each new
/// basis vector against all previous ones. Terminates early when the recurrence
/// breaks down (invariant Krylov subspace); the returned pair reports the rank
/// actually reached.
pub fn lanczos<T: Scalar>(
    op: &impl LinearOperator<T>,
    probe: &DVector<T>,
    k: usize,
) -> Result<TridiagonalPair<T>> {
    let n = op.dim();
    if probe.len() != n {
        return Err(Error::dims(n, probe.len()));
    }
    let probe_norm = probe.norm();
    if probe_norm == T::zero() || !probe_norm.is_finite() {
        return Err(Error::InvalidArgument("Lanczos probe must be nonzero and finite".into()));
    }
    let k = k.min(n).max(1);

    let mut q = DMatrix::<T>::zeros(n, k);
    q.set_column(0, &(probe / probe_norm));
    let mut alpha = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k.saturating_sub(1));
    let mut scale = T::zero();

    for j in 0..k {
        let qj = q.column(j).into_owned();
        let mut w = op.apply(&qj);
        let a = qj.dot(&w);
        if !a.is_finite() {
            return Err(Error::NumericalBreakdown("non-finite Lanczos coefficient".into()));
        }
        alpha.push(a);
        scale = scale.max(crate::scalar::abs(a));
        // Two reorthogonalization passes against the full basis.
        for _ in 0..2 {
            for i in 0..=j {
                let qi = q.column(i);
                let c = qi.dot(&w);
                w.axpy(-c, &qi.into_owned(), T::one());
            }
        }
        if j + 1 == k {
            break;
        }
        let b = w.norm();
        scale = scale.max(b);
        let breakdown = crate::scalar::from_usize::<T>(n.max(16)) * T::eps() * scale.max(T::one());
        if b <= breakdown {
            break;
        }
        beta.push(b);
        q.set_column(j + 1, &(w / b));
    }

    let steps = alpha.len();
    let q_basis = q.columns(0, steps).into_owned();
    Ok(TridiagonalPair { q_basis, alpha, beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_terminates_after_one_step() {
        let a = DMatrix::<f64>::identity(5, 5);
        let probe = DVector::from_vec(vec![1.0, 2.0, 3.0, -1.0, 0.5]);
        let pair = lanczos(&a, &probe, 5).unwrap();
        assert_eq!(pair.steps(), 1);
        assert!((pair.alpha[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_eigenvalues_recovered() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let probe = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let pair = lanczos(&a, &probe, 3).unwrap();
        assert_eq!(pair.steps(), 3);
        let mut eigs: Vec<f64> = pair
            .tridiagonal_dense()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (e, want) in eigs.iter().zip([1.0, 2.0, 3.0]) {
            assert!((e - want).abs() < 1e-8, "eig {e} vs {want}");
        }
    }

    #[test]
    fn full_run_reconstructs_spd_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 32;
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let a = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        let probe = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let pair = lanczos(&a, &probe, n).unwrap();
        assert_eq!(pair.steps(), n);

        // Orthonormality of the basis.
        let qtq = pair.q_basis.tr_mul(&pair.q_basis);
        let id = DMatrix::<f64>::identity(n, n);
        assert!((qtq - &id).amax() < 1e-6);

        // Q T Q' reconstructs A.
        let t = pair.tridiagonal_dense();
        let rec = &pair.q_basis * t * pair.q_basis.transpose();
        let rel = (&rec - &a).norm() / a.norm();
        assert!(rel < 1e-6, "reconstruction error {rel}");
    }

    #[test]
    fn zero_probe_rejected() {
        let a = DMatrix::<f64>::identity(3, 3);
        let probe = DVector::zeros(3);
        assert!(matches!(
            lanczos(&a, &probe, 3),
            Err(Error::InvalidArgument(_))
        ));
    }
}
