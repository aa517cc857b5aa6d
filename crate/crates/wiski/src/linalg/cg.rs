//! Conjugate gradients on a matrix-free symmetric positive definite operator.

use nalgebra::DVector;

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solution report from [`conjugate_gradients`].
pub struct CgOutcome<T: Scalar> {
    pub solution: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: T,
}

/// Solve `A x = b` for symmetric positive definite `A`, stopping when the
/// relative residual drops below `tol` or `max_iter` is reached.
pub fn conjugate_gradients<T: Scalar>(
    op: &impl LinearOperator<T>,
    b: &DVector<T>,
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    if b.len() != op.dim() {
        return Err(Error::dims(op.dim(), b.len()));
    }
    if tol <= T::zero() {
        return Err(Error::InvalidArgument("CG tolerance must be positive".into()));
    }
    let b_norm = b.norm();
    if b_norm == T::zero() {
        return Ok(CgOutcome {
            solution: DVector::zeros(b.len()),
            iterations: 0,
            converged: true,
            residual_norm: T::zero(),
        });
    }

    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs_old = r.dot(&r);

    for k in 0..max_iter {
        let ap = op.apply(&p);
        let p_ap = p.dot(&ap);
        if !p_ap.is_finite() || p_ap <= T::zero() {
            return Err(Error::NumericalBreakdown(format!(
                "CG curvature p'Ap = {} at iteration {k}",
                crate::scalar::to_f64(p_ap)
            )));
        }
        let alpha = rs_old / p_ap;
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &ap, T::one());
        let rs_new = r.dot(&r);
        if !rs_new.is_finite() {
            return Err(Error::NumericalBreakdown(
                "non-finite residual in CG".into(),
            ));
        }
        if rs_new.sqrt() <= tol * b_norm {
            return Ok(CgOutcome {
                solution: x,
                iterations: k + 1,
                converged: true,
                residual_norm: rs_new.sqrt(),
            });
        }
        let beta = rs_new / rs_old;
        p = &r + &p * beta;
        rs_old = rs_new;
    }

    Ok(CgOutcome {
        solution: x,
        iterations: max_iter,
        converged: false,
        residual_norm: rs_old.sqrt(),
    })
}
