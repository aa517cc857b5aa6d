//! Adam ascent steps and central finite-difference gradients for the handful
//! of log-space hyperparameters.

use crate::error::Result;
use crate::scalar::{from_f64, from_usize, Scalar};

/// Adam state for gradient ascent on a small parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    m: Vec<T>,
    v: Vec<T>,
    t: usize,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(dim: usize) -> Self {
        Adam {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
            beta1: from_f64::<T>(0.9),
            beta2: from_f64::<T>(0.999),
            eps: from_f64::<T>(1e-8),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// One ascent step `params += lr * update(grad)`.
    pub fn ascent_step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let t = from_usize::<T>(self.t);
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] += lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Default central-difference step in log-parameter space.
pub const FD_STEP: f64 = 1e-4;

/// Central finite-difference gradient of `f` at `p`. Returns `None` when any
/// evaluation is non-finite, so callers can skip the step and report it.
pub fn central_diff_gradient<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Result<T>,
    p: &[T],
    h: T,
) -> Result<Option<Vec<T>>> {
    let mut grad = vec![T::zero(); p.len()];
    let mut work = p.to_vec();
    for i in 0..p.len() {
        work[i] = p[i] + h;
        let fp = f(&work)?;
        work[i] = p[i] - h;
        let fm = f(&work)?;
        work[i] = p[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Ok(None);
        }
        grad[i] = (fp - fm) / (h + h);
    }
    Ok(Some(grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_climbs_a_quadratic() {
        // maximize -(x-3)^2
        let mut adam = Adam::<f64>::new(1);
        let mut p = [0.0f64];
        for _ in 0..2000 {
            let g = [-2.0 * (p[0] - 3.0)];
            adam.ascent_step(&mut p, &g, 0.05);
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "p = {}", p[0]);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut adam = Adam::<f64>::new(2);
        let mut p = [1.0, -2.0];
        adam.ascent_step(&mut p, &[0.3, 0.4], 0.0);
        assert_eq!(p, [1.0, -2.0]);
    }

    #[test]
    fn fd_gradient_of_polynomial() {
        let f = |p: &[f64]| Ok(p[0] * p[0] * p[0] + 2.0 * p[1]);
        let g = central_diff_gradient(f, &[2.0, 5.0], 1e-5).unwrap().unwrap();
        assert!((g[0] - 12.0).abs() < 1e-5);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_objective_reported() {
        let f = |p: &[f64]| Ok(if p[0] > 1.0 { f64::NAN } else { p[0] });
        let g = central_diff_gradient(f, &[1.0], 1e-3).unwrap();
        assert!(g.is_none());
    }
}
