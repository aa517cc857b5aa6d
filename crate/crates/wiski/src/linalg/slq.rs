//! Stochastic Lanczos quadrature for log-determinants.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lanczos, LinearOperator};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, Scalar};

/// Estimate `log |A|` for a symmetric positive definite operator using
/// Rademacher probes and `steps` Lanczos iterations per probe. Deterministic
/// given `rng_seed`.
pub fn slq_logdet<T: Scalar>(
    op: &impl LinearOperator<T>,
    num_probes: usize,
    steps: usize,
    rng_seed: u64,
) -> Result<T> {
    if num_probes == 0 {
        return Err(Error::InvalidArgument("SLQ needs at least one probe".into()));
    }
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut acc = T::zero();
    for _ in 0..num_probes {
        let z = DVector::from_fn(n, |_, _| {
            if rng.random::<bool>() {
                T::one()
            } else {
                -T::one()
            }
        });
        let pair = lanczos(op, &z, steps)?;
        let eig = pair.tridiagonal_dense().symmetric_eigen();
        let mut probe_est = T::zero();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= T::zero() {
                return Err(Error::NotPositiveDefinite(format!(
                    "negative Ritz value {} in SLQ",
                    crate::scalar::to_f64(lambda)
                )));
            }
            let w0 = eig.eigenvectors[(0, j)];
            probe_est += w0 * w0 * lambda.ln();
        }
        // ||z||^2 = n for Rademacher probes.
        acc += probe_est * from_usize::<T>(n);
    }
    Ok(acc / from_usize::<T>(num_probes))
}
