//! Predictive distribution at a query point.

use crate::scalar::{from_f64, Scalar};

/// Gaussian posterior over the latent function value at one query point.
/// `variance` is the latent variance; add the likelihood noise for an
/// observation-space predictive variance.
#[derive(Clone, Copy, Debug)]
pub struct PosteriorGaussian<T: Scalar> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> PosteriorGaussian<T> {
    /// Clamp tiny negative variances from roundoff to zero.
    pub fn new(mean: T, variance: T) -> Self {
        PosteriorGaussian {
            mean,
            variance: variance.max(T::zero()),
        }
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }

    /// Negative log-density of an observation under mean and
    /// variance + noise_variance.
    pub fn nll(&self, y: T, noise_variance: T) -> T {
        let var = (self.variance + noise_variance).max(from_f64::<T>(1e-12));
        let resid = y - self.mean;
        from_f64::<T>(0.5) * (resid * resid / var + (var * T::two_pi()).ln())
    }
}
