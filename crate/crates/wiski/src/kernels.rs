//! Stationary covariance functions with log-space hyperparameters, and
//! construction of the structured grid covariance operator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{KroneckerToeplitzOperator, ToeplitzOperator};
use crate::scalar::{abs, from_f64, Scalar};

/// Supported stationary kernel families. Both are separable across input
/// dimensions, which is what gives the grid covariance its Kronecker form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    Rbf,
    /// Matern with smoothness 1/2 in separable product form: the per-dimension
    /// exponential kernel, so the Kronecker structure holds exactly. This
    /// differs from the isotropic L2-distance form for d > 1.
    MaternHalf,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::MaternHalf => "matern12",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "se" | "gaussian" => Ok(KernelFamily::Rbf),
            "matern12" | "matern-1/2" | "matern0.5" | "exponential" => Ok(KernelFamily::MaternHalf),
            other => Err(Error::InvalidArgument(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Kernel family plus input dimensionality.
#[derive(Clone, Copy, Debug)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dims: usize,
}

/// Positive hyperparameters stored in log-space: ARD lengthscales, an
/// outputscale, and the Gaussian likelihood variance.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams<T: Scalar> {
    pub log_lengthscales: Vec<T>,
    pub log_outputscale: T,
    pub log_noise: T,
}

impl<T: Scalar> KernelParams<T> {
    /// Defaults: lengthscale 0.5, outputscale 1, noise variance 0.1.
    pub fn defaults(dims: usize) -> Self {
        KernelParams {
            log_lengthscales: vec![from_f64::<T>(0.5f64.ln()); dims],
            log_outputscale: T::zero(),
            log_noise: from_f64::<T>(0.1f64.ln()),
        }
    }

    pub fn lengthscale(&self, dim: usize) -> T {
        self.log_lengthscales[dim].exp()
    }

    pub fn outputscale(&self) -> T {
        self.log_outputscale.exp()
    }

    /// sigma^2, in target units squared.
    pub fn noise_variance(&self) -> T {
        self.log_noise.exp()
    }

    /// Flatten to an optimizer vector: [log_ls.., log_outputscale, log_noise].
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_outputscale);
        v.push(self.log_noise);
        v
    }

    pub fn from_vec(dims: usize, v: &[T]) -> Self {
        debug_assert_eq!(v.len(), dims + 2);
        KernelParams {
            log_lengthscales: v[..dims].to_vec(),
            log_outputscale: v[dims],
            log_noise: v[dims + 1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.log_lengthscales.iter().all(|v| v.is_finite())
            && self.log_outputscale.is_finite()
            && self.log_noise.is_finite()
    }
}

/// Unit-scale 1-D correlation at distance `dist` for lengthscale `ell`.
fn corr_1d<T: Scalar>(family: KernelFamily, dist: T, ell: T) -> T {
    match family {
        KernelFamily::Rbf => {
            let z = dist / ell;
            (from_f64::<T>(-0.5) * z * z).exp()
        }
        KernelFamily::MaternHalf => (-abs(dist) / ell).exp(),
    }
}

/// Cross-covariance matrix between two point sets (rows are points).
pub fn kernel_matrix<T: Scalar>(
    spec: &KernelSpec,
    params: &KernelParams<T>,
    x: &DMatrix<T>,
    z: &DMatrix<T>,
) -> DMatrix<T> {
    let s = params.outputscale();
    let d = spec.dims;
    DMatrix::from_fn(x.nrows(), z.nrows(), |i, j| {
        let mut k = s;
        for dim in 0..d {
            let dist = x[(i, dim)] - z[(j, dim)];
            k *= corr_1d(spec.family, dist, params.lengthscale(dim));
        }
        k
    })
}

/// The grid covariance K_UU as a Kronecker product of per-dimension symmetric
/// Toeplitz factors; the outputscale is folded into the first factor.
pub fn kuu_operator<T: Scalar>(
    spec: &KernelSpec,
    params: &KernelParams<T>,
    grid: &Grid<T>,
) -> Result<KroneckerToeplitzOperator<T>> {
    kuu_operator_scaled(spec, params, grid, params.outputscale())
}

/// Same as [`kuu_operator`] with an explicit overall scale (a unit scale gives
/// the outputscale-free correlation operator).
pub fn kuu_operator_scaled<T: Scalar>(
    spec: &KernelSpec,
    params: &KernelParams<T>,
    grid: &Grid<T>,
    scale: T,
) -> Result<KroneckerToeplitzOperator<T>> {
    if spec.dims != grid.dims() {
        return Err(Error::dims(spec.dims, grid.dims()));
    }
    let mut factors = Vec::with_capacity(grid.dims());
    for dim in 0..grid.dims() {
        let p = grid.size(dim);
        let h = grid.spacing(dim);
        let ell = params.lengthscale(dim);
        let fold = if dim == 0 { scale } else { T::one() };
        let col: Vec<T> = (0..p)
            .map(|lag| fold * corr_1d(spec.family, h * crate::scalar::from_usize::<T>(lag), ell))
            .collect();
        factors.push(ToeplitzOperator::new(col)?);
    }
    KroneckerToeplitzOperator::new(factors)
}

/// Gamma prior with the (concentration, rate) convention, applied to a
/// positive hyperparameter as a MAP penalty.
#[derive(Clone, Copy, Debug)]
pub struct GammaPrior<T: Scalar> {
    pub concentration: T,
    pub rate: T,
}

impl<T: Scalar> GammaPrior<T> {
    /// Unnormalized log-density at x > 0: (alpha - 1) ln x - beta x.
    pub fn log_density(&self, x: T) -> T {
        (self.concentration - T::one()) * x.ln() - self.rate * x
    }
}

/// Optional MAP penalties on the positive hyperparameters.
#[derive(Clone, Copy, Debug, Default)]
pub struct KernelPriors<T: Scalar> {
    pub lengthscale: Option<GammaPrior<T>>,
    pub outputscale: Option<GammaPrior<T>>,
}

impl<T: Scalar> KernelPriors<T> {
    /// Priors used for the active-learning task: lengthscale Gamma(3, 6) and
    /// outputscale Gamma(2, 0.15).
    pub fn active_learning() -> Self {
        KernelPriors {
            lengthscale: Some(GammaPrior {
                concentration: from_f64::<T>(3.0),
                rate: from_f64::<T>(6.0),
            }),
            outputscale: Some(GammaPrior {
                concentration: from_f64::<T>(2.0),
                rate: from_f64::<T>(0.15),
            }),
        }
    }

    pub fn log_density(&self, params: &KernelParams<T>) -> T {
        let mut acc = T::zero();
        if let Some(p) = &self.lengthscale {
            for dim in 0..params.log_lengthscales.len() {
                acc += p.log_density(params.lengthscale(dim));
            }
        }
        if let Some(p) = &self.outputscale {
            acc += p.log_density(params.outputscale());
        }
        acc
    }
}
