//! Synthetic datasets and the shared standardization helpers.
//!
//! All loaders follow the same protocol: features min-max scaled to [-1, 1]
//! and targets standardized to zero mean and unit variance using
//! training-split statistics only, with a seeded shuffle producing a 90/10
//! train/test split and 5% of the training data reserved for pretraining.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelFamily, KernelParams, KernelSpec};
use crate::scalar::{from_f64, from_usize, Scalar};

/// Target mean and population standard deviation of the training split.
#[derive(Clone, Copy, Debug)]
pub struct TargetStats<T: Scalar> {
    pub mean: T,
    pub sd: T,
}

/// Population-variance statistics (1/n convention).
pub fn target_stats<T: Scalar>(y: &DVector<T>) -> TargetStats<T> {
    let n = from_usize::<T>(y.len().max(1));
    let mean = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = y.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
    TargetStats {
        mean,
        sd: var.sqrt().max(from_f64::<T>(1e-12)),
    }
}

/// Standardize in place with precomputed statistics.
pub fn standardize<T: Scalar>(y: &mut DVector<T>, stats: &TargetStats<T>) {
    for v in y.iter_mut() {
        *v = (*v - stats.mean) / stats.sd;
    }
}

/// Per-feature min-max scaler onto [-1, 1], fitted on the training split only.
#[derive(Clone, Debug)]
pub struct FeatureScaler<T: Scalar> {
    mins: Vec<T>,
    maxs: Vec<T>,
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit(x: &DMatrix<T>) -> Self {
        let d = x.ncols();
        let mut mins = vec![T::zero(); d];
        let mut maxs = vec![T::zero(); d];
        for j in 0..d {
            let col = x.column(j);
            let mut lo = col[0];
            let mut hi = col[0];
            for &v in col.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            mins[j] = lo;
            maxs[j] = hi;
        }
        FeatureScaler { mins, maxs }
    }

    /// Scale rows onto [-1, 1]; constant features collapse to 0 with a warning.
    pub fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let two = from_f64::<T>(2.0);
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            let span = self.maxs[j] - self.mins[j];
            if span <= T::zero() {
                T::zero()
            } else {
                two * (x[(i, j)] - self.mins[j]) / span - T::one()
            }
        })
    }

    pub fn warn_constant_features(&self) {
        for (j, (lo, hi)) in self.mins.iter().zip(self.maxs.iter()).enumerate() {
            if *hi <= *lo {
                log::warn!("feature {j} is constant on the training split; scaled to 0");
            }
        }
    }
}

/// A regression stream: pretrain batch, online stream, and held-out test set,
/// already scaled and standardized.
#[derive(Clone, Debug)]
pub struct RegressionDataset<T: Scalar> {
    pub x_pretrain: DMatrix<T>,
    pub y_pretrain: DVector<T>,
    pub x_stream: DMatrix<T>,
    pub y_stream: DVector<T>,
    pub x_test: DMatrix<T>,
    pub y_test: DVector<T>,
}

impl<T: Scalar> RegressionDataset<T> {
    pub fn dims(&self) -> usize {
        self.x_pretrain.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.x_pretrain.nrows() + self.x_stream.nrows()
    }
}

/// Split raw (X, y) into pretrain/stream/test with a seeded shuffle, scaling
/// features and standardizing targets with training statistics only.
pub fn split_and_standardize<T: Scalar>(
    x: DMatrix<T>,
    y: DVector<T>,
    test_fraction: f64,
    pretrain_fraction: f64,
    seed: u64,
) -> Result<RegressionDataset<T>> {
    split_with_options(x, y, test_fraction, pretrain_fraction, seed, true)
}

/// [`split_and_standardize`] with target standardization made optional
/// (features are always min-max scaled).
pub fn split_with_options<T: Scalar>(
    x: DMatrix<T>,
    y: DVector<T>,
    test_fraction: f64,
    pretrain_fraction: f64,
    seed: u64,
    standardize_targets: bool,
) -> Result<RegressionDataset<T>> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::dims(n, y.len()));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_train = n - n_test;
    if n_train < 2 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "dataset of {n} rows is too small for the requested split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train_idx = &order[..n_train];
    let test_idx = &order[n_train..];
    let n_pre = ((n_train as f64) * pretrain_fraction).round() as usize;

    let take = |idx: &[usize]| -> (DMatrix<T>, DVector<T>) {
        let mut xm = DMatrix::zeros(idx.len(), x.ncols());
        let mut yv = DVector::zeros(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            for j in 0..x.ncols() {
                xm[(row, j)] = x[(i, j)];
            }
            yv[row] = y[i];
        }
        (xm, yv)
    };

    let (x_train, y_train) = take(train_idx);
    let (x_test_raw, y_test_raw) = take(test_idx);

    let scaler = FeatureScaler::fit(&x_train);
    scaler.warn_constant_features();
    let x_train = scaler.apply(&x_train);
    let x_test = scaler.apply(&x_test_raw);
    let mut y_train = y_train;
    let mut y_test = y_test_raw;
    if standardize_targets {
        let stats = target_stats(&y_train);
        standardize(&mut y_train, &stats);
        standardize(&mut y_test, &stats);
    }

    let x_pretrain = x_train.rows(0, n_pre).into_owned();
    let y_pretrain = y_train.rows(0, n_pre).into_owned();
    let x_stream = x_train.rows(n_pre, n_train - n_pre).into_owned();
    let y_stream = y_train.rows(n_pre, n_train - n_pre).into_owned();

    Ok(RegressionDataset {
        x_pretrain,
        y_pretrain,
        x_stream,
        y_stream,
        x_test,
        y_test,
    })
}

fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let v: f64 = StandardNormal.sample(rng);
    from_f64::<T>(v)
}

/// 1-D sine corrupted by Gaussian noise.
pub fn sine_stream<T: Scalar>(n: usize, noise_sd: f64, seed: u64) -> Result<RegressionDataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(1));
    let x = DMatrix::from_fn(n, 1, |_, _| from_f64::<T>(rng.random::<f64>() * 2.0 - 1.0));
    let y = DVector::from_fn(n, |i, _| {
        let t = crate::scalar::to_f64(x[(i, 0)]);
        from_f64::<T>((2.0 * std::f64::consts::PI * t).sin())
            + gaussian::<T>(&mut rng) * from_f64::<T>(noise_sd)
    });
    split_and_standardize(x, y, 0.1, 0.05, seed)
}

/// Noiseless-by-default linear trend (sanity stream).
pub fn linear_stream<T: Scalar>(n: usize, noise_sd: f64, seed: u64) -> Result<RegressionDataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x51ed2701).wrapping_add(7));
    let x = DMatrix::from_fn(n, 1, |_, _| from_f64::<T>(rng.random::<f64>() * 2.0 - 1.0));
    let y = DVector::from_fn(n, |i, _| {
        x[(i, 0)] * from_f64::<T>(0.8) + from_f64::<T>(0.1)
            + gaussian::<T>(&mut rng) * from_f64::<T>(noise_sd)
    });
    split_and_standardize(x, y, 0.1, 0.05, seed)
}

/// A binary classification stream with crescent-shaped classes.
#[derive(Clone, Debug)]
pub struct ClassificationDataset<T: Scalar> {
    pub x_pretrain: DMatrix<T>,
    pub labels_pretrain: Vec<usize>,
    pub x_stream: DMatrix<T>,
    pub labels_stream: Vec<usize>,
    pub x_test: DMatrix<T>,
    pub labels_test: Vec<usize>,
    pub num_classes: usize,
}

/// Two well-separated Gaussian blobs (a linearly separable sanity set).
pub fn blobs_classification<T: Scalar>(n: usize, seed: u64) -> Result<ClassificationDataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x7f4a7c15).wrapping_add(9));
    let mut x_raw = DMatrix::<T>::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.random::<bool>() as usize;
        let center = if label == 0 { -1.0 } else { 1.0 };
        for j in 0..2 {
            let g: f64 = StandardNormal.sample(&mut rng);
            x_raw[(i, j)] = from_f64::<T>(center + 0.35 * g);
        }
        labels.push(label);
    }
    split_classification(x_raw, labels, seed)
}

/// Two interleaved crescents with Gaussian jitter ("banana"-shaped classes).
pub fn banana_classification<T: Scalar>(n: usize, seed: u64) -> Result<ClassificationDataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xb5297a4d).wrapping_add(3));
    let mut x_raw = DMatrix::<T>::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    let jitter = 0.25;
    for i in 0..n {
        let label = rng.random::<bool>() as usize;
        let t = rng.random::<f64>() * std::f64::consts::PI;
        let (cx, cy) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        x_raw[(i, 0)] = from_f64::<T>(cx + jitter * { let g: f64 = StandardNormal.sample(&mut rng); g });
        x_raw[(i, 1)] = from_f64::<T>(cy + jitter * { let g: f64 = StandardNormal.sample(&mut rng); g });
        labels.push(label);
    }

    split_classification(x_raw, labels, seed)
}

fn split_classification<T: Scalar>(
    x_raw: DMatrix<T>,
    labels: Vec<usize>,
    seed: u64,
) -> Result<ClassificationDataset<T>> {
    let n = x_raw.nrows();
    let n_test = ((n as f64) * 0.1).round() as usize;
    let n_train = n - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut shuffle_rng);
    let n_pre = ((n_train as f64) * 0.05).round() as usize;

    let take = |idx: &[usize]| {
        let mut xm = DMatrix::zeros(idx.len(), 2);
        let mut lv = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            xm[(row, 0)] = x_raw[(i, 0)];
            xm[(row, 1)] = x_raw[(i, 1)];
            lv.push(labels[i]);
        }
        (xm, lv)
    };
    let (x_train, l_train) = take(&order[..n_train]);
    let (x_test, labels_test) = take(&order[n_train..]);
    let scaler = FeatureScaler::fit(&x_train);
    let x_train = scaler.apply(&x_train);
    let x_test = scaler.apply(&x_test);

    Ok(ClassificationDataset {
        x_pretrain: x_train.rows(0, n_pre).into_owned(),
        labels_pretrain: l_train[..n_pre].to_vec(),
        x_stream: x_train.rows(n_pre, n_train - n_pre).into_owned(),
        labels_stream: l_train[n_pre..].to_vec(),
        x_test,
        labels_test,
        num_classes: 2,
    })
}

/// A sampled 2-D random field with a training pool (noisy values revealed when
/// queried) and a noiseless test set for RMSE evaluation.
#[derive(Clone, Debug)]
pub struct FieldDataset<T: Scalar> {
    pub x_pool: DMatrix<T>,
    pub y_pool: DVector<T>,
    pub noise_var: T,
    pub x_test: DMatrix<T>,
    pub f_test: DVector<T>,
}

/// Draw one exact sample of a 2-D GP with a separable Matern-1/2 kernel at
/// `n_pool + n_test` uniform locations in [-1, 1]^2.
pub fn matern_field_2d<T: Scalar>(
    n_pool: usize,
    n_test: usize,
    lengthscale: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<FieldDataset<T>> {
    let total = n_pool + n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545f491).wrapping_add(11));
    let x = DMatrix::from_fn(total, 2, |_, _| from_f64::<T>(rng.random::<f64>() * 2.0 - 1.0));
    let spec = KernelSpec {
        family: KernelFamily::MaternHalf,
        dims: 2,
    };
    let mut params = KernelParams::<T>::defaults(2);
    params.log_lengthscales = vec![from_f64::<T>(lengthscale.ln()); 2];
    params.log_outputscale = T::zero();
    let mut k = kernel_matrix(&spec, &params, &x, &x);
    for i in 0..total {
        k[(i, i)] += from_f64::<T>(1e-8);
    }
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("field covariance".into()))?;
    let z = DVector::from_fn(total, |_, _| gaussian::<T>(&mut rng));
    let f = chol.l() * z;

    let noise_var = from_f64::<T>(noise_sd * noise_sd);
    let y_pool = DVector::from_fn(n_pool, |i, _| {
        f[i] + gaussian::<T>(&mut rng) * from_f64::<T>(noise_sd)
    });
    Ok(FieldDataset {
        x_pool: x.rows(0, n_pool).into_owned(),
        y_pool,
        noise_var,
        x_test: x.rows(n_pool, n_test).into_owned(),
        f_test: f.rows(n_pool, n_test).into_owned(),
    })
}
