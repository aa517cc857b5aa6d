//! Wall-clock benchmark of the per-observation update (predict + condition +
//! one hyperparameter step) as the stream grows.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::RegressionDataset;
use super::stream::{ExactRegressor, ModelKind, OnlineRegressor, StreamConfig, WiskiRegressor};
use crate::error::Result;
use crate::scalar::{from_f64, from_usize, Scalar};

/// Which steps get the full (timed) update.
#[derive(Clone, Debug)]
pub enum BenchMeasure {
    /// Full update and a timing row at every step.
    EveryStep,
    /// Full updates only in windows starting at the listed stream sizes;
    /// between windows the model only absorbs the observation. This keeps the
    /// cubic-cost baseline runnable at the sizes where its growth is measured.
    Windows { at: Vec<usize>, reps: usize },
}

/// One timing row (held-out metrics are computed outside the timed section).
#[derive(Clone, Debug)]
pub struct BenchRow<T: Scalar> {
    pub step: usize,
    pub elapsed_ms: f64,
    pub rmse: T,
    pub nll: T,
}

/// Synthetic 2-D stream used by the benchmark.
pub fn bench_dataset<T: Scalar>(n: usize, seed: u64) -> RegressionDataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37).wrapping_add(5));
    let total = n + 64 + 8;
    let x = DMatrix::from_fn(total, 2, |_, _| from_f64::<T>(rng.random::<f64>() * 2.0 - 1.0));
    let y = DVector::from_fn(total, |i, _| {
        let a = crate::scalar::to_f64(x[(i, 0)]);
        let b = crate::scalar::to_f64(x[(i, 1)]);
        let f = (2.0 * std::f64::consts::PI * a).sin() * (std::f64::consts::PI * b).cos();
        let noise: f64 = StandardNormal.sample(&mut rng);
        from_f64::<T>(f + 0.1 * noise)
    });
    RegressionDataset {
        x_pretrain: x.rows(0, 8).into_owned(),
        y_pretrain: y.rows(0, 8).into_owned(),
        x_stream: x.rows(8, n).into_owned(),
        y_stream: y.rows(8, n).into_owned(),
        x_test: x.rows(8 + n, 64).into_owned(),
        y_test: y.rows(8 + n, 64).into_owned(),
    }
}

fn in_window(step: usize, measure: &BenchMeasure) -> bool {
    match measure {
        BenchMeasure::EveryStep => true,
        BenchMeasure::Windows { at, reps } => {
            at.iter().any(|&c| step >= c && step < c + reps)
        }
    }
}

/// Stream `n_max` synthetic points through the chosen model, timing the full
/// update (one predictive read, conditioning, one hyperparameter step) on
/// measured steps and returning one row per measured step.
pub fn bench_timing<T: Scalar>(
    kind: ModelKind,
    n_max: usize,
    cfg: &StreamConfig<T>,
    measure: &BenchMeasure,
) -> Result<Vec<BenchRow<T>>> {
    let data = bench_dataset::<T>(n_max, cfg.seed);
    let mut model: Box<dyn OnlineRegressor<T>> = match kind {
        ModelKind::Wiski => Box::new(WiskiRegressor::new(&data, cfg)?),
        ModelKind::Exact => Box::new(ExactRegressor::new(&data, cfg)?),
    };
    model.hyper_steps(cfg.pretrain_epochs.min(20), cfg.lr_batch)?;

    let mut rows = Vec::new();
    for i in 0..data.x_stream.nrows() {
        let x: Vec<T> = data.x_stream.row(i).iter().copied().collect();
        let y = data.y_stream[i];
        let step = i + 1;
        if in_window(step, measure) {
            let t0 = Instant::now();
            let _pred = model.predict_one(&x)?;
            model.condition(&x, y)?;
            if cfg.steps_per_observation > 0 {
                model.hyper_steps(cfg.steps_per_observation, cfg.lr_online)?;
            }
            let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;

            let posts = model.predict_many(&data.x_test)?;
            let noise = model.params().noise_variance();
            let nq = from_usize::<T>(posts.len());
            let mut se = T::zero();
            let mut nll = T::zero();
            for (post, yt) in posts.iter().zip(data.y_test.iter()) {
                let r = post.mean - *yt;
                se += r * r;
                nll += post.nll(*yt, noise);
            }
            rows.push(BenchRow {
                step,
                elapsed_ms,
                rmse: (se / nq).sqrt(),
                nll: nll / nq,
            });
        } else {
            model.condition(&x, y)?;
        }
    }
    Ok(rows)
}

/// Median of the elapsed times of rows whose step falls in `[lo, hi)`.
pub fn median_elapsed_ms<T: Scalar>(rows: &[BenchRow<T>], lo: usize, hi: usize) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.step >= lo && r.step < hi)
        .map(|r| r.elapsed_ms)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    Some(v[v.len() / 2])
}
