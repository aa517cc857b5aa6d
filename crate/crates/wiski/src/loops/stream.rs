//! Online regression and classification loops following the streaming
//! protocol: predict, condition, then update hyperparameters, one observation
//! at a time, with metrics recorded before the model sees each target.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::{ClassificationDataset, RegressionDataset};
use crate::error::{Error, Result};
use crate::exact::{exact_fit, exact_fit_hetero, ExactGp};
use crate::grid::Grid;
use crate::kernels::{KernelFamily, KernelParams, KernelSpec};
use crate::model::{dirichlet_transform, InitOptions, WiskiState};
use crate::opt::{central_diff_gradient, Adam, FD_STEP};
use crate::posterior::PosteriorGaussian;
use crate::scalar::{from_f64, from_usize, to_f64, Scalar};

/// Streaming-loop configuration.
#[derive(Clone, Debug)]
pub struct StreamConfig<T: Scalar> {
    /// Fraction of the training split used for batch pretraining (dataset
    /// generators apply it; recorded here for provenance).
    pub pretrain_fraction: f64,
    /// Hyperparameter epochs on the pretrain batch.
    pub pretrain_epochs: usize,
    /// Hyperparameter steps per absorbed observation (0 freezes them).
    pub steps_per_observation: usize,
    /// Run the hyperparameter steps only every k-th observation.
    pub hyper_every: usize,
    pub lr_batch: T,
    pub lr_online: T,
    pub grid_size_per_dim: usize,
    pub kernel: KernelFamily,
    pub rank: Option<usize>,
    pub seed: u64,
    /// Evaluate held-out metrics every row (outside the timed section).
    pub eval_test: bool,
}

impl<T: Scalar> Default for StreamConfig<T> {
    fn default() -> Self {
        StreamConfig {
            pretrain_fraction: 0.05,
            pretrain_epochs: 200,
            steps_per_observation: 1,
            hyper_every: 1,
            lr_batch: from_f64::<T>(5e-2),
            lr_online: from_f64::<T>(5e-3),
            grid_size_per_dim: 256,
            kernel: KernelFamily::Rbf,
            rank: None,
            seed: 0,
            eval_test: true,
        }
    }
}

/// One metrics row per streamed observation. For classification loops the
/// `rmse` column carries held-out accuracy instead.
#[derive(Clone, Debug)]
pub struct MetricsRow<T: Scalar> {
    pub step: usize,
    pub elapsed_ms: f64,
    pub rmse: T,
    pub nll: T,
    pub params: KernelParams<T>,
}

/// Which model drives a loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Wiski,
    Exact,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wiski" => Ok(ModelKind::Wiski),
            "exact" => Ok(ModelKind::Exact),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

/// The streaming interface shared by the constant-time model and the exact
/// baseline.
pub trait OnlineRegressor<T: Scalar> {
    fn predict_one(&mut self, x: &[T]) -> Result<PosteriorGaussian<T>>;
    fn predict_many(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>>;
    fn condition(&mut self, x: &[T], y: T) -> Result<()>;
    fn hyper_steps(&mut self, k: usize, lr: T) -> Result<()>;
    fn params(&self) -> KernelParams<T>;
}

/// Constant-time streaming regressor.
pub struct WiskiRegressor<T: Scalar> {
    pub state: WiskiState<T>,
    adam: Adam<T>,
}

impl<T: Scalar> WiskiRegressor<T> {
    pub fn new(data: &RegressionDataset<T>, cfg: &StreamConfig<T>) -> Result<Self> {
        let d = data.dims();
        let grid = Grid::default_for_dims(d, cfg.grid_size_per_dim)?;
        let spec = KernelSpec { family: cfg.kernel, dims: d };
        let params = KernelParams::defaults(d);
        let options = InitOptions { rank: cfg.rank, ..InitOptions::default() };
        let state = WiskiState::init_with_options(
            grid,
            spec,
            params,
            &data.x_pretrain,
            &data.y_pretrain,
            options,
        )?;
        let adam = Adam::new(state.optimizable_params());
        Ok(WiskiRegressor { state, adam })
    }

    pub fn from_state(state: WiskiState<T>) -> Self {
        let adam = Adam::new(state.optimizable_params());
        WiskiRegressor { state, adam }
    }
}

impl<T: Scalar> OnlineRegressor<T> for WiskiRegressor<T> {
    fn predict_one(&mut self, x: &[T]) -> Result<PosteriorGaussian<T>> {
        self.state.predict(x)
    }

    fn predict_many(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>> {
        self.state.predict_batch(xs)
    }

    fn condition(&mut self, x: &[T], y: T) -> Result<()> {
        self.state.condition(x, y)
    }

    fn hyper_steps(&mut self, k: usize, lr: T) -> Result<()> {
        for _ in 0..k {
            if self.state.n() < 2 {
                return Ok(());
            }
            self.state.hyper_step(&mut self.adam, lr)?;
        }
        Ok(())
    }

    fn params(&self) -> KernelParams<T> {
        self.state.params().clone()
    }
}

/// Exact-GP baseline with incremental Cholesky conditioning and
/// finite-difference hyperparameter refits (O(n^3) per step).
pub struct ExactRegressor<T: Scalar> {
    spec: KernelSpec,
    params: KernelParams<T>,
    fit: Option<ExactGp<T>>,
    adam: Adam<T>,
    buffer: Vec<(Vec<T>, T)>,
}

impl<T: Scalar> ExactRegressor<T> {
    pub fn new(data: &RegressionDataset<T>, cfg: &StreamConfig<T>) -> Result<Self> {
        let d = data.dims();
        let spec = KernelSpec { family: cfg.kernel, dims: d };
        let params = KernelParams::defaults(d);
        let fit = if data.x_pretrain.nrows() > 0 {
            Some(exact_fit(
                spec,
                params.clone(),
                data.x_pretrain.clone(),
                data.y_pretrain.clone(),
            )?)
        } else {
            None
        };
        Ok(ExactRegressor {
            spec,
            params,
            fit,
            adam: Adam::new(d + 2),
            buffer: Vec::new(),
        })
    }

    fn flush_buffer(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let pending = std::mem::take(&mut self.buffer);
        match &mut self.fit {
            Some(fit) => {
                for (x, y) in pending {
                    fit.append(&x, y, None)?;
                }
            }
            None => {
                let d = self.spec.dims;
                let mut x = DMatrix::zeros(pending.len(), d);
                let mut y = DVector::zeros(pending.len());
                for (row, (xi, yi)) in pending.iter().enumerate() {
                    for j in 0..d {
                        x[(row, j)] = xi[j];
                    }
                    y[row] = *yi;
                }
                self.fit = Some(exact_fit(self.spec, self.params.clone(), x, y)?);
            }
        }
        Ok(())
    }
}

impl<T: Scalar> OnlineRegressor<T> for ExactRegressor<T> {
    fn predict_one(&mut self, x: &[T]) -> Result<PosteriorGaussian<T>> {
        self.flush_buffer()?;
        match &self.fit {
            Some(fit) => Ok(fit.predict(x)),
            None => Ok(PosteriorGaussian::new(T::zero(), self.params.outputscale())),
        }
    }

    fn predict_many(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>> {
        self.flush_buffer()?;
        let mut out = Vec::with_capacity(xs.nrows());
        for i in 0..xs.nrows() {
            let row: Vec<T> = xs.row(i).iter().copied().collect();
            out.push(self.predict_one(&row)?);
        }
        Ok(out)
    }

    fn condition(&mut self, x: &[T], y: T) -> Result<()> {
        self.buffer.push((x.to_vec(), y));
        self.flush_buffer()
    }

    fn hyper_steps(&mut self, k: usize, lr: T) -> Result<()> {
        self.flush_buffer()?;
        let Some(fit) = &mut self.fit else { return Ok(()) };
        if fit.n() < 2 {
            return Ok(());
        }
        for _ in 0..k {
            let stepped = exact_fd_hyper_step(fit, &mut self.adam, lr, true)?;
            if !stepped {
                break;
            }
        }
        self.params = fit.params().clone();
        Ok(())
    }

    fn params(&self) -> KernelParams<T> {
        self.params.clone()
    }
}

/// One finite-difference Adam ascent step on an exact fit's hyperparameters;
/// returns false when a non-finite objective forced a skip.
pub fn exact_fd_hyper_step<T: Scalar>(
    fit: &mut ExactGp<T>,
    adam: &mut Adam<T>,
    lr: T,
    optimize_noise: bool,
) -> Result<bool> {
    let dims = fit.params().log_lengthscales.len();
    let full = fit.params().to_vec();
    let opt_len = if optimize_noise { dims + 2 } else { dims + 1 };
    let eval = |p: &[T]| -> Result<T> {
        let mut v = full.clone();
        v[..opt_len].copy_from_slice(p);
        fit.mll_at(&KernelParams::from_vec(dims, &v))
    };
    let p0: Vec<T> = full[..opt_len].to_vec();
    let h = from_f64::<T>(FD_STEP);
    let Some(grad) = central_diff_gradient(eval, &p0, h)? else {
        return Ok(false);
    };
    let mut p = p0;
    adam.ascent_step(&mut p, &grad, lr);
    let mut v = full;
    v[..opt_len].copy_from_slice(&p);
    fit.refit_with_params(KernelParams::from_vec(dims, &v))?;
    Ok(true)
}

fn held_out_metrics<T: Scalar>(
    model: &mut dyn OnlineRegressor<T>,
    data: &RegressionDataset<T>,
) -> Result<(T, T)> {
    let posts = model.predict_many(&data.x_test)?;
    let noise = model.params().noise_variance();
    let n = from_usize::<T>(posts.len().max(1));
    let mut se = T::zero();
    let mut nll = T::zero();
    for (post, y) in posts.iter().zip(data.y_test.iter()) {
        let resid = post.mean - *y;
        se += resid * resid;
        nll += post.nll(*y, noise);
    }
    Ok(((se / n).sqrt(), nll / n))
}

/// Pretrain on the batch split, then stream: predict (metrics recorded before
/// the target is revealed), condition, and take the configured hyperparameter
/// steps. Returns one row per streamed observation.
pub fn stream_regression<T: Scalar>(
    model: &mut dyn OnlineRegressor<T>,
    data: &RegressionDataset<T>,
    cfg: &StreamConfig<T>,
) -> Result<Vec<MetricsRow<T>>> {
    if data.x_stream.nrows() == 0 {
        return Err(Error::InvalidArgument("empty stream split".into()));
    }
    if cfg.hyper_every == 0 {
        return Err(Error::InvalidArgument("hyper_every must be at least 1".into()));
    }
    if data.x_pretrain.nrows() >= 2 {
        model.hyper_steps(cfg.pretrain_epochs, cfg.lr_batch)?;
    }

    let mut rows = Vec::with_capacity(data.x_stream.nrows());
    for i in 0..data.x_stream.nrows() {
        let x: Vec<T> = data.x_stream.row(i).iter().copied().collect();
        let y = data.y_stream[i];

        let t0 = Instant::now();
        let _online_pred = model.predict_one(&x)?;
        model.condition(&x, y)?;
        if cfg.steps_per_observation > 0 && (i + 1) % cfg.hyper_every == 0 {
            model.hyper_steps(cfg.steps_per_observation, cfg.lr_online)?;
        }
        let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;

        let (rmse, nll) = if cfg.eval_test {
            held_out_metrics(model, data)?
        } else {
            (T::zero(), T::zero())
        };
        rows.push(MetricsRow {
            step: i + 1,
            elapsed_ms,
            rmse,
            nll,
            params: model.params(),
        });
    }
    Ok(rows)
}

/// Per-class regression heads for the log-Dirichlet classification scheme.
pub enum ClassifierHeads<T: Scalar> {
    Wiski(Vec<WiskiState<T>>, Vec<Adam<T>>),
    Exact(Vec<ExactGp<T>>, Vec<Adam<T>>),
}

/// Fixed Dirichlet concentration offset used by the classification loops.
pub const ALPHA_EPS: f64 = 0.01;

impl<T: Scalar> ClassifierHeads<T> {
    pub fn new(kind: ModelKind, data: &ClassificationDataset<T>, cfg: &StreamConfig<T>) -> Result<Self> {
        let num_classes = data.num_classes;
        let d = data.x_pretrain.ncols();
        let alpha_eps = from_f64::<T>(ALPHA_EPS);
        let n0 = data.x_pretrain.nrows();

        // Per-class transformed targets and fixed noise variances.
        let mut targets = vec![DVector::<T>::zeros(n0); num_classes];
        let mut noises = vec![DVector::<T>::zeros(n0); num_classes];
        for i in 0..n0 {
            let per_class = dirichlet_transform(data.labels_pretrain[i], num_classes, alpha_eps)?;
            for (c, (t, v)) in per_class.into_iter().enumerate() {
                targets[c][i] = t;
                noises[c][i] = v;
            }
        }

        let spec = KernelSpec { family: cfg.kernel, dims: d };
        match kind {
            ModelKind::Wiski => {
                let mut heads = Vec::with_capacity(num_classes);
                let mut adams = Vec::with_capacity(num_classes);
                for c in 0..num_classes {
                    let grid = Grid::default_for_dims(d, cfg.grid_size_per_dim)?;
                    let options = InitOptions { rank: cfg.rank, ..InitOptions::default() };
                    let state = WiskiState::init_hetero(
                        grid,
                        spec,
                        KernelParams::defaults(d),
                        &data.x_pretrain,
                        &targets[c],
                        &noises[c],
                        options,
                    )?;
                    adams.push(Adam::new(state.optimizable_params()));
                    heads.push(state);
                }
                Ok(ClassifierHeads::Wiski(heads, adams))
            }
            ModelKind::Exact => {
                let mut heads = Vec::with_capacity(num_classes);
                let mut adams = Vec::with_capacity(num_classes);
                for c in 0..num_classes {
                    let noise: Vec<T> = noises[c].iter().copied().collect();
                    let fit = exact_fit_hetero(
                        spec,
                        KernelParams::defaults(d),
                        data.x_pretrain.clone(),
                        targets[c].clone(),
                        noise,
                    )?;
                    adams.push(Adam::new(d + 1));
                    heads.push(fit);
                }
                Ok(ClassifierHeads::Exact(heads, adams))
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ClassifierHeads::Wiski(h, _) => h.len(),
            ClassifierHeads::Exact(h, _) => h.len(),
        }
    }

    fn predict_heads(&mut self, xs: &DMatrix<T>) -> Result<Vec<Vec<PosteriorGaussian<T>>>> {
        match self {
            ClassifierHeads::Wiski(heads, _) => {
                heads.iter_mut().map(|h| h.predict_batch(xs)).collect()
            }
            ClassifierHeads::Exact(heads, _) => heads
                .iter()
                .map(|h| {
                    Ok((0..xs.nrows())
                        .map(|i| {
                            let row: Vec<T> = xs.row(i).iter().copied().collect();
                            h.predict(&row)
                        })
                        .collect())
                })
                .collect(),
        }
    }

    fn condition(&mut self, x: &[T], label: usize) -> Result<()> {
        let alpha_eps = from_f64::<T>(ALPHA_EPS);
        let per_class = dirichlet_transform(label, self.num_classes(), alpha_eps)?;
        match self {
            ClassifierHeads::Wiski(heads, _) => {
                for (head, (t, v)) in heads.iter_mut().zip(per_class) {
                    head.condition_hetero(x, t, v)?;
                }
            }
            ClassifierHeads::Exact(heads, _) => {
                for (head, (t, v)) in heads.iter_mut().zip(per_class) {
                    head.append(x, t, Some(v))?;
                }
            }
        }
        Ok(())
    }

    fn hyper_steps(&mut self, k: usize, lr: T) -> Result<()> {
        match self {
            ClassifierHeads::Wiski(heads, adams) => {
                for (head, adam) in heads.iter_mut().zip(adams.iter_mut()) {
                    for _ in 0..k {
                        if head.n() < 2 {
                            break;
                        }
                        head.hyper_step(adam, lr)?;
                    }
                }
            }
            ClassifierHeads::Exact(heads, adams) => {
                for (head, adam) in heads.iter_mut().zip(adams.iter_mut()) {
                    if head.n() < 2 {
                        continue;
                    }
                    for _ in 0..k {
                        if !exact_fd_hyper_step(head, adam, lr, false)? {
                            break;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> KernelParams<T> {
        match self {
            ClassifierHeads::Wiski(heads, _) => heads[0].params().clone(),
            ClassifierHeads::Exact(heads, _) => heads[0].params().clone(),
        }
    }

    /// Class probabilities by sampling the latent posteriors through softmax.
    pub fn class_probabilities(
        &mut self,
        x: &[T],
        samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<T>> {
        let xs = DMatrix::from_row_slice(1, x.len(), x);
        let per_head = self.predict_heads(&xs)?;
        let c = per_head.len();
        let mut probs = vec![T::zero(); c];
        for _ in 0..samples {
            let mut logits = Vec::with_capacity(c);
            for head in &per_head {
                let g: f64 = StandardNormal.sample(rng);
                logits.push(head[0].mean + head[0].std_dev() * from_f64::<T>(g));
            }
            let max = logits.iter().fold(logits[0], |a, &b| a.max(b));
            let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
            let denom = exps.iter().fold(T::zero(), |a, &b| a + b);
            for (p, e) in probs.iter_mut().zip(exps) {
                *p += e / denom;
            }
        }
        let ns = from_usize::<T>(samples);
        Ok(probs.into_iter().map(|p| p / ns).collect())
    }
}

/// Streaming Dirichlet classification. The `rmse` column of the returned rows
/// holds held-out accuracy; `nll` is the sampled-softmax negative
/// log-probability of the streamed point's true class, recorded before
/// conditioning.
pub fn stream_classification<T: Scalar>(
    kind: ModelKind,
    data: &ClassificationDataset<T>,
    cfg: &StreamConfig<T>,
) -> Result<Vec<MetricsRow<T>>> {
    if data.labels_stream.iter().any(|&l| l >= data.num_classes) {
        return Err(Error::InvalidArgument("label out of range".into()));
    }
    let mut heads = ClassifierHeads::new(kind, data, cfg)?;
    if data.x_pretrain.nrows() >= 2 {
        heads.hyper_steps(cfg.pretrain_epochs, cfg.lr_batch)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5a5a));

    let mut rows = Vec::with_capacity(data.x_stream.nrows());
    for i in 0..data.x_stream.nrows() {
        let x: Vec<T> = data.x_stream.row(i).iter().copied().collect();
        let label = data.labels_stream[i];

        let t0 = Instant::now();
        let probs = heads.class_probabilities(&x, 256, &mut rng)?;
        let nll = -(probs[label].max(from_f64::<T>(1e-12))).ln();
        heads.condition(&x, label)?;
        if cfg.steps_per_observation > 0 && (i + 1) % cfg.hyper_every == 0 {
            heads.hyper_steps(cfg.steps_per_observation, cfg.lr_online)?;
        }
        let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;

        let accuracy = if cfg.eval_test {
            classification_accuracy(&mut heads, &data.x_test, &data.labels_test)?
        } else {
            T::zero()
        };
        rows.push(MetricsRow {
            step: i + 1,
            elapsed_ms,
            rmse: accuracy,
            nll,
            params: heads.params(),
        });
    }
    Ok(rows)
}

/// Held-out accuracy by argmax of the per-class posterior means.
pub fn classification_accuracy<T: Scalar>(
    heads: &mut ClassifierHeads<T>,
    xs: &DMatrix<T>,
    labels: &[usize],
) -> Result<T> {
    let per_head = heads.predict_heads(xs)?;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let mut best = 0usize;
        let mut best_mean = per_head[0][i].mean;
        for (c, head) in per_head.iter().enumerate().skip(1) {
            if head[i].mean > best_mean {
                best_mean = head[i].mean;
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(from_usize::<T>(correct) / from_usize::<T>(labels.len().max(1)))
}

/// Convenience: `to_f64` on a metrics row for CSV writers.
pub fn row_to_f64<T: Scalar>(row: &MetricsRow<T>) -> (usize, f64, f64, f64, Vec<f64>, f64, f64) {
    (
        row.step,
        row.elapsed_ms,
        to_f64(row.rmse),
        to_f64(row.nll),
        row.params
            .log_lengthscales
            .iter()
            .map(|&v| to_f64(v.exp()))
            .collect(),
        to_f64(row.params.outputscale()),
        to_f64(row.params.noise_variance()),
    )
}
