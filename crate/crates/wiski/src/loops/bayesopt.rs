//! Batched upper-confidence-bound Bayesian optimization over random candidate
//! pools, with either the streaming model or the exact GP as surrogate.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objectives::TestObjective;
use crate::error::{Error, Result};
use crate::exact::{exact_fit, ExactGp};
use crate::grid::Grid;
use crate::kernels::{KernelFamily, KernelParams, KernelSpec};
use crate::model::{InitOptions, WiskiState};
use crate::opt::Adam;
use crate::posterior::PosteriorGaussian;
use crate::scalar::{abs, from_f64, Scalar};

use super::stream::exact_fd_hyper_step;

/// Surrogate selection for the optimization loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurrogateKind {
    Wiski,
    Exact,
}

/// The surrogate interface the acquisition machinery needs: posterior over a
/// pool, variance after fantasy conditioning, real conditioning, and refits.
pub trait Surrogate<T: Scalar> {
    fn predict_many(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>>;
    /// Latent variances at `queries` after hypothetically conditioning on
    /// `fantasy` (targets irrelevant).
    fn fantasy_vars(&mut self, fantasy: &DMatrix<T>, queries: &DMatrix<T>) -> Result<Vec<T>>;
    fn condition(&mut self, x: &[T], y: T) -> Result<()>;
    /// Fit hyperparameters to convergence under a step budget.
    fn refit(&mut self, budget: usize, lr: T) -> Result<()>;
}

pub struct WiskiSurrogate<T: Scalar> {
    pub state: WiskiState<T>,
    adam: Adam<T>,
}

impl<T: Scalar> WiskiSurrogate<T> {
    pub fn new(state: WiskiState<T>) -> Self {
        let adam = Adam::new(state.optimizable_params());
        WiskiSurrogate { state, adam }
    }
}

impl<T: Scalar> Surrogate<T> for WiskiSurrogate<T> {
    fn predict_many(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>> {
        self.state.predict_batch(xs)
    }

    fn fantasy_vars(&mut self, fantasy: &DMatrix<T>, queries: &DMatrix<T>) -> Result<Vec<T>> {
        self.state.fantasy_variance(fantasy, None, queries)
    }

    fn condition(&mut self, x: &[T], y: T) -> Result<()> {
        self.state.condition(x, y)
    }

    fn refit(&mut self, budget: usize, lr: T) -> Result<()> {
        let mut prev: Option<T> = None;
        for _ in 0..budget {
            if self.state.n() < 2 {
                break;
            }
            let outcome = self.state.hyper_step(&mut self.adam, lr)?;
            if outcome.skipped {
                break;
            }
            if let Some(p) = prev {
                let rel = abs(outcome.objective - p) / abs(p).max(T::one());
                if rel < from_f64::<T>(1e-4) {
                    break;
                }
            }
            prev = Some(outcome.objective);
        }
        Ok(())
    }
}

pub struct ExactSurrogate<T: Scalar> {
    pub fit: ExactGp<T>,
    adam: Adam<T>,
}

impl<T: Scalar> ExactSurrogate<T> {
    pub fn new(fit: ExactGp<T>) -> Self {
        let d = fit.params().log_lengthscales.len();
        ExactSurrogate { fit, adam: Adam::new(d + 2) }
    }
}

impl<T: Scalar> Surrogate<T> for ExactSurrogate<T> {
    fn predict_many(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>> {
        Ok((0..xs.nrows())
            .map(|i| {
                let row: Vec<T> = xs.row(i).iter().copied().collect();
                self.fit.predict(&row)
            })
            .collect())
    }

    fn fantasy_vars(&mut self, fantasy: &DMatrix<T>, queries: &DMatrix<T>) -> Result<Vec<T>> {
        let mut clone = self.fit.clone();
        for k in 0..fantasy.nrows() {
            let row: Vec<T> = fantasy.row(k).iter().copied().collect();
            clone.append(&row, T::zero(), None)?;
        }
        Ok((0..queries.nrows())
            .map(|i| {
                let row: Vec<T> = queries.row(i).iter().copied().collect();
                clone.predict(&row).variance
            })
            .collect())
    }

    fn condition(&mut self, x: &[T], y: T) -> Result<()> {
        self.fit.append(x, y, None)
    }

    fn refit(&mut self, budget: usize, lr: T) -> Result<()> {
        if self.fit.n() < 2 {
            return Ok(());
        }
        let mut prev: Option<T> = None;
        for _ in 0..budget {
            if !exact_fd_hyper_step(&mut self.fit, &mut self.adam, lr, true)? {
                break;
            }
            let obj = self.fit.mll();
            if let Some(p) = prev {
                let rel = abs(obj - p) / abs(p).max(T::one());
                if rel < from_f64::<T>(1e-4) {
                    break;
                }
            }
            prev = Some(obj);
        }
        Ok(())
    }
}

/// Sequential-greedy batched UCB: pick the argmax of mean + sqrt(beta) * std,
/// fantasize the pick's variance reduction, and repeat. Ties break toward the
/// lowest pool index.
pub fn ucb_acquire<T: Scalar>(
    surrogate: &mut dyn Surrogate<T>,
    pool: &DMatrix<T>,
    beta_ucb: T,
    q: usize,
) -> Result<Vec<usize>> {
    let n = pool.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty candidate pool".into()));
    }
    let q = q.min(n);
    let posts = surrogate.predict_many(pool)?;
    let means: Vec<T> = posts.iter().map(|p| p.mean).collect();
    let mut vars: Vec<T> = posts.iter().map(|p| p.variance).collect();
    let sqrt_beta = beta_ucb.max(T::zero()).sqrt();

    let mut chosen: Vec<usize> = Vec::with_capacity(q);
    for _ in 0..q {
        let mut best: Option<(usize, T)> = None;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            let score = means[i] + sqrt_beta * vars[i].max(T::zero()).sqrt();
            match best {
                Some((_, s)) if score <= s => {}
                _ => best = Some((i, score)),
            }
        }
        let (idx, _) = best.expect("pool larger than batch");
        chosen.push(idx);
        if chosen.len() < q {
            let fantasy = rows_of(pool, &chosen);
            vars = surrogate.fantasy_vars(&fantasy, pool)?;
        }
    }
    Ok(chosen)
}

fn rows_of<T: Scalar>(pool: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    let mut out = DMatrix::zeros(idx.len(), pool.ncols());
    for (row, &i) in idx.iter().enumerate() {
        for j in 0..pool.ncols() {
            out[(row, j)] = pool[(i, j)];
        }
    }
    out
}

/// Trace of a Bayesian-optimization run.
#[derive(Clone, Debug)]
pub struct BoTrace<T: Scalar> {
    /// Best noiseless objective value found so far, one entry per iteration
    /// (monotone non-increasing for these minimization objectives).
    pub best_values: Vec<T>,
    pub iter_ms: Vec<f64>,
    pub n_evals: usize,
}

/// Configuration for [`bayes_opt_loop`].
#[derive(Clone, Debug)]
pub struct BoConfig<T: Scalar> {
    pub iterations: usize,
    pub batch_size: usize,
    pub pool_size: usize,
    pub beta_ucb: T,
    pub refit_budget: usize,
    pub refit_lr: T,
    pub grid_size_per_dim: usize,
    pub rank: Option<usize>,
    pub seed: u64,
}

impl<T: Scalar> Default for BoConfig<T> {
    fn default() -> Self {
        BoConfig {
            iterations: 200,
            batch_size: 3,
            pool_size: 512,
            beta_ucb: from_f64::<T>(2.0),
            refit_budget: 50,
            refit_lr: from_f64::<T>(5e-2),
            grid_size_per_dim: 8,
            rank: None,
            seed: 0,
        }
    }
}

/// Run UCB Bayesian optimization of a (noisy, minimized) objective with the
/// chosen surrogate: 5 random initial observations, then per iteration a refit
/// to the step budget, a greedy UCB batch over a fresh random pool, noisy
/// evaluations, and conditioning. Internally the surrogate maximizes the
/// negated objective.
pub fn bayes_opt_loop<T: Scalar>(
    objective: &TestObjective<T>,
    kind: SurrogateKind,
    cfg: &BoConfig<T>,
) -> Result<BoTrace<T>> {
    let d = objective.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x85eb).wrapping_add(2));
    let n_init = 5usize;

    let sample_point = |rng: &mut ChaCha8Rng| -> Vec<T> {
        (0..d).map(|_| from_f64::<T>(rng.random::<f64>() * 2.0 - 1.0)).collect()
    };

    let mut x_init = DMatrix::<T>::zeros(n_init, d);
    let mut g_init = DVector::<T>::zeros(n_init);
    let mut best_noiseless: Option<T> = None;
    for i in 0..n_init {
        let x = sample_point(&mut rng);
        for j in 0..d {
            x_init[(i, j)] = x[j];
        }
        let noiseless = objective.evaluate(&x);
        g_init[i] = -objective.observe(&x, &mut rng);
        best_noiseless = Some(match best_noiseless {
            Some(b) => b.min(noiseless),
            None => noiseless,
        });
    }

    // Scale-aware initialization of the hyperparameters from the seed batch.
    let stats = super::data::target_stats(&g_init);
    let mut params = KernelParams::<T>::defaults(d);
    let var0 = (stats.sd * stats.sd).max(from_f64::<T>(1e-2));
    params.log_outputscale = var0.ln();
    params.log_noise = (var0 * from_f64::<T>(0.2)).ln();

    let spec = KernelSpec { family: KernelFamily::Rbf, dims: d };
    let mut surrogate: Box<dyn Surrogate<T>> = match kind {
        SurrogateKind::Wiski => {
            let grid = Grid::default_for_dims(d, cfg.grid_size_per_dim)?;
            let options = InitOptions { rank: cfg.rank, ..InitOptions::default() };
            Box::new(WiskiSurrogate::new(WiskiState::init_with_options(
                grid, spec, params, &x_init, &g_init, options,
            )?))
        }
        SurrogateKind::Exact => Box::new(ExactSurrogate::new(exact_fit(
            spec,
            params,
            x_init.clone(),
            g_init.clone(),
        )?)),
    };

    let mut trace = BoTrace {
        best_values: Vec::with_capacity(cfg.iterations),
        iter_ms: Vec::with_capacity(cfg.iterations),
        n_evals: n_init,
    };
    let mut best = best_noiseless.expect("initialized above");

    for _ in 0..cfg.iterations {
        let t0 = Instant::now();
        surrogate.refit(cfg.refit_budget, cfg.refit_lr)?;

        let mut pool = DMatrix::<T>::zeros(cfg.pool_size, d);
        for i in 0..cfg.pool_size {
            let x = sample_point(&mut rng);
            for j in 0..d {
                pool[(i, j)] = x[j];
            }
        }
        let chosen = ucb_acquire(surrogate.as_mut(), &pool, cfg.beta_ucb, cfg.batch_size)?;
        for &idx in &chosen {
            let x: Vec<T> = pool.row(idx).iter().copied().collect();
            let noiseless = objective.evaluate(&x);
            let y = -objective.observe(&x, &mut rng);
            surrogate.condition(&x, y)?;
            trace.n_evals += 1;
            best = best.min(noiseless);
        }
        trace.iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        trace.best_values.push(best);
    }
    Ok(trace)
}
