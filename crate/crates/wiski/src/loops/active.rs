//! Active learning by greedy minimization of the integrated posterior
//! variance over a fixed test set, with fantasy conditioning through the
//! rank-one identity on M.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::FieldDataset;
use crate::error::{Error, Result};
use crate::grid::{weights_dot, Grid, SparseWeights};
use crate::kernels::{KernelFamily, KernelParams, KernelPriors, KernelSpec};
use crate::model::{InitOptions, WiskiState};
use crate::opt::Adam;
use crate::scalar::{abs, from_f64, from_usize, to_f64, Scalar};

/// Point-selection strategy for the acquisition loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlStrategy {
    Nipv,
    Random,
}

impl AlStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nipv" => Ok(AlStrategy::Nipv),
            "random" => Ok(AlStrategy::Random),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Greedy batch selection minimizing the mean fantasy variance over
/// `test_points`: for each slot, score every remaining candidate by the
/// variance reduction its fantasy observation would give, pick the best, fold
/// it into the running rank-one corrections, and repeat.
pub fn nipv_acquire<T: Scalar>(
    state: &mut WiskiState<T>,
    pool: &DMatrix<T>,
    pool_noise: Option<&DVector<T>>,
    test_points: &DMatrix<T>,
    q: usize,
    exclude: &[usize],
) -> Result<Vec<usize>> {
    let n_pool = pool.nrows();
    if n_pool == 0 || test_points.nrows() == 0 {
        return Err(Error::InvalidArgument("empty pool or test set".into()));
    }
    let q = q.min(n_pool - exclude.len().min(n_pool));
    state.precompute()?;
    let m = state.grid().num_nodes();

    let mut pool_weights: Vec<SparseWeights<T>> = Vec::with_capacity(n_pool);
    for i in 0..n_pool {
        let row: Vec<T> = pool.row(i).iter().copied().collect();
        let mut w = state.weights_for(&row)?;
        if let Some(nv) = pool_noise {
            w = w.scaled(T::one() / nv[i].sqrt());
        }
        pool_weights.push(w);
    }
    let mut test_weights: Vec<SparseWeights<T>> = Vec::with_capacity(test_points.nrows());
    for i in 0..test_points.nrows() {
        let row: Vec<T> = test_points.row(i).iter().copied().collect();
        test_weights.push(state.weights_for(&row)?);
    }

    let view = state.solver_view().expect("precomputed");
    let mut taken: Vec<bool> = vec![false; n_pool];
    for &e in exclude {
        if e < n_pool {
            taken[e] = true;
        }
    }
    let mut corrections: Vec<(DVector<T>, T)> = Vec::new();
    let mut chosen = Vec::with_capacity(q);

    for _ in 0..q {
        let mut best: Option<(usize, T, DVector<T>, T)> = None;
        for c in 0..n_pool {
            if taken[c] {
                continue;
            }
            let wd = pool_weights[c].to_dense(m);
            let mut v = view.apply_m(&wd);
            for (vt, delta) in &corrections {
                let coef = weights_dot(&pool_weights[c], vt) / *delta;
                v.axpy(-coef, vt, T::one());
            }
            let delta = T::one() + weights_dot(&pool_weights[c], &v);
            if delta <= T::zero() {
                continue;
            }
            let mut reduction = T::zero();
            for tw in &test_weights {
                let d = weights_dot(tw, &v);
                reduction += d * d;
            }
            reduction /= delta;
            match &best {
                Some((_, r, _, _)) if reduction <= *r => {}
                _ => best = Some((c, reduction, v, delta)),
            }
        }
        let Some((idx, _, v, delta)) = best else { break };
        taken[idx] = true;
        chosen.push(idx);
        corrections.push((v, delta));
    }
    Ok(chosen)
}

/// Trace of an active-learning run: held-out RMSE after each acquisition
/// batch, keyed by the number of acquired points.
#[derive(Clone, Debug)]
pub struct AlTrace<T: Scalar> {
    pub counts: Vec<usize>,
    pub rmse: Vec<T>,
}

/// Configuration for [`active_learning_run`].
#[derive(Clone, Debug)]
pub struct AlConfig<T: Scalar> {
    pub rounds: usize,
    pub batch_size: usize,
    pub n_initial: usize,
    pub grid_size_per_dim: usize,
    pub refit_budget: usize,
    pub refit_lr: T,
    pub seed: u64,
}

impl<T: Scalar> Default for AlConfig<T> {
    fn default() -> Self {
        AlConfig {
            rounds: 20,
            batch_size: 6,
            n_initial: 10,
            grid_size_per_dim: 30,
            refit_budget: 15,
            refit_lr: from_f64::<T>(0.1),
            seed: 0,
        }
    }
}

fn refit<T: Scalar>(state: &mut WiskiState<T>, adam: &mut Adam<T>, cfg: &AlConfig<T>) -> Result<()> {
    let mut prev: Option<T> = None;
    for _ in 0..cfg.refit_budget {
        if state.n() < 2 {
            break;
        }
        let outcome = state.hyper_step(adam, cfg.refit_lr)?;
        if outcome.skipped {
            break;
        }
        if let Some(p) = prev {
            if abs(outcome.objective - p) / abs(p).max(T::one()) < from_f64::<T>(1e-4) {
                break;
            }
        }
        prev = Some(outcome.objective);
    }
    Ok(())
}

fn test_rmse<T: Scalar>(state: &mut WiskiState<T>, field: &FieldDataset<T>) -> Result<T> {
    let posts = state.predict_batch(&field.x_test)?;
    let mut se = T::zero();
    for (post, f) in posts.iter().zip(field.f_test.iter()) {
        let r = post.mean - *f;
        se += r * r;
    }
    Ok((se / from_usize::<T>(posts.len().max(1))).sqrt())
}

/// Fixed-noise active learning on a sampled field: start from a random
/// initial design, then acquire `batch_size` pool points per round by the
/// chosen strategy, conditioning on their noisy values and refitting the MAP
/// hyperparameters (Gamma priors on lengthscale and outputscale).
pub fn active_learning_run<T: Scalar>(
    field: &FieldDataset<T>,
    strategy: AlStrategy,
    cfg: &AlConfig<T>,
) -> Result<AlTrace<T>> {
    let n_pool = field.x_pool.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0xa1).wrapping_add(13));
    let mut order: Vec<usize> = (0..n_pool).collect();
    order.shuffle(&mut rng);
    let initial: Vec<usize> = order[..cfg.n_initial.min(n_pool)].to_vec();

    let grid = Grid::default_for_dims(2, cfg.grid_size_per_dim)?;
    let spec = KernelSpec { family: KernelFamily::MaternHalf, dims: 2 };
    let params = KernelParams::<T>::defaults(2);
    let mut x0 = DMatrix::zeros(initial.len(), 2);
    let mut y0 = DVector::zeros(initial.len());
    let mut nv0 = DVector::zeros(initial.len());
    for (row, &i) in initial.iter().enumerate() {
        x0[(row, 0)] = field.x_pool[(i, 0)];
        x0[(row, 1)] = field.x_pool[(i, 1)];
        y0[row] = field.y_pool[i];
        nv0[row] = field.noise_var;
    }
    let options = InitOptions {
        priors: KernelPriors::active_learning(),
        ..InitOptions::default()
    };
    let mut state = WiskiState::init_hetero(grid, spec, params, &x0, &y0, &nv0, options)?;
    let mut adam = Adam::new(state.optimizable_params());
    refit(&mut state, &mut adam, cfg)?;

    let mut taken = initial.clone();
    let pool_noise = DVector::from_element(n_pool, field.noise_var);
    let mut trace = AlTrace {
        counts: vec![taken.len()],
        rmse: vec![test_rmse(&mut state, field)?],
    };

    for _ in 0..cfg.rounds {
        if taken.len() + cfg.batch_size > n_pool {
            break;
        }
        let picks = match strategy {
            AlStrategy::Nipv => nipv_acquire(
                &mut state,
                &field.x_pool,
                Some(&pool_noise),
                &field.x_test,
                cfg.batch_size,
                &taken,
            )?,
            AlStrategy::Random => {
                let mut remaining: Vec<usize> =
                    (0..n_pool).filter(|i| !taken.contains(i)).collect();
                remaining.shuffle(&mut rng);
                remaining[..cfg.batch_size].to_vec()
            }
        };
        for &i in &picks {
            let x: Vec<T> = field.x_pool.row(i).iter().copied().collect();
            state.condition_hetero(&x, field.y_pool[i], field.noise_var)?;
            taken.push(i);
        }
        refit(&mut state, &mut adam, cfg)?;
        trace.counts.push(taken.len());
        trace.rmse.push(test_rmse(&mut state, field)?);
    }
    let _ = to_f64(trace.rmse[0]);
    Ok(trace)
}
