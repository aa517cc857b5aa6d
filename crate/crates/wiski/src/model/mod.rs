//! The streaming model state machine: constant-size caches, the
//! Woodbury-reformulated likelihood and posterior, O(m^2) conditioning, online
//! hyperparameter and projection updates, and the fixed-noise variants.
//!
//! All quantities flow through `M = (sigma^2 K_UU^{-1} + W'W)^{-1}`, which is
//! never stored. With a root `W'W ~ L L'`, the Woodbury identity gives
//! `M v = f Khat v - f Khat L Q^{-1} L' f Khat v` where `f = s / sigma^2`,
//! `Khat` is the unit-scale grid correlation operator, and
//! `Q = I_r + f L' Khat L` is a small r x r system: every product with `M`
//! costs one structured matvec pair plus one solve against `Q`.

mod projection;
mod snapshot;

pub use projection::ProjectionMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::grid::{interp_weights, scatter_add, weights_dot, Grid, SparseWeights};
use crate::kernels::{kuu_operator_scaled, KernelParams, KernelPriors, KernelSpec};
use crate::linalg::{KroneckerToeplitzOperator, LinearOperator, LowRankRoot};
use crate::opt::{central_diff_gradient, Adam, FD_STEP};
use crate::posterior::PosteriorGaussian;
use crate::scalar::{from_f64, from_usize, Scalar};

/// Default ridge added to W'W at initialization so the root and its
/// pseudo-inverse factor exist from n = 0.
pub const DEFAULT_EMPTY_STATE_JITTER: f64 = 1e-6;

/// Likelihood wiring of the cached sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    /// Caches hold W'y and y'y; the noise sigma^2 is a learned hyperparameter.
    Homoscedastic,
    /// Caches hold W'D^{-1}y, y'D^{-1}y, and a root of W'D^{-1}W for fixed
    /// per-observation noise D; the homoscedastic formulas apply with
    /// sigma^2 = 1.
    FixedNoise,
}

/// Initialization knobs for [`WiskiState`].
#[derive(Clone)]
pub struct InitOptions<T: Scalar> {
    /// Ridge on W'W so the root is full rank from the start.
    pub jitter: T,
    /// Root rank; defaults to m for m <= 1024 and m/2 above.
    pub rank: Option<usize>,
    /// Optional learned feature map applied to raw inputs before gridding.
    pub projection: Option<ProjectionMap<T>>,
    /// MAP penalties added to the hyperparameter objective.
    pub priors: KernelPriors<T>,
    /// Solver for the small Q system.
    pub q_solve: QSolvePolicy<T>,
}

impl<T: Scalar> Default for InitOptions<T> {
    fn default() -> Self {
        InitOptions {
            jitter: from_f64::<T>(DEFAULT_EMPTY_STATE_JITTER),
            rank: None,
            projection: None,
            priors: KernelPriors::default(),
            q_solve: QSolvePolicy::Dense,
        }
    }
}

/// How the r x r system Q is solved and how its log-determinant is obtained.
#[derive(Clone, Copy, Debug)]
pub enum QSolvePolicy<T: Scalar> {
    /// Dense Cholesky factorization with an exact log-determinant (default;
    /// deterministic, r is small).
    Dense,
    /// Conjugate-gradient solves with j-step iterations and a stochastic
    /// Lanczos quadrature estimate of the log-determinant.
    Cg {
        tol: T,
        max_iter: usize,
        slq_probes: usize,
        slq_steps: usize,
    },
}

impl<T: Scalar> Default for QSolvePolicy<T> {
    fn default() -> Self {
        QSolvePolicy::Dense
    }
}

/// Factorized (or iterative) handle on Q.
enum QFactor<T: Scalar> {
    Dense(Cholesky<T, Dyn>),
    Cg {
        q: DMatrix<T>,
        tol: T,
        max_iter: usize,
    },
}

impl<T: Scalar> Clone for QFactor<T> {
    fn clone(&self) -> Self {
        match self {
            QFactor::Dense(c) => QFactor::Dense(c.clone()),
            QFactor::Cg { q, tol, max_iter } => QFactor::Cg {
                q: q.clone(),
                tol: *tol,
                max_iter: *max_iter,
            },
        }
    }
}

impl<T: Scalar> QFactor<T> {
    fn solve_vec(&self, rhs: &DVector<T>) -> DVector<T> {
        match self {
            QFactor::Dense(c) => c.solve(rhs),
            QFactor::Cg { q, tol, max_iter } => {
                crate::linalg::conjugate_gradients(q, rhs, *tol, *max_iter)
                    .expect("Q is positive definite")
                    .solution
            }
        }
    }

    fn solve_mat(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        match self {
            QFactor::Dense(c) => c.solve(rhs),
            QFactor::Cg { .. } => {
                let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
                for (i, col) in rhs.column_iter().enumerate() {
                    out.set_column(i, &self.solve_vec(&col.into_owned()));
                }
                out
            }
        }
    }
}

/// Outcome of one hyperparameter step.
#[derive(Clone, Copy, Debug)]
pub struct HyperStepOutcome<T: Scalar> {
    /// True when a non-finite objective was met and the step was skipped.
    pub skipped: bool,
    /// Objective (MLL plus priors) at the pre-step parameters.
    pub objective: T,
}

/// Solver caches tied to the current parameters and root: the factorized
/// r x r system Q, its log-determinant, the unit-scale grid operator, and the
/// predictive mean cache `M W'y`.
struct SolveCaches<T: Scalar> {
    khat: KroneckerToeplitzOperator<T>,
    q_factor: QFactor<T>,
    log_det_q: T,
    mean_cache: DVector<T>,
}

impl<T: Scalar> Clone for SolveCaches<T> {
    fn clone(&self) -> Self {
        SolveCaches {
            khat: KroneckerToeplitzOperator::new(
                self.khat
                    .factors()
                    .iter()
                    .map(|f| crate::linalg::ToeplitzOperator::new(f.first_column().to_vec()).unwrap())
                    .collect(),
            )
            .unwrap(),
            q_factor: self.q_factor.clone(),
            log_det_q: self.log_det_q,
            mean_cache: self.mean_cache.clone(),
        }
    }
}

/// Constant-size streaming GP state: the grid, kernel hyperparameters, and the
/// caches W'y, y'y, and a root L (with pseudo-inverse factor J) of W'W.
///
/// Memory is O(m r) and every operation is O(m^2)-bounded regardless of how
/// many observations have been absorbed.
#[derive(Clone)]
pub struct WiskiState<T: Scalar> {
    grid: Grid<T>,
    spec: KernelSpec,
    params: KernelParams<T>,
    priors: KernelPriors<T>,
    projection: Option<ProjectionMap<T>>,
    mode: NoiseMode,
    wty: DVector<T>,
    yty: T,
    log_det_noise: T,
    root: LowRankRoot<T>,
    n: usize,
    jitter: T,
    q_policy: QSolvePolicy<T>,
    /// L' Khat L for the current lengthscales and root; rebuilt lazily after
    /// any root or lengthscale change.
    ghat: Option<DMatrix<T>>,
    solve: Option<SolveCaches<T>>,
}

impl<T: Scalar> WiskiState<T> {
    /// Batch initialization: accumulate the caches densely, root-decompose
    /// W'W + jitter*I once, and return a streaming-ready state. `n0 = 0` is
    /// permitted.
    pub fn init(
        grid: Grid<T>,
        spec: KernelSpec,
        params: KernelParams<T>,
        x0: &DMatrix<T>,
        y0: &DVector<T>,
    ) -> Result<Self> {
        Self::init_with_options(grid, spec, params, x0, y0, InitOptions::default())
    }

    /// Batch initialization with fixed per-observation noise variances.
    pub fn init_hetero(
        grid: Grid<T>,
        spec: KernelSpec,
        params: KernelParams<T>,
        x0: &DMatrix<T>,
        y0: &DVector<T>,
        noise: &DVector<T>,
        options: InitOptions<T>,
    ) -> Result<Self> {
        Self::init_impl(grid, spec, params, x0, y0, Some(noise), options)
    }

    pub fn init_with_options(
        grid: Grid<T>,
        spec: KernelSpec,
        params: KernelParams<T>,
        x0: &DMatrix<T>,
        y0: &DVector<T>,
        options: InitOptions<T>,
    ) -> Result<Self> {
        Self::init_impl(grid, spec, params, x0, y0, None, options)
    }

    fn init_impl(
        grid: Grid<T>,
        spec: KernelSpec,
        params: KernelParams<T>,
        x0: &DMatrix<T>,
        y0: &DVector<T>,
        noise: Option<&DVector<T>>,
        options: InitOptions<T>,
    ) -> Result<Self> {
        let n0 = x0.nrows();
        if y0.len() != n0 {
            return Err(Error::dims(n0, y0.len()));
        }
        if let Some(nv) = noise {
            if nv.len() != n0 {
                return Err(Error::dims(n0, nv.len()));
            }
            if nv.iter().any(|v| *v <= T::zero()) {
                return Err(Error::InvalidArgument("noise variances must be positive".into()));
            }
        }
        if !params.is_finite() {
            return Err(Error::InvalidArgument("non-finite hyperparameters".into()));
        }
        let m = grid.num_nodes();
        let rank = options.rank.unwrap_or(if m <= 1024 { m } else { m / 2 });
        if rank == 0 || rank > m {
            return Err(Error::InvalidArgument(format!(
                "root rank {rank} out of range for m = {m}"
            )));
        }
        if options.jitter < T::zero() {
            return Err(Error::InvalidArgument("jitter must be non-negative".into()));
        }
        if options.jitter == T::zero() && n0 == 0 {
            return Err(Error::InvalidArgument(
                "empty initialization requires a positive jitter".into(),
            ));
        }

        let mode = if noise.is_some() {
            NoiseMode::FixedNoise
        } else {
            NoiseMode::Homoscedastic
        };

        let mut state = WiskiState {
            grid,
            spec,
            params,
            priors: options.priors,
            projection: options.projection,
            mode,
            wty: DVector::zeros(m),
            yty: T::zero(),
            log_det_noise: T::zero(),
            root: LowRankRoot::identity_scaled(m, rank, T::one()),
            n: n0,
            jitter: options.jitter,
            q_policy: options.q_solve,
            ghat: None,
            solve: None,
        };

        if n0 == 0 {
            state.root = LowRankRoot::identity_scaled(m, rank, options.jitter);
            return Ok(state);
        }

        // Dense accumulation of the Gram matrix, then one root decomposition.
        let mut gram = DMatrix::<T>::zeros(m, m);
        for i in 0..m {
            gram[(i, i)] = options.jitter;
        }
        for row in 0..n0 {
            let x: Vec<T> = x0.row(row).iter().copied().collect();
            let w = state.weights_for(&x)?;
            let (y, d) = match noise {
                Some(nv) => (y0[row], nv[row]),
                None => (y0[row], T::one()),
            };
            if mode == NoiseMode::FixedNoise {
                state.log_det_noise += d.ln();
            }
            scatter_add(&mut state.wty, &w, y / d);
            state.yty += y * y / d;
            for (i, vi) in w.iter() {
                for (j, vj) in w.iter() {
                    gram[(i, j)] += vi * vj / d;
                }
            }
        }
        state.root = if rank == m {
            match LowRankRoot::from_cholesky(&gram) {
                Ok(r) => r,
                Err(Error::NotPositiveDefinite(_)) => LowRankRoot::from_dense_eigen(&gram, rank)?,
                Err(e) => return Err(e),
            }
        } else {
            crate::linalg::root_decomposition(&gram, m, rank)?
        };
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn projection(&self) -> Option<&ProjectionMap<T>> {
        self.projection.as_ref()
    }

    pub fn priors(&self) -> &KernelPriors<T> {
        &self.priors
    }

    pub fn root(&self) -> &LowRankRoot<T> {
        &self.root
    }

    pub fn wty(&self) -> &DVector<T> {
        &self.wty
    }

    pub fn yty(&self) -> T {
        self.yty
    }

    /// Replace the hyperparameters, dropping every parameter-dependent cache.
    pub fn set_params(&mut self, params: KernelParams<T>) -> Result<()> {
        if !params.is_finite() {
            return Err(Error::InvalidArgument("non-finite hyperparameters".into()));
        }
        if params.log_lengthscales != self.params.log_lengthscales {
            self.ghat = None;
        }
        self.params = params;
        self.solve = None;
        Ok(())
    }

    fn sigma_eff2(&self) -> T {
        match self.mode {
            NoiseMode::Homoscedastic => self.params.noise_variance(),
            NoiseMode::FixedNoise => T::one(),
        }
    }

    /// f = outputscale / sigma^2; `f * Khat = sigma^{-2} K_UU`.
    fn m_scale(&self) -> T {
        self.params.outputscale() / self.sigma_eff2()
    }

    fn features_of(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.projection {
            Some(p) => {
                if x.len() != p.input_dims() {
                    return Err(Error::dims(p.input_dims(), x.len()));
                }
                Ok(p.apply(x))
            }
            None => {
                if x.len() != self.grid.dims() {
                    return Err(Error::dims(self.grid.dims(), x.len()));
                }
                Ok(x.to_vec())
            }
        }
    }

    /// Interpolation weights of a raw input (projection applied, out-of-bounds
    /// coordinates clamped with a warning).
    pub fn weights_for(&self, x: &[T]) -> Result<SparseWeights<T>> {
        interp_weights(&self.grid, &self.features_of(x)?)
    }

    // ------------------------------------------------------------------
    // caches

    fn ensure_ghat(&mut self) -> Result<()> {
        if self.ghat.is_some() {
            return Ok(());
        }
        let khat = kuu_operator_scaled(&self.spec, &self.params, &self.grid, T::one())?;
        self.ghat = Some(build_ghat(&khat, &self.root));
        Ok(())
    }

    fn ensure_solve(&mut self) -> Result<()> {
        if self.solve.is_some() {
            return Ok(());
        }
        self.ensure_ghat()?;
        let khat = kuu_operator_scaled(&self.spec, &self.params, &self.grid, T::one())?;
        let f = self.m_scale();
        let ghat = self.ghat.as_ref().expect("ensured above");
        let (q_factor, log_det_q) = factorize_q(ghat, f, self.q_policy)?;
        let mean_cache = apply_m_raw(&khat, f, self.root.factor(), &q_factor, &self.wty);
        self.solve = Some(SolveCaches {
            khat,
            q_factor,
            log_det_q,
            mean_cache,
        });
        Ok(())
    }

    /// Make the lazy solver caches current (e.g. before sharing a snapshot
    /// across read-only users).
    pub fn precompute(&mut self) -> Result<()> {
        self.ensure_solve()
    }

    /// Apply the Woodbury inner matrix `M` to a dense vector through a single
    /// solve against Q.
    pub fn apply_m(&mut self, v: &DVector<T>) -> Result<DVector<T>> {
        let m = self.grid.num_nodes();
        if v.len() != m {
            return Err(Error::dims(m, v.len()));
        }
        self.ensure_solve()?;
        let s = self.solve.as_ref().expect("ensured");
        Ok(apply_m_raw(&s.khat, self.m_scale(), self.root.factor(), &s.q_factor, v))
    }

    /// Columnwise [`WiskiState::apply_m`].
    pub fn apply_m_mat(&mut self, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        let m = self.grid.num_nodes();
        if v.nrows() != m {
            return Err(Error::dims(m, v.nrows()));
        }
        self.ensure_solve()?;
        let s = self.solve.as_ref().expect("ensured");
        Ok(apply_m_mat_raw(&s.khat, self.m_scale(), self.root.factor(), &s.q_factor, v))
    }

    // ------------------------------------------------------------------
    // likelihood and posterior

    /// Marginal log-likelihood of everything conditioned so far; cost is
    /// independent of n given the caches.
    pub fn marginal_log_likelihood(&mut self) -> Result<T> {
        if self.n == 0 {
            return Err(Error::InvalidState("MLL undefined for an empty state".into()));
        }
        self.ensure_solve()?;
        let s = self.solve.as_ref().expect("ensured");
        let quad = self.yty - self.wty.dot(&s.mean_cache);
        let sigma2 = self.sigma_eff2();
        let log_det = s.log_det_q + self.noise_log_det();
        let half = from_f64::<T>(0.5);
        Ok(-half * quad / sigma2 - half * log_det
            - half * from_usize::<T>(self.n) * T::two_pi().ln())
    }

    fn noise_log_det(&self) -> T {
        match self.mode {
            NoiseMode::Homoscedastic => from_usize::<T>(self.n) * self.params.noise_variance().ln(),
            NoiseMode::FixedNoise => self.log_det_noise,
        }
    }

    /// MLL plus the MAP prior penalties (the hyperparameter objective).
    pub fn map_objective(&mut self) -> Result<T> {
        let mll = self.marginal_log_likelihood()?;
        Ok(mll + self.priors.log_density(&self.params))
    }

    /// Posterior at one raw input point. The variance is the latent variance
    /// `sigma^2 w' M w`; add the noise variance for an observation-space
    /// predictive variance.
    pub fn predict(&mut self, x: &[T]) -> Result<PosteriorGaussian<T>> {
        self.ensure_solve()?;
        let w = self.weights_for(x)?;
        let m = self.grid.num_nodes();
        let wd = w.to_dense(m);
        let s = self.solve.as_ref().expect("ensured");
        let mean = weights_dot(&w, &s.mean_cache);
        let mw = apply_m_raw(&s.khat, self.m_scale(), self.root.factor(), &s.q_factor, &wd);
        let latent = self.sigma_eff2() * weights_dot(&w, &mw);
        Ok(PosteriorGaussian::new(mean, latent))
    }

    /// Posterior at many points, batching the Q-solves.
    pub fn predict_batch(&mut self, xs: &DMatrix<T>) -> Result<Vec<PosteriorGaussian<T>>> {
        self.ensure_solve()?;
        let m = self.grid.num_nodes();
        let q = xs.nrows();
        let mut weights = Vec::with_capacity(q);
        let mut wmat = DMatrix::<T>::zeros(m, q);
        for i in 0..q {
            let row: Vec<T> = xs.row(i).iter().copied().collect();
            let w = self.weights_for(&row)?;
            for (idx, val) in w.iter() {
                wmat[(idx, i)] += val;
            }
            weights.push(w);
        }
        let s = self.solve.as_ref().expect("ensured");
        let mw = apply_m_mat_raw(&s.khat, self.m_scale(), self.root.factor(), &s.q_factor, &wmat);
        let sigma2 = self.sigma_eff2();
        let mut out = Vec::with_capacity(q);
        for (i, w) in weights.iter().enumerate() {
            let mean = weights_dot(w, &s.mean_cache);
            let mut latent = T::zero();
            for (idx, val) in w.iter() {
                latent += val * mw[(idx, i)];
            }
            out.push(PosteriorGaussian::new(mean, sigma2 * latent));
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // conditioning

    /// Absorb one observation: rank-one updates to W'y, y'y, and the root.
    /// Cost O(m r), independent of n. Requires a homoscedastic state.
    pub fn condition(&mut self, x: &[T], y: T) -> Result<()> {
        if self.mode != NoiseMode::Homoscedastic {
            return Err(Error::InvalidState(
                "fixed-noise states must use condition_hetero".into(),
            ));
        }
        let w = self.weights_for(x)?;
        self.condition_weights(&w, y, T::one());
        Ok(())
    }

    /// Absorb one observation with its own fixed noise variance.
    pub fn condition_hetero(&mut self, x: &[T], y: T, noise_var: T) -> Result<()> {
        if self.mode != NoiseMode::FixedNoise {
            return Err(Error::InvalidState(
                "homoscedastic states must use condition".into(),
            ));
        }
        if noise_var <= T::zero() || !noise_var.is_finite() {
            return Err(Error::InvalidArgument("noise variance must be positive".into()));
        }
        let w = self.weights_for(x)?;
        self.log_det_noise += noise_var.ln();
        self.condition_weights(&w, y, noise_var);
        Ok(())
    }

    /// Shared conditioning core on precomputed weights. `noise_var` is 1 for
    /// the homoscedastic path.
    pub fn condition_weights(&mut self, w: &SparseWeights<T>, y: T, noise_var: T) {
        scatter_add(&mut self.wty, w, y / noise_var);
        self.yty += y * y / noise_var;
        self.n += 1;
        let scaled;
        let w_for_root = if noise_var == T::one() {
            w
        } else {
            scaled = w.scaled(T::one() / noise_var.sqrt());
            &scaled
        };
        self.root.rank_one_update(w_for_root);
        // Propagating the multiplicative update factor into the cached Gram
        // product is numerically unstable once the root carries the tiny
        // ridge directions, so the product is rebuilt lazily instead.
        self.ghat = None;
        self.solve = None;
    }

    /// Conditioning with an explicit dense weight vector in place of an
    /// interpolated one (finite-difference harness for the projection
    /// gradient).
    pub fn condition_dense_weights(&mut self, w: &DVector<T>, y: T) -> Result<()> {
        let m = self.grid.num_nodes();
        if w.len() != m {
            return Err(Error::dims(m, w.len()));
        }
        self.wty.axpy(y, w, T::one());
        self.yty += y * y;
        self.n += 1;
        self.root.rank_one_update_dense(w);
        self.ghat = None;
        self.solve = None;
        Ok(())
    }

    // ------------------------------------------------------------------
    // hyperparameters

    /// MLL evaluated at trial hyperparameters against the current caches. The
    /// stored caches W'y, y'y, L, J are parameter-free, so nothing is rebuilt
    /// beyond the small Q system.
    fn mll_for_params(&self, params: &KernelParams<T>, reuse_ghat: Option<&DMatrix<T>>) -> Result<T> {
        if self.n == 0 {
            return Err(Error::InvalidState("MLL undefined for an empty state".into()));
        }
        let khat = kuu_operator_scaled(&self.spec, params, &self.grid, T::one())?;
        let owned;
        let ghat = match reuse_ghat {
            Some(g) => g,
            None => {
                owned = build_ghat(&khat, &self.root);
                &owned
            }
        };
        let sigma2 = match self.mode {
            NoiseMode::Homoscedastic => params.noise_variance(),
            NoiseMode::FixedNoise => T::one(),
        };
        let f = params.outputscale() / sigma2;
        let (q_factor, log_det_q) = factorize_q(ghat, f, self.q_policy)?;
        let mz = apply_m_raw(&khat, f, self.root.factor(), &q_factor, &self.wty);
        let quad = self.yty - self.wty.dot(&mz);
        let noise_log_det = match self.mode {
            NoiseMode::Homoscedastic => from_usize::<T>(self.n) * params.noise_variance().ln(),
            NoiseMode::FixedNoise => self.log_det_noise,
        };
        let half = from_f64::<T>(0.5);
        Ok(-half * quad / sigma2 - half * (log_det_q + noise_log_det)
            - half * from_usize::<T>(self.n) * T::two_pi().ln())
    }

    /// One Adam ascent step on the log-space hyperparameters, with the
    /// gradient taken by central finite differences of the O(m^2) objective.
    /// Fixed-noise states exclude the noise parameter.
    pub fn hyper_step(&mut self, adam: &mut Adam<T>, lr: T) -> Result<HyperStepOutcome<T>> {
        if self.n < 2 {
            return Err(Error::InvalidState(
                "hyperparameter updates need at least two observations".into(),
            ));
        }
        let dims = self.spec.dims;
        let full = self.params.to_vec();
        let opt_len = self.optimizable_params();
        debug_assert_eq!(adam.dim(), opt_len);
        self.ensure_ghat()?;

        let eval = |p: &[T]| -> Result<T> {
            let mut v = full.clone();
            v[..opt_len].copy_from_slice(p);
            let params = KernelParams::from_vec(dims, &v);
            let reuse = if params.log_lengthscales == self.params.log_lengthscales {
                self.ghat.as_ref()
            } else {
                None
            };
            let mll = self.mll_for_params(&params, reuse)?;
            Ok(mll + self.priors.log_density(&params))
        };

        let p0: Vec<T> = full[..opt_len].to_vec();
        let objective = eval(&p0)?;
        let h = from_f64::<T>(FD_STEP);
        let grad = central_diff_gradient(eval, &p0, h)?;
        let Some(grad) = grad else {
            log::warn!("non-finite objective at perturbed hyperparameters; step skipped");
            return Ok(HyperStepOutcome { skipped: true, objective });
        };

        let mut p = p0;
        adam.ascent_step(&mut p, &grad, lr);
        let mut v = full;
        v[..opt_len].copy_from_slice(&p);
        let params = KernelParams::from_vec(dims, &v);
        self.set_params(params)?;
        Ok(HyperStepOutcome { skipped: false, objective })
    }

    /// Number of entries of the flattened parameter vector that hyper steps
    /// touch: lengthscales and outputscale always, the noise only when it is a
    /// learned hyperparameter.
    pub fn optimizable_params(&self) -> usize {
        match self.mode {
            NoiseMode::Homoscedastic => self.spec.dims + 2,
            NoiseMode::FixedNoise => self.spec.dims + 1,
        }
    }

    // ------------------------------------------------------------------
    // partial objective in the newest weight vector (projection learning)

    /// The w_t-dependent part of the time-t MLL, with the state holding data
    /// through t-1 and `(w, y)` the incoming observation:
    /// `1/(2 sigma^2) [ z'Mz - (v'z)^2 / (1 + v'w) ] - 1/2 ln(1 + v'w)` with
    /// `z = W'y + y w` and `v = M w`.
    pub fn partial_objective(&mut self, w: &DVector<T>, y: T) -> Result<T> {
        self.ensure_solve()?;
        let s = self.solve.as_ref().expect("ensured");
        let mz0 = s.mean_cache.clone();
        let v = apply_m_raw(&s.khat, self.m_scale(), self.root.factor(), &s.q_factor, w);
        let z = &self.wty + w * y;
        let mz = &mz0 + &v * y;
        let quad = z.dot(&mz);
        let u = v.dot(&z);
        let delta = T::one() + v.dot(w);
        if delta <= T::zero() {
            return Err(Error::NumericalBreakdown(
                "1 + v'w not positive in partial objective".into(),
            ));
        }
        let half = from_f64::<T>(0.5);
        Ok(half * (quad - u * u / delta) / self.sigma_eff2() - half * delta.ln())
    }

    /// Closed-form gradient of [`WiskiState::partial_objective`] with respect
    /// to the dense weight vector.
    pub fn partial_objective_grad(&mut self, w: &DVector<T>, y: T) -> Result<DVector<T>> {
        self.ensure_solve()?;
        let s = self.solve.as_ref().expect("ensured");
        let mz0 = s.mean_cache.clone();
        let v = apply_m_raw(&s.khat, self.m_scale(), self.root.factor(), &s.q_factor, w);
        let delta = T::one() + v.dot(w);
        if delta <= T::zero() {
            return Err(Error::NumericalBreakdown(
                "1 + v'w not positive in partial objective".into(),
            ));
        }
        let u = w.dot(&mz0) + y * w.dot(&v);
        let s2 = self.sigma_eff2();
        // d/dw of the quadratic term
        let mut g = (&mz0 + &v * y) * (y / s2);
        // d/dw of the rank-one correction
        g += (&mz0 + &v * (y + y)) * (-u / (s2 * delta));
        g += &v * (u * u / (s2 * delta * delta));
        // d/dw of the log-determinant term
        g += &v * (-T::one() / delta);
        Ok(g)
    }

    /// Gradient of the partial objective with respect to the projection
    /// parameters: the closed-form weight-space gradient chained through
    /// central finite differences of the 4^d interpolation weights.
    pub fn projection_grad(&mut self, x_raw: &[T], y: T) -> Result<Vec<T>> {
        let proj = match &self.projection {
            Some(p) => p.clone(),
            None => {
                return Err(Error::InvalidState("no projection present".into()));
            }
        };
        let m = self.grid.num_nodes();
        let feats = proj.apply(x_raw);
        let w = interp_weights(&self.grid, &feats)?;
        let wd = w.to_dense(m);
        let g = self.partial_objective_grad(&wd, y)?;

        let h = from_f64::<T>(1e-5);
        let mut phi = proj.params_vec();
        let mut grad = vec![T::zero(); phi.len()];
        for k in 0..phi.len() {
            let orig = phi[k];
            phi[k] = orig + h;
            let wp = interp_weights(&self.grid, &proj.with_params(&phi).apply(x_raw))?;
            phi[k] = orig - h;
            let wm = interp_weights(&self.grid, &proj.with_params(&phi).apply(x_raw))?;
            phi[k] = orig;
            let sp = weights_dot(&wp, &g);
            let sm = weights_dot(&wm, &g);
            grad[k] = (sp - sm) / (h + h);
        }
        Ok(grad)
    }

    /// One Adam ascent step on the projection parameters.
    pub fn projection_step(&mut self, x_raw: &[T], y: T, adam: &mut Adam<T>, lr: T) -> Result<()> {
        let grad = self.projection_grad(x_raw, y)?;
        let proj = self.projection.as_ref().expect("checked by projection_grad");
        let mut phi = proj.params_vec();
        adam.ascent_step(&mut phi, &grad, lr);
        self.projection = Some(proj.with_params(&phi));
        // Past weights stay fixed; no cache is invalidated by moving phi.
        Ok(())
    }

    // ------------------------------------------------------------------
    // fantasy conditioning

    /// Posterior variances at `queries` after hypothetically conditioning on
    /// the `fantasy` points (targets are irrelevant for variances). The state
    /// itself is untouched apart from cache fills; the fantasy corrections are
    /// applied through the rank-one identity on `M` rather than cloned roots.
    /// `fantasy_noise` supplies per-point variances for fixed-noise states.
    pub fn fantasy_variance(
        &mut self,
        fantasy: &DMatrix<T>,
        fantasy_noise: Option<&DVector<T>>,
        queries: &DMatrix<T>,
    ) -> Result<Vec<T>> {
        if self.mode == NoiseMode::FixedNoise && fantasy.nrows() > 0 && fantasy_noise.is_none() {
            return Err(Error::InvalidArgument(
                "fixed-noise fantasies need noise variances".into(),
            ));
        }
        self.ensure_solve()?;
        let m = self.grid.num_nodes();
        let qn = queries.nrows();
        let sigma2 = self.sigma_eff2();

        let mut qweights = Vec::with_capacity(qn);
        let mut wmat = DMatrix::<T>::zeros(m, qn);
        for i in 0..qn {
            let row: Vec<T> = queries.row(i).iter().copied().collect();
            let w = self.weights_for(&row)?;
            for (idx, val) in w.iter() {
                wmat[(idx, i)] += val;
            }
            qweights.push(w);
        }
        let s = self.solve.as_ref().expect("ensured");
        let f = self.m_scale();
        let mw = apply_m_mat_raw(&s.khat, f, self.root.factor(), &s.q_factor, &wmat);
        let mut vars: Vec<T> = (0..qn)
            .map(|i| {
                let mut acc = T::zero();
                for (idx, val) in qweights[i].iter() {
                    acc += val * mw[(idx, i)];
                }
                sigma2 * acc
            })
            .collect();

        let mut corrections: Vec<(DVector<T>, T)> = Vec::with_capacity(fantasy.nrows());
        for k in 0..fantasy.nrows() {
            let row: Vec<T> = fantasy.row(k).iter().copied().collect();
            let mut fw = self.weights_for(&row)?;
            if let Some(nv) = fantasy_noise {
                fw = fw.scaled(T::one() / nv[k].sqrt());
            }
            let fwd = fw.to_dense(m);
            let mut v = apply_m_raw(&s.khat, f, self.root.factor(), &s.q_factor, &fwd);
            for (vt, delta) in &corrections {
                let c = weights_dot(&fw, vt) / *delta;
                v.axpy(-c, vt, T::one());
            }
            let delta = T::one() + weights_dot(&fw, &v);
            if delta <= T::zero() {
                return Err(Error::NumericalBreakdown(
                    "fantasy correction lost positivity".into(),
                ));
            }
            for (i, qw) in qweights.iter().enumerate() {
                let d = weights_dot(qw, &v);
                vars[i] -= sigma2 * d * d / delta;
            }
            corrections.push((v, delta));
        }
        Ok(vars.into_iter().map(|v| v.max(T::zero())).collect())
    }

    /// Reference path for [`WiskiState::fantasy_variance`]: clone the state,
    /// apply real rank-one root updates with zero targets, and read the
    /// variances back.
    pub fn fantasy_variance_via_root(
        &self,
        fantasy: &DMatrix<T>,
        fantasy_noise: Option<&DVector<T>>,
        queries: &DMatrix<T>,
    ) -> Result<Vec<T>> {
        let mut clone = self.clone();
        for k in 0..fantasy.nrows() {
            let row: Vec<T> = fantasy.row(k).iter().copied().collect();
            match clone.mode {
                NoiseMode::Homoscedastic => clone.condition(&row, T::zero())?,
                NoiseMode::FixedNoise => {
                    let nv = fantasy_noise.ok_or_else(|| {
                        Error::InvalidArgument("fixed-noise fantasies need noise variances".into())
                    })?;
                    clone.condition_hetero(&row, T::zero(), nv[k])?;
                }
            }
        }
        let posts = clone.predict_batch(queries)?;
        Ok(posts.into_iter().map(|p| p.variance).collect())
    }
}

/// Immutable view over the solved caches, letting acquisition scans apply `M`
/// repeatedly without re-borrowing the state mutably.
pub(crate) struct SolverView<'a, T: Scalar> {
    khat: &'a KroneckerToeplitzOperator<T>,
    q_factor: &'a QFactor<T>,
    l: &'a DMatrix<T>,
    f: T,
}

impl<'a, T: Scalar> SolverView<'a, T> {
    pub fn apply_m(&self, v: &DVector<T>) -> DVector<T> {
        apply_m_raw(self.khat, self.f, self.l, self.q_factor, v)
    }
}

impl<T: Scalar> WiskiState<T> {
    /// Borrow the solved caches; call [`WiskiState::precompute`] first.
    pub(crate) fn solver_view(&self) -> Option<SolverView<'_, T>> {
        self.solve.as_ref().map(|s| SolverView {
            khat: &s.khat,
            q_factor: &s.q_factor,
            l: self.root.factor(),
            f: self.m_scale(),
        })
    }
}

// ----------------------------------------------------------------------
// free helpers shared by the state and its parameter-sweep evaluations

fn build_ghat<T: Scalar>(khat: &KroneckerToeplitzOperator<T>, root: &LowRankRoot<T>) -> DMatrix<T> {
    let kl = khat.apply_mat(root.factor());
    // explicit transpose dispatches to the blocked gemm kernel
    let mut g = root.factor().transpose() * &kl;
    // symmetrize away matvec roundoff
    let gt = g.transpose();
    g += gt;
    g *= from_f64::<T>(0.5);
    g
}

fn factorize_q<T: Scalar>(
    ghat: &DMatrix<T>,
    f: T,
    policy: QSolvePolicy<T>,
) -> Result<(QFactor<T>, T)> {
    let r = ghat.nrows();
    let mut q = ghat * f;
    for i in 0..r {
        q[(i, i)] += T::one();
    }
    match policy {
        QSolvePolicy::Dense => {
            let chol = match q.clone().cholesky() {
                Some(c) => c,
                None => {
                    // One jitter retry; Q >= I makes failures a roundoff artifact.
                    let bump = from_f64::<T>(1e-10);
                    for i in 0..r {
                        q[(i, i)] += bump;
                    }
                    q.cholesky().ok_or_else(|| {
                        Error::NotPositiveDefinite(
                            "Q factorization failed after jitter retry".into(),
                        )
                    })?
                }
            };
            let mut log_det = T::zero();
            for i in 0..r {
                log_det += chol.l_dirty()[(i, i)].ln();
            }
            Ok((QFactor::Dense(chol), log_det + log_det))
        }
        QSolvePolicy::Cg { tol, max_iter, slq_probes, slq_steps } => {
            let log_det = crate::linalg::slq_logdet(&q, slq_probes, slq_steps, 0x51)?;
            Ok((QFactor::Cg { q, tol, max_iter }, log_det))
        }
    }
}

fn apply_m_raw<T: Scalar>(
    khat: &KroneckerToeplitzOperator<T>,
    f: T,
    l: &DMatrix<T>,
    q_factor: &QFactor<T>,
    v: &DVector<T>,
) -> DVector<T> {
    let t = khat.apply(v) * f;
    let a = l.tr_mul(&t);
    let b = q_factor.solve_vec(&a);
    let lb = l * b;
    let corr = khat.apply(&lb) * f;
    t - corr
}

fn apply_m_mat_raw<T: Scalar>(
    khat: &KroneckerToeplitzOperator<T>,
    f: T,
    l: &DMatrix<T>,
    q_factor: &QFactor<T>,
    v: &DMatrix<T>,
) -> DMatrix<T> {
    let t = khat.apply_mat(v) * f;
    let a = l.transpose() * &t;
    let b = q_factor.solve_mat(&a);
    let lb = l * b;
    let corr = khat.apply_mat(&lb) * f;
    t - corr
}

/// Log-Dirichlet transform turning a one-hot class label into per-class
/// regression targets and fixed noise variances:
/// `alpha_c = 1{label=c} + alpha_eps`, `sigma_c^2 = ln(1 + 1/alpha_c)`,
/// `y_c = ln(alpha_c) - sigma_c^2 / 2`.
pub fn dirichlet_transform<T: Scalar>(
    label: usize,
    num_classes: usize,
    alpha_eps: T,
) -> Result<Vec<(T, T)>> {
    if alpha_eps <= T::zero() {
        return Err(Error::InvalidArgument("alpha_eps must be positive".into()));
    }
    if label >= num_classes {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {num_classes} classes"
        )));
    }
    let half = from_f64::<T>(0.5);
    Ok((0..num_classes)
        .map(|c| {
            let alpha = if c == label { T::one() + alpha_eps } else { alpha_eps };
            let var = (T::one() + T::one() / alpha).ln();
            let target = alpha.ln() - half * var;
            (target, var)
        })
        .collect())
}
