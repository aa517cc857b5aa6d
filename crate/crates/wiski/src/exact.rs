//! Dense Cholesky exact GP and the dense structured-interpolation reference,
//! used as correctness oracles and as the timing baseline.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{interp_weights, Grid};
use crate::kernels::{kernel_matrix, KernelParams, KernelSpec};
use crate::posterior::PosteriorGaussian;
use crate::scalar::{from_f64, from_usize, Scalar};

/// Jitter escalation ladder tried when the training covariance fails to
/// factorize; after the last rung the fit fails loudly.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-6, 1e-4];

/// Exact GP fit: training inputs, the Cholesky factor of K_XX + D, and the
/// solve of the targets against it.
#[derive(Clone, Debug)]
pub struct ExactGp<T: Scalar> {
    spec: KernelSpec,
    params: KernelParams<T>,
    x: DMatrix<T>,
    y: DVector<T>,
    /// Per-point noise variances (filled with sigma^2 for the homoscedastic case).
    noise: Vec<T>,
    fixed_noise: bool,
    chol_l: DMatrix<T>,
    alpha: DVector<T>,
    jitter_used: T,
}

fn cholesky_with_ladder<T: Scalar>(k: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    let n = k.nrows();
    if let Some(ch) = k.clone().cholesky() {
        return Ok((ch.l(), T::zero()));
    }
    for jit in JITTER_LADDER {
        let jit = from_f64::<T>(jit);
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jit;
        }
        if let Some(ch) = kj.cholesky() {
            return Ok((ch.l(), jit));
        }
    }
    Err(Error::NotPositiveDefinite(
        "training covariance failed Cholesky after jitter escalation".into(),
    ))
}

fn solve_lower<T: Scalar>(l: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    l.solve_lower_triangular(b).expect("nonsingular factor")
}

impl<T: Scalar> ExactGp<T> {
    fn build(
        spec: KernelSpec,
        params: KernelParams<T>,
        x: DMatrix<T>,
        y: DVector<T>,
        noise: Vec<T>,
        fixed_noise: bool,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::dims(n, y.len()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("exact fit needs at least one point".into()));
        }
        let mut k = kernel_matrix(&spec, &params, &x, &x);
        for i in 0..n {
            k[(i, i)] += noise[i];
        }
        let (chol_l, jitter_used) = cholesky_with_ladder(&k)?;
        let tmp = solve_lower(&chol_l, &y);
        let alpha = chol_l
            .transpose()
            .solve_upper_triangular(&tmp)
            .expect("nonsingular factor");
        Ok(ExactGp {
            spec,
            params,
            x,
            y,
            noise,
            fixed_noise,
            chol_l,
            alpha,
            jitter_used,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn jitter_used(&self) -> T {
        self.jitter_used
    }

    /// Marginal log-likelihood of the fitted data.
    pub fn mll(&self) -> T {
        let n = self.n();
        let quad = self.y.dot(&self.alpha);
        let mut log_det = T::zero();
        for i in 0..n {
            log_det += self.chol_l[(i, i)].ln();
        }
        let half = from_f64::<T>(0.5);
        -half * quad - log_det - half * from_usize::<T>(n) * T::two_pi().ln()
    }

    /// Posterior at a query point (latent variance).
    pub fn predict(&self, x_star: &[T]) -> PosteriorGaussian<T> {
        let xs = DMatrix::from_row_slice(1, x_star.len(), x_star);
        let k_star = kernel_matrix(&self.spec, &self.params, &self.x, &xs);
        let k_star = k_star.column(0).into_owned();
        let mean = k_star.dot(&self.alpha);
        let v = solve_lower(&self.chol_l, &k_star);
        let prior = self.params.outputscale();
        PosteriorGaussian::new(mean, prior - v.dot(&v))
    }

    /// Append one observation by extending the Cholesky factor in place;
    /// equivalent to refitting from scratch up to factorization roundoff.
    pub fn append(&mut self, x_new: &[T], y_new: T, noise_var: Option<T>) -> Result<()> {
        let n = self.n();
        let d = self.x.ncols();
        if x_new.len() != d {
            return Err(Error::dims(d, x_new.len()));
        }
        let noise = match (self.fixed_noise, noise_var) {
            (true, Some(v)) => v,
            (true, None) => {
                return Err(Error::InvalidArgument(
                    "fixed-noise fit requires a noise variance per appended point".into(),
                ))
            }
            (false, _) => self.params.noise_variance(),
        };

        let xs = DMatrix::from_row_slice(1, d, x_new);
        let k_col = kernel_matrix(&self.spec, &self.params, &self.x, &xs).column(0).into_owned();
        let k_nn = self.params.outputscale() + noise + self.jitter_used;
        let l12 = solve_lower(&self.chol_l, &k_col);
        let diag2 = k_nn - l12.dot(&l12);
        if diag2 <= T::zero() || !diag2.is_finite() {
            // Fall back to a clean refit; the incremental path lost positivity.
            let mut x = self.x.clone().insert_row(n, T::zero());
            for j in 0..d {
                x[(n, j)] = x_new[j];
            }
            let y = self.y.clone().insert_row(n, y_new);
            let mut nv = self.noise.clone();
            nv.push(noise);
            *self = ExactGp::build(self.spec, self.params.clone(), x, y, nv, self.fixed_noise)?;
            return Ok(());
        }

        let mut l = DMatrix::zeros(n + 1, n + 1);
        l.view_mut((0, 0), (n, n)).copy_from(&self.chol_l);
        for i in 0..n {
            l[(n, i)] = l12[i];
        }
        l[(n, n)] = diag2.sqrt();
        self.chol_l = l;
        let mut x = self.x.clone().insert_row(n, T::zero());
        for j in 0..d {
            x[(n, j)] = x_new[j];
        }
        self.x = x;
        self.y = self.y.clone().insert_row(n, y_new);
        self.noise.push(noise);
        let tmp = solve_lower(&self.chol_l, &self.y);
        self.alpha = self
            .chol_l
            .transpose()
            .solve_upper_triangular(&tmp)
            .expect("nonsingular factor");
        Ok(())
    }

    /// Rebuild the factorization for new hyperparameters (O(n^3)).
    pub fn refit_with_params(&mut self, params: KernelParams<T>) -> Result<()> {
        let noise = if self.fixed_noise {
            self.noise.clone()
        } else {
            vec![params.noise_variance(); self.n()]
        };
        *self = ExactGp::build(
            self.spec,
            params,
            self.x.clone(),
            self.y.clone(),
            noise,
            self.fixed_noise,
        )?;
        Ok(())
    }

    /// MLL at trial hyperparameters without disturbing the fit (O(n^3)).
    pub fn mll_at(&self, params: &KernelParams<T>) -> Result<T> {
        let n = self.n();
        let mut k = kernel_matrix(&self.spec, params, &self.x, &self.x);
        for i in 0..n {
            let noise = if self.fixed_noise {
                self.noise[i]
            } else {
                params.noise_variance()
            };
            k[(i, i)] += noise;
        }
        let (l, _) = cholesky_with_ladder(&k)?;
        let tmp = solve_lower(&l, &self.y);
        let quad = tmp.dot(&tmp);
        let mut log_det = T::zero();
        for i in 0..n {
            log_det += l[(i, i)].ln();
        }
        let half = from_f64::<T>(0.5);
        Ok(-half * quad - log_det - half * from_usize::<T>(n) * T::two_pi().ln())
    }
}

/// Fit with homoscedastic Gaussian noise sigma^2 taken from `params`.
pub fn exact_fit<T: Scalar>(
    spec: KernelSpec,
    params: KernelParams<T>,
    x: DMatrix<T>,
    y: DVector<T>,
) -> Result<ExactGp<T>> {
    let n = x.nrows();
    let noise = vec![params.noise_variance(); n];
    ExactGp::build(spec, params, x, y, noise, false)
}

/// Fit with fixed per-point noise variances.
pub fn exact_fit_hetero<T: Scalar>(
    spec: KernelSpec,
    params: KernelParams<T>,
    x: DMatrix<T>,
    y: DVector<T>,
    noise: Vec<T>,
) -> Result<ExactGp<T>> {
    if noise.len() != x.nrows() {
        return Err(Error::dims(x.nrows(), noise.len()));
    }
    if noise.iter().any(|v| *v <= T::zero()) {
        return Err(Error::InvalidArgument("noise variances must be positive".into()));
    }
    ExactGp::build(spec, params, x, y, noise, true)
}

/// Posterior at `x_star` from [`exact_fit`]; provided as a free function to
/// mirror the fit/predict pairing.
pub fn exact_predict<T: Scalar>(fit: &ExactGp<T>, x_star: &[T]) -> PosteriorGaussian<T> {
    fit.predict(x_star)
}

/// Everything the dense interpolation reference produces in one pass.
pub struct DenseSkiResult<T: Scalar> {
    pub mll: T,
    pub posteriors: Vec<PosteriorGaussian<T>>,
}

/// Dense reference for the structured-interpolation model: materializes W and
/// K_UU, forms K = W K_UU W' + D, and evaluates the exact formulas on it.
/// This is the master oracle for the streaming model.
pub fn dense_ski_oracle_hetero<T: Scalar>(
    grid: &Grid<T>,
    spec: &KernelSpec,
    params: &KernelParams<T>,
    x: &DMatrix<T>,
    y: &DVector<T>,
    noise: &DVector<T>,
    queries: &DMatrix<T>,
) -> Result<DenseSkiResult<T>> {
    let n = x.nrows();
    let m = grid.num_nodes();
    if n == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one point".into()));
    }

    let mut w = DMatrix::<T>::zeros(n, m);
    for i in 0..n {
        let row: Vec<T> = x.row(i).iter().copied().collect();
        let sw = interp_weights(grid, &row)?;
        for (idx, val) in sw.iter() {
            w[(i, idx)] += val;
        }
    }
    let nodes = grid_nodes_matrix(grid);
    let kuu = kernel_matrix(spec, params, &nodes, &nodes);
    let wk = &w * &kuu;
    let mut ktilde = &wk * w.transpose();
    for i in 0..n {
        ktilde[(i, i)] += noise[i];
    }
    let chol = ktilde
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("dense SKI covariance".into()))?;
    let l = chol.l();
    let tmp = solve_lower(&l, y);
    let quad = tmp.dot(&tmp);
    let mut log_det = T::zero();
    for i in 0..n {
        log_det += l[(i, i)].ln();
    }
    let half = from_f64::<T>(0.5);
    let mll = -half * quad - log_det - half * from_usize::<T>(n) * T::two_pi().ln();

    let alpha = chol.solve(y);
    let mut posteriors = Vec::with_capacity(queries.nrows());
    for qi in 0..queries.nrows() {
        let row: Vec<T> = queries.row(qi).iter().copied().collect();
        let sw = interp_weights(grid, &row)?;
        let w_star = sw.to_dense(m);
        let kuu_w = &kuu * &w_star;
        let cross = &w * &kuu_w; // n-vector of cross covariances
        let prior = w_star.dot(&kuu_w);
        let mean = cross.dot(&alpha);
        let v = solve_lower(&l, &cross);
        posteriors.push(PosteriorGaussian::new(mean, prior - v.dot(&v)));
    }
    Ok(DenseSkiResult { mll, posteriors })
}

/// Homoscedastic dense reference; see [`dense_ski_oracle_hetero`].
pub fn dense_ski_oracle<T: Scalar>(
    grid: &Grid<T>,
    spec: &KernelSpec,
    params: &KernelParams<T>,
    x: &DMatrix<T>,
    y: &DVector<T>,
    queries: &DMatrix<T>,
) -> Result<DenseSkiResult<T>> {
    let noise = DVector::from_element(x.nrows(), params.noise_variance());
    dense_ski_oracle_hetero(grid, spec, params, x, y, &noise, queries)
}

pub fn grid_nodes_matrix<T: Scalar>(grid: &Grid<T>) -> DMatrix<T> {
    let m = grid.num_nodes();
    let d = grid.dims();
    let mut out = DMatrix::zeros(m, d);
    for i in 0..m {
        let node = grid.node(i);
        for (j, v) in node.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::kernels::KernelFamily;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec1() -> KernelSpec {
        KernelSpec { family: KernelFamily::Rbf, dims: 1 }
    }

    #[test]
    fn single_point_mll_closed_form() {
        // n=1, y=0, k(x,x)=1, sigma^2=1: mll = -0.5 ln(4 pi)
        let mut params = KernelParams::<f64>::defaults(1);
        params.log_outputscale = 0.0;
        params.log_noise = 0.0;
        let x = DMatrix::from_row_slice(1, 1, &[0.3]);
        let y = DVector::from_vec(vec![0.0]);
        let fit = exact_fit(spec1(), params, x, y).unwrap();
        let want = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((fit.mll() - want).abs() < 1e-12);
    }

    #[test]
    fn two_point_posterior_by_hand() {
        // RBF, l=1, s=1, sigma^2=0.5, points x=0 (y=1) and x=1 (y=-1), query 0.5.
        let mut params = KernelParams::<f64>::defaults(1);
        params.log_lengthscales[0] = 0.0;
        params.log_outputscale = 0.0;
        params.log_noise = 0.5f64.ln();
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let fit = exact_fit(spec1(), params, x, y).unwrap();
        let post = fit.predict(&[0.5]);

        // by-hand 2x2 algebra
        let k = (-0.5f64).exp();
        let ks = (-0.125f64).exp();
        let a = 1.5f64; // K + sigma^2 on diagonal
        let det = a * a - k * k;
        // K^{-1} = [[a, -k], [-k, a]] / det
        let alpha0 = (a * 1.0 - k * -1.0) / det;
        let alpha1 = (-k * 1.0 + a * -1.0) / det;
        let mean = ks * alpha0 + ks * alpha1;
        let quad = (a * ks * ks - 2.0 * k * ks * ks + a * ks * ks) / det;
        let var = 1.0 - quad;
        assert!((post.mean - mean).abs() < 1e-12);
        assert!((post.variance - var).abs() < 1e-12);
    }

    #[test]
    fn interpolation_and_locality_limits() {
        let mut params = KernelParams::<f64>::defaults(1);
        params.log_noise = 1e-8f64.ln();
        params.log_lengthscales[0] = 0.2f64.ln();
        let x = DMatrix::from_row_slice(3, 1, &[-0.5, 0.0, 0.5]);
        let y = DVector::from_vec(vec![0.3, -0.2, 0.8]);
        let fit = exact_fit(spec1(), params, x, y).unwrap();
        let at_train = fit.predict(&[0.0]);
        assert!((at_train.mean + 0.2).abs() < 1e-3);
        // far away: prior
        let far = fit.predict(&[50.0]);
        assert!(far.mean.abs() < 1e-6);
        assert!((far.variance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn append_matches_fresh_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = KernelParams::<f64>::defaults(2);
        let spec = KernelSpec { family: KernelFamily::Rbf, dims: 2 };
        let x = DMatrix::from_fn(20, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = DVector::from_fn(20, |_, _| rng.random::<f64>() - 0.5);
        let mut fit = exact_fit(spec, params.clone(), x.clone(), y.clone()).unwrap();
        let x_new = [0.17, -0.45];
        let y_new = 0.9;
        fit.append(&x_new, y_new, None).unwrap();

        let mut x2 = x.insert_row(20, 0.0);
        x2[(20, 0)] = x_new[0];
        x2[(20, 1)] = x_new[1];
        let y2 = y.insert_row(20, y_new);
        let fresh = exact_fit(spec, params, x2, y2).unwrap();
        assert!((fit.mll() - fresh.mll()).abs() < 1e-9);
        let a = fit.predict(&[0.0, 0.0]);
        let b = fresh.predict(&[0.0, 0.0]);
        assert!((a.mean - b.mean).abs() < 1e-9);
        assert!((a.variance - b.variance).abs() < 1e-9);
    }

    #[test]
    fn ski_oracle_equals_exact_when_points_sit_on_nodes() {
        // data on grid nodes with m = n and the grid equal to the data makes W
        // a permutation, so the interpolated kernel is exact.
        let grid = build_grid(&[(-1.0f64, 1.0)], &[5]).unwrap();
        let mut params = KernelParams::<f64>::defaults(1);
        params.log_lengthscales[0] = 0.7f64.ln();
        let nodes: Vec<f64> = (0..5).map(|i| grid.node_coord(0, i)).collect();
        let x = DMatrix::from_fn(5, 1, |i, _| nodes[i]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DVector::from_fn(5, |_, _| rng.random::<f64>() - 0.5);
        let queries = DMatrix::from_row_slice(2, 1, &[nodes[1], nodes[3]]);

        let oracle = dense_ski_oracle(&grid, &spec1(), &params, &x, &y, &queries).unwrap();
        let fit = exact_fit(spec1(), params, x, y).unwrap();
        assert!((oracle.mll - fit.mll()).abs() < 1e-8);
        for (q, post) in oracle.posteriors.iter().enumerate() {
            let want = fit.predict(&[queries[(q, 0)]]);
            assert!((post.mean - want.mean).abs() < 1e-8);
            assert!((post.variance - want.variance).abs() < 1e-8);
            assert!(post.variance >= 0.0);
        }
    }

    #[test]
    fn ski_oracle_converges_to_exact_as_grid_refines() {
        let mut params = KernelParams::<f64>::defaults(1);
        params.log_lengthscales[0] = 0.5f64.ln();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 24;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() * 1.6 - 0.8);
        let y = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let queries = DMatrix::from_row_slice(3, 1, &[-0.4, 0.1, 0.6]);
        let fit = exact_fit(spec1(), params.clone(), x.clone(), y.clone()).unwrap();

        let mut errs = Vec::new();
        for p in [17usize, 33, 65] {
            let grid = build_grid(&[(-1.2f64, 1.2)], &[p]).unwrap();
            let oracle = dense_ski_oracle(&grid, &spec1(), &params, &x, &y, &queries).unwrap();
            let mut err: f64 = 0.0;
            for (post, q) in oracle.posteriors.iter().zip(0..) {
                let want = fit.predict(&[queries[(q, 0)]]);
                err = err.max((post.mean - want.mean).abs());
            }
            errs.push(err);
        }
        // halving the spacing should reduce the error at least linearly
        assert!(errs[1] <= errs[0] * 0.6 + 1e-12, "errs {errs:?}");
        assert!(errs[2] <= errs[1] * 0.6 + 1e-12, "errs {errs:?}");
    }

    #[test]
    fn mll_prefers_generative_noise_direction() {
        // pure-noise data with sd 0.5: raising sigma^2 from far below toward the
        // sample variance raises the mll.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = DVector::from_fn(n, |_, _| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            0.5 * (-2.0f64 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        });
        let mut params = KernelParams::<f64>::defaults(1);
        params.log_outputscale = 0.01f64.ln();
        params.log_noise = 0.001f64.ln();
        let low = exact_fit(spec1(), params.clone(), x.clone(), y.clone()).unwrap().mll();
        params.log_noise = 0.25f64.ln();
        let high = exact_fit(spec1(), params, x, y).unwrap().mll();
        assert!(high > low);
    }
}
