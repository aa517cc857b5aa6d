//! Low-rank root decompositions `L L' ~ A` with a tracked pseudo-inverse
//! factor `J J' ~ A^+`, and rank-one updates to both.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{densify, lanczos, LinearOperator};
use crate::error::{Error, Result};
use crate::grid::SparseWeights;
use crate::scalar::{from_f64, Scalar};

/// Relative eigenvalue floor below which pseudo-inverse directions are dropped.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// An m x r factor `L` with `L L' ~ A`, plus the pseudo-inverse factor `J`
/// with `J J' ~ A^+` and `J' L ~ I_r` when `A` is full rank.
#[derive(Clone, Debug)]
pub struct LowRankRoot<T: Scalar> {
    l: DMatrix<T>,
    j: DMatrix<T>,
}

impl<T: Scalar> LowRankRoot<T> {
    /// The tracked dimension m.
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// The factor rank r.
    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn pinv_factor(&self) -> &DMatrix<T> {
        &self.j
    }

    /// Materialize `L L'` (test and oracle use).
    pub fn gram(&self) -> DMatrix<T> {
        &self.l * self.l.transpose()
    }

    /// Reassemble a root from stored factors (snapshot restore).
    pub fn from_factors(l: DMatrix<T>, j: DMatrix<T>) -> Self {
        debug_assert_eq!(l.shape(), j.shape());
        LowRankRoot { l, j }
    }

    /// Root of `scale * I`, truncated to `rank` columns.
    pub fn identity_scaled(dim: usize, rank: usize, scale: T) -> Self {
        let rank = rank.min(dim);
        let s = scale.sqrt();
        let mut l = DMatrix::zeros(dim, rank);
        let mut j = DMatrix::zeros(dim, rank);
        for i in 0..rank {
            l[(i, i)] = s;
            j[(i, i)] = T::one() / s;
        }
        LowRankRoot { l, j }
    }

    /// Full-rank root via dense Cholesky; `J = L^{-T}`.
    pub fn from_cholesky(a: &DMatrix<T>) -> Result<Self> {
        let m = a.nrows();
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .ok_or_else(|| Error::NumericalBreakdown("singular Cholesky factor".into()))?;
        Ok(LowRankRoot {
            l,
            j: l_inv.transpose(),
        })
    }

    /// Rank-`rank` root from a dense symmetric eigendecomposition, flooring
    /// eigenvalues below `EIGENVALUE_FLOOR * lambda_max`.
    pub fn from_dense_eigen(a: &DMatrix<T>, rank: usize) -> Result<Self> {
        let m = a.nrows();
        let rank = rank.min(m);
        let eig = a.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| {
            eig.eigenvalues[y]
                .partial_cmp(&eig.eigenvalues[x])
                .expect("finite eigenvalues")
        });
        let lambda_max = eig.eigenvalues[order[0]].max(T::zero());
        let neg_tol = from_f64::<T>(1e-8) * lambda_max.max(T::one());
        let floor = from_f64::<T>(EIGENVALUE_FLOOR) * lambda_max;
        let mut l = DMatrix::zeros(m, rank);
        let mut j = DMatrix::zeros(m, rank);
        for (col, &idx) in order.iter().take(rank).enumerate() {
            let lambda = eig.eigenvalues[idx];
            if lambda < -neg_tol {
                return Err(Error::NotPositiveDefinite(format!(
                    "eigenvalue {} below tolerance",
                    crate::scalar::to_f64(lambda)
                )));
            }
            if lambda <= floor {
                continue;
            }
            let sq = lambda.sqrt();
            let v = eig.eigenvectors.column(idx);
            l.set_column(col, &(v * sq));
            j.set_column(col, &(v / sq));
        }
        Ok(LowRankRoot { l, j })
    }

    /// Rank-one update `L L' -> L L' + w w'` in place, with `w` given sparsely.
    pub fn rank_one_update(&mut self, w: &SparseWeights<T>) {
        let r = self.rank();
        let mut p = DVector::zeros(r);
        for (idx, val) in w.iter() {
            for col in 0..r {
                p[col] += val * self.j[(idx, col)];
            }
        }
        self.apply_update(p);
    }

    /// Rank-one update with a dense `w` (oracle and test path).
    pub fn rank_one_update_dense(&mut self, w: &DVector<T>) {
        let p = self.j.tr_mul(w);
        self.apply_update(p);
    }

    /// Shared update core: given `p = J' w`, build the orthogonal-times-diagonal
    /// factor `B` for `I + p p'` (the vector SVD realized by a Householder
    /// reflector whose first column spans `p`) and fold `L B` and `J B^{-T}`
    /// into the stored factors.
    fn apply_update(&mut self, p: DVector<T>) {
        let s = p.norm();
        if s <= from_f64::<T>(100.0) * T::eps() {
            return;
        }
        let mut v = p / s;
        let sign = if v[0] >= T::zero() { T::one() } else { -T::one() };
        v[0] += sign;
        let vtv = v.dot(&v);
        let c = from_f64::<T>(2.0) / vtv;
        let d0 = (s * s + T::one()).sqrt();

        let lv = &self.l * &v;
        self.l.ger(-c, &lv, &v, T::one());
        let jv = &self.j * &v;
        self.j.ger(-c, &jv, &v, T::one());
        let m = self.dim();
        let d0_inv = T::one() / d0;
        for i in 0..m {
            self.l[(i, 0)] *= d0;
            self.j[(i, 0)] *= d0_inv;
        }
    }
}

/// Rank-`rank` root decomposition of a symmetric PSD operator.
///
/// Uses a dense Cholesky when `rank == dim` (falling back to a symmetric
/// eigendecomposition if the matrix is PSD but singular) and a Lanczos
/// decomposition with a deterministic probe otherwise.
pub fn root_decomposition<T: Scalar>(
    op: &impl LinearOperator<T>,
    dim: usize,
    rank: usize,
) -> Result<LowRankRoot<T>> {
    if op.dim() != dim {
        return Err(Error::dims(op.dim(), dim));
    }
    if rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!(
            "root rank {rank} out of range for dimension {dim}"
        )));
    }
    if rank == dim {
        let a = densify(op);
        match LowRankRoot::from_cholesky(&a) {
            Ok(root) => Ok(root),
            Err(Error::NotPositiveDefinite(_)) => LowRankRoot::from_dense_eigen(&a, rank),
            Err(e) => Err(e),
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let probe = DVector::from_fn(dim, |_, _| from_f64::<T>(rng.random::<f64>() - 0.5));
        let pair = lanczos(op, &probe, rank)?;
        let k = pair.steps();
        let t = pair.tridiagonal_dense();
        let eig = t.symmetric_eigen();
        let lambda_max = eig
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x));
        let neg_tol = from_f64::<T>(1e-8) * lambda_max.max(T::one());
        let floor = from_f64::<T>(EIGENVALUE_FLOOR) * lambda_max;
        let mut l = DMatrix::zeros(dim, k);
        let mut j = DMatrix::zeros(dim, k);
        for col in 0..k {
            let lambda = eig.eigenvalues[col];
            if lambda < -neg_tol {
                return Err(Error::NotPositiveDefinite(format!(
                    "negative Ritz value {}",
                    crate::scalar::to_f64(lambda)
                )));
            }
            if lambda <= floor {
                continue;
            }
            let sq = lambda.sqrt();
            let qv = &pair.q_basis * eig.eigenvectors.column(col);
            l.set_column(col, &(&qv * sq));
            j.set_column(col, &(&qv / sq));
        }
        Ok(LowRankRoot { l, j })
    }
}

/// Out-of-place rank-one root update `L' L'^T = L L^T + w w^T`.
pub fn rank_one_root_update<T: Scalar>(
    root: &LowRankRoot<T>,
    w: &DVector<T>,
) -> Result<LowRankRoot<T>> {
    if w.len() != root.dim() {
        return Err(Error::dims(root.dim(), w.len()));
    }
    let mut out = root.clone();
    out.rank_one_update_dense(w);
    Ok(out)
}

/// Gram-level distance used by the update tests.
#[doc(hidden)]
pub fn gram_rel_err<T: Scalar>(root: &LowRankRoot<T>, target: &DMatrix<T>) -> T {
    let diff = root.gram() - target;
    let denom = target.norm();
    if denom == T::zero() {
        diff.norm()
    } else {
        diff.norm() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::to_f64;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &g * g.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn identity_root() {
        let a = DMatrix::<f64>::identity(4, 4);
        let root = root_decomposition(&a, 4, 4).unwrap();
        assert!((root.gram() - &a).amax() < 1e-12);
        assert!((root.pinv_factor().tr_mul(root.factor()) - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_inverse_tracked() {
        let a: DMatrix<f64> = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let root = root_decomposition(&a, 2, 2).unwrap();
        assert!((root.gram() - &a).amax() < 1e-12);
        let jjt = root.pinv_factor() * root.pinv_factor().transpose();
        assert!((jjt[(0, 0)] - 0.25).abs() < 1e-12);
        assert!((jjt[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_dense_oracle() {
        let a = random_spd(64, 9);
        let root = root_decomposition(&a, 64, 64).unwrap();
        assert!(to_f64(gram_rel_err(&root, &a)) < 1e-6);
    }

    #[test]
    fn lanczos_path_recovers_low_rank_structure() {
        // Rank-8 PSD matrix plus small ridge; a rank-16 Lanczos root should
        // capture it to high accuracy.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 48;
        let g = DMatrix::from_fn(n, 8, |_, _| rng.random::<f64>() - 0.5);
        let a = &g * g.transpose() + DMatrix::identity(n, n) * 1e-9;
        let root = root_decomposition(&a, n, 16).unwrap();
        assert!(to_f64(gram_rel_err(&root, &a)) < 1e-5);
    }

    #[test]
    fn zero_update_is_identity() {
        let root = LowRankRoot::<f64>::identity_scaled(2, 2, 1.0);
        let w = nalgebra::DVector::zeros(2);
        let updated = rank_one_root_update(&root, &w).unwrap();
        assert!((updated.gram() - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn basis_vector_update() {
        let root = LowRankRoot::<f64>::identity_scaled(2, 2, 1.0);
        let w = nalgebra::DVector::from_vec(vec![1.0, 0.0]);
        let updated = rank_one_root_update(&root, &w).unwrap();
        let target = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((updated.gram() - target).amax() < 1e-12);
    }

    #[test]
    fn update_matches_recomputed_cholesky() {
        let n = 32;
        let a = random_spd(n, 13);
        let mut root = root_decomposition(&a, n, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let w = nalgebra::DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        root.rank_one_update_dense(&w);
        let target = &a + &w * w.transpose();
        assert!(to_f64(gram_rel_err(&root, &target)) < 1e-8);
        // the pseudo-inverse factor keeps tracking
        let jt_l = root.pinv_factor().tr_mul(root.factor());
        assert!((jt_l - DMatrix::identity(n, n)).amax() < 1e-6);
    }

    #[test]
    fn updates_commute_at_gram_level() {
        let n = 16;
        let a = random_spd(n, 15);
        let root = root_decomposition(&a, n, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let w1 = nalgebra::DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let w2 = nalgebra::DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let mut r12 = root.clone();
        r12.rank_one_update_dense(&w1);
        r12.rank_one_update_dense(&w2);
        let mut r21 = root.clone();
        r21.rank_one_update_dense(&w2);
        r21.rank_one_update_dense(&w1);
        let rel = (r12.gram() - r21.gram()).norm() / r12.gram().norm();
        assert!(rel < 1e-8, "order sensitivity {rel}");
    }

}
