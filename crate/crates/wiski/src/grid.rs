//! Inducing-point grids and sparse cubic interpolation vectors.
//!
//! Every data point maps onto the grid through a tensor product of 1-D cubic
//! convolution weights (4 taps per dimension, 4^d total), forming one sparse
//! row of the implicit interpolation matrix W.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, to_f64, Scalar};

/// Regular rectangular grid of inducing points.
///
/// Flat indices are row-major with the last dimension fastest, matching the
/// factor order of the Kronecker kernel operator.
#[derive(Clone, Debug)]
pub struct Grid<T: Scalar> {
    sizes: Vec<usize>,
    lower: Vec<T>,
    upper: Vec<T>,
    spacing: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of nodes m.
    pub fn num_nodes(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn sizes(&self) -> &[usize] {
        self.sizes.as_slice()
    }

    pub fn size(&self, dim: usize) -> usize {
        self.sizes[dim]
    }

    pub fn lower(&self, dim: usize) -> T {
        self.lower[dim]
    }

    pub fn upper(&self, dim: usize) -> T {
        self.upper[dim]
    }

    pub fn spacing(&self, dim: usize) -> T {
        self.spacing[dim]
    }

    /// Coordinate of node `idx` along `dim`.
    pub fn node_coord(&self, dim: usize, idx: usize) -> T {
        self.lower[dim] + self.spacing[dim] * from_usize::<T>(idx)
    }

    /// Full coordinates of the node at a flat index.
    pub fn node(&self, flat: usize) -> Vec<T> {
        let mut rem = flat;
        let d = self.dims();
        let mut out = vec![T::zero(); d];
        for dim in (0..d).rev() {
            let p = self.sizes[dim];
            out[dim] = self.node_coord(dim, rem % p);
            rem /= p;
        }
        out
    }

    /// Flat index from per-dimension indices (row-major, last fastest).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (dim, &i) in idx.iter().enumerate() {
            flat = flat * self.sizes[dim] + i;
        }
        flat
    }

    /// Default grid covering [-1.2, 1.2] per dimension, so inputs prescaled to
    /// [-1, 1] are always interior.
    pub fn default_for_dims(dims: usize, size_per_dim: usize) -> Result<Self> {
        let b = crate::scalar::from_f64::<T>(1.2);
        build_grid(&vec![(-b, b); dims], &vec![size_per_dim; dims])
    }
}

/// One sparse interpolation vector w(x): 4^d (flat index, value) pairs.
#[derive(Clone, Debug)]
pub struct SparseWeights<T: Scalar> {
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseWeights<T> {
    pub fn new(indices: Vec<usize>, values: Vec<T>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        SparseWeights { indices, values }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Densify into an m-vector.
    pub fn to_dense(&self, m: usize) -> DVector<T> {
        let mut out = DVector::zeros(m);
        for (idx, val) in self.iter() {
            out[idx] += val;
        }
        out
    }

    /// Scale every value (used by the fixed-noise conditioning path).
    pub fn scaled(&self, scale: T) -> Self {
        SparseWeights {
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| v * scale).collect(),
        }
    }
}

/// Build an equally spaced grid. Cubic interpolation needs at least 4 nodes
/// per dimension.
pub fn build_grid<T: Scalar>(bounds: &[(T, T)], sizes: &[usize]) -> Result<Grid<T>> {
    if bounds.len() != sizes.len() {
        return Err(Error::dims(bounds.len(), sizes.len()));
    }
    if bounds.is_empty() {
        return Err(Error::InvalidArgument("grid needs at least one dimension".into()));
    }
    let mut lower = Vec::with_capacity(bounds.len());
    let mut upper = Vec::with_capacity(bounds.len());
    let mut spacing = Vec::with_capacity(bounds.len());
    for (dim, (&(lo, hi), &p)) in bounds.iter().zip(sizes.iter()).enumerate() {
        if p < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid dimension {dim} has {p} nodes; cubic interpolation needs at least 4"
            )));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidArgument(format!(
                "grid dimension {dim} has degenerate bounds"
            )));
        }
        lower.push(lo);
        upper.push(hi);
        spacing.push((hi - lo) / from_usize::<T>(p - 1));
    }
    Ok(Grid {
        sizes: sizes.to_vec(),
        lower,
        upper,
        spacing,
    })
}

/// Keys cubic convolution kernel with a = -1/2.
fn cubic_kernel<T: Scalar>(t: T) -> T {
    let t = crate::scalar::abs(t);
    let one = T::one();
    let two = crate::scalar::from_f64::<T>(2.0);
    if t <= one {
        // 1.5 |t|^3 - 2.5 |t|^2 + 1
        (crate::scalar::from_f64::<T>(1.5) * t - crate::scalar::from_f64::<T>(2.5)) * t * t + one
    } else if t < two {
        // -0.5 (|t|^3 - 5 |t|^2 + 8 |t| - 4)
        crate::scalar::from_f64::<T>(-0.5)
            * (((t - crate::scalar::from_f64::<T>(5.0)) * t + crate::scalar::from_f64::<T>(8.0)) * t
                - crate::scalar::from_f64::<T>(4.0))
    } else {
        T::zero()
    }
}

/// Mirror an out-of-range tap index back into [0, p).
fn mirror_index(idx: isize, p: usize) -> usize {
    let p = p as isize;
    let mut i = idx;
    while i < 0 || i >= p {
        if i < 0 {
            i = -i;
        } else {
            i = 2 * (p - 1) - i;
        }
    }
    i as usize
}

/// Sparse cubic interpolation weights for a point.
///
/// Out-of-bounds coordinates are clamped to the grid boundary with a logged
/// warning; a streaming model cannot rebuild its grid. The weights of each
/// dimension sum to one, so the tensor product does as well.
pub fn interp_weights<T: Scalar>(grid: &Grid<T>, x: &[T]) -> Result<SparseWeights<T>> {
    let d = grid.dims();
    if x.len() != d {
        return Err(Error::dims(d, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate".into()));
    }

    // Per-dimension 4-tap stencils.
    let mut taps: Vec<[(usize, T); 4]> = Vec::with_capacity(d);
    for dim in 0..d {
        let lo = grid.lower(dim);
        let hi = grid.upper(dim);
        let mut xi = x[dim];
        if xi < lo || xi > hi {
            log::warn!(
                "input coordinate {} outside grid bounds [{}, {}]; clamping",
                to_f64(xi),
                to_f64(lo),
                to_f64(hi)
            );
            xi = xi.clamp(lo, hi);
        }
        let p = grid.size(dim);
        let h = grid.spacing(dim);
        let rel = (xi - lo) / h;
        let mut cell = to_f64(rel).floor() as isize;
        if cell > (p as isize) - 2 {
            cell = p as isize - 2;
        }
        if cell < 0 {
            cell = 0;
        }
        let t = rel - from_usize::<T>(cell as usize);
        let mut stencil = [(0usize, T::zero()); 4];
        for (k, slot) in stencil.iter_mut().enumerate() {
            let node = cell - 1 + k as isize;
            // tap k sits at signed offset t - (k - 1) from the point
            let offset = t + T::one() - from_usize::<T>(k);
            let w = cubic_kernel(offset);
            *slot = (mirror_index(node, p), w);
        }
        taps.push(stencil);
    }

    // Tensor product over dimensions: 4^d combinations, last dimension fastest.
    let total = 1usize << (2 * d);
    let mut indices = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    for combo in 0..total {
        let mut flat = 0usize;
        let mut val = T::one();
        for dim in 0..d {
            let digit = (combo >> (2 * (d - 1 - dim))) & 3;
            let (idx, w) = taps[dim][digit];
            flat = flat * grid.size(dim) + idx;
            val *= w;
        }
        indices.push(flat);
        values.push(val);
    }
    Ok(SparseWeights::new(indices, values))
}

/// Sparse dot product w' v.
pub fn weights_dot<T: Scalar>(w: &SparseWeights<T>, v: &DVector<T>) -> T {
    let mut acc = T::zero();
    for (idx, val) in w.iter() {
        acc += val * v[idx];
    }
    acc
}

/// Accumulate `target += scale * w` into a dense vector.
pub fn scatter_add<T: Scalar>(target: &mut DVector<T>, w: &SparseWeights<T>, scale: T) {
    for (idx, val) in w.iter() {
        target[idx] += scale * val;
    }
}
