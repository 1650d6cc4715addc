//! Dense row-major `f64` arrays and the seeded random source shared by the
//! rest of the crate.
//!
//! Shapes are explicit and never broadcast. Every layer's backward pass indexes
//! into these buffers directly, so the layout is part of the contract: the last
//! dimension is contiguous.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::Param(format!(
            "tensor must have 1 to 4 dimensions, got {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Param(format!("tensor dimensions must be >= 1, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape("Tensor::new", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Panics on an invalid shape; for internally computed shapes.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = check_shape(shape).expect("invalid tensor shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Param("ragged rows".into()));
        }
        Self::new(&[r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all dimensions after the first.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {idx:?} out of bounds for {:?}", self.shape);
            acc * d + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::Param(format!("transpose needs a matrix, got {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(&[c, r], out)
    }

    /// Standard matrix product `self · rhs` for `[M×K] · [K×N]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape.len() != 2 || rhs.shape.len() != 2 || self.shape[1] != rhs.shape[0] {
            return Err(Error::shape("matmul", &self.shape, &rhs.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(&self.data, &rhs.data, &mut out, m, k, n);
        Self::new(&[m, n], out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dot product with four independent accumulators. Summation order is fixed,
/// so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c += a · b` with `a: [m×k]`, `b: [k×n]`, `c: [m×n]`.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], c_row);
            }
        }
    }
}

/// `c += aᵀ · g` with `a: [m×k]`, `g: [m×n]`, `c: [k×n]`.
pub(crate) fn gemm_tn_acc(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                axpy(av, g_row, &mut c[p * n..(p + 1) * n]);
            }
        }
    }
}

/// `c = g · wᵀ` with `g: [m×n]`, `w: [k×n]`, `c: [m×k]`.
pub(crate) fn gemm_nt(g: &[f64], w: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] = dot(g_row, &w[p * n..(p + 1) * n]);
        }
    }
}

/// Deterministic random source. Identical seeds give bit-identical streams.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this generator's seed and a label.
    pub fn fork(&self, stream: u64) -> Self {
        let mixed =
            self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
        Self::new(mixed)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        // std is validated by callers; Normal::new only fails on non-finite std.
        Normal::new(mean, std)
            .expect("finite standard deviation")
            .sample(&mut self.inner)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    pub(crate) fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut v = index::sample(&mut self.inner, n, k).into_vec();
        v.sort_unstable();
        v
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Sparse Gaussian initialisation: every output column receives exactly
/// `nonzeros_per_unit` nonzero weights drawn from `N(0, std²)` at row positions
/// chosen uniformly without replacement.
pub fn sample_sparse_gaussian(
    rng: &mut SeededRng,
    fan_in: usize,
    fan_out: usize,
    nonzeros_per_unit: usize,
    std: f64,
) -> Result<Tensor> {
    let all: Vec<usize> = (0..fan_in).collect();
    sample_sparse_gaussian_within(rng, fan_in, fan_out, nonzeros_per_unit, std, |_| &all)
}

/// Like [`sample_sparse_gaussian`] but each column only draws its nonzero rows
/// from `allowed(column)`. The count is clamped to the allowed set size.
pub(crate) fn sample_sparse_gaussian_within<'a>(
    rng: &mut SeededRng,
    fan_in: usize,
    fan_out: usize,
    nonzeros_per_unit: usize,
    std: f64,
    allowed: impl Fn(usize) -> &'a [usize],
) -> Result<Tensor> {
    if nonzeros_per_unit == 0 || nonzeros_per_unit > fan_in {
        return Err(Error::Param(format!(
            "nonzeros_per_unit must be in [1, {fan_in}], got {nonzeros_per_unit}"
        )));
    }
    if !(std.is_finite() && std > 0.0) {
        return Err(Error::Param(format!("init std must be finite and > 0, got {std}")));
    }
    let mut w = Tensor::zeros(&[fan_in, fan_out]);
    let normal = Normal::new(0.0, std).map_err(|e| Error::Param(e.to_string()))?;
    for col in 0..fan_out {
        let rows = allowed(col);
        let k = nonzeros_per_unit.min(rows.len());
        for pick in rng.sample_indices(rows.len(), k) {
            let r = rows[pick];
            // A zero draw has probability zero, but keep the count exact anyway.
            let mut v = normal.sample(&mut rng.inner);
            while v == 0.0 {
                v = normal.sample(&mut rng.inner);
            }
            w.data[r * fan_out + col] = v;
        }
    }
    Ok(w)
}
