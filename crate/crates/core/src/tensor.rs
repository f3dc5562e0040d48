//! Dense row-major matrices, elementwise nonlinearities and seeded sampling.
//!
//! Storage is row-major: entry `(r, c)` of a `rows × cols` matrix lives at
//! `values[r * cols + c]`. All arithmetic is `f64`.
//!
//! Randomness comes from [`SeededRng`], a ChaCha8 stream (`rand_chacha`)
//! keyed by a 64-bit seed through `SeedableRng::seed_from_u64`. Uniform reals
//! are produced as `(next_u64 >> 11) * 2^-53`, so every uniform lies in
//! `[0, 1)` and carries 53 random bits.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.values)
    }
}

impl Matrix {
    /// Builds a matrix from row-major values; rejects length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::dims(
                "Matrix::new",
                format!("{} values for a {rows}x{cols} matrix", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(
                    "Matrix::from_rows",
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    /// Entries drawn from `N(mean, std_dev²)` in row-major order.
    pub fn random_normal(
        rows: usize,
        cols: usize,
        mean: f64,
        std_dev: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let values = (0..rows * cols).map(|_| rng.normal(mean, std_dev)).collect();
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-column matrix still has rows
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// Rows at the given indices, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            1.0,
            Operand::plain(self),
            Operand::plain(other),
            0.0,
            &mut out,
        );
        out.check_finite("matmul")?;
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dims(
                "matmul_nt",
                format!(
                    "{}x{} times ({}x{})ᵀ",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            1.0,
            Operand::plain(self),
            Operand::transposed(other),
            0.0,
            &mut out,
        );
        out.check_finite("matmul_nt")?;
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dims(
                "matmul_tn",
                format!(
                    "({}x{})ᵀ times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(
            1.0,
            Operand::transposed(self),
            Operand::plain(other),
            0.0,
            &mut out,
        );
        out.check_finite("matmul_tn")?;
        Ok(out)
    }

    /// `self += alpha · aᵀ · b`, used for outer-product parameter updates.
    pub fn add_scaled_tn(&mut self, alpha: f64, a: &Matrix, b: &Matrix) -> Result<()> {
        if a.rows != b.rows || self.rows != a.cols || self.cols != b.cols {
            return Err(Error::dims(
                "add_scaled_tn",
                format!(
                    "{}x{} += ({}x{})ᵀ · {}x{}",
                    self.rows, self.cols, a.rows, a.cols, b.rows, b.cols
                ),
            ));
        }
        gemm(
            alpha,
            Operand::transposed(a),
            Operand::plain(b),
            1.0,
            self,
        );
        self.check_finite("add_scaled_tn")
    }

    /// Adds `bias[c]` to every entry of column `c`.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::dims(
                "add_row_vector",
                format!("bias of length {} for {} columns", bias.len(), self.cols),
            ));
        }
        if self.cols == 0 {
            return Ok(());
        }
        for row in self.values.chunks_exact_mut(self.cols) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Per-column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = self.rows.max(1) as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        sums
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "sub",
                format!("{:?} minus {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }
}

struct Operand<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> Operand<'a> {
    fn plain(m: &'a Matrix) -> Self {
        Self {
            data: &m.values,
            rows: m.rows,
            cols: m.cols,
            row_stride: m.cols as isize,
            col_stride: 1,
        }
    }

    fn transposed(m: &'a Matrix) -> Self {
        Self {
            data: &m.values,
            rows: m.cols,
            cols: m.rows,
            row_stride: 1,
            col_stride: m.cols as isize,
        }
    }
}

/// `c = alpha · a · b + beta · c`.
fn gemm(alpha: f64, a: Operand<'_>, b: Operand<'_>, beta: f64, c: &mut Matrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!((a.rows, b.cols), (c.rows, c.cols));
    if c.values.is_empty() {
        return;
    }
    if a.cols == 0 {
        c.values.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let c_stride = c.cols as isize;
    // SAFETY: strides and dimensions describe the exact extents of the three
    // row-major buffers, checked by the callers above.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.values.as_mut_ptr(),
            c_stride,
            1,
        );
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    // exp of a non-positive argument never overflows; the select is branch-free
    let e = (-x.abs()).exp();
    let r = 1.0 / (1.0 + e);
    if x >= 0.0 {
        r
    } else {
        e * r
    }
}

/// Elementwise logistic function. Outputs are clamped into the open interval
/// so that large-magnitude inputs never saturate to exactly 0 or 1.
pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(|v| sigmoid_scalar(v).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Max-subtracted exponential normalization.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `log Σ exp(z)` with max subtraction.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Draws one Bernoulli variable per entry, consuming one uniform per entry in
/// row-major order. An entry is 1 when its uniform is strictly below its
/// probability.
pub fn bernoulli_sample(probs: &Matrix, rng: &mut SeededRng) -> Result<Matrix> {
    if let Some(p) = probs.values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!(
            "bernoulli probability {p} outside [0, 1]"
        )));
    }
    Ok(Matrix {
        rows: probs.rows,
        cols: probs.cols,
        values: probs
            .values
            .iter()
            .map(|&p| if rng.next_f64() < p { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of integers into one seed: `h ← splitmix64(h ^ part)`
/// starting from `h = splitmix64(parts.len())`.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(parts.len() as u64), |h, &p| splitmix64(h ^ p))
}

/// Deterministic random stream; see the module docs for the algorithm.
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

    /// Independent generator keyed by `mix_seed([seed, stream])`. Depends only
    /// on the parent's seed, never on how many draws the parent has made.
    pub fn child(&self, stream: u64) -> SeededRng {
        SeededRng::new(mix_seed(&[self.seed, stream]))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by rejection, so no modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        Normal::new(mean, std_dev)
            .expect("standard deviation must be finite and non-negative")
            .sample(&mut self.inner)
    }

    /// Fisher-Yates from the back, drawing with [`SeededRng::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        out
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
        let values = (0..rows * cols).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        Matrix::new(rows, cols, values).unwrap()
    }

    #[test]
    fn identity_product_is_noop() {
        let mut rng = SeededRng::new(3);
        let m = random_matrix(3, 4, &mut rng);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn scalar_product() {
        let a = Matrix::new(1, 1, vec![2.0]).unwrap();
        let b = Matrix::new(1, 1, vec![3.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().as_slice(), &[6.0]);
    }

    #[test]
    fn matmul_4x5_by_5x2_matches_triple_loop() {
        let mut rng = SeededRng::new(11);
        let a = random_matrix(4, 5, &mut rng);
        let b = random_matrix(5, 2, &mut rng);
        let got = a.matmul(&b).unwrap();
        for (g, e) in got.as_slice().iter().zip(naive_matmul(&a, &b)) {
            assert!((g - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matmul_agrees_with_oracle_on_100_random_pairs() {
        let mut rng = SeededRng::new(7);
        for _ in 0..100 {
            let (m, k, n) = (1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(9));
            let a = random_matrix(m, k, &mut rng);
            let b = random_matrix(k, n, &mut rng);
            let expected = naive_matmul(&a, &b);
            for (g, e) in a.matmul(&b).unwrap().as_slice().iter().zip(&expected) {
                assert!((g - e).abs() <= 1e-12);
            }
            let nt = a.matmul_nt(&b.transpose()).unwrap();
            let tn = a.transpose().matmul_tn(&b).unwrap();
            for ((x, y), e) in nt.as_slice().iter().zip(tn.as_slice()).zip(&expected) {
                assert!((x - e).abs() <= 1e-12 && (y - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn add_scaled_tn_accumulates() {
        let mut rng = SeededRng::new(5);
        let a = random_matrix(6, 3, &mut rng);
        let b = random_matrix(6, 4, &mut rng);
        let mut c = random_matrix(3, 4, &mut rng);
        let before = c.clone();
        c.add_scaled_tn(-0.5, &a, &b).unwrap();
        let prod = naive_matmul(&a.transpose(), &b);
        for ((got, was), p) in c.as_slice().iter().zip(before.as_slice()).zip(&prod) {
            assert!((got - (was - 0.5 * p)).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_values() {
        let x = Matrix::new(1, 3, vec![0.0, 2.0, -2.0]).unwrap();
        let s = sigmoid(&x);
        assert_eq!(s.get(0, 0), 0.5);
        assert!((s.get(0, 1) - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!((s.get(0, 1) + s.get(0, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_stays_open_interval_at_extremes() {
        let x = Matrix::new(1, 2, vec![-800.0, 800.0]).unwrap();
        let s = sigmoid(&x);
        assert!(s.get(0, 0) > 0.0 && s.get(0, 1) < 1.0);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.090_030_573_170_380_46, 0.244_728_471_054_797_67, 0.665_240_955_774_821_9];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_shift_invariance() {
        let base = softmax(&[0.3, -1.2]).unwrap();
        let shifted = softmax(&[100.3, 98.8]).unwrap();
        for (a, b) in base.iter().zip(shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_on_random_vectors() {
        let mut rng = SeededRng::new(99);
        for case in 0..1000 {
            let len = 1 + rng.below(64);
            let scale = if case % 4 == 0 { 500.0 } else { 10.0 };
            let logits: Vec<f64> = (0..len)
                .map(|_| {
                    if case % 4 == 0 && rng.below(2) == 0 {
                        if rng.below(2) == 0 { 500.0 } else { -500.0 }
                    } else {
                        (rng.next_f64() * 2.0 - 1.0) * scale
                    }
                })
                .collect();
            let p = softmax(&logits).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bernoulli_edge_probabilities() {
        let mut rng = SeededRng::new(1);
        assert!(bernoulli_sample(&Matrix::zeros(3, 3), &mut rng)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
        assert!(bernoulli_sample(&Matrix::filled(3, 3, 1.0), &mut rng)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 1.0));
        let bad = Matrix::new(1, 1, vec![1.5]).unwrap();
        assert!(bernoulli_sample(&bad, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_half_mean() {
        let mut rng = SeededRng::new(2024);
        let s = bernoulli_sample(&Matrix::filled(100, 100, 0.5), &mut rng).unwrap();
        let mean = s.as_slice().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn bernoulli_consumes_one_draw_per_entry_in_order() {
        let probs = Matrix::new(2, 2, vec![0.1, 0.9, 0.5, 0.3]).unwrap();
        let mut a = SeededRng::new(8);
        let mut b = SeededRng::new(8);
        let s = bernoulli_sample(&probs, &mut a).unwrap();
        for (i, &p) in probs.as_slice().iter().enumerate() {
            let u = b.next_f64();
            assert_eq!(s.as_slice()[i], if u < p { 1.0 } else { 0.0 });
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn child_independent_of_parent_draws() {
        let fresh = SeededRng::new(10);
        let mut used = SeededRng::new(10);
        for _ in 0..17 {
            used.next_u64();
        }
        assert_eq!(fresh.child(3).next_u64(), used.child(3).next_u64());
        assert_ne!(fresh.child(3).next_u64(), fresh.child(4).next_u64());
    }

    #[test]
    fn uniform_range() {
        let mut rng = SeededRng::new(0);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn sigmoid_is_monotone(x in -20.0f64..20.0, d in 1e-3f64..10.0) {
            let m = Matrix::new(1, 2, vec![x, x + d]).unwrap();
            let s = sigmoid(&m);
            prop_assert!(s.get(0, 0) < s.get(0, 1));
        }
    }
}
