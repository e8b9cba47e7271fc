//! Dense row-major f64 matrices.
//!
//! Sizes in this problem are small (n <= 200), so everything is dense.
//! Reductions that feed relabeling-sensitive results (pooling, pairwise
//! row distances) accumulate in a value-canonical order so that the same
//! multiset of addends always rounds identically regardless of node order.

use crate::error::{Error, Result};
use rand::Rng;

const PAR_FLOP_THRESHOLD: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix construction".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Construction without the finiteness check, for tape internals where
    /// non-finite intermediates are caught at the loss boundary instead.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    /// Glorot-uniform initialization: U(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-s..s)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
        Error::ShapeMismatch {
            op,
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        }
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Self::shape_err("matmul", self, other));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(m, n);
        let flops = m * k * n;
        if flops >= PAR_FLOP_THRESHOLD && m > 1 {
            use rayon::prelude::*;
            out.data
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, orow)| matmul_row(self.row(i), other, orow));
        } else if flops >= PAR_FLOP_THRESHOLD && m == 1 {
            // Row vectors show up in the policy MLP; split the output columns.
            use rayon::prelude::*;
            let chunk = n.div_ceil(rayon::current_num_threads().max(1));
            let a = self.row(0);
            out.data
                .par_chunks_mut(chunk.max(1))
                .enumerate()
                .for_each(|(ci, ochunk)| {
                    let base = ci * chunk.max(1);
                    for (off, o) in ochunk.iter_mut().enumerate() {
                        let j = base + off;
                        let mut acc = 0.0;
                        for (l, &av) in a.iter().enumerate() {
                            acc += av * other.data[l * n + j];
                        }
                        *o = acc;
                    }
                });
        } else {
            for i in 0..m {
                matmul_row(self.row(i), other, out.row_mut(i));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if !self.same_shape(other) {
            return Err(Self::shape_err("add", self, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if !self.same_shape(other) {
            return Err(Self::shape_err("sub", self, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if !self.same_shape(other) {
            return Err(Self::shape_err("hadamard", self, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise leaky rectifier: max(x, slope * x), slope in [0, 1).
    pub fn leaky_relu(&self, slope: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| leaky(v, slope)).collect(),
        }
    }

    /// Row-stabilized softmax. Rejects rows where nothing participates
    /// (only possible with zero columns here; the masked variant used by
    /// attention handles per-row masks).
    pub fn softmax_row(&self) -> Result<Matrix> {
        if self.cols == 0 {
            return Err(Error::invalid("softmax over an empty row"));
        }
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            softmax_slice(self.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Column means, accumulated over rows in lexicographic row order so
    /// the result is invariant to row permutation.
    pub fn pool_mean_rows(&self) -> Matrix {
        let order = lex_row_order(self);
        let mut acc = vec![0.0; self.cols];
        for &i in &order {
            for (a, &v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let inv = 1.0 / self.rows as f64;
        Matrix {
            rows: 1,
            cols: self.cols,
            data: acc.into_iter().map(|v| v * inv).collect(),
        }
    }

    /// Euclidean distance between two rows, summed in value-canonical order
    /// so relabeled inputs reproduce distances bitwise.
    pub fn row_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        let mut sq: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .collect();
        sq.sort_unstable_by(f64::total_cmp);
        sq.iter().sum::<f64>().sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

/// Subgradient used in backward passes: 1 on [0, inf), slope below.
#[inline]
pub fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        slope
    }
}

fn matmul_row(a: &[f64], b: &Matrix, out: &mut [f64]) {
    let n = b.cols;
    out.fill(0.0);
    for (l, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let brow = &b.data[l * n..(l + 1) * n];
        for (o, &bv) in out.iter_mut().zip(brow) {
            *o += av * bv;
        }
    }
}

pub(crate) fn softmax_slice(input: &[f64], out: &mut [f64]) {
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(input) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row indices sorted by lexicographic comparison of row contents.
pub(crate) fn lex_row_order(m: &Matrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.rows()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (m.row(a), m.row(b));
        for (x, y) in ra.iter().zip(rb) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    });
    order
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
/// 1/(1-rate). Applying the mask elementwise implements training-mode
/// dropout; inference applies no mask at all.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0,1)")));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    Ok(Matrix { rows, cols, data })
}

/// Training-mode dropout applied directly to a matrix.
pub fn dropout(x: &Matrix, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Matrix> {
    if !training || rate == 0.0 {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0,1)")));
        }
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), rate, rng)?;
    x.hadamard(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn matmul_identity() {
        let i = Matrix::identity(2);
        let b = Matrix::from_rows(&[vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap();
        assert_eq!(i.matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_1x2_2x1() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.rows(), 1);
        assert_eq!(c.cols(), 1);
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_shape_mismatch_reports_dims() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "got: {msg}");
    }

    #[test]
    fn leaky_relu_cases() {
        let x = Matrix::from_rows(&[vec![2.0, -2.0]]).unwrap();
        let y = x.leaky_relu(0.2);
        assert_eq!(y.row(0), &[2.0, -0.4]);

        let z = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(z.leaky_relu(0.2).get(0, 0), 0.0);

        // slope 0 degenerates to plain ReLU
        let w = Matrix::from_rows(&[vec![-3.0, 5.0]]).unwrap();
        assert_eq!(w.leaky_relu(0.0).row(0), &[0.0, 5.0]);
    }

    #[test]
    fn softmax_symmetry_and_closed_form() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let y = x.softmax_row().unwrap();
        assert_eq!(y.row(0), &[0.5, 0.5]);

        let x = Matrix::from_rows(&[vec![2.0_f64.ln(), 0.0]]).unwrap();
        let y = x.softmax_row().unwrap();
        assert!((y.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((y.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = stream_rng(3, Stream::Synthetic);
        let m = Matrix::glorot(5, 5, &mut rng);
        let s = m.softmax_row().unwrap();
        for i in 0..5 {
            // direct-summation oracle
            let total: f64 = s.row(i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let x = Matrix::from_rows(&[vec![0.3, -1.2, 2.5]]).unwrap();
        let shifted = Matrix::from_rows(&[vec![0.3 + 7.0, -1.2 + 7.0, 2.5 + 7.0]]).unwrap();
        let a = x.softmax_row().unwrap();
        let b = shifted.softmax_row().unwrap();
        for j in 0..3 {
            assert!((a.get(0, j) - b.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_contracts() {
        let mut rng = stream_rng(1, Stream::Gnn1Train);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        // rate 0: identity
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        // inference: identity regardless of rate
        assert_eq!(dropout(&x, 0.3, false, &mut rng).unwrap(), x);
    }

    #[test]
    fn dropout_zero_fraction_monte_carlo() {
        let mut rng = stream_rng(11, Stream::Gnn1Train);
        let mask = dropout_mask(1000, 1000, 0.3, &mut rng).unwrap();
        let zeros = mask.data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / 1e6;
        assert!((frac - 0.3).abs() < 0.005, "zero fraction {frac}");
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = stream_rng(12, Stream::Gnn1Train);
        let x = Matrix::new(1000, 1000, vec![1.0; 1_000_000]).unwrap();
        let y = dropout(&x, 0.3, true, &mut rng).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "mean ratio {mean}");
    }

    #[test]
    fn pool_mean_is_row_permutation_invariant_bitwise() {
        let mut rng = stream_rng(5, Stream::Synthetic);
        let m = Matrix::glorot(7, 4, &mut rng);
        let mut rows: Vec<Vec<f64>> = (0..7).map(|i| m.row(i).to_vec()).collect();
        rows.reverse();
        rows.swap(0, 3);
        let p = Matrix::from_rows(&rows).unwrap();
        assert_eq!(m.pool_mean_rows(), p.pool_mean_rows());
    }

    #[test]
    fn non_finite_rejected_at_construction() {
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }
}
