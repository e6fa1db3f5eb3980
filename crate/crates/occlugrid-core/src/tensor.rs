//! Dense row-major 2-D tensors and the matmul kernels the tape is built on.
//!
//! All kernels accumulate in a fixed order, so results are bit-identical
//! across runs regardless of how callers schedule work.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Row-major matrix of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dims must be positive, got {rows}x{cols}");
        Tensor2 { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dims must be positive, got {rows}x{cols}");
        assert_eq!(data.len(), rows * cols, "data length {} != {rows}x{cols}", data.len());
        Tensor2 { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        assert!(r > 0);
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor2 { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, k: f64) {
        for v in self.data.iter_mut() {
            *v *= k;
        }
    }
}

/// `C = A · B` for `A [n,k]`, `B [k,m]`.
///
/// Accumulates row-wise (axpy form): the inner loop streams contiguous
/// rows of `B` and `C`, which the compiler vectorizes.
pub fn matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.cols, b.rows, "matmul inner dims {} vs {}", a.shape_str(), b.shape_str());
    let (n, m) = (a.rows, b.cols);
    let mut c = Tensor2::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[kk * m..(kk + 1) * m];
            for j in 0..m {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

/// `C = A · Bᵀ` for `A [n,k]`, `B [m,k]`.
///
/// Each output element is a dot product of two contiguous rows; four
/// accumulators fix the reduction order while letting it vectorize.
pub fn matmul_nt(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dims {} vs {}", a.shape_str(), b.shape_str());
    let (n, k, m) = (a.rows, a.cols, b.rows);
    let mut c = Tensor2::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for j in 0..m {
            crow[j] = dot(arow, &b.data[j * k..(j + 1) * k]);
        }
    }
    c
}

/// `C = Aᵀ · B` for `A [k,n]`, `B [k,m]`.
pub fn matmul_tn(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dims {} vs {}", a.shape_str(), b.shape_str());
    let (k, n, m) = (a.rows, a.cols, b.cols);
    let mut c = Tensor2::zeros(n, m);
    for kk in 0..k {
        let arow = a.row(kk);
        let brow = &b.data[kk * m..(kk + 1) * m];
        for (i, &aki) in arow.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let crow = &mut c.data[i * m..(i + 1) * m];
            for j in 0..m {
                crow[j] += aki * brow[j];
            }
        }
    }
    c
}

/// Dot product with a fixed 4-way unrolled accumulation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}
