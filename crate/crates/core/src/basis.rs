//! Clamped B-spline bases on `[0, 1]` and the design matrices built from them.
//!
//! A knot vector of degree `p` with `k` interior knots has boundary knots `0` and
//! `1` repeated `p + 1` times, so the basis has `k + p + 1` functions. Evaluation
//! uses the triangular Cox–de Boor scheme on the knot span containing `x`:
//!
//! ```text
//! span mu:  t[mu] <= x < t[mu + 1]      (right-continuous)
//! x == 1:   the last non-empty span
//! nonzero:  B[mu - p], ..., B[mu]
//! ```
//!
//! Tensor-product columns are ordered lexicographically in `(j_1, ..., j_d)` with
//! the first dimension varying slowest.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension polynomial degrees of a tensor-product spline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degrees: Vec<usize>,
}

impl SplineSpec {
    pub fn new(degrees: Vec<usize>) -> Self {
        Self { degrees }
    }

    pub fn ndim(&self) -> usize {
        self.degrees.len()
    }
}

pub const MAX_DEGREE: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Clamped knot vector with the given interior knots.
    ///
    /// Interior knots must be non-decreasing and strictly inside `(0, 1)`;
    /// repeated values are allowed.
    pub fn clamped(interior: &[f64], degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidKnots(format!("degree {degree} exceeds {MAX_DEGREE}")));
        }
        if let Some(&bad) = interior.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidKnots(format!(
                "interior knot {bad} is not strictly inside (0, 1)"
            )));
        }
        if interior.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("interior knots are not sorted".into()));
        }
        let mut knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The full knot sequence, boundary knots included.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior(&self) -> &[f64] {
        let p = self.degree;
        &self.knots[p + 1..self.knots.len() - p - 1]
    }

    /// Number of basis functions, `k + p + 1`.
    pub fn dimension(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    fn span(&self, x: f64) -> usize {
        let upper = self.knots.partition_point(|&t| t <= x);
        (upper.saturating_sub(1)).clamp(self.degree, self.dimension() - 1)
    }

    /// Writes the `p + 1` possibly nonzero basis values at `x` into `out` and
    /// returns the index of the first one. `x` is assumed to be in `[0, 1]`.
    fn local_basis(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        let t = &self.knots;
        let mu = self.span(x);
        let mut left = [0.0f64; MAX_DEGREE + 1];
        let mut right = [0.0f64; MAX_DEGREE + 1];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                // 0/0 := 0 for zero-width support
                let temp = if denom > 0.0 { out[r] / denom } else { 0.0 };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        mu - p
    }

    pub fn basis_at(&self, x: f64) -> Result<Vec<f64>> {
        check_unit(x)?;
        let mut local = vec![0.0; self.degree + 1];
        let first = self.local_basis(x, &mut local);
        let mut values = vec![0.0; self.dimension()];
        values[first..first + local.len()].copy_from_slice(&local);
        Ok(values)
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::OutOfDomain(x))
    }
}

pub fn build_knot_vector(interior: &[f64], degree: usize) -> Result<KnotVector> {
    KnotVector::clamped(interior, degree)
}

pub fn basis_at(kv: &KnotVector, x: f64) -> Result<Vec<f64>> {
    kv.basis_at(x)
}

/// Univariate basis values stored by row as `(first index, p + 1 values)`.
#[derive(Debug, Clone)]
pub struct BasisRows {
    dimension: usize,
    width: usize,
    first: Vec<usize>,
    values: Vec<f64>,
}

impl BasisRows {
    pub fn evaluate(kv: &KnotVector, xs: &[f64]) -> Result<Self> {
        let width = kv.degree() + 1;
        let mut first = Vec::with_capacity(xs.len());
        let mut values = vec![0.0; xs.len() * width];
        for (i, &x) in xs.iter().enumerate() {
            check_unit(x)?;
            first.push(kv.local_basis(x, &mut values[i * width..(i + 1) * width]));
        }
        Ok(Self { dimension: kv.dimension(), width, first, values })
    }

    pub fn nrows(&self) -> usize {
        self.first.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn row(&self, i: usize) -> (usize, &[f64]) {
        (self.first[i], &self.values[i * self.width..(i + 1) * self.width])
    }
}

/// Dense `m x nu` design matrix with `Z[i, j] = b_j(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }
}

impl From<DMatrix<f64>> for DesignMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

/// Row-wise Kronecker product of univariate bases.
pub fn assemble_tensor(factors: &[&BasisRows]) -> Result<DesignMatrix> {
    let Some(head) = factors.first() else {
        return Err(Error::InvalidParameter("no basis factors".into()));
    };
    let m = head.nrows();
    if let Some(bad) = factors.iter().find(|f| f.nrows() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: bad.nrows() });
    }
    let dims: Vec<usize> = factors.iter().map(|f| f.dimension()).collect();
    let nu: usize = dims.iter().product();
    // strides[i] = product of dims after i
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }

    let mut z = DMatrix::<f64>::zeros(m, nu);
    let mut entries: Vec<(usize, f64)> = Vec::new();
    let mut next: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        entries.clear();
        entries.push((0, 1.0));
        for (f, &stride) in factors.iter().zip(&strides) {
            let (first, vals) = f.row(i);
            next.clear();
            for &(col, w) in &entries {
                for (offset, &v) in vals.iter().enumerate() {
                    if v != 0.0 {
                        next.push((col + (first + offset) * stride, w * v));
                    }
                }
            }
            std::mem::swap(&mut entries, &mut next);
        }
        for &(col, v) in &entries {
            z[(i, col)] = v;
        }
    }
    Ok(DesignMatrix(z))
}

pub fn design_matrix_1d(kv: &KnotVector, xs: &[f64]) -> Result<DesignMatrix> {
    assemble_tensor(&[&BasisRows::evaluate(kv, xs)?])
}

/// Tensor-product design matrix. `columns[i]` holds the `i`-th coordinate of
/// every observation.
pub fn tensor_design_matrix(kvs: &[KnotVector], columns: &[Vec<f64>]) -> Result<DesignMatrix> {
    if kvs.len() != columns.len() {
        return Err(Error::DimensionMismatch { expected: kvs.len(), got: columns.len() });
    }
    let rows = kvs
        .iter()
        .zip(columns)
        .map(|(kv, xs)| BasisRows::evaluate(kv, xs))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&BasisRows> = rows.iter().collect();
    assemble_tensor(&refs)
}
