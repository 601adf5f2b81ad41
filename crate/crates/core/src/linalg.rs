//! Dense linear algebra at small, fixed dimension.
//!
//! Everything here works on [`DenseMatrix`], a row-major `f64` matrix. The
//! matrices in this crate are at most a few hundred rows (the block generator
//! used for branching-process variances has `r(r+1)` rows), so plain loops in
//! cache-friendly order are fast enough and keep the numerics transparent.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative accuracy requested from [`mat_exp`].
pub const DEFAULT_EXP_TOL: f64 = 1e-12;

/// Row-major dense real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Build a matrix from row-major entries. Entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    /// Build from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(nrows, ncols, data)
    }

    /// A 1×n row vector.
    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Matrix product, checking dimensions.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `v · self` for a row vector `v`.
    pub fn left_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Dimension(format!(
                "row vector of length {} times {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        Ok(out)
    }

    /// `self · v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`, in place.
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry of `self - selfᵀ`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let mut s = self.clone();
        s.symmetrize_in_place();
        s
    }

    pub fn symmetrize_in_place(&mut self) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// Copy of the `nr × nc` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols);
        let mut b = Self::zeros(nr, nc);
        for i in 0..nr {
            b.data[i * nc..(i + 1) * nc]
                .copy_from_slice(&self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + nc]);
        }
        b
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Zero row `i` and column `i`.
    pub fn zero_row_col(&mut self, i: usize) {
        for j in 0..self.cols {
            self.data[i * self.cols + j] = 0.0;
        }
        for r in 0..self.rows {
            self.data[r * self.cols + i] = 0.0;
        }
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;

    /// Panics on incompatible dimensions; use [`DenseMatrix::matmul`] for a
    /// checked product.
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "cannot multiply {}x{} by {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        self.mul_unchecked(rhs)
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;

    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;

    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Kronecker algebra

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ra, ca, rb, cb) = (a.rows, a.cols, b.rows, b.cols);
    let mut out = DenseMatrix::zeros(ra * rb, ca * cb);
    let oc = ca * cb;
    for i in 0..ra {
        for j in 0..ca {
            let aij = a.data[i * ca + j];
            if aij == 0.0 {
                continue;
            }
            for k in 0..rb {
                let dst = (i * rb + k) * oc + j * cb;
                for l in 0..cb {
                    out.data[dst + l] = aij * b.data[k * cb + l];
                }
            }
        }
    }
    out
}

/// Kronecker sum `A ⊕ B = A ⊗ I + I ⊗ B` of two square matrices.
pub fn kron_sum(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::Dimension("Kronecker sum needs square matrices".into()));
    }
    let left = kron(a, &DenseMatrix::identity(b.rows));
    let right = kron(&DenseMatrix::identity(a.rows), b);
    Ok(&left + &right)
}

/// Stack the columns of `a` into one vector.
pub fn vec(a: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.rows * a.cols);
    for j in 0..a.cols {
        for i in 0..a.rows {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vec`]: fill a `rows × cols` matrix column by column.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    let mut out = DenseMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v[j * rows + i];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Matrix exponential: scaling and squaring with diagonal Padé approximants.

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norms for which the degree-m approximant is accurate to unit
// roundoff in double precision.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// Matrix exponential `e^A`.
///
/// Degree selection follows the 1-norm thresholds of the scaling-and-squaring
/// algorithm, which targets double-precision unit roundoff in the backward
/// error. Any `tol` in `(0, 1e-6]` is therefore met on well-conditioned input;
/// the argument is validated so callers state their requirement explicitly.
pub fn mat_exp(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "matrix exponential of a non-square {}x{} matrix",
            a.rows, a.cols
        )));
    }
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidInput(format!(
            "exponential tolerance {tol} outside (0, 1e-6]"
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix exponential of non-finite input".into()));
    }
    let n = a.rows;
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    if n == 1 {
        return Ok(DenseMatrix::from_diag(&[a.data[0].exp()]));
    }

    let norm = a.norm1();
    let a2 = a * a;
    if norm <= THETA3 {
        return pade_low(a, &a2, &PADE3);
    }
    if norm <= THETA5 {
        return pade_low(a, &a2, &PADE5);
    }
    if norm <= THETA7 {
        return pade_low(a, &a2, &PADE7);
    }
    if norm <= THETA9 {
        return pade_low(a, &a2, &PADE9);
    }

    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let (scaled, scaled2) = if s > 0 {
        let f = 0.5f64.powi(s);
        (a.scale(f), a2.scale(f * f))
    } else {
        (a.clone(), a2)
    };
    let mut r = pade13(&scaled, &scaled2)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !r.is_finite() {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

fn pade_low(a: &DenseMatrix, a2: &DenseMatrix, b: &[f64]) -> Result<DenseMatrix> {
    let n = a.rows;
    let m = b.len() - 1;
    let mut u_inner = DenseMatrix::identity(n).scale(b[1]);
    let mut v = DenseMatrix::identity(n).scale(b[0]);
    let mut power = DenseMatrix::identity(n);
    for k in 1..=m / 2 {
        power = &power * a2;
        u_inner.add_scaled(b[2 * k + 1], &power);
        v.add_scaled(b[2 * k], &power);
    }
    let u = a * &u_inner;
    solve_pade(&u, &v)
}

fn pade13(a: &DenseMatrix, a2: &DenseMatrix) -> Result<DenseMatrix> {
    let b = &PADE13;
    let n = a.rows;
    let ident = DenseMatrix::identity(n);
    let a4 = a2 * a2;
    let a6 = &a4 * a2;

    let mut w1 = a6.scale(b[13]);
    w1.add_scaled(b[11], &a4);
    w1.add_scaled(b[9], a2);
    let mut w2 = &a6 * &w1;
    w2.add_scaled(b[7], &a6);
    w2.add_scaled(b[5], &a4);
    w2.add_scaled(b[3], a2);
    w2.add_scaled(b[1], &ident);
    let u = a * &w2;

    let mut z1 = a6.scale(b[12]);
    z1.add_scaled(b[10], &a4);
    z1.add_scaled(b[8], a2);
    let mut v = &a6 * &z1;
    v.add_scaled(b[6], &a6);
    v.add_scaled(b[4], &a4);
    v.add_scaled(b[2], a2);
    v.add_scaled(b[0], &ident);
    solve_pade(&u, &v)
}

/// Solve `(V - U) X = V + U`.
fn solve_pade(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let p = v + u;
    let q = v - u;
    lu_solve(q, p)
}

/// Solve `A X = B` by Gaussian elimination with partial pivoting.
pub fn lu_solve(mut a: DenseMatrix, mut b: DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows;
    if !a.is_square() || b.rows != n {
        return Err(Error::Dimension("lu_solve: incompatible shapes".into()));
    }
    let m = b.cols;
    for col in 0..n {
        let mut piv = col;
        let mut best = a.data[col * n + col].abs();
        for r in (col + 1)..n {
            let v = a.data[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Numerical("singular matrix in LU solve".into()));
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(col * n + j, piv * n + j);
            }
            for j in 0..m {
                b.data.swap(col * m + j, piv * m + j);
            }
        }
        let d = a.data[col * n + col];
        for r in (col + 1)..n {
            let f = a.data[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a.data[r * n + j] -= f * a.data[col * n + j];
            }
            for j in 0..m {
                b.data[r * m + j] -= f * b.data[col * m + j];
            }
        }
    }
    for col in (0..n).rev() {
        let d = a.data[col * n + col];
        for j in 0..m {
            let mut s = b.data[col * m + j];
            for k in (col + 1)..n {
                s -= a.data[col * n + k] * b.data[k * m + j];
            }
            b.data[col * m + j] = s / d;
        }
    }
    Ok(b)
}

// ---------------------------------------------------------------------------
// Symmetric positive definite factorizations.

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factorize `(A + Aᵀ)/2`.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension("Cholesky of a non-square matrix".into()));
        }
        let n = a.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { minor: j + 1 });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.l.rows;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve `A x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solve `A X = B` column by column.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows != self.l.rows {
            return Err(Error::Dimension(format!(
                "solve with {}x{} system and {} right-hand rows",
                self.l.rows, self.l.rows, b.rows
            )));
        }
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let x = self.solve_vec(&b.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// Quadratic form `xᵀ A⁻¹ x`.
    pub fn inv_quad(&self, x: &[f64]) -> f64 {
        let mut z = x.to_vec();
        self.solve_lower_in_place(&mut z);
        z.iter().map(|v| v * v).sum()
    }
}

/// Solve `A X = B` for symmetric positive definite `A` (symmetrized first).
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Cholesky::new(a)?.solve(b)
}

/// `log det A` for symmetric positive definite `A`.
pub fn logdet_spd(a: &DenseMatrix) -> Result<f64> {
    Ok(Cholesky::new(a)?.logdet())
}

/// Eigen-decomposition of a symmetric matrix: `(eigenvalues, eigenvectors as columns)`.
pub fn sym_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !a.is_square() {
        return Err(Error::Dimension("eigen-decomposition of a non-square matrix".into()));
    }
    let eig = a.symmetrize().to_nalgebra().symmetric_eigen();
    Ok((
        eig.eigenvalues.iter().copied().collect(),
        DenseMatrix::from_nalgebra(&eig.eigenvectors),
    ))
}

/// Project a symmetric matrix onto the PSD cone by clamping eigenvalues at 0.
/// Returns the repaired matrix and the most negative eigenvalue seen.
pub fn clamp_psd(a: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    let (vals, vecs) = sym_eigen(a)?;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let n = a.rows;
    let mut out = DenseMatrix::zeros(n, n);
    for (k, lam) in vals.iter().enumerate() {
        let lam = lam.max(0.0);
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = vecs[(i, k)] * lam;
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)];
            }
        }
    }
    out.symmetrize_in_place();
    Ok((out, min))
}

/// A square root `S` with `S Sᵀ = A` for a symmetric PSD matrix: the Cholesky
/// factor when it exists, otherwise `Q Λ^{1/2}` from the eigen-decomposition
/// with negative eigenvalues clamped.
pub fn psd_sqrt(a: &DenseMatrix) -> Result<DenseMatrix> {
    if let Ok(ch) = Cholesky::new(a) {
        return Ok(ch.l);
    }
    let (vals, mut vecs) = sym_eigen(a)?;
    for (k, lam) in vals.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..vecs.rows {
            vecs[(i, k)] *= s;
        }
    }
    Ok(vecs)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// `rel_tol · max|λ|` are treated as zero.
pub fn pinv_sym(a: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let (vals, vecs) = sym_eigen(a)?;
    let cutoff = rel_tol * vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = a.rows;
    let mut out = DenseMatrix::zeros(n, n);
    for (k, lam) in vals.iter().enumerate() {
        if lam.abs() <= cutoff || *lam == 0.0 {
            continue;
        }
        let inv = 1.0 / lam;
        for i in 0..n {
            let vi = vecs[(i, k)] * inv;
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Eigenvalues of a general square matrix; errors if any is complex.
pub fn real_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    let vals = a.to_nalgebra().complex_eigenvalues();
    let scale = a.max_abs().max(1.0);
    vals.iter()
        .map(|c| {
            if c.im.abs() <= 1e-10 * scale {
                Ok(c.re)
            } else {
                Err(Error::Numerical(format!("complex eigenvalue {c}")))
            }
        })
        .collect()
}

/// Semidefinite Cholesky test: true when the symmetric part of `a` is
/// positive semidefinite up to `rel_tol · max|a_ii|`. Zero pivots are accepted
/// when the rest of their column vanishes to the same tolerance.
pub fn is_psd(a: &DenseMatrix, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.rows;
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    if scale == 0.0 {
        return a.max_abs() == 0.0;
    }
    let tol = rel_tol * scale;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol || !d.is_finite() {
            return false;
        }
        if d <= tol {
            for i in (j + 1)..n {
                let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > tol.sqrt() * scale.sqrt() {
                    return false;
                }
            }
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    true
}
