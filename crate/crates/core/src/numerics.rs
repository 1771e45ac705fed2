//! Small dense complex linear algebra for M-dimensional beamforming problems.
//!
//! Everything here is sized for M ≤ 8: direct O(M³) methods, no external
//! solver. Vectors follow the channel convention `y = h^H x`, so the
//! "gain" of a beam `w` at channel `h` is `|inner(h, w)|²`.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative pivot threshold below which a channel set counts as rank deficient.
pub const RANK_TOL: f64 = 1e-9;

/// Column norm (relative) below which Gram-Schmidt is restarted with a fresh draw.
const GS_BREAKDOWN_TOL: f64 = 1e-10;

/// A complex M-vector (channel, codeword or beam).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CVector(pub Vec<C64>);

impl CVector {
    pub fn zeros(len: usize) -> Self {
        CVector(vec![C64::new(0.0, 0.0); len])
    }

    /// Elementary basis vector `e_index`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[index] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_reals(values: &[f64]) -> Self {
        CVector(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Unit-norm copy, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<CVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, s: C64) -> CVector {
        CVector(self.0.iter().map(|&x| x * s).collect())
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }
}

impl Deref for CVector {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

impl DerefMut for CVector {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.0
    }
}

impl From<Vec<C64>> for CVector {
    fn from(v: Vec<C64>) -> Self {
        CVector(v)
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Stack row vectors; all rows must share one length.
    pub fn from_rows(rows: &[CVector]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    left: cols,
                    right: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(CMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> CVector {
        CVector(self.row(i).to_vec())
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn columns(&self) -> Vec<CVector> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn conj_transpose(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                left: self.cols,
                right: other.rows,
            });
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `a^H b`, conjugate-linear in `a`. Callers guarantee equal lengths.
#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Checked `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dot(a, b))
}

/// One draw of CN(0, 1): real and imaginary parts i.i.d. N(0, 1/2).
#[inline]
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVector {
    CVector((0..len).map(|_| standard_complex_normal(rng)).collect())
}

/// Haar-distributed M×M unitary: orthonormalized columns of an i.i.d.
/// CN(0,1) matrix. Modified Gram-Schmidt, two passes per column, with the
/// R diagonal real and positive so the result is exactly Haar.
pub fn haar_orthonormal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMatrix {
    assert!(m >= 1, "dimension must be at least 1");
    'draw: loop {
        let mut cols: Vec<CVector> = (0..m).map(|_| complex_normal_vector(m, rng)).collect();
        for j in 0..m {
            let start = cols[j].norm();
            for _pass in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let q = &done[i];
                    let proj = dot(q, &rest[0]);
                    for (x, qv) in rest[0].iter_mut().zip(q.iter()) {
                        *x -= proj * qv;
                    }
                }
            }
            let n = cols[j].norm();
            if n <= GS_BREAKDOWN_TOL * start.max(1.0) {
                continue 'draw;
            }
            cols[j] = cols[j].scaled(C64::new(1.0 / n, 0.0));
        }
        let mut w = CMatrix::zeros(m, m);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..m {
                w[(i, j)] = c[i];
            }
        }
        return w;
    }
}

/// Solve `A X = B` for square `A` by Gaussian elimination with partial
/// pivoting. A pivot smaller than `RANK_TOL` times the largest diagonal
/// modulus of `A` is reported as rank deficiency.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            left: a.rows(),
            right: a.cols(),
        });
    }
    if b.rows() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: b.rows(),
        });
    }
    let scale = (0..n).map(|i| a[(i, i)].norm()).fold(0.0, f64::max);
    let threshold = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    let mut a = a.clone();
    let mut x = b.clone();
    let nrhs = x.cols();

    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, a[(r, col)].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs < threshold {
            return Err(Error::RankDeficient {
                pivot: piv_abs / scale.max(f64::MIN_POSITIVE),
            });
        }
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
            }
            for j in 0..nrhs {
                let t = x[(col, j)];
                x[(col, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        let p = a[(col, col)];
        for r in (col + 1)..n {
            let f = a[(r, col)] / p;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(r, j)] -= f * v;
            }
            for j in 0..nrhs {
                let v = x[(col, j)];
                x[(r, j)] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let p = a[(col, col)];
        for j in 0..nrhs {
            let mut acc = x[(col, j)];
            for k in (col + 1)..n {
                acc -= a[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / p;
        }
    }
    Ok(x)
}

/// Gram matrix `Γ[i][k] = inner(g_i, g_k)` of the rows of `g`.
pub fn gram(g: &CMatrix) -> CMatrix {
    let s = g.rows();
    let mut out = CMatrix::zeros(s, s);
    for i in 0..s {
        for k in i..s {
            let v = dot(g.row(i), g.row(k));
            out[(i, k)] = v;
            out[(k, i)] = v.conj();
        }
    }
    out
}

/// Zero-forcing beam directions for the stacked channel rows of `g`.
///
/// The unnormalized beams are the columns of the pseudo-inverse of the
/// matrix whose rows are `g_i^H`: `x_j = Σ_k g_k (Γ⁻¹)_{kj}`, so that
/// `inner(g_i, x_j) = δ_ij`. Each beam is then scaled to unit norm.
pub fn zf_directions(g: &CMatrix) -> Result<Vec<CVector>> {
    let (s, m) = g.shape();
    if s == 0 {
        return Ok(Vec::new());
    }
    if s > m {
        return Err(Error::RankDeficient { pivot: 0.0 });
    }
    let gamma = gram(g);
    let y = solve(&gamma, &CMatrix::identity(s))?;
    let mut beams = Vec::with_capacity(s);
    for j in 0..s {
        let mut x = CVector::zeros(m);
        for k in 0..s {
            let c = y[(k, j)];
            for (xi, gk) in x.iter_mut().zip(g.row(k)) {
                *xi += gk * c;
            }
        }
        beams.push(x.normalized().ok_or(Error::RankDeficient { pivot: 0.0 })?);
    }
    Ok(beams)
}
