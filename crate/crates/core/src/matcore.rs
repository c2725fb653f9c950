//! Dense real symmetric matrices standing in for self-adjoint operators.
//!
//! Everything spectral goes through [`jacobi_eig`], a cyclic Jacobi solver.
//! Functional calculus ([`SpectralDecomp::map`]) rebuilds `Q f(Λ) Qᵀ`
//! entry by entry over the upper triangle, so its output is exactly symmetric.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stop sweeping once `off(A) <= JACOBI_REL_THRESHOLD * |A|_F`.
pub const JACOBI_REL_THRESHOLD: f64 = 1e-14;
pub const JACOBI_SWEEP_CAP: usize = 100;
/// Products that should be symmetric may drift by at most this (relative).
pub const SYMMETRY_DRIFT_TOL: f64 = 1e-10;
/// The text parser rejects inputs more asymmetric than this (relative).
pub const PARSE_ASYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalues below `PD_REL_TOL * max(1, |A|_2)` are treated as non-positive.
pub const PD_REL_TOL: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.to_rows())
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { inner: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { inner: DMatrix::identity(n, n) }
    }

    pub fn scalar(n: usize, c: f64) -> Self {
        Self { inner: DMatrix::identity(n, n) * c }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self { inner: DMatrix::from_diagonal(&DVector::from_column_slice(d)) }
    }

    /// Builds from row-major entries, averaging `(M + Mᵀ)/2`.
    ///
    /// Inputs whose relative asymmetry exceeds `PARSE_ASYMMETRY_TOL` are rejected.
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be at least 1".into()));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Self::from_dense(DMatrix::from_row_slice(n, n, entries), PARSE_ASYMMETRY_TOL)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut flat = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Self::from_row_slice(n, &flat)
    }

    /// Wraps a mathematically symmetric dense result, checking drift first.
    pub fn from_dense(mut m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let drift = relative_asymmetry(&m);
        if drift > tol {
            return Err(Error::Asymmetric(drift));
        }
        symmetrize_in_place(&mut m);
        Ok(Self { inner: m })
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_dense(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.inner.diagonal().iter().copied().collect()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| i == j || self.inner[(i, j)] == 0.0))
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: other.n() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self { inner: &self.inner + &other.inner })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self { inner: &self.inner - &other.inner })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { inner: &self.inner * c }
    }

    /// `self * x * self`, which is symmetric whenever `x` is.
    pub fn congruence(&self, x: &Self) -> Result<Self> {
        self.check_dim(x)?;
        Self::from_dense(&self.inner * &x.inner * &self.inner, SYMMETRY_DRIFT_TOL)
    }

    /// Like [`Self::congruence`] with an explicit drift tolerance.
    pub fn congruence_tol(&self, x: &Self, tol: f64) -> Result<Self> {
        self.check_dim(x)?;
        Self::from_dense(&self.inner * &x.inner * &self.inner, tol)
    }

    /// `sᵀ self s` for a rectangular `s` (n×k), giving a k×k result.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: s.nrows() });
        }
        Self::from_dense(s.transpose() * &self.inner * s, SYMMETRY_DRIFT_TOL)
    }

    pub fn frobenius(&self) -> f64 {
        self.inner.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.amax()
    }

    pub fn eig(&self) -> Result<SpectralDecomp> {
        jacobi_eig(self)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        jacobi_values(self)
    }

    /// Spectral norm; for symmetric matrices the largest `|λ|`.
    pub fn norm2(&self) -> Result<f64> {
        let v = self.eigenvalues()?;
        Ok(v[0].abs().max(v[v.len() - 1].abs()))
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    pub fn lambda_max(&self) -> Result<f64> {
        let v = self.eigenvalues()?;
        Ok(v[v.len() - 1])
    }

    /// Writes the text format: `n`, then `n` rows of `n` space-separated decimals.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n());
        for row in self.inner.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix text".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Parse(format!("bad dimension line `{header}`")))?;
        if n == 0 {
            return Err(Error::Parse("dimension must be at least 1".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {n} rows, found {r}")))?;
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", r + 1)))?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row {} has {} entries, expected {n}",
                    r + 1,
                    row.len()
                )));
            }
            entries.extend(row);
        }
        if lines.next().is_some() {
            return Err(Error::Parse(format!("trailing content after {n} rows")));
        }
        Self::from_row_slice(n, &entries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    /// Eigenvectors as columns, ordered like `values`.
    pub vectors: DMatrix<f64>,
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
}

impl SpectralDecomp {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.values[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn norm2(&self) -> f64 {
        self.lambda_min().abs().max(self.lambda_max().abs())
    }

    /// `Q f(Λ) Qᵀ`; errors if `f` is non-finite at any eigenvalue.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
        let fv: Vec<f64> = self
            .values
            .iter()
            .map(|&l| {
                let v = f(l);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::FunctionUndefined(l))
                }
            })
            .collect::<Result<_>>()?;
        let n = self.n();
        let q = &self.vectors;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += q[(i, k)] * fv[k] * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        Ok(SymMatrix { inner: out })
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l).expect("identity is finite on finite eigenvalues")
    }

    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.n();
        (self.vectors.transpose() * &self.vectors - DMatrix::<f64>::identity(n, n)).norm()
    }

    /// `|Q Λ Qᵀ - A|_F` computed with a plain dense product.
    pub fn reconstruction_residual(&self, a: &SymMatrix) -> f64 {
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        (&self.vectors * lam * self.vectors.transpose() - &a.inner).norm()
    }

    fn check_pd(&self, what: &'static str) -> Result<()> {
        let tol = PD_REL_TOL * self.norm2().max(1.0);
        if self.lambda_min() <= tol {
            return Err(Error::NotPositiveDefinite { what, lambda_min: self.lambda_min() });
        }
        Ok(())
    }

    pub fn sqrt_pd(&self) -> Result<SymMatrix> {
        self.check_pd("matrix")?;
        self.map(f64::sqrt)
    }

    pub fn inv_sqrt_pd(&self) -> Result<SymMatrix> {
        self.check_pd("matrix")?;
        self.map(|l| 1.0 / l.sqrt())
    }

    pub fn inv_pd(&self) -> Result<SymMatrix> {
        self.check_pd("matrix")?;
        self.map(|l| 1.0 / l)
    }

    pub fn cond(&self) -> f64 {
        self.lambda_max() / self.lambda_min()
    }
}

fn rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    (t, c, t * c)
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[i * n + j] * a[i * n + j];
        }
    }
    (2.0 * s).sqrt()
}

/// Cyclic Jacobi on a row-major copy. Returns unsorted diagonal and, when
/// requested, the accumulated rotation (row-major, eigenvectors as columns).
fn jacobi_core(a: &SymMatrix, with_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = a.n();
    let mut m: Vec<f64> = (0..n * n).map(|k| a.inner[(k / n, k % n)]).collect();
    let mut v = with_vectors.then(|| {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    });
    let threshold = JACOBI_REL_THRESHOLD * a.frobenius();
    let mut sweeps = 0;
    loop {
        let off = off_norm(&m, n);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_SWEEP_CAP {
            return Err(Error::NoConvergence { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (t, c, s) = rotation(m[p * n + p], m[q * n + q], apq);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    m[k * n + p] = np;
                    m[p * n + k] = np;
                    m[k * n + q] = nq;
                    m[q * n + k] = nq;
                }
                m[p * n + p] -= t * apq;
                m[q * n + q] += t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    Ok(((0..n).map(|i| m[i * n + i]).collect(), v))
}

pub fn jacobi_eig(a: &SymMatrix) -> Result<SpectralDecomp> {
    let n = a.n();
    let (diag, v) = jacobi_core(a, true)?;
    let v = v.expect("vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok(SpectralDecomp { vectors, values })
}

/// Ascending eigenvalues without accumulating eigenvectors.
pub fn jacobi_values(a: &SymMatrix) -> Result<Vec<f64>> {
    let (mut diag, _) = jacobi_core(a, false)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// `f(A)` through the spectral decomposition.
pub fn apply_fn(a: &SymMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    a.eig()?.map(f)
}

pub fn sqrt_pd(a: &SymMatrix) -> Result<SymMatrix> {
    a.eig()?.sqrt_pd()
}

pub fn inv_pd(a: &SymMatrix) -> Result<SymMatrix> {
    a.eig()?.inv_pd()
}

pub fn spectral_interval(a: &SymMatrix) -> Result<(f64, f64)> {
    let v = a.eigenvalues()?;
    Ok((v[0], v[v.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoewnerVerdict {
    pub holds: bool,
    /// `λmin(B - A)`.
    pub margin: f64,
    /// `max(1, |B-A|_2, |A|_2, |B|_2)`; the tolerance is relative to this.
    pub scale: f64,
}

impl LoewnerVerdict {
    pub fn relative_margin(&self) -> f64 {
        self.margin / self.scale
    }
}

/// Tests `A <= B` in the Loewner order.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<LoewnerVerdict> {
    let diff = b.sub(a)?;
    let d = diff.eigenvalues()?;
    let margin = d[0];
    let diff_norm = d[0].abs().max(d[d.len() - 1].abs());
    let scale = 1f64.max(diff_norm).max(a.norm2()?).max(b.norm2()?);
    Ok(LoewnerVerdict { holds: margin >= -tol * scale, margin, scale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        Ok(Self(v.into_iter().map(|x| x / norm).collect()))
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

/// `⟨Ax, x⟩`.
pub fn quad_form(a: &SymMatrix, x: &UnitVector) -> Result<f64> {
    let n = a.n();
    if x.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.n() });
    }
    let xs = &x.0;
    let mut s = 0.0;
    for (i, xi) in xs.iter().enumerate() {
        let row: f64 = xs.iter().enumerate().map(|(j, xj)| a.inner[(i, j)] * xj).sum();
        s += xi * row;
    }
    Ok(s)
}
