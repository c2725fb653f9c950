//! The matrix geometric mean `A # B` and the refined operator AM-GM bounds.
//!
//! All terms are evaluated as congruences `A^{1/2} f(T) A^{1/2}` with
//! `T = A^{-1/2} B A^{-1/2}`, so each is symmetric by construction:
//!
//! | term       | `f(t)`                                   |
//! |------------|------------------------------------------|
//! | `A # B`    | `sqrt(t)`                                |
//! | correction | `sqrt(t) ((t-1)/(t+1))^2`                |
//! | upper      | `sqrt(t) (t/8 + 1/(8t) + 3/4)`           |
//!
//! The product forms `(A#B)((A+B)^{-1}(A-B))^2` and
//! `(A#B)(A^{-1}B + B^{-1}A + 6I)/8` are evaluated separately and must agree.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{SpectralDecomp, SymMatrix, SYMMETRY_DRIFT_TOL};

/// Agreement required between the congruence and product forms.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Inputs with condition number above this get widened tolerances.
pub const COND_GUARD: f64 = 1e12;
pub const WIDENED_TOL: f64 = 1e-6;

/// Shared spectral data for one ordered pair `(A, B)`.
#[derive(Debug, Clone)]
pub struct Congruence {
    a: SymMatrix,
    b: SymMatrix,
    a_half: SymMatrix,
    a_dec: SpectralDecomp,
    b_dec: SpectralDecomp,
    t: SpectralDecomp,
    widened: bool,
}

fn pd_decomp(m: &SymMatrix, what: &'static str) -> Result<SpectralDecomp> {
    let d = m.eig()?;
    d.sqrt_pd().map_err(|e| match e {
        Error::NotPositiveDefinite { lambda_min, .. } => {
            Error::NotPositiveDefinite { what, lambda_min }
        }
        other => other,
    })?;
    Ok(d)
}

impl Congruence {
    pub fn new(a: &SymMatrix, b: &SymMatrix) -> Result<Self> {
        if a.n() != b.n() {
            return Err(Error::DimensionMismatch { expected: a.n(), got: b.n() });
        }
        let a_dec = pd_decomp(a, "A")?;
        let b_dec = pd_decomp(b, "B")?;
        let widened = a_dec.cond() > COND_GUARD || b_dec.cond() > COND_GUARD;
        if widened {
            log::warn!(
                "ill-conditioned input (cond A = {:.3e}, cond B = {:.3e}); tolerances widened to {WIDENED_TOL:e}",
                a_dec.cond(),
                b_dec.cond()
            );
        }
        let drift = if widened { WIDENED_TOL } else { SYMMETRY_DRIFT_TOL };
        let a_half = a_dec.sqrt_pd()?;
        let a_neg_half = a_dec.inv_sqrt_pd()?;
        let t = a_neg_half.congruence_tol(b, drift)?.eig()?;
        Ok(Self { a: a.clone(), b: b.clone(), a_half, a_dec, b_dec, t, widened })
    }

    pub fn widened(&self) -> bool {
        self.widened
    }

    /// Tolerance for identity checks on this pair.
    pub fn identity_tol(&self) -> f64 {
        if self.widened {
            WIDENED_TOL
        } else {
            IDENTITY_TOL
        }
    }

    fn drift_tol(&self) -> f64 {
        if self.widened {
            WIDENED_TOL
        } else {
            SYMMETRY_DRIFT_TOL
        }
    }

    /// Spectrum of `T = A^{-1/2} B A^{-1/2}`.
    pub fn t_spectrum(&self) -> &[f64] {
        &self.t.values
    }

    /// `A^{1/2} f(T) A^{1/2}`.
    pub fn lift(&self, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
        let ft = self.t.map(f)?;
        self.a_half.congruence_tol(&ft, self.drift_tol())
    }

    pub fn geo(&self) -> Result<SymMatrix> {
        self.lift(f64::sqrt)
    }

    /// `A^{1/2} T^{1/2} ((T+I)^{-1}(T-I))^2 A^{1/2}`.
    pub fn correction(&self) -> Result<SymMatrix> {
        self.lift(|t| {
            let q = (t - 1.0) / (t + 1.0);
            t.sqrt() * q * q
        })
    }

    pub fn mid(&self) -> Result<SymMatrix> {
        self.geo()?.add(&self.correction()?.scale(0.5))
    }

    pub fn upper(&self) -> Result<SymMatrix> {
        self.lift(|t| t.sqrt() * (t / 8.0 + 1.0 / (8.0 * t) + 0.75))
    }

    pub fn am(&self) -> SymMatrix {
        self.a.add(&self.b).expect("same dimension").scale(0.5)
    }

    /// `(A#B)((A+B)^{-1}(A-B))^2` plus `A#B` with factor 1/2, as a plain product.
    pub fn mid_literal(&self) -> Result<DMatrix<f64>> {
        let geo = self.geo()?;
        let sum_inv = self.a.add(&self.b)?.eig()?.inv_pd()?;
        let diff = self.a.sub(&self.b)?;
        let k = sum_inv.as_dense() * diff.as_dense();
        Ok(geo.as_dense() + 0.5 * (geo.as_dense() * &k * &k))
    }

    /// `(1/8)(A#B)(A^{-1}B + B^{-1}A + 6I)` as a plain product.
    pub fn upper_literal(&self) -> Result<DMatrix<f64>> {
        let n = self.a.n();
        let geo = self.geo()?;
        let a_inv = self.a_dec.inv_pd()?;
        let b_inv = self.b_dec.inv_pd()?;
        let inner = a_inv.as_dense() * self.b.as_dense()
            + b_inv.as_dense() * self.a.as_dense()
            + DMatrix::<f64>::identity(n, n) * 6.0;
        Ok(geo.as_dense() * inner / 8.0)
    }
}

fn relative_gap(sym: &SymMatrix, literal: &DMatrix<f64>) -> f64 {
    let scale = sym.frobenius().max(f64::MIN_POSITIVE);
    (sym.as_dense() - literal).norm() / scale
}

fn check_identity(what: &'static str, gap: f64, tol: f64) -> Result<()> {
    if gap > tol || gap.is_nan() {
        return Err(Error::IdentityMismatch { what, gap, tol });
    }
    Ok(())
}

pub fn geo_mean(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    Congruence::new(a, b)?.geo()
}

/// `|X A^{-1} X - B|_F / |B|_F`.
pub fn riccati_residual(a: &SymMatrix, b: &SymMatrix, x: &SymMatrix) -> Result<f64> {
    let a_inv = a.eig()?.inv_pd()?;
    if a.n() != b.n() || a.n() != x.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: b.n().max(x.n()) });
    }
    let lhs = x.as_dense() * a_inv.as_dense() * x.as_dense();
    let num = (lhs - b.as_dense()).norm();
    let den = b.frobenius();
    Ok(if den > 0.0 { num / den } else { num })
}

pub fn refined_mid(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let c = Congruence::new(a, b)?;
    let mid = c.mid()?;
    check_identity("refined_mid", relative_gap(&mid, &c.mid_literal()?), c.identity_tol())?;
    Ok(mid)
}

pub fn upper_bound(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let c = Congruence::new(a, b)?;
    let up = c.upper()?;
    check_identity("upper_bound", relative_gap(&up, &c.upper_literal()?), c.identity_tol())?;
    Ok(up)
}

#[derive(Debug, Clone, Serialize)]
pub struct OpMeanBundle {
    pub geo: SymMatrix,
    pub mid: SymMatrix,
    pub upper: SymMatrix,
    pub am: SymMatrix,
    /// Relative Frobenius gaps between congruence and product forms.
    pub mid_identity_gap: f64,
    pub upper_identity_gap: f64,
    pub widened: bool,
}

pub fn mean_bundle(a: &SymMatrix, b: &SymMatrix) -> Result<OpMeanBundle> {
    let c = Congruence::new(a, b)?;
    let mid = c.mid()?;
    let upper = c.upper()?;
    let mid_identity_gap = relative_gap(&mid, &c.mid_literal()?);
    let upper_identity_gap = relative_gap(&upper, &c.upper_literal()?);
    check_identity("refined_mid", mid_identity_gap, c.identity_tol())?;
    check_identity("upper_bound", upper_identity_gap, c.identity_tol())?;
    Ok(OpMeanBundle {
        geo: c.geo()?,
        mid,
        upper,
        am: c.am(),
        mid_identity_gap,
        upper_identity_gap,
        widened: c.widened(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::sqrt_pd;

    fn d(v: &[f64]) -> SymMatrix {
        SymMatrix::from_diagonal(v)
    }

    fn dist(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.sub(b).unwrap().frobenius() / b.frobenius().max(1.0)
    }

    #[test]
    fn geo_mean_examples() {
        let a = SymMatrix::from_row_slice(3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        assert!(dist(&geo_mean(&a, &a).unwrap(), &a) < 1e-12);
        assert!(dist(&geo_mean(&d(&[4.0, 1.0]), &SymMatrix::identity(2)).unwrap(), &d(&[2.0, 1.0])) < 1e-15);
        let s = SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let g = geo_mean(&s, &SymMatrix::identity(2)).unwrap();
        assert!(dist(&g, &sqrt_pd(&s).unwrap()) < 1e-14);
        assert!((g.get(0, 0) - 1.366_025_403_784_438_6).abs() < 1e-14);
        assert!((g.get(0, 1) - 0.366_025_403_784_438_65).abs() < 1e-14);
    }

    #[test]
    fn geo_mean_errors() {
        let bad = d(&[1.0, -1.0]);
        let err = geo_mean(&SymMatrix::identity(2), &bad).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { what: "B", .. }));
        let err = geo_mean(&bad, &SymMatrix::identity(2)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { what: "A", .. }));
        assert!(matches!(
            geo_mean(&SymMatrix::identity(2), &SymMatrix::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn riccati_examples() {
        let a = SymMatrix::from_row_slice(2, &[3.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(riccati_residual(&a, &a, &a).unwrap() < 1e-15);
        let i = SymMatrix::identity(2);
        assert!((riccati_residual(&i, &i, &i.scale(2.0)).unwrap() - 3.0).abs() < 1e-15);
        let b = SymMatrix::from_row_slice(2, &[1.0, -0.4, -0.4, 5.0]).unwrap();
        let x = geo_mean(&a, &b).unwrap();
        assert!(riccati_residual(&a, &b, &x).unwrap() < 1e-12);
    }

    #[test]
    fn commuting_reductions() {
        let a = d(&[4.0, 1.0]);
        let i = SymMatrix::identity(2);
        assert!(dist(&refined_mid(&a, &i).unwrap(), &d(&[2.36, 1.0])) < 1e-15);
        assert!(dist(&upper_bound(&a, &i).unwrap(), &d(&[2.5625, 1.0])) < 1e-15);
        let a = SymMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(dist(&refined_mid(&a, &a).unwrap(), &a) < 1e-14);
        assert!(dist(&upper_bound(&a, &a).unwrap(), &a) < 1e-14);
    }

    #[test]
    fn bundle_scales_homogeneously() {
        let a = SymMatrix::from_row_slice(2, &[2.0, 0.7, 0.7, 1.5]).unwrap();
        let b = SymMatrix::from_row_slice(2, &[0.9, -0.2, -0.2, 3.0]).unwrap();
        let one = mean_bundle(&a, &b).unwrap();
        let three = mean_bundle(&a.scale(3.0), &b.scale(3.0)).unwrap();
        for (x, y) in [
            (&one.geo, &three.geo),
            (&one.mid, &three.mid),
            (&one.upper, &three.upper),
            (&one.am, &three.am),
        ] {
            assert!(dist(&x.scale(3.0), y) < 1e-13);
        }
        let ii = mean_bundle(&SymMatrix::identity(3), &SymMatrix::identity(3)).unwrap();
        for m in [&ii.geo, &ii.mid, &ii.upper, &ii.am] {
            assert!(dist(m, &SymMatrix::identity(3)) < 1e-15);
        }
        assert!(one.mid_identity_gap < IDENTITY_TOL && one.upper_identity_gap < IDENTITY_TOL);
    }

    #[test]
    fn conditioning_guard_sits_at_pd_floor() {
        // cond 5e11 is accepted without widening; cond above 1e12 is already
        // below the positive-definiteness floor and rejected outright.
        let c = Congruence::new(&d(&[1.0, 2e-12]), &SymMatrix::identity(2)).unwrap();
        assert!(!c.widened());
        assert_eq!(c.identity_tol(), IDENTITY_TOL);
        assert!(matches!(
            Congruence::new(&d(&[1.0, 5e-13]), &SymMatrix::identity(2)),
            Err(Error::NotPositiveDefinite { what: "A", .. })
        ));
    }
}
