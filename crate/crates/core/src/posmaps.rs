//! Unital positive linear maps on symmetric matrices.
//!
//! Three families are modelled:
//!
//! - pinching: keep diagonal blocks of a fixed index partition, zero the rest
//!   (output stays `n×n`);
//! - compression: `A ↦ VᵀAV` for an isometry `V` (`n×k`, output `k×k`);
//! - unitary mixture: `A ↦ Σ wᵢ UᵢᵀAUᵢ` with orthogonal `Uᵢ` and weights summing to one.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::SymMatrix;
use crate::rng::{self, SeededRng};

pub const ISOMETRY_TOL: f64 = 1e-10;
pub const UNITAL_TOL: f64 = 1e-12;
pub const LINEARITY_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum PosLinMap {
    Pinching { n: usize, blocks: Vec<Vec<usize>> },
    Compression { v: DMatrix<f64> },
    UnitaryMixture { weights: Vec<f64>, unitaries: Vec<DMatrix<f64>> },
}

fn isometry_residual(v: &DMatrix<f64>) -> f64 {
    let k = v.ncols();
    (v.transpose() * v - DMatrix::<f64>::identity(k, k)).norm()
}

impl PosLinMap {
    pub fn identity(n: usize) -> Self {
        Self::UnitaryMixture { weights: vec![1.0], unitaries: vec![DMatrix::identity(n, n)] }
    }

    /// `blocks` must partition `0..n` (0-based).
    pub fn pinching(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in blocks.iter().flatten() {
            if i >= n {
                return Err(Error::InvalidMap(format!("pinching index {} exceeds dimension {n}", i + 1)));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidMap(format!("pinching index {} repeated", i + 1)));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidMap(format!("pinching does not cover index {}", missing + 1)));
        }
        if blocks.iter().any(Vec::is_empty) {
            return Err(Error::InvalidMap("pinching block is empty".into()));
        }
        Ok(Self::Pinching { n, blocks })
    }

    pub fn singleton_pinching(n: usize) -> Self {
        Self::Pinching { n, blocks: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn compression(v: DMatrix<f64>) -> Result<Self> {
        if v.ncols() == 0 || v.ncols() > v.nrows() {
            return Err(Error::InvalidMap(format!("compression needs n×k with 1 <= k <= n, got {:?}", v.shape())));
        }
        let res = isometry_residual(&v);
        if res > ISOMETRY_TOL {
            return Err(Error::InvalidIsometry(res));
        }
        Ok(Self::Compression { v })
    }

    pub fn unitary_mixture(weights: Vec<f64>, unitaries: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != unitaries.len() {
            return Err(Error::InvalidMap("mixture needs one weight per orthogonal factor".into()));
        }
        if weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::InvalidMap("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > UNITAL_TOL {
            return Err(Error::InvalidMap(format!("mixture weights sum to {total}, not 1")));
        }
        let n = unitaries[0].nrows();
        for u in &unitaries {
            if u.shape() != (n, n) {
                return Err(Error::InvalidMap("mixture factors must share one square shape".into()));
            }
            let res = isometry_residual(u);
            if res > ISOMETRY_TOL {
                return Err(Error::InvalidIsometry(res));
            }
        }
        Ok(Self::UnitaryMixture { weights, unitaries })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Pinching { n, .. } => *n,
            Self::Compression { v } => v.nrows(),
            Self::UnitaryMixture { unitaries, .. } => unitaries[0].nrows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Compression { v } => v.ncols(),
            _ => self.input_dim(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Pinching { .. } => "pinching",
            Self::Compression { .. } => "compression",
            Self::UnitaryMixture { .. } => "mixture",
        }
    }

    pub fn apply(&self, a: &SymMatrix) -> Result<SymMatrix> {
        let n = self.input_dim();
        if a.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.n() });
        }
        match self {
            Self::Pinching { blocks, .. } => {
                let mut label = vec![0; n];
                for (b, block) in blocks.iter().enumerate() {
                    for &i in block {
                        label[i] = b;
                    }
                }
                let out = DMatrix::from_fn(n, n, |i, j| if label[i] == label[j] { a.get(i, j) } else { 0.0 });
                SymMatrix::from_dense(out, 0.0)
            }
            Self::Compression { v } => {
                let res = isometry_residual(v);
                if res > ISOMETRY_TOL {
                    return Err(Error::InvalidIsometry(res));
                }
                a.transform(v)
            }
            Self::UnitaryMixture { weights, unitaries } => {
                let mut acc = SymMatrix::zeros(n);
                for (w, u) in weights.iter().zip(unitaries) {
                    acc = acc.add(&a.transform(u)?.scale(*w))?;
                }
                Ok(acc)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapValidation {
    pub trials: usize,
    pub unital_error: f64,
    pub linearity_error: f64,
    /// Smallest `λmin(Φ(A)) / |A|_2` over random PSD inputs.
    pub worst_positivity: f64,
    pub failures: Vec<String>,
}

impl MapValidation {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn random_psd(n: usize, rng: &mut impl Rng) -> SymMatrix {
    // G Gᵀ with a rank drawn uniformly from 1..=n, so singular inputs appear too.
    let rank = rng.random_range(1..=n);
    let g = rng::gaussian_matrix(n, rank, rng);
    SymMatrix::from_dense(&g * g.transpose(), 1e-12).expect("G Gᵀ is symmetric")
}

fn random_symmetric(n: usize, rng: &mut impl Rng) -> SymMatrix {
    let g = rng::gaussian_matrix(n, n, rng);
    SymMatrix::from_dense(&g + g.transpose(), 0.0).expect("G + Gᵀ is symmetric")
}

/// Checks unitality, linearity and positivity on `trials` random inputs.
pub fn validate(phi: &PosLinMap, trials: usize, seed: u64) -> MapValidation {
    let mut report = MapValidation { trials, worst_positivity: f64::INFINITY, ..Default::default() };
    let n = phi.input_dim();
    let k = phi.output_dim();

    match phi {
        PosLinMap::Compression { v } => {
            let res = isometry_residual(v);
            if res > ISOMETRY_TOL {
                report.failures.push(format!("invalid isometry: |VᵀV - I| = {res:.3e}"));
                return report;
            }
        }
        PosLinMap::UnitaryMixture { weights, unitaries } => {
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > UNITAL_TOL {
                report.failures.push(format!("weights sum to {total}"));
            }
            for u in unitaries {
                let res = isometry_residual(u);
                if res > ISOMETRY_TOL {
                    report.failures.push(format!("non-orthogonal factor: residual {res:.3e}"));
                }
            }
        }
        PosLinMap::Pinching { .. } => {}
    }

    match phi.apply(&SymMatrix::identity(n)) {
        Ok(img) => {
            report.unital_error = img.sub(&SymMatrix::identity(k)).map(|d| d.max_abs()).unwrap_or(f64::INFINITY);
            if report.unital_error > UNITAL_TOL {
                report.failures.push(format!("not unital: |Φ(I) - I| = {:.3e}", report.unital_error));
            }
        }
        Err(e) => report.failures.push(format!("Φ(I) failed: {e}")),
    }

    let mut rng = rng::seeded(seed);
    for t in 0..trials {
        let a = random_symmetric(n, &mut rng);
        let b = random_symmetric(n, &mut rng);
        let alpha = rng::uniform(-2.0, 2.0, &mut rng);
        let lin = (|| -> Result<f64> {
            let lhs = phi.apply(&a.scale(alpha).add(&b)?)?;
            let rhs = phi.apply(&a)?.scale(alpha).add(&phi.apply(&b)?)?;
            let scale = a.max_abs().max(b.max_abs()).max(1.0);
            Ok(lhs.sub(&rhs)?.max_abs() / scale)
        })();
        match lin {
            Ok(e) => {
                report.linearity_error = report.linearity_error.max(e);
                if e > LINEARITY_TOL {
                    report.failures.push(format!("trial {t}: linearity defect {e:.3e}"));
                }
            }
            Err(e) => report.failures.push(format!("trial {t}: {e}")),
        }

        let p = random_psd(n, &mut rng);
        let pos = (|| -> Result<f64> {
            let img = phi.apply(&p)?;
            Ok(img.lambda_min()? / p.norm2()?.max(f64::MIN_POSITIVE))
        })();
        match pos {
            Ok(r) => {
                report.worst_positivity = report.worst_positivity.min(r);
                if r < -POSITIVITY_TOL {
                    report.failures.push(format!("trial {t}: Φ(A) has eigenvalue {r:.3e}·|A|"));
                }
            }
            Err(e) => report.failures.push(format!("trial {t}: {e}")),
        }
    }
    report
}

/// Command-line description of a map, resolved against a dimension and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapDescriptor {
    Identity,
    /// 0-based blocks; written 1-based as `pinching:1,2|3`.
    Pinching(Vec<Vec<usize>>),
    /// Singleton pinching at whatever dimension it is resolved against.
    Diagonal,
    Compression { k: usize },
    Mixture { j: usize },
}

impl fmt::Display for MapDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Diagonal => write!(f, "pinching:diag"),
            Self::Pinching(blocks) => {
                let parts: Vec<String> = blocks
                    .iter()
                    .map(|b| b.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","))
                    .collect();
                write!(f, "pinching:{}", parts.join("|"))
            }
            Self::Compression { k } => write!(f, "compression:k={k}"),
            Self::Mixture { j } => write!(f, "mixture:j={j}"),
        }
    }
}

fn parse_count(body: &str, key: &str) -> Result<usize> {
    let v = body
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse(format!("expected `{key}=<count>`, got `{body}`")))?;
    let c: usize = v.parse().map_err(|_| Error::Parse(format!("bad count `{v}`")))?;
    if c == 0 {
        return Err(Error::Parse(format!("`{key}` must be at least 1")));
    }
    Ok(c)
}

impl FromStr for MapDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(Self::Identity);
        }
        let (family, body) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("map descriptor `{s}` needs `family:args`")))?;
        match family {
            "pinching" if body == "diag" => Ok(Self::Diagonal),
            "pinching" => {
                let mut blocks = Vec::new();
                for part in body.split('|') {
                    let block: std::result::Result<Vec<usize>, _> =
                        part.split(',').map(|t| t.trim().parse::<usize>()).collect();
                    let block = block.map_err(|_| Error::Parse(format!("bad pinching block `{part}`")))?;
                    if block.contains(&0) {
                        return Err(Error::Parse("pinching indices are 1-based".into()));
                    }
                    blocks.push(block.into_iter().map(|i| i - 1).collect());
                }
                Ok(Self::Pinching(blocks))
            }
            "compression" => Ok(Self::Compression { k: parse_count(body, "k")? }),
            "mixture" => Ok(Self::Mixture { j: parse_count(body, "j")? }),
            other => Err(Error::Parse(format!("unknown map family `{other}`"))),
        }
    }
}

impl MapDescriptor {
    /// The three default families used when a campaign names no map.
    pub fn defaults() -> Vec<Self> {
        vec![Self::Diagonal, Self::Compression { k: 2 }, Self::Mixture { j: 3 }]
    }

    pub fn resolve(&self, n: usize, rng: &mut SeededRng) -> Result<PosLinMap> {
        match self {
            Self::Identity => Ok(PosLinMap::identity(n)),
            Self::Diagonal => Ok(PosLinMap::singleton_pinching(n)),
            Self::Pinching(blocks) => PosLinMap::pinching(n, blocks.clone()),
            Self::Compression { k } => {
                // Clamp so the default descriptor also covers n = 1.
                let k = (*k).min(n);
                PosLinMap::compression(rng::random_isometry(n, k, rng)?)
            }
            Self::Mixture { j } => {
                let raw: Vec<f64> = (0..*j).map(|_| rng::uniform(0.1, 1.0, rng)).collect();
                let total: f64 = raw.iter().sum();
                let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
                let head: f64 = weights[..*j - 1].iter().sum();
                weights[*j - 1] = 1.0 - head;
                let unitaries = (0..*j).map(|_| rng::random_orthogonal(n, rng)).collect::<Result<Vec<_>>>()?;
                PosLinMap::unitary_mixture(weights, unitaries)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn pinching_kills_off_diagonal() {
        let a = SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let out = PosLinMap::singleton_pinching(2).apply(&a).unwrap();
        assert_eq!(out, SymMatrix::from_diagonal(&[2.0, 2.0]));
        let blocks = PosLinMap::pinching(3, vec![vec![0, 2], vec![1]]).unwrap();
        let a = SymMatrix::from_row_slice(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]).unwrap();
        let out = blocks.apply(&a).unwrap();
        assert_eq!(out.to_rows(), vec![vec![1.0, 0.0, 3.0], vec![0.0, 4.0, 0.0], vec![3.0, 0.0, 6.0]]);
    }

    #[test]
    fn invalid_pinchings() {
        assert!(PosLinMap::pinching(3, vec![vec![0, 1]]).is_err());
        assert!(PosLinMap::pinching(2, vec![vec![0, 1], vec![1]]).is_err());
        assert!(PosLinMap::pinching(2, vec![vec![0, 5]]).is_err());
    }

    #[test]
    fn compression_by_basis_vector() {
        let v = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let phi = PosLinMap::compression(v).unwrap();
        let out = phi.apply(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(out.n(), 1);
        assert_eq!(out.get(0, 0), 1.0);
    }

    #[test]
    fn every_family_is_unital() {
        let mut rng = rng::seeded(3);
        for d in MapDescriptor::defaults().into_iter().chain([MapDescriptor::Identity]) {
            let phi = d.resolve(4, &mut rng).unwrap();
            let out = phi.apply(&SymMatrix::identity(4)).unwrap();
            let err = out.sub(&SymMatrix::identity(phi.output_dim())).unwrap().max_abs();
            assert!(err <= UNITAL_TOL, "{d}: {err:e}");
        }
    }

    #[test]
    fn mixture_with_quarter_turn() {
        let phi = PosLinMap::unitary_mixture(vec![0.5, 0.5], vec![DMatrix::identity(2, 2), rotation(std::f64::consts::FRAC_PI_2)])
            .unwrap();
        let a = SymMatrix::from_diagonal(&[1.0, 4.0]);
        let out = phi.apply(&a).unwrap();
        assert!(out.sub(&SymMatrix::from_diagonal(&[2.5, 2.5])).unwrap().max_abs() < 1e-15);
        let tr: f64 = out.diagonal().iter().sum();
        assert!((tr - 5.0).abs() < 1e-15);
    }

    #[test]
    fn validation_passes_for_pinching() {
        let rep = validate(&PosLinMap::singleton_pinching(5), 100, 17);
        assert!(rep.passed(), "{:?}", rep.failures);
        assert!(rep.worst_positivity >= -POSITIVITY_TOL);
    }

    #[test]
    fn validation_flags_non_isometry() {
        let bad = PosLinMap::Compression { v: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]) };
        let rep = validate(&bad, 10, 1);
        assert!(!rep.passed());
        assert!(rep.failures[0].contains("invalid isometry"));
        assert!(matches!(
            PosLinMap::compression(DMatrix::from_column_slice(2, 1, &[1.0, 1.0])),
            Err(Error::InvalidIsometry(_))
        ));
        assert!(matches!(bad.apply(&SymMatrix::identity(2)), Err(Error::InvalidIsometry(_))));
    }

    #[test]
    fn descriptor_round_trip() {
        for s in ["identity", "pinching:1,2|3", "pinching:diag", "compression:k=2", "mixture:j=3"] {
            let d: MapDescriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        for bad in ["pinching:0,1", "compression:2", "mixture:j=0", "kraus:x", "pinching"] {
            assert!(bad.parse::<MapDescriptor>().is_err(), "{bad}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let phi = PosLinMap::singleton_pinching(3);
        assert!(matches!(phi.apply(&SymMatrix::identity(2)), Err(Error::DimensionMismatch { .. })));
    }
}
