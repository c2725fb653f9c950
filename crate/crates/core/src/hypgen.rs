//! Seeded generation of matrix instances satisfying each hypothesis chain.
//!
//! Generators build the order constraints in by congruence and only reject on
//! residual numerical failures; `RETRY_CAP` rejections in a row is an error.
//! Interval endpoints are pinned with probability ½ so that near-equality
//! instances are well represented.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{loewner_leq, SpectralDecomp, SymMatrix};
use crate::posmaps::{MapDescriptor, PosLinMap};
use crate::rng::{self, SeededRng};

/// Relative Loewner margin a generated instance must satisfy.
pub const HYPOTHESIS_TOL: f64 = 1e-10;
pub const RETRY_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisKind {
    /// Two unconstrained positive definite matrices.
    SpdPair,
    /// `m B <= A <= M B` with `1 < m <= M`.
    PairOrdered,
    /// `m I <= m' B <= A <= M I`, plus `m'^2 B <= A` when strengthened.
    KantorovichTriple,
    /// The triple chain with `B = A^{-1}`; the literal variant also needs `m > 1`.
    SelfInverse,
    /// `m I <= A <= M I`, paired with a positive map.
    MapLevel,
}

impl HypothesisKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SpdPair => "spd_pair",
            Self::PairOrdered => "pair_ordered",
            Self::KantorovichTriple => "kantorovich_triple",
            Self::SelfInverse => "self_inverse",
            Self::MapLevel => "map_level",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub kind: HypothesisKind,
    pub m: f64,
    pub m_prime: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub n: usize,
    pub strengthened: bool,
}

impl HypothesisSpec {
    pub fn new(kind: HypothesisKind, n: usize, m: f64, m_prime: f64, big_m: f64, strengthened: bool) -> Self {
        Self { kind, m, m_prime, big_m, n, strengthened }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    /// Admissible spectral window for the generated `A` (or `C` for ordered pairs).
    Feasible { lo: f64, hi: f64 },
    Infeasible { reason: String },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }

    pub fn window(&self) -> Result<(f64, f64)> {
        match self {
            Self::Feasible { lo, hi } => Ok((*lo, *hi)),
            Self::Infeasible { reason } => Err(Error::InfeasibleHypothesis(reason.clone())),
        }
    }
}

fn infeasible(reason: impl Into<String>) -> Feasibility {
    Feasibility::Infeasible { reason: reason.into() }
}

/// Reduces the hypothesis chain to an eigenvalue window, or explains why it is empty.
pub fn feasibility(spec: &HypothesisSpec) -> Feasibility {
    let HypothesisSpec { kind, m, m_prime: mp, big_m, n, strengthened } = *spec;
    if n == 0 {
        return infeasible("dimension must be at least 1");
    }
    if !(m > 0.0 && m.is_finite() && big_m.is_finite()) {
        return infeasible(format!("need 0 < m and finite M, got m = {m}, M = {big_m}"));
    }
    if m > big_m {
        return infeasible(format!("m = {m} exceeds M = {big_m}"));
    }
    match kind {
        HypothesisKind::SpdPair | HypothesisKind::MapLevel => Feasibility::Feasible { lo: m, hi: big_m },
        HypothesisKind::PairOrdered => {
            if m <= 1.0 {
                return infeasible(format!("ordered pair needs 1 < m, got m = {m}"));
            }
            Feasibility::Feasible { lo: m, hi: big_m }
        }
        HypothesisKind::KantorovichTriple => {
            if !(mp > 1.0 && mp.is_finite()) {
                return infeasible(format!("refinement needs m' > 1, got m' = {mp}"));
            }
            // A >= m'^2 B >= m' m I when strengthened.
            let lo = if strengthened { m * mp } else { m };
            if lo > big_m {
                return infeasible(format!("A must have spectrum in [{lo}, {big_m}], which is empty"));
            }
            Feasibility::Feasible { lo, hi: big_m }
        }
        HypothesisKind::SelfInverse => {
            if !(mp > 1.0 && mp.is_finite()) {
                return infeasible(format!("refinement needs m' > 1, got m' = {mp}"));
            }
            if !strengthened && m <= 1.0 {
                return infeasible(format!("literal chain starts with I < mI, needs m > 1, got m = {m}"));
            }
            // m <= m'/λ, m'/λ <= λ (λ >= sqrt m'), λ <= M, and m'^2/λ <= λ (λ >= m') if strengthened.
            let lo = if strengthened { mp } else { mp.sqrt() };
            let hi = big_m.min(mp / m);
            if lo > hi {
                let mut reason = format!("eigenvalues need {lo} <= λ <= {hi}, which is empty");
                if strengthened && m > 1.0 {
                    reason.push_str(" (λ >= m' and λ <= m'/m force m <= 1)");
                }
                return infeasible(reason);
            }
            Feasibility::Feasible { lo, hi }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub a: SymMatrix,
    /// `None` means `B = A^{-1}`.
    pub b: Option<SymMatrix>,
    pub phi: Option<PosLinMap>,
    pub spec: HypothesisSpec,
    pub seed: Option<u64>,
}

impl Instance {
    pub fn new(a: SymMatrix, b: Option<SymMatrix>, spec: HypothesisSpec) -> Self {
        Self { a, b, phi: None, spec, seed: None }
    }

    pub fn with_map(mut self, phi: PosLinMap) -> Self {
        self.phi = Some(phi);
        self
    }

    /// `B`, or `A^{-1}` when `B` is implicit.
    pub fn b_matrix(&self) -> Result<SymMatrix> {
        match &self.b {
            Some(b) => Ok(b.clone()),
            None => self.a.eig()?.inv_pd(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisStatus {
    pub ok: bool,
    pub worst_relative_margin: f64,
    pub failed: Vec<String>,
}

/// Verifies every constraint of the instance's chain in the Loewner order.
pub fn hypothesis_check(inst: &Instance) -> HypothesisStatus {
    let mut status = HypothesisStatus { ok: true, worst_relative_margin: f64::INFINITY, failed: vec![] };
    if let Feasibility::Infeasible { reason } = feasibility(&inst.spec) {
        status.ok = false;
        status.failed.push(reason);
        return status;
    }
    if let Err(e) = check_constraints(inst, &mut status) {
        status.ok = false;
        status.failed.push(e.to_string());
    }
    status
}

fn check_constraints(inst: &Instance, status: &mut HypothesisStatus) -> Result<()> {
    let spec = &inst.spec;
    let n = inst.a.n();
    if n != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, got: n });
    }
    let (m, mp, big_m) = (spec.m, spec.m_prime, spec.big_m);
    let a = &inst.a;
    let mut leq = |name: &str, lhs: &SymMatrix, rhs: &SymMatrix| -> Result<()> {
        let v = loewner_leq(lhs, rhs, HYPOTHESIS_TOL)?;
        status.worst_relative_margin = status.worst_relative_margin.min(v.relative_margin());
        if !v.holds {
            status.ok = false;
            status.failed.push(format!("{name} (margin {:.3e})", v.margin));
        }
        Ok(())
    };
    let zero = SymMatrix::zeros(n);
    match spec.kind {
        HypothesisKind::SpdPair => {
            let b = inst.b_matrix()?;
            let pd = |x: &SymMatrix| -> Result<bool> { Ok(x.lambda_min()? > 0.0) };
            if !pd(a)? || !pd(&b)? {
                return Err(Error::NotPositiveDefinite { what: "pair", lambda_min: a.lambda_min()?.min(b.lambda_min()?) });
            }
            leq("0 <= A", &zero, a)?;
            leq("0 <= B", &zero, &b)?;
        }
        HypothesisKind::PairOrdered => {
            let b = inst.b_matrix()?;
            leq("mB <= A", &b.scale(m), a)?;
            leq("A <= MB", a, &b.scale(big_m))?;
        }
        HypothesisKind::KantorovichTriple | HypothesisKind::SelfInverse => {
            let b = inst.b_matrix()?;
            leq("mI <= m'B", &SymMatrix::scalar(n, m), &b.scale(mp))?;
            leq("m'B <= A", &b.scale(mp), a)?;
            if spec.strengthened {
                leq("m'^2 B <= A", &b.scale(mp * mp), a)?;
            }
            leq("A <= MI", a, &SymMatrix::scalar(n, big_m))?;
        }
        HypothesisKind::MapLevel => {
            leq("mI <= A", &SymMatrix::scalar(n, m), a)?;
            leq("A <= MI", a, &SymMatrix::scalar(n, big_m))?;
        }
    }
    if let Some(phi) = &inst.phi {
        if phi.input_dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: phi.input_dim() });
        }
    }
    Ok(())
}

/// Random SPD matrix with spectrum in `[lo, hi]`, both endpoints present when `n >= 2`.
pub fn rand_spd(n: usize, lo: f64, hi: f64, seed: u64) -> Result<SymMatrix> {
    rand_spd_with(n, lo, hi, true, &mut rng::seeded(seed))
}

/// `Q diag(λ) Qᵀ` with Haar `Q`; `pin` places `lo` and `hi` among the eigenvalues.
pub fn rand_spd_with(n: usize, lo: f64, hi: f64, pin: bool, rng: &mut SeededRng) -> Result<SymMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid spectral interval [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(SymMatrix::scalar(n, lo));
    }
    let mut values: Vec<f64> = (0..n).map(|_| rng::uniform(lo, hi, rng)).collect();
    if pin {
        if n >= 2 {
            values[0] = lo;
            values[1] = hi;
        } else {
            values[0] = if rng.random_bool(0.5) { lo } else { hi };
        }
    }
    let vectors = rng::random_orthogonal(n, rng)?;
    SpectralDecomp { vectors, values }.map(|l| l)
}

/// `B^{1/2} C B^{1/2}`: if `m I <= C <= M I` then `m B <= A <= M B`.
pub fn congruence_pair(b: &SymMatrix, c: &SymMatrix) -> Result<SymMatrix> {
    b.eig()?.sqrt_pd()?.congruence(c)
}

fn retry(spec: &HypothesisSpec, mut attempt: impl FnMut() -> Result<Instance>) -> Result<Instance> {
    for _ in 0..RETRY_CAP {
        let inst = attempt()?;
        if hypothesis_check(&inst).ok {
            return Ok(inst);
        }
    }
    log::debug!("{} generator exhausted retries", spec.kind.as_str());
    Err(Error::RetriesExhausted(RETRY_CAP))
}

/// Spectral interval used for the free factor `B` of ordered pairs.
const PAIR_BASE_SPECTRUM: (f64, f64) = (0.25, 4.0);

pub fn gen_pair_ordered(spec: &HypothesisSpec, seed: u64) -> Result<Instance> {
    expect_kind(spec, HypothesisKind::PairOrdered)?;
    let (lo, hi) = feasibility(spec).window()?;
    let mut rng = rng::seeded(seed);
    retry(spec, || {
        let b = rand_spd_with(spec.n, PAIR_BASE_SPECTRUM.0, PAIR_BASE_SPECTRUM.1, false, &mut rng)?;
        let a = if lo == hi {
            b.scale(lo)
        } else {
            let pin = rng.random_bool(0.5);
            let c = rand_spd_with(spec.n, lo, hi, pin, &mut rng)?;
            congruence_pair(&b, &c)?
        };
        Ok(Instance { a, b: Some(b), phi: None, spec: *spec, seed: Some(seed) })
    })
}

pub fn gen_kantorovich_triple(spec: &HypothesisSpec, seed: u64) -> Result<Instance> {
    expect_kind(spec, HypothesisKind::KantorovichTriple)?;
    let (a_floor, big_m) = feasibility(spec).window()?;
    let (m, mp) = (spec.m, spec.m_prime);
    // m'B = A^{1/2} S A^{1/2} with S <= I (or S <= I/m' when strengthened) gives m'B <= A
    // (resp. m'^2 B <= A); λmin(S) >= m/λmin(A) gives m I <= m'B.
    let s_hi = if spec.strengthened { 1.0 / mp } else { 1.0 };
    let mut rng = rng::seeded(seed);
    retry(spec, || {
        let a_lo = if rng.random_bool(0.5) { a_floor } else { rng::uniform(a_floor, big_m, &mut rng) };
        let a = rand_spd_with(spec.n, a_lo, big_m, rng.random_bool(0.5), &mut rng)?;
        let s_floor = (m / a_lo).min(s_hi);
        let s_lo = if rng.random_bool(0.5) { s_floor } else { rng::uniform(s_floor, s_hi, &mut rng) };
        let s = rand_spd_with(spec.n, s_lo, s_hi, rng.random_bool(0.5), &mut rng)?;
        let b = a.eig()?.sqrt_pd()?.congruence(&s)?.scale(1.0 / mp);
        Ok(Instance { a, b: Some(b), phi: None, spec: *spec, seed: Some(seed) })
    })
}

pub fn gen_self_inverse(spec: &HypothesisSpec, seed: u64) -> Result<Instance> {
    expect_kind(spec, HypothesisKind::SelfInverse)?;
    gen_in_window(spec, seed)
}

pub fn gen_map_level(spec: &HypothesisSpec, seed: u64) -> Result<Instance> {
    expect_kind(spec, HypothesisKind::MapLevel)?;
    gen_in_window(spec, seed)
}

fn gen_in_window(spec: &HypothesisSpec, seed: u64) -> Result<Instance> {
    let (lo, hi) = feasibility(spec).window()?;
    let mut rng = rng::seeded(seed);
    retry(spec, || {
        let a = rand_spd_with(spec.n, lo, hi, rng.random_bool(0.5), &mut rng)?;
        Ok(Instance { a, b: None, phi: None, spec: *spec, seed: Some(seed) })
    })
}

pub fn gen_spd_pair(spec: &HypothesisSpec, seed: u64) -> Result<Instance> {
    expect_kind(spec, HypothesisKind::SpdPair)?;
    let (lo, hi) = feasibility(spec).window()?;
    let mut rng = rng::seeded(seed);
    retry(spec, || {
        let a = rand_spd_with(spec.n, lo, hi, rng.random_bool(0.5), &mut rng)?;
        let b = rand_spd_with(spec.n, lo, hi, rng.random_bool(0.5), &mut rng)?;
        Ok(Instance { a, b: Some(b), phi: None, spec: *spec, seed: Some(seed) })
    })
}

fn expect_kind(spec: &HypothesisSpec, kind: HypothesisKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "generator for {} called with {} spec",
            kind.as_str(),
            spec.kind.as_str()
        )));
    }
    Ok(())
}

/// Dispatches on `spec.kind` and attaches a resolved map when one is given.
pub fn generate(spec: &HypothesisSpec, seed: u64, map: Option<&MapDescriptor>) -> Result<Instance> {
    let mut inst = match spec.kind {
        HypothesisKind::SpdPair => gen_spd_pair(spec, seed)?,
        HypothesisKind::PairOrdered => gen_pair_ordered(spec, seed)?,
        HypothesisKind::KantorovichTriple => gen_kantorovich_triple(spec, seed)?,
        HypothesisKind::SelfInverse => gen_self_inverse(spec, seed)?,
        HypothesisKind::MapLevel => gen_map_level(spec, seed)?,
    };
    if let Some(desc) = map {
        inst.phi = Some(desc.resolve(spec.n, &mut rng::substream(seed, 2))?);
    }
    Ok(inst)
}

/// A parameter given on the command line: a fixed value or a closed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamRange {
    Fixed(f64),
    Range(f64, f64),
}

impl ParamRange {
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            Self::Fixed(v) => v,
            Self::Range(lo, hi) => rng::uniform(lo, hi, rng),
        }
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(v) => write!(f, "{v:?}"),
            Self::Range(lo, hi) => write!(f, "{lo:?}:{hi:?}"),
        }
    }
}

impl FromStr for ParamRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse(format!("bad number `{t}`")))
        };
        match s.split_once(':') {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(Error::Parse(format!("empty range `{s}`")));
                }
                Ok(Self::Range(lo, hi))
            }
            None => Ok(Self::Fixed(num(s)?)),
        }
    }
}

/// Draws `(m, m', M)` per trial. Unset parameters fall back to kind-specific
/// defaults that always produce a feasible chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSampler {
    pub m: Option<ParamRange>,
    pub m_prime: Option<ParamRange>,
    #[serde(rename = "M")]
    pub big_m: Option<ParamRange>,
}

impl ParamSampler {
    pub fn sample(&self, kind: HypothesisKind, strengthened: bool, n: usize, rng: &mut SeededRng) -> HypothesisSpec {
        let pick = |p: Option<ParamRange>, lo: f64, hi: f64, rng: &mut SeededRng| match p {
            Some(r) => r.sample(rng),
            None => rng::uniform(lo, hi, rng),
        };
        let (m, mp, big_m) = match kind {
            HypothesisKind::SpdPair => {
                let m = pick(self.m, 0.1, 1.0, rng);
                let big_m = match self.big_m {
                    Some(r) => r.sample(rng),
                    None => m * rng::log_uniform(1.0, 100.0, rng),
                };
                (m, 1.0, big_m)
            }
            HypothesisKind::PairOrdered => {
                let m = pick(self.m, 1.05, 4.0, rng);
                let big_m = match self.big_m {
                    Some(r) => r.sample(rng),
                    None => m * rng::uniform(1.0, 3.0, rng),
                };
                (m, 1.0, big_m)
            }
            HypothesisKind::KantorovichTriple => {
                let m = pick(self.m, 0.5, 2.0, rng);
                let mp = pick(self.m_prime, 1.05, if strengthened { 3.0 } else { 5.0 }, rng);
                let floor = if strengthened { m * mp } else { m };
                let big_m = match self.big_m {
                    Some(r) => r.sample(rng),
                    None => floor * rng::uniform(1.0, 4.0, rng),
                };
                (m, mp, big_m)
            }
            HypothesisKind::SelfInverse => {
                let mp = pick(self.m_prime, if strengthened { 1.05 } else { 1.2 }, if strengthened { 4.0 } else { 9.0 }, rng);
                let m = match self.m {
                    Some(r) => r.sample(rng),
                    None if strengthened => rng::uniform(0.1, 1.0, rng),
                    None => rng::uniform(1.0, mp.sqrt(), rng).max(1.0 + 1e-9),
                };
                let floor = if strengthened { mp } else { mp.sqrt() };
                let big_m = match self.big_m {
                    Some(r) => r.sample(rng),
                    None => rng::uniform(floor, (2.0 * mp / m).max(floor), rng),
                };
                (m, mp, big_m)
            }
            HypothesisKind::MapLevel => {
                let m = pick(self.m, 0.1, 2.0, rng);
                let big_m = match self.big_m {
                    Some(r) => r.sample(rng),
                    None => m * rng::log_uniform(1.0, 10.0, rng),
                };
                (m, 1.0, big_m)
            }
        };
        HypothesisSpec { kind, m, m_prime: mp, big_m, n, strengthened }
    }
}
