//! Named verifiers, replayable trial traces, and the randomized falsifier.
//!
//! Every check turns one instance into a [`CheckReport`]. Operator checks
//! report `λmin(RHS - LHS)`; quadratic-form checks report the worst
//! `RHS - LHS` over a batch of probe vectors. Margins are relative to
//! `max(1, |RHS|)` and a violation needs a valid hypothesis.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypgen::{self, HypothesisKind, HypothesisSpec, HypothesisStatus, Instance, ParamSampler};
use crate::matcore::{quad_form, SymMatrix, UnitVector};
use crate::opmeans::{geo_mean, mean_bundle, riccati_residual, Congruence};
use crate::posmaps::{MapDescriptor, PosLinMap};
use crate::rng;
use crate::scalar_means::{self, chain_eval, ScalarPair, SCALAR_TOL};

/// Relative margin below which an operator check counts as violated.
pub const OPERATOR_TOL: f64 = 1e-8;
pub const RANDOM_PROBES: usize = 64;
/// Sampling range for `x` in scalar-chain trials.
pub const SCALAR_TRIAL_RANGE: (f64, f64) = (1e-8, 1e8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    ScalarChain,
    OpAmgm,
    OpUpper,
    Lemma31,
    Eq31,
    Thm32Literal,
    Thm32Strengthened,
    Cor33Literal,
    Kantorovich,
    Nakamoto,
    Thm34Stated,
    Thm34Proof,
    Cor35Stated,
    Cor35Proof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Holds,
    DocumentedDiscrepancy,
}

impl CheckName {
    pub const ALL: [CheckName; 14] = [
        Self::ScalarChain,
        Self::OpAmgm,
        Self::OpUpper,
        Self::Lemma31,
        Self::Eq31,
        Self::Thm32Literal,
        Self::Thm32Strengthened,
        Self::Cor33Literal,
        Self::Kantorovich,
        Self::Nakamoto,
        Self::Thm34Stated,
        Self::Thm34Proof,
        Self::Cor35Stated,
        Self::Cor35Proof,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ScalarChain => "scalar_chain",
            Self::OpAmgm => "op_amgm",
            Self::OpUpper => "op_upper",
            Self::Lemma31 => "lemma31",
            Self::Eq31 => "eq31",
            Self::Thm32Literal => "thm32_literal",
            Self::Thm32Strengthened => "thm32_strengthened",
            Self::Cor33Literal => "cor33_literal",
            Self::Kantorovich => "kantorovich",
            Self::Nakamoto => "nakamoto",
            Self::Thm34Stated => "thm34_stated",
            Self::Thm34Proof => "thm34_proof",
            Self::Cor35Stated => "cor35_stated",
            Self::Cor35Proof => "cor35_proof",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Self::ScalarChain => "sqrt x <= sqrt x r_rat <= sqrt x r_log <= (x+1)/2 <= sqrt x u_up and sqrt x <= L(x,1) <= (x+1)/2",
            Self::OpAmgm => "A#B <= A#B + S/2 <= (A+B)/2",
            Self::OpUpper => "(A+B)/2 <= A^{1/2} u_up(T) A^{1/2}",
            Self::Lemma31 => "r_m(m) A#B <= (A+B)/2 for mB <= A <= MB",
            Self::Eq31 => "A + m'B <= (sqrt(Mm'/m) + sqrt(mm'/M)) A#B",
            Self::Thm32Literal => "<Ax,x><Bx,x> <= K r_m(m')^-2 <A#Bx,x>^2 under mI <= m'B <= A <= MI",
            Self::Thm32Strengthened => "same bound with m'^2 B <= A added to the chain",
            Self::Cor33Literal => "<Ax,x><A^-1x,x> <= K r_m(m')^-2 under I < mI <= m'A^-1 <= A <= MI",
            Self::Kantorovich => "<Ax,x><A^-1x,x> <= (m+M)^2/(4mM) for mI <= A <= MI",
            Self::Nakamoto => "Phi(A)#Phi(A^-1) <= (M+m)/(2 sqrt(Mm)) I",
            Self::Thm34Stated => "Phi(A)#Phi(B) <= c Phi(A#B), c = (m+M)/(2 sqrt(Mmm')) / r_m(m')",
            Self::Thm34Proof => "Phi(A)#Phi(B) <= c Phi(A#B), c = (m+M)/(2 sqrt(Mm)) / r_m(m')",
            Self::Cor35Stated => "Phi(A)#Phi(A^-1) <= c I with the stated constant",
            Self::Cor35Proof => "Phi(A)#Phi(A^-1) <= c I with the proof constant",
        }
    }

    /// Hypothesis kind and strengthened flag, `None` for the scalar chain.
    pub fn hypothesis(&self) -> Option<(HypothesisKind, bool)> {
        use HypothesisKind::*;
        Some(match self {
            Self::ScalarChain => return None,
            Self::OpAmgm | Self::OpUpper => (SpdPair, false),
            Self::Lemma31 => (PairOrdered, false),
            Self::Eq31 | Self::Thm32Literal => (KantorovichTriple, false),
            Self::Thm32Strengthened | Self::Thm34Stated | Self::Thm34Proof => (KantorovichTriple, true),
            Self::Cor33Literal => (SelfInverse, false),
            Self::Cor35Stated | Self::Cor35Proof => (SelfInverse, true),
            Self::Kantorovich | Self::Nakamoto => (MapLevel, false),
        })
    }

    pub fn needs_map(&self) -> bool {
        matches!(self, Self::Nakamoto | Self::Thm34Stated | Self::Thm34Proof | Self::Cor35Stated | Self::Cor35Proof)
    }

    pub fn expectation(&self) -> Expectation {
        match self {
            Self::Thm32Literal | Self::Cor33Literal | Self::Thm34Stated | Self::Cor35Stated => {
                Expectation::DocumentedDiscrepancy
            }
            _ => Expectation::Holds,
        }
    }

    pub fn default_tol(&self) -> f64 {
        match self {
            Self::ScalarChain => SCALAR_TOL,
            _ => OPERATOR_TOL,
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCheck(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub instance_ref: String,
    pub hypothesis_ok: bool,
    pub margin: f64,
    pub relative_margin: f64,
    pub violated: bool,
    pub aux: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CheckReport {
    fn new(check: &str, hyp_ok: bool, margin: f64, rhs_norm: f64, tol: f64) -> Self {
        let relative_margin = margin / rhs_norm.abs().max(1.0);
        Self {
            check_name: check.to_string(),
            instance_ref: String::new(),
            hypothesis_ok: hyp_ok,
            margin,
            relative_margin,
            violated: hyp_ok && relative_margin < -tol,
            aux: BTreeMap::new(),
            note: None,
        }
    }

    fn hypothesis_failure(check: &str, reason: String) -> Self {
        let mut r = Self::new(check, false, f64::NAN, 1.0, 0.0);
        r.note = Some(reason);
        r
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.aux.insert(key.to_string(), value);
        self
    }

    fn noted(mut self, status: &HypothesisStatus) -> Self {
        if !status.ok {
            self.note = Some(status.failed.join("; "));
        }
        self
    }

    /// Re-evaluates the violation flag under another tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.violated = self.hypothesis_ok && self.relative_margin < -tol;
        self
    }
}

/// `(m + M)^2 / (4 m M)`.
pub fn kantorovich_constant(m: f64, big_m: f64) -> f64 {
    (m + big_m) * (m + big_m) / (4.0 * m * big_m)
}

/// The constant written in the statement of the map-level theorem.
pub fn c_stated(m: f64, m_prime: f64, big_m: f64) -> Result<f64> {
    Ok((m + big_m) / (2.0 * (big_m * m * m_prime).sqrt()) / scalar_means::r_m(m_prime)?)
}

/// The constant that the last display of the proof actually delivers.
pub fn c_proof(m: f64, m_prime: f64, big_m: f64) -> Result<f64> {
    Ok((m + big_m) / (2.0 * (big_m * m).sqrt()) / scalar_means::r_m(m_prime)?)
}

/// `(M + m) / (2 sqrt(Mm))`.
pub fn nakamoto_constant(m: f64, big_m: f64) -> f64 {
    (big_m + m) / (2.0 * (big_m * m).sqrt())
}

pub fn eq31_factor(m: f64, m_prime: f64, big_m: f64) -> f64 {
    (big_m * m_prime / m).sqrt() + (m * m_prime / big_m).sqrt()
}

fn operator_margin(lhs: &SymMatrix, rhs: &SymMatrix) -> Result<(f64, f64)> {
    Ok((rhs.sub(lhs)?.lambda_min()?, rhs.norm2()?))
}

fn phi_of(inst: &Instance) -> Result<PosLinMap> {
    Ok(inst.phi.clone().unwrap_or_else(|| PosLinMap::identity(inst.a.n())))
}

pub fn check_scalar_chain(x: f64, tol: f64) -> Result<CheckReport> {
    let rec = chain_eval(ScalarPair::new(x, 1.0)?);
    let (link, rel) = rec.min_relative_slack();
    let (_, lo, hi) = rec.links().into_iter().find(|l| l.0 == link).expect("link from the same record");
    let mut r = CheckReport::new(CheckName::ScalarChain.as_str(), true, hi - lo, 1.0, tol);
    // Scalar slack is relative to the larger side of the worst link.
    r.relative_margin = rel;
    r.violated = rel < -tol;
    r.aux.insert("x".into(), x);
    for (name, s) in rec.relative_slacks() {
        r.aux.insert(name.to_string(), s);
    }
    Ok(r)
}

pub fn check_op_amgm(inst: &Instance, tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let b = inst.b_matrix()?;
    let bundle = mean_bundle(&inst.a, &b)?;
    let lower = bundle.mid.sub(&bundle.geo)?.lambda_min()?;
    let upper_gap = bundle.am.sub(&bundle.mid)?;
    let upper = upper_gap.lambda_min()?;
    let r = CheckReport::new(CheckName::OpAmgm.as_str(), hyp.ok, lower.min(upper), bundle.am.norm2()?, tol)
        .with("mid_minus_geo_min", lower)
        .with("am_minus_mid_min", upper)
        .with("am_minus_mid_max", upper_gap.lambda_max()?)
        .with("mid_identity_gap", bundle.mid_identity_gap)
        .with("riccati_residual", riccati_residual(&inst.a, &b, &bundle.geo)?);
    Ok(r.noted(&hyp))
}

pub fn check_op_upper(inst: &Instance, tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let bundle = mean_bundle(&inst.a, &inst.b_matrix()?)?;
    let (margin, rhs) = operator_margin(&bundle.am, &bundle.upper)?;
    let r = CheckReport::new(CheckName::OpUpper.as_str(), hyp.ok, margin, rhs, tol)
        .with("upper_identity_gap", bundle.upper_identity_gap);
    Ok(r.noted(&hyp))
}

pub fn check_lemma31(inst: &Instance, tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let b = inst.b_matrix()?;
    let factor = scalar_means::r_m(inst.spec.m)?;
    let c = Congruence::new(&inst.a, &b)?;
    let lhs = c.geo()?.scale(factor);
    let (margin, rhs) = operator_margin(&lhs, &c.am())?;
    Ok(CheckReport::new(CheckName::Lemma31.as_str(), hyp.ok, margin, rhs, tol).with("r_m", factor).noted(&hyp))
}

pub fn check_eq31(inst: &Instance, tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let HypothesisSpec { m, m_prime, big_m, .. } = inst.spec;
    let b = inst.b_matrix()?;
    let factor = eq31_factor(m, m_prime, big_m);
    let lhs = inst.a.add(&b.scale(m_prime))?;
    let rhs = geo_mean(&inst.a, &b)?.scale(factor);
    let (margin, norm) = operator_margin(&lhs, &rhs)?;
    Ok(CheckReport::new(CheckName::Eq31.as_str(), hyp.ok, margin, norm, tol).with("factor", factor).noted(&hyp))
}

/// Random unit vectors, the standard basis, balanced pairs of extreme
/// eigenvectors of `A`, and generalized eigenvectors of the pencil `(A, B)`.
pub fn probe_vectors(inst: &Instance, seed: u64) -> Result<Vec<UnitVector>> {
    let n = inst.a.n();
    let mut rng = rng::substream(seed, 3);
    let mut probes: Vec<UnitVector> = (0..RANDOM_PROBES)
        .map(|_| UnitVector::normalized(rng::random_unit_vector(n, &mut rng)))
        .collect::<Result<_>>()?;
    probes.extend((0..n).map(|i| UnitVector::basis(n, i)));

    let mut extremes: Vec<usize> = [0, 1, n.saturating_sub(2), n - 1].into_iter().filter(|&i| i < n).collect();
    extremes.sort_unstable();
    extremes.dedup();
    let ea = inst.a.eig()?;
    let a_vecs: Vec<Vec<f64>> = (0..n).map(|j| ea.vectors.column(j).iter().copied().collect()).collect();
    probes.extend(balanced_pairs(&a_vecs, &extremes)?);

    // x = B^{-1/2} w for eigenvectors w of B^{-1/2} A B^{-1/2}.
    let b = inst.b_matrix()?;
    let b_inv_sqrt = b.eig()?.inv_sqrt_pd()?;
    let pencil = b_inv_sqrt.congruence(&inst.a)?.eig()?;
    let gen_vecs: Vec<Vec<f64>> = (0..n)
        .map(|j| (b_inv_sqrt.as_dense() * pencil.vectors.column(j)).iter().copied().collect())
        .collect();
    for v in &gen_vecs {
        probes.push(UnitVector::normalized(v.clone())?);
    }
    probes.extend(balanced_pairs(&gen_vecs, &extremes)?);
    probes.extend(a_vecs.into_iter().map(UnitVector::normalized).collect::<Result<Vec<_>>>()?);
    Ok(probes)
}

/// `(v_i ± v_j)/|v_i ± v_j|` over pairs of the given column indices.
fn balanced_pairs(cols: &[Vec<f64>], idx: &[usize]) -> Result<Vec<UnitVector>> {
    let mut out = vec![];
    for (p, &i) in idx.iter().enumerate() {
        for &j in &idx[p + 1..] {
            for sign in [1.0, -1.0] {
                let v: Vec<f64> = cols[i].iter().zip(&cols[j]).map(|(a, b)| a + sign * b).collect();
                out.push(UnitVector::normalized(v)?);
            }
        }
    }
    Ok(out)
}

struct Worst {
    margin: f64,
    relative: f64,
    lhs: f64,
    rhs: f64,
    index: usize,
}

/// Worst `rhs(x) - lhs(x)` over the probes, ranked by `margin / max(1, rhs)`.
fn worst_over(probes: &[UnitVector], mut f: impl FnMut(&UnitVector) -> Result<(f64, f64)>) -> Result<Worst> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("no probe vectors".into()));
    }
    let mut worst = Worst { margin: f64::INFINITY, relative: f64::INFINITY, lhs: 0.0, rhs: 0.0, index: 0 };
    for (index, x) in probes.iter().enumerate() {
        let (lhs, rhs) = f(x)?;
        let margin = rhs - lhs;
        let relative = margin / rhs.abs().max(1.0);
        if relative < worst.relative {
            worst = Worst { margin, relative, lhs, rhs, index };
        }
    }
    Ok(worst)
}

fn quadratic_report(name: CheckName, hyp: &HypothesisStatus, w: &Worst, tol: f64) -> CheckReport {
    CheckReport::new(name.as_str(), hyp.ok, w.margin, w.rhs, tol)
        .with("worst_lhs", w.lhs)
        .with("worst_rhs", w.rhs)
        .with("worst_probe", w.index as f64)
        .noted(hyp)
}

pub fn check_thm32(inst: &Instance, probes: &[UnitVector], tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let HypothesisSpec { m, m_prime, big_m, .. } = inst.spec;
    let name = if inst.spec.strengthened { CheckName::Thm32Strengthened } else { CheckName::Thm32Literal };
    let k = kantorovich_constant(m, big_m);
    let r = match scalar_means::r_m(m_prime) {
        Ok(r) => r,
        Err(e) => return Ok(CheckReport::hypothesis_failure(name.as_str(), e.to_string())),
    };
    let bound = k / (r * r);
    let b = inst.b_matrix()?;
    let g = geo_mean(&inst.a, &b)?;
    let w = worst_over(probes, |x| {
        let q = quad_form(&g, x)?;
        Ok((quad_form(&inst.a, x)? * quad_form(&b, x)?, bound * q * q))
    })?;
    Ok(quadratic_report(name, &hyp, &w, tol)
        .with("kantorovich_constant", k)
        .with("r_m", r)
        .with("bound_factor", bound))
}

fn self_inverse_products(inst: &Instance, probes: &[UnitVector], bound: f64) -> Result<Worst> {
    let a_inv = inst.b_matrix()?;
    worst_over(probes, |x| Ok((quad_form(&inst.a, x)? * quad_form(&a_inv, x)?, bound)))
}

pub fn check_cor33(inst: &Instance, probes: &[UnitVector], tol: f64) -> Result<CheckReport> {
    let name = CheckName::Cor33Literal;
    let hyp = hypgen::hypothesis_check(inst);
    let HypothesisSpec { m, m_prime, big_m, .. } = inst.spec;
    let classical = kantorovich_constant(m, big_m);
    let r = match scalar_means::r_m(m_prime) {
        Ok(r) => r,
        Err(e) => return Ok(CheckReport::hypothesis_failure(name.as_str(), e.to_string())),
    };
    let refined = classical / (r * r);
    let w = self_inverse_products(inst, probes, refined)?;
    Ok(quadratic_report(name, &hyp, &w, tol)
        .with("classical_bound", classical)
        .with("refined_bound", refined)
        .with("classical_margin", classical - w.lhs)
        .with("refinement_ratio", refined / classical))
}

pub fn check_kantorovich(inst: &Instance, probes: &[UnitVector], tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let bound = kantorovich_constant(inst.spec.m, inst.spec.big_m);
    let w = self_inverse_products(inst, probes, bound)?;
    Ok(quadratic_report(CheckName::Kantorovich, &hyp, &w, tol).with("kantorovich_constant", bound))
}

/// `Φ(A) ♯ Φ(A^{-1})`.
fn map_level_lhs(inst: &Instance) -> Result<SymMatrix> {
    let phi = phi_of(inst)?;
    geo_mean(&phi.apply(&inst.a)?, &phi.apply(&inst.b_matrix()?)?)
}

pub fn check_nakamoto(inst: &Instance, tol: f64) -> Result<CheckReport> {
    let hyp = hypgen::hypothesis_check(inst);
    let c = nakamoto_constant(inst.spec.m, inst.spec.big_m);
    let lhs = map_level_lhs(inst)?;
    let margin = c - lhs.lambda_max()?;
    Ok(CheckReport::new(CheckName::Nakamoto.as_str(), hyp.ok, margin, c, tol)
        .with("bound", c)
        .with("lhs_norm", lhs.lambda_max()?)
        .noted(&hyp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantForm {
    Stated,
    Proof,
}

fn both_constants(spec: &HypothesisSpec) -> Result<(f64, f64)> {
    Ok((c_stated(spec.m, spec.m_prime, spec.big_m)?, c_proof(spec.m, spec.m_prime, spec.big_m)?))
}

pub fn check_thm34(inst: &Instance, form: ConstantForm, tol: f64) -> Result<CheckReport> {
    let name = match form {
        ConstantForm::Stated => CheckName::Thm34Stated,
        ConstantForm::Proof => CheckName::Thm34Proof,
    };
    let hyp = hypgen::hypothesis_check(inst);
    let (cs, cp) = match both_constants(&inst.spec) {
        Ok(c) => c,
        Err(e) => return Ok(CheckReport::hypothesis_failure(name.as_str(), e.to_string())),
    };
    let phi = phi_of(inst)?;
    let b = inst.b_matrix()?;
    let lhs = geo_mean(&phi.apply(&inst.a)?, &phi.apply(&b)?)?;
    let base = phi.apply(&geo_mean(&inst.a, &b)?)?;
    let (ms, ns) = operator_margin(&lhs, &base.scale(cs))?;
    let (mp, np) = operator_margin(&lhs, &base.scale(cp))?;
    let (margin, norm) = match form {
        ConstantForm::Stated => (ms, ns),
        ConstantForm::Proof => (mp, np),
    };
    Ok(CheckReport::new(name.as_str(), hyp.ok, margin, norm, tol)
        .with("c_stated", cs)
        .with("c_proof", cp)
        .with("margin_stated", ms)
        .with("margin_proof", mp)
        .noted(&hyp))
}

pub fn check_cor35(inst: &Instance, form: ConstantForm, tol: f64) -> Result<CheckReport> {
    let name = match form {
        ConstantForm::Stated => CheckName::Cor35Stated,
        ConstantForm::Proof => CheckName::Cor35Proof,
    };
    let hyp = hypgen::hypothesis_check(inst);
    if let hypgen::Feasibility::Infeasible { reason } = hypgen::feasibility(&inst.spec) {
        return Ok(CheckReport::hypothesis_failure(name.as_str(), reason));
    }
    let (cs, cp) = both_constants(&inst.spec)?;
    let nk = nakamoto_constant(inst.spec.m, inst.spec.big_m);
    let top = map_level_lhs(inst)?.lambda_max()?;
    let c = match form {
        ConstantForm::Stated => cs,
        ConstantForm::Proof => cp,
    };
    Ok(CheckReport::new(name.as_str(), hyp.ok, c - top, c, tol)
        .with("c_stated", cs)
        .with("c_proof", cp)
        .with("margin_stated", cs - top)
        .with("margin_proof", cp - top)
        .with("nakamoto_bound", nk)
        .with("nakamoto_margin", nk - top)
        .with("lhs_norm", top)
        .noted(&hyp))
}

/// Runs `check` on an already built instance.
pub fn run_on_instance(check: CheckName, inst: &Instance, probe_seed: u64, tol: f64) -> Result<CheckReport> {
    let probes = || probe_vectors(inst, probe_seed);
    match check {
        CheckName::ScalarChain => Err(Error::InvalidArgument("scalar_chain takes a ratio, not an instance".into())),
        CheckName::OpAmgm => check_op_amgm(inst, tol),
        CheckName::OpUpper => check_op_upper(inst, tol),
        CheckName::Lemma31 => check_lemma31(inst, tol),
        CheckName::Eq31 => check_eq31(inst, tol),
        CheckName::Thm32Literal | CheckName::Thm32Strengthened => check_thm32(inst, &probes()?, tol),
        CheckName::Cor33Literal => check_cor33(inst, &probes()?, tol),
        CheckName::Kantorovich => check_kantorovich(inst, &probes()?, tol),
        CheckName::Nakamoto => check_nakamoto(inst, tol),
        CheckName::Thm34Stated => check_thm34(inst, ConstantForm::Stated, tol),
        CheckName::Thm34Proof => check_thm34(inst, ConstantForm::Proof, tol),
        CheckName::Cor35Stated => check_cor35(inst, ConstantForm::Stated, tol),
        CheckName::Cor35Proof => check_cor35(inst, ConstantForm::Proof, tol),
    }
}

/// Everything needed to regenerate one trial bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub check: CheckName,
    pub n: usize,
    pub m: f64,
    pub m_prime: f64,
    pub big_m: f64,
    pub map: Option<MapDescriptor>,
    pub seed: u64,
}

impl Trace {
    pub fn spec(&self) -> Option<HypothesisSpec> {
        self.check
            .hypothesis()
            .map(|(kind, st)| HypothesisSpec::new(kind, self.n, self.m, self.m_prime, self.big_m, st))
    }

    /// Draws parameters and a map for trial `seed` of `check`.
    pub fn sample(check: CheckName, n: usize, sampler: &ParamSampler, maps: &[MapDescriptor], seed: u64) -> Self {
        let mut r = rng::substream(seed, 0);
        let (m, m_prime, big_m, n) = match check.hypothesis() {
            Some((kind, st)) => {
                let s = sampler.sample(kind, st, n, &mut r);
                (s.m, s.m_prime, s.big_m, n)
            }
            None => (1.0, 1.0, 1.0, 1),
        };
        let map = if check.needs_map() {
            let pick = (rng::splitmix64(seed) % maps.len().max(1) as u64) as usize;
            Some(maps.get(pick).cloned().unwrap_or(MapDescriptor::Identity))
        } else {
            None
        };
        Self { check, n, m, m_prime, big_m, map, seed }
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check={};n={};m={:?};mp={:?};M={:?}", self.check, self.n, self.m, self.m_prime, self.big_m)?;
        if let Some(map) = &self.map {
            write!(f, ";map={map}")?;
        }
        write!(f, ";seed={}", self.seed)
    }
}

impl FromStr for Trace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for part in s.trim().split(';').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("trace field `{part}` lacks `=`")))?;
            if fields.insert(k.trim(), v.trim()).is_some() {
                return Err(Error::Parse(format!("duplicate trace field `{k}`")));
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Parse(format!("trace lacks `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad `{k}` in trace"))) };
        let trace = Self {
            check: get("check")?.parse()?,
            n: get("n")?.parse().map_err(|_| Error::Parse("bad `n` in trace".into()))?,
            m: num("m")?,
            m_prime: num("mp")?,
            big_m: num("M")?,
            map: fields.get("map").map(|v| v.parse()).transpose()?,
            seed: get("seed")?.parse().map_err(|_| Error::Parse("bad `seed` in trace".into()))?,
        };
        let known = ["check", "n", "m", "mp", "M", "map", "seed"];
        if let Some(k) = fields.keys().find(|k| !known.contains(k)) {
            return Err(Error::Parse(format!("unknown trace field `{k}`")));
        }
        Ok(trace)
    }
}

/// Regenerates the trial described by `trace` and evaluates it.
///
/// Generation failures (an empty feasibility window, exhausted retries) come
/// back as hypothesis failures rather than errors.
pub fn evaluate(trace: &Trace, tol: f64) -> Result<CheckReport> {
    let check = trace.check;
    let mut report = match trace.spec() {
        None => {
            let x = rng::log_uniform(SCALAR_TRIAL_RANGE.0, SCALAR_TRIAL_RANGE.1, &mut rng::substream(trace.seed, 1));
            check_scalar_chain(x, tol)?
        }
        Some(spec) => {
            let map = if check.needs_map() { Some(trace.map.clone().unwrap_or(MapDescriptor::Identity)) } else { None };
            match hypgen::generate(&spec, trace.seed, map.as_ref()) {
                Ok(inst) => run_on_instance(check, &inst, trace.seed, tol)?,
                Err(e @ (Error::InfeasibleHypothesis(_) | Error::RetriesExhausted(_))) => {
                    CheckReport::hypothesis_failure(check.as_str(), e.to_string())
                }
                Err(e) => return Err(e),
            }
        }
    };
    report.instance_ref = trace.to_string();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FalsifyOutcome {
    Counterexample { trial: usize, trace: String, report: CheckReport },
    Exhausted { trials: usize, hypothesis_failures: usize, worst_relative_margin: Option<f64> },
}

impl FalsifyOutcome {
    pub fn found(&self) -> bool {
        matches!(self, Self::Counterexample { .. })
    }
}

#[derive(Debug, Clone)]
pub struct FalsifyConfig {
    pub check: CheckName,
    pub budget: usize,
    pub n: usize,
    pub sampler: ParamSampler,
    pub maps: Vec<MapDescriptor>,
    pub seed: u64,
    pub tol: f64,
}

impl FalsifyConfig {
    pub fn new(check: CheckName, budget: usize, n: usize, seed: u64) -> Self {
        let mut maps = vec![MapDescriptor::Identity];
        maps.extend(MapDescriptor::defaults());
        Self { check, budget, n, sampler: ParamSampler::default(), maps, seed, tol: check.default_tol() }
    }
}

/// Searches trials `0..budget` in order and stops at the first violation.
pub fn falsify(cfg: &FalsifyConfig) -> Result<FalsifyOutcome> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut failures = 0;
    let mut worst: Option<f64> = None;
    for trial in 0..cfg.budget {
        let seed = rng::instance_seed(cfg.seed, trial as u64);
        let trace = Trace::sample(cfg.check, cfg.n, &cfg.sampler, &cfg.maps, seed);
        let report = evaluate(&trace, cfg.tol)?;
        if !report.hypothesis_ok {
            failures += 1;
            continue;
        }
        worst = Some(worst.map_or(report.relative_margin, |w: f64| w.min(report.relative_margin)));
        if report.violated {
            return Ok(FalsifyOutcome::Counterexample { trial, trace: trace.to_string(), report });
        }
    }
    Ok(FalsifyOutcome::Exhausted { trials: cfg.budget, hypothesis_failures: failures, worst_relative_margin: worst })
}

/// `|x - y| <= tol * max(1, |y|)`.
pub fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * y.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn d(v: &[f64]) -> SymMatrix {
        SymMatrix::from_diagonal(v)
    }

    fn inst(kind: HypothesisKind, a: SymMatrix, b: Option<SymMatrix>, m: f64, mp: f64, big_m: f64, st: bool) -> Instance {
        let n = a.n();
        Instance::new(a, b, HypothesisSpec::new(kind, n, m, mp, big_m, st))
    }

    fn balanced() -> UnitVector {
        UnitVector::normalized(vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for c in CheckName::ALL {
            assert_eq!(c.as_str().parse::<CheckName>().unwrap(), c);
        }
        assert!(matches!("thm99".parse::<CheckName>(), Err(Error::UnknownCheck(_))));
    }

    #[test]
    fn constants_match_frozen_values() {
        assert!(close(c_proof(1.2, 1.5, 3.0).unwrap(), 1.0850952755479733, 1e-15));
        assert!(close(c_stated(1.2, 1.5, 3.0).unwrap(), 0.885_976_582_465_749, 1e-15));
        assert!(close(c_proof(0.5, 2.0, 4.0).unwrap(), 1.5072539283186934, 1e-15));
        assert!(close(c_stated(0.5, 2.0, 4.0).unwrap(), 1.0657894736842105, 1e-15));
        assert!(close(kantorovich_constant(1.2, 3.0), 1.225, 1e-15));
        assert!(close(eq31_factor(1.2, 4.0, 3.0), 4.427_188_724_235_731, 1e-15));
    }

    #[test]
    fn lemma31_commuting_example() {
        let i = inst(HypothesisKind::PairOrdered, d(&[4.0, 9.0]), Some(SymMatrix::identity(2)), 4.0, 1.0, 9.0, false);
        let r = check_lemma31(&i, OPERATOR_TOL).unwrap();
        assert!(r.hypothesis_ok && !r.violated);
        // r_m(4) = 1.18: LHS diag(2.36, 3.54) against diag(2.5, 5).
        assert!((r.margin - 0.14).abs() < 1e-12, "{}", r.margin);
    }

    #[test]
    fn eq31_example_holds() {
        let a = d(&[2.0, 3.0]);
        let i = inst(HypothesisKind::KantorovichTriple, a.clone(), Some(d(&[0.5, 1.0 / 3.0])), 1.2, 4.0, 3.0, false);
        let r = check_eq31(&i, OPERATOR_TOL).unwrap();
        assert!(r.hypothesis_ok && !r.violated && r.margin >= 0.0);
        assert!(close(r.aux["factor"], 4.427_188_724_235_731, 1e-15));
    }

    #[test]
    fn thm32_strengthened_example() {
        let i = inst(HypothesisKind::KantorovichTriple, d(&[2.5, 3.0]), Some(SymMatrix::identity(2)), 1.2, 1.5, 3.0, true);
        let r = check_thm32(&i, &[UnitVector::basis(2, 0)], OPERATOR_TOL).unwrap();
        assert!(r.hypothesis_ok && !r.violated);
        assert!(close(r.aux["worst_lhs"], 2.5, 1e-15));
        assert!(close(r.aux["worst_rhs"], 2.9435793925413303, 1e-14));
    }

    #[test]
    fn thm32_literal_witness_is_violated() {
        let a = d(&[2.0, 3.0]);
        let i = inst(HypothesisKind::KantorovichTriple, a, Some(d(&[0.5, 1.0 / 3.0])), 1.2, 4.0, 3.0, false);
        let r = check_thm32(&i, &[UnitVector::basis(2, 0)], OPERATOR_TOL).unwrap();
        assert!(r.hypothesis_ok && r.violated);
        assert!(close(r.aux["worst_lhs"], 1.0, 1e-15));
        assert!(close(r.aux["worst_rhs"], 0.879_775_926_457_914_4, 1e-14));
    }

    #[test]
    fn cor33_examples() {
        let classical = inst(HypothesisKind::MapLevel, d(&[1.0, 4.0]), None, 1.0, 1.0, 4.0, false);
        let r = check_kantorovich(&classical, &[balanced()], OPERATOR_TOL).unwrap();
        assert!(r.margin.abs() < 1e-12 && !r.violated);
        assert!(close(r.aux["worst_lhs"], 1.5625, 1e-15));

        let lit = inst(HypothesisKind::SelfInverse, d(&[2.0, 2.5]), None, 1.5, 4.0, 8.0 / 3.0, false);
        let r = check_cor33(&lit, &[balanced()], OPERATOR_TOL).unwrap();
        assert!(r.hypothesis_ok && r.violated);
        assert!(close(r.aux["worst_lhs"], 1.0125, 1e-14));
        assert!(close(r.aux["refined_bound"], 0.779_279_980_210_029_1, 1e-14));
        assert!(r.aux["refined_bound"] < r.aux["classical_bound"]);

        let r = check_cor33(&lit, &[UnitVector::basis(2, 0)], OPERATOR_TOL).unwrap();
        assert!(close(r.aux["worst_lhs"], 1.0, 1e-15) && r.aux["classical_margin"] > 0.0);
    }

    #[test]
    fn nakamoto_examples() {
        let base = inst(HypothesisKind::MapLevel, d(&[1.0, 4.0]), None, 1.0, 1.0, 4.0, false);
        let r = check_nakamoto(&base, OPERATOR_TOL).unwrap();
        assert!(close(r.margin, 0.25, 1e-12));
        let v = DMatrix::from_column_slice(2, 1, &[0.5f64.sqrt(), 0.5f64.sqrt()]);
        let comp = base.clone().with_map(PosLinMap::compression(v).unwrap());
        let r = check_nakamoto(&comp, OPERATOR_TOL).unwrap();
        assert!(r.margin.abs() < 1e-10 && !r.violated);
    }

    #[test]
    fn thm34_dual_constants() {
        let i = inst(HypothesisKind::KantorovichTriple, d(&[2.5, 3.0]), Some(SymMatrix::identity(2)), 1.2, 1.5, 3.0, true);
        let proof = check_thm34(&i, ConstantForm::Proof, OPERATOR_TOL).unwrap();
        let stated = check_thm34(&i, ConstantForm::Stated, OPERATOR_TOL).unwrap();
        assert!(proof.hypothesis_ok && !proof.violated);
        assert!(stated.violated);
        assert_eq!(proof.aux, stated.aux);
    }

    #[test]
    fn cor35_examples() {
        let i = inst(HypothesisKind::SelfInverse, d(&[2.0, 4.0]), None, 0.5, 2.0, 4.0, true);
        let r = check_cor35(&i, ConstantForm::Proof, OPERATOR_TOL).unwrap();
        assert!(r.hypothesis_ok && !r.violated);
        assert!(close(r.aux["lhs_norm"], 1.0, 1e-12));
        let v = DMatrix::from_column_slice(2, 1, &[0.5f64.sqrt(), 0.5f64.sqrt()]);
        let r = check_cor35(&i.clone().with_map(PosLinMap::compression(v).unwrap()), ConstantForm::Proof, OPERATOR_TOL).unwrap();
        assert!(close(r.aux["lhs_norm"], 1.0606601717798213, 1e-12));

        let bad = inst(HypothesisKind::SelfInverse, d(&[2.0, 4.0]), None, 1.5, 4.0, 3.0, true);
        let r = check_cor35(&bad, ConstantForm::Proof, OPERATOR_TOL).unwrap();
        assert!(!r.hypothesis_ok && !r.violated && r.note.is_some());
    }

    #[test]
    fn op_amgm_commuting_example() {
        let i = inst(HypothesisKind::SpdPair, d(&[4.0, 1.0]), Some(SymMatrix::identity(2)), 0.5, 1.0, 5.0, false);
        let r = check_op_amgm(&i, OPERATOR_TOL).unwrap();
        assert!(!r.violated && r.margin.abs() < 1e-12);
        assert!(close(r.aux["am_minus_mid_max"], 0.14, 1e-12));
        assert!(!check_op_upper(&i, OPERATOR_TOL).unwrap().violated);
    }

    #[test]
    fn invalid_hypothesis_never_counts() {
        // A literal witness re-labelled as strengthened fails m'^2 B <= A.
        let a = d(&[2.0, 3.0]);
        let i = inst(HypothesisKind::KantorovichTriple, a, Some(d(&[0.5, 1.0 / 3.0])), 1.2, 4.0, 3.0, true);
        let r = check_thm32(&i, &[UnitVector::basis(2, 0)], OPERATOR_TOL).unwrap();
        assert!(!r.hypothesis_ok && !r.violated && r.relative_margin < 0.0);
    }

    #[test]
    fn trace_round_trip_and_replay() {
        let t = Trace::sample(CheckName::Thm34Proof, 3, &ParamSampler::default(), &MapDescriptor::defaults(), 77);
        let s = t.to_string();
        let back: Trace = s.parse().unwrap();
        assert_eq!(back, t);
        let r1 = evaluate(&t, OPERATOR_TOL).unwrap();
        let r2 = evaluate(&back, OPERATOR_TOL).unwrap();
        assert_eq!(r1.margin.to_bits(), r2.margin.to_bits());
        assert_eq!(r1.instance_ref, s);
        assert!("check=op_amgm;n=2".parse::<Trace>().is_err());
        assert!(format!("{s};bogus=1").parse::<Trace>().is_err());
    }

    #[test]
    fn literal_forms_are_falsified_quickly() {
        for check in [CheckName::Thm32Literal, CheckName::Thm34Stated, CheckName::Cor35Stated, CheckName::Cor33Literal] {
            let out = falsify(&FalsifyConfig::new(check, 1000, 2, 1)).unwrap();
            assert!(out.found(), "{check}: {out:?}");
        }
    }

    #[test]
    fn scalar_chain_trial() {
        let r = check_scalar_chain(1.0, SCALAR_TOL).unwrap();
        assert!(r.margin.abs() <= 1e-15 && !r.violated);
        let t = Trace::sample(CheckName::ScalarChain, 4, &ParamSampler::default(), &[], 5);
        assert_eq!(t.n, 1);
        assert!(!evaluate(&t, SCALAR_TOL).unwrap().violated);
    }
}
