//! Scalar means of two positive numbers and the refinement factors that
//! tighten the AM-GM inequality.
//!
//! For `x = a/b` the chain evaluated here is
//!
//! ```text
//! sqrt(x) <= sqrt(x) r_rat(x) <= sqrt(x) r_log(x) <= (x+1)/2 <= sqrt(x) u_up(x)
//! sqrt(x) <= L(x, 1) <= (x+1)/2
//! ```
//!
//! with equality throughout exactly at `x = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack floor for scalar inequality assertions.
pub const SCALAR_TOL: f64 = 1e-12;

/// Below this `|ln(a/b)|` the logarithmic mean switches to its series.
pub const LOGMEAN_SERIES_CUTOFF: f64 = 1e-6;

/// Adaptive scans stop bisecting after this many levels.
pub const ADAPTIVE_DEPTH_CAP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarPair {
    a: f64,
    b: f64,
}

impl ScalarPair {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scalar pair needs finite positive entries, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a }
    }

    /// `ln(a/b)`, accurate when the ratio is close to one.
    pub fn log_ratio(&self) -> f64 {
        log_ratio(self.a, self.b)
    }
}

fn log_ratio(a: f64, b: f64) -> f64 {
    let q = a / b;
    if (0.5..=2.0).contains(&q) {
        ((a - b) / b).ln_1p()
    } else {
        a.ln() - b.ln()
    }
}

pub fn am(p: ScalarPair) -> f64 {
    0.5 * p.a + 0.5 * p.b
}

pub fn gm(p: ScalarPair) -> f64 {
    let prod = p.a * p.b;
    if prod.is_normal() {
        prod.sqrt()
    } else {
        // Square roots of finite positives never overflow or underflow.
        p.a.sqrt() * p.b.sqrt()
    }
}

/// Heinz mean `(a^(1-nu) b^nu + a^nu b^(1-nu)) / 2`.
pub fn heinz(p: ScalarPair, nu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::InvalidArgument(format!("Heinz parameter {nu} outside [0, 1]")));
    }
    let mu = 1.0 - nu;
    let term = |s: f64, t: f64| {
        let v = p.a.powf(s) * p.b.powf(t);
        if v.is_normal() {
            v
        } else {
            (s * p.a.ln() + t * p.b.ln()).exp()
        }
    };
    Ok(0.5 * term(mu, nu) + 0.5 * term(nu, mu))
}

/// Logarithmic mean `(a - b) / (ln a - ln b)`, continuous at `a = b`.
pub fn logmean(p: ScalarPair) -> f64 {
    let t = p.log_ratio();
    if t.abs() < LOGMEAN_SERIES_CUTOFF {
        let t2 = t * t;
        gm(p) * (1.0 + t2 / 24.0 + t2 * t2 / 1920.0)
    } else {
        (p.a - p.b) / t
    }
}

/// `1 + (ln x)^2 / 8`.
pub fn r_log(x: f64) -> f64 {
    let l = x.ln();
    1.0 + l * l / 8.0
}

/// `1 + ((x-1)/(x+1))^2 / 2`.
pub fn r_rat(x: f64) -> f64 {
    let q = (x - 1.0) / (x + 1.0);
    1.0 + 0.5 * q * q
}

/// The ratio-threshold factor `r_rat(m)`, defined for `m > 1` only.
pub fn r_m(m: f64) -> Result<f64> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("refinement threshold m = {m} must exceed 1")));
    }
    Ok(r_rat(m))
}

/// `1 + (sqrt(x) - 1/sqrt(x))^2 / 8`.
pub fn u_up(x: f64) -> f64 {
    let s = x.sqrt();
    let d = s - 1.0 / s;
    1.0 + d * d / 8.0
}

/// `x/8 + 1/(8x) + 3/4`; algebraically identical to [`u_up`].
pub fn u_up_expanded(x: f64) -> f64 {
    x / 8.0 + 1.0 / (8.0 * x) + 0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub gm: f64,
    pub gm_rat: f64,
    pub gm_log: f64,
    pub am: f64,
    pub logmean: f64,
    pub upper: f64,
    pub heinz_half: f64,
}

/// Adjacent links of the chain, as `(name, lower, upper)`.
pub const CHAIN_LINKS: [&str; 6] = [
    "gm<=gm_rat",
    "gm_rat<=gm_log",
    "gm_log<=am",
    "am<=upper",
    "gm<=logmean",
    "logmean<=am",
];

impl ChainRecord {
    pub fn links(&self) -> [(&'static str, f64, f64); 6] {
        [
            (CHAIN_LINKS[0], self.gm, self.gm_rat),
            (CHAIN_LINKS[1], self.gm_rat, self.gm_log),
            (CHAIN_LINKS[2], self.gm_log, self.am),
            (CHAIN_LINKS[3], self.am, self.upper),
            (CHAIN_LINKS[4], self.gm, self.logmean),
            (CHAIN_LINKS[5], self.logmean, self.am),
        ]
    }

    /// `(rhs - lhs) / max(lhs, rhs)` for every link.
    pub fn relative_slacks(&self) -> [(&'static str, f64); 6] {
        self.links().map(|(name, lo, hi)| (name, relative_slack(lo, hi)))
    }

    pub fn min_relative_slack(&self) -> (&'static str, f64) {
        self.relative_slacks()
            .into_iter()
            .fold(("", f64::INFINITY), |acc, s| if s.1 < acc.1 { s } else { acc })
    }
}

pub fn relative_slack(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

pub fn chain_eval(p: ScalarPair) -> ChainRecord {
    // Factors depend only on the ratio; order the pair so swapping is exact.
    let (hi, lo) = if p.a >= p.b { (p.a, p.b) } else { (p.b, p.a) };
    let q = ScalarPair { a: hi, b: lo };
    let g = gm(q);
    let x = hi / lo;
    let (f_rat, f_log, f_up) = if x.is_finite() {
        (r_rat(x), r_log(x), u_up(x))
    } else {
        let t = q.log_ratio();
        let th = (0.5 * t).tanh();
        let sh = (0.5 * t).sinh();
        (1.0 + 0.5 * th * th, 1.0 + t * t / 8.0, 1.0 + 0.5 * sh * sh)
    };
    ChainRecord {
        gm: g,
        gm_rat: g * f_rat,
        gm_log: g * f_log,
        am: am(q),
        logmean: logmean(q),
        upper: g * f_up,
        // nu = 1/2 is an exact argument.
        heinz_half: heinz(q, 0.5).unwrap_or(g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    Grid,
    LogGrid,
    Adaptive,
}

impl std::str::FromStr for ScanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "log-grid" | "log" => Ok(Self::LogGrid),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(Error::Parse(format!("unknown scan mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkWorst {
    pub link: String,
    pub min_relative_slack: f64,
    pub argmin_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub lo: f64,
    pub hi: f64,
    pub mode: ScanMode,
    pub points: usize,
    pub links: Vec<LinkWorst>,
    /// Largest `|value - 1|` among chain entries at `x = 1`, when `1` lies in range.
    pub equality_defect_at_one: Option<f64>,
}

impl ScanReport {
    pub fn worst(&self) -> &LinkWorst {
        self.links
            .iter()
            .min_by(|a, b| a.min_relative_slack.total_cmp(&b.min_relative_slack))
            .expect("six links")
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.links.iter().all(|l| l.min_relative_slack >= -tol)
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    worst: [(f64, f64); 6],
    points: usize,
}

impl Accumulator {
    fn new() -> Self {
        Self { worst: [(f64::INFINITY, f64::NAN); 6], points: 0 }
    }

    fn push(&mut self, x: f64) -> f64 {
        let rec = chain_eval(ScalarPair { a: x, b: 1.0 });
        self.points += 1;
        let mut min = f64::INFINITY;
        for (slot, (_, s)) in self.worst.iter_mut().zip(rec.relative_slacks()) {
            if s < slot.0 {
                *slot = (s, x);
            }
            min = min.min(s);
        }
        min
    }

    fn merge(mut self, other: Self) -> Self {
        for (mine, theirs) in self.worst.iter_mut().zip(other.worst) {
            // Ties resolve to the smaller x so partitioning cannot change the argmin.
            if theirs.0 < mine.0 || (theirs.0 == mine.0 && theirs.1 < mine.1) {
                *mine = theirs;
            }
        }
        self.points += other.points;
        self
    }
}

fn sample_point(lo: f64, hi: f64, i: usize, samples: usize, log: bool) -> f64 {
    if i == 0 {
        return lo;
    }
    if i == samples - 1 {
        return hi;
    }
    let s = i as f64 / (samples - 1) as f64;
    if log {
        (lo.ln() + s * (hi.ln() - lo.ln())).exp()
    } else {
        lo + s * (hi - lo)
    }
}

/// Worst relative slack of every chain link over `x` in `[lo, hi]` for the pair `(x, 1)`.
pub fn chain_scan(lo: f64, hi: f64, samples: usize, mode: ScanMode) -> Result<ScanReport> {
    if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("scan range [{lo}, {hi}] must be positive")));
    }
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty scan range [{lo}, {hi}]")));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("scan needs at least 2 samples".into()));
    }

    let acc = if lo == hi {
        let mut acc = Accumulator::new();
        acc.push(lo);
        acc
    } else {
        let log = mode != ScanMode::Grid;
        match mode {
            ScanMode::Grid | ScanMode::LogGrid => grid_scan(lo, hi, samples, log),
            ScanMode::Adaptive => adaptive_scan(lo, hi, samples),
        }
    };

    let equality_defect_at_one = (lo <= 1.0 && 1.0 <= hi).then(|| {
        let r = chain_eval(ScalarPair { a: 1.0, b: 1.0 });
        [r.gm, r.gm_rat, r.gm_log, r.am, r.logmean, r.upper, r.heinz_half]
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max)
    });

    Ok(ScanReport {
        lo,
        hi,
        mode,
        points: acc.points,
        links: CHAIN_LINKS
            .iter()
            .zip(acc.worst)
            .map(|(name, (s, x))| LinkWorst {
                link: (*name).to_string(),
                min_relative_slack: s,
                argmin_x: x,
            })
            .collect(),
        equality_defect_at_one,
    })
}

fn grid_scan(lo: f64, hi: f64, samples: usize, log: bool) -> Accumulator {
    use rayon::prelude::*;
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                acc.push(sample_point(lo, hi, i, samples, log));
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Accumulator::new(), Accumulator::merge)
}

/// Log-grid pass, then bisection toward the lower-slack end of every interval
/// whose endpoints come within `10 * SCALAR_TOL` of tangency.
fn adaptive_scan(lo: f64, hi: f64, samples: usize) -> Accumulator {
    let mut acc = Accumulator::new();
    let xs: Vec<f64> = (0..samples).map(|i| sample_point(lo, hi, i, samples, true)).collect();
    let slacks: Vec<f64> = xs.iter().map(|&x| acc.push(x)).collect();
    let near = 10.0 * SCALAR_TOL;
    for w in 0..samples - 1 {
        let (mut l, mut r) = (xs[w], xs[w + 1]);
        let (mut sl, mut sr) = (slacks[w], slacks[w + 1]);
        if sl.min(sr) >= near {
            continue;
        }
        for _ in 0..ADAPTIVE_DEPTH_CAP {
            let mid = (l * r).sqrt();
            if !(mid > l && mid < r) {
                break;
            }
            let sm = acc.push(mid);
            if sl <= sr {
                r = mid;
                sr = sm;
            } else {
                l = mid;
                sl = sm;
            }
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MRefinementReport {
    pub m: f64,
    pub x: f64,
    pub slack: f64,
    pub relative_slack: f64,
}

/// Slack of `sqrt(x) r_m(m) <= (x+1)/2` for `1 < m < x`.
pub fn check_m_refinement(m: f64, x: f64) -> Result<MRefinementReport> {
    let factor = r_m(m)?;
    if !(x > m && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("need x > m, got x = {x}, m = {m}")));
    }
    let lhs = x.sqrt() * factor;
    let rhs = 0.5 * x + 0.5;
    Ok(MRefinementReport { m, x, slack: rhs - lhs, relative_slack: relative_slack(lhs, rhs) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> ScalarPair {
        ScalarPair::new(a, b).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(ScalarPair::new(0.0, 1.0).is_err());
        assert!(ScalarPair::new(1.0, -2.0).is_err());
        assert!(ScalarPair::new(f64::NAN, 1.0).is_err());
        assert!(ScalarPair::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn arithmetic_mean() {
        assert_eq!(am(pair(1.0, 1.0)), 1.0);
        assert_eq!(am(pair(4.0, 1.0)), 2.5);
        assert!(close(am(pair(1e-8, 1e8)), 5e7 + 5e-9, 1e-15));
    }

    #[test]
    fn geometric_mean() {
        assert_eq!(gm(pair(1.0, 1.0)), 1.0);
        assert_eq!(gm(pair(4.0, 1.0)), 2.0);
        let big = gm(pair(1e300, 1e300));
        assert!(big.is_finite());
        // log-domain oracle: exp(ln 1e300) computed independently
        let oracle = (300.0 * std::f64::consts::LN_10).exp();
        assert!(close(big, oracle, 1e-12));
        assert!(close(big, 1e300, 1e-12));
        let tiny = gm(pair(1e-300, 1e-300));
        assert!(close(tiny, 1e-300, 1e-12));
    }

    #[test]
    fn heinz_mean() {
        assert!(close(heinz(pair(4.0, 1.0), 0.0).unwrap(), 2.5, 1e-15));
        assert!(close(heinz(pair(4.0, 1.0), 0.5).unwrap(), 2.0, 1e-15));
        // 50-digit value of (4^0.75 + 4^0.25)/2
        assert!(close(heinz(pair(4.0, 1.0), 0.25).unwrap(), 2.121_320_343_559_642_6, 1e-14));
        assert!(heinz(pair(4.0, 1.0), -0.1).is_err());
        assert!(heinz(pair(4.0, 1.0), 1.5).is_err());
        assert!(heinz(pair(1e300, 1e300), 0.3).unwrap().is_finite());
    }

    #[test]
    fn logarithmic_mean() {
        assert_eq!(logmean(pair(1.0, 1.0)), 1.0);
        assert!(close(logmean(pair(4.0, 1.0)), 2.164_042_561_333_445_1, 1e-14));
        assert!(close(logmean(pair(std::f64::consts::E, 1.0)), 1.718_281_828_459_045, 1e-14));
    }

    #[test]
    fn logmean_series_switch_is_continuous() {
        // Straddle |ln(a/b)| = 1e-6 from both sides and compare with the
        // series carried to t^6 as an independent reference.
        for &b in &[1e-200, 1e-3, 1.0, 7.5, 1e250] {
            for &t in &[0.999_999e-6, 1.000_001e-6, -0.999_999e-6, -1.000_001e-6, 3e-7, 5e-6] {
                let a = b * f64::exp(t);
                let p = pair(a, b);
                let tt = p.log_ratio();
                let reference = gm(p)
                    * (1.0 + tt * tt / 24.0 + tt.powi(4) / 1920.0 + tt.powi(6) / 322_560.0);
                assert!(close(logmean(p), reference, 1e-13), "b={b} t={t}");
            }
        }
    }

    #[test]
    fn refinement_factors() {
        assert_eq!(r_log(1.0), 1.0);
        assert!(close(r_log(4.0), 1.240_226_506_959_100_7, 1e-15));
        assert!(close(r_log(8f64.exp()), 9.0, 1e-15));

        assert_eq!(r_rat(1.0), 1.0);
        assert!(close(r_rat(4.0), 1.18, 1e-15));
        assert!(r_rat(1e300) <= 1.5);
        assert!(r_rat(1e15) < 1.5);

        assert!(close(r_m(2.0).unwrap(), 19.0 / 18.0, 1e-15));
        assert!(close(r_m(4.0).unwrap(), 1.18, 1e-15));
        assert!(close(r_m(1.0 + 1e-9).unwrap(), 1.0, 1e-15));
        assert!(r_m(1.0).is_err());
        assert!(r_m(0.5).is_err());

        assert_eq!(u_up(1.0), 1.0);
        assert!(close(u_up(4.0), 1.28125, 1e-15));
        assert!(close(u_up_expanded(4.0), 1.28125, 1e-15));
    }

    #[test]
    fn r_m_is_strictly_increasing() {
        let ms: Vec<f64> = (1..200).map(|i| 1.0 + i as f64 * 0.05).collect();
        for w in ms.windows(2) {
            assert!(r_m(w[0]).unwrap() < r_m(w[1]).unwrap());
        }
    }

    #[test]
    fn chain_at_four_one() {
        let r = chain_eval(pair(4.0, 1.0));
        assert!(close(r.gm, 2.0, 1e-15));
        assert!(close(r.gm_rat, 2.36, 1e-15));
        assert!(close(r.gm_log, 2.480_453_013_918_201_4, 1e-15));
        assert!(close(r.am, 2.5, 1e-15));
        assert!(close(r.logmean, 2.164_042_561_333_445_1, 1e-15));
        assert!(close(r.upper, 2.5625, 1e-15));
        assert!(close(r.heinz_half, 2.0, 1e-15));
    }

    #[test]
    fn chain_on_diagonal_pairs() {
        for &b in &[1.0, 1e-7, 3.25, 1e200] {
            let r = chain_eval(pair(b, b));
            for v in [r.gm, r.gm_rat, r.gm_log, r.am, r.logmean, r.upper, r.heinz_half] {
                assert!(close(v, b, 1e-15), "{v} vs {b}");
            }
        }
    }

    #[test]
    fn chain_survives_extreme_ratios() {
        let r = chain_eval(pair(1e300, 1e-300));
        let (_, s) = r.min_relative_slack();
        assert!(s >= -SCALAR_TOL);
    }

    #[test]
    fn scan_degenerate_and_errors() {
        let rep = chain_scan(2.0, 2.0, 10, ScanMode::LogGrid).unwrap();
        assert_eq!(rep.points, 1);
        assert!(rep.equality_defect_at_one.is_none());
        assert!(chain_scan(3.0, 2.0, 10, ScanMode::Grid).is_err());
        assert!(chain_scan(0.0, 2.0, 10, ScanMode::Grid).is_err());
        assert!(chain_scan(1.0, 2.0, 1, ScanMode::Grid).is_err());
    }

    #[test]
    fn scan_sees_tangency_at_one() {
        let rep = chain_scan(0.5, 1.5, 101, ScanMode::Grid).unwrap();
        let link = rep.links.iter().find(|l| l.link == "gm_log<=am").unwrap();
        assert_eq!(link.min_relative_slack, 0.0);
        assert_eq!(link.argmin_x, 1.0);
        assert!(rep.equality_defect_at_one.unwrap() <= 1e-15);
    }

    #[test]
    fn adaptive_scan_holds() {
        let rep = chain_scan(1e-3, 1e3, 257, ScanMode::Adaptive).unwrap();
        assert!(rep.points > 257);
        assert!(rep.holds(SCALAR_TOL), "{:?}", rep.worst());
    }

    #[test]
    fn m_refinement() {
        let rep = check_m_refinement(2.0, 9.0).unwrap();
        assert!(close(rep.slack, 5.0 - 3.0 * 19.0 / 18.0, 1e-15));
        assert!(close(rep.slack, 1.833_333_333_333_333_3, 1e-14));
        let near_one = check_m_refinement(1.0 + 1e-12, 4.0).unwrap();
        assert!((near_one.slack - 0.5).abs() < 1e-12);
        let x = 7.0;
        let edge = check_m_refinement(x - 1e-9, x).unwrap();
        let chain = chain_eval(pair(x, 1.0));
        assert!((edge.slack - (chain.am - chain.gm_rat)).abs() < 1e-9);
        assert!(edge.slack >= 0.0);
        assert!(check_m_refinement(1.0, 4.0).is_err());
        assert!(check_m_refinement(3.0, 2.0).is_err());
    }
}
