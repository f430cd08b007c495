//! Coercive, strictly quasiconvex nonlinearities `G` with `G(0) = 0`.
//!
//! `G` is split at its minimum into a decreasing left branch on `(-inf, 0]`
//! and an increasing right branch on `[0, inf)`; both have explicit inverses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Which monotone piece of `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `p <= 0`, where `G` decreases.
    Left,
    /// `p >= 0`, where `G` increases.
    Right,
}

impl Branch {
    /// 1 for the left branch, 2 for the right one.
    pub fn index(self) -> u8 {
        match self {
            Branch::Left => 1,
            Branch::Right => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Left => "left",
            Branch::Right => "right",
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Left => -1.0,
            Branch::Right => 1.0,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" | "1" => Ok(Branch::Left),
            "right" | "2" => Ok(Branch::Right),
            _ => Err(Error::InvalidParameter(format!("unknown branch `{s}`"))),
        }
    }
}

/// Piecewise-linear `G` through tabulated points, extended linearly outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    p: Vec<f64>,
    g: Vec<f64>,
}

impl Table {
    /// Builds a table from the left branch (`p <= 0`) and right branch (`p >= 0`) points.
    /// Both lists must contain `(0, 0)` and be strictly monotone in the required sense.
    pub fn new(left: &[(f64, f64)], right: &[(f64, f64)]) -> Result<Table> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let mut l = left.to_vec();
        let mut r = right.to_vec();
        l.sort_by(|a, b| a.0.total_cmp(&b.0));
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        if l.len() < 2 || r.len() < 2 {
            return bad("each branch table needs at least two points".into());
        }
        if l.last() != Some(&(0.0, 0.0)) || r.first() != Some(&(0.0, 0.0)) {
            return bad("both branch tables must contain the point (0, 0)".into());
        }
        for w in l.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 > w[1].1) {
                return bad(format!("left branch not strictly decreasing near p = {}", w[1].0));
            }
        }
        for w in r.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return bad(format!("right branch not strictly increasing near p = {}", w[1].0));
            }
        }
        l.pop();
        l.extend(r);
        Ok(Table {
            p: l.iter().map(|x| x.0).collect(),
            g: l.iter().map(|x| x.1).collect(),
        })
    }

    fn segment(&self, p: f64) -> usize {
        let n = self.p.len();
        match self.p.partition_point(|&x| x <= p) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn slope(&self, k: usize) -> f64 {
        (self.g[k + 1] - self.g[k]) / (self.p[k + 1] - self.p[k])
    }

    fn eval(&self, p: f64) -> f64 {
        let k = self.segment(p);
        self.g[k] + self.slope(k) * (p - self.p[k])
    }

    fn mirrored(&self) -> Table {
        Table {
            p: self.p.iter().rev().map(|x| -x).collect(),
            g: self.g.iter().rev().cloned().collect(),
        }
    }

    /// Segment indices whose closure meets `[lo, hi]`, with the linear extensions.
    fn segments_on(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        self.segment(lo)..=self.segment(hi)
    }
}

/// Parses `p,G(p)` lines, skipping blanks, `#` comments and a non-numeric header.
pub fn parse_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `p,G`", i + 1)))?;
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(p), Ok(g)) => out.push((p, g)),
            _ if out.is_empty() && i == 0 => continue,
            _ => return Err(Error::Parse(format!("line {}: `{line}`", i + 1))),
        }
    }
    Ok(out)
}

/// Family of the nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `|p|^gamma`.
    Power { gamma: f64 },
    /// `|p|^gamma_left` for `p < 0`, `p^gamma_right` for `p >= 0`.
    AsymPower { gamma_left: f64, gamma_right: f64 },
    /// `log(1 + p^2)`: quasiconvex but not convex, and sublinear.
    LogQuasiconvex,
    Tabulated(Table),
}

/// Constants for `c1 |p|^g - 1/c1 <= G <= c2 (|p|^g + 1)` and
/// `|G(p) - G(q)| <= c2 (|p| + |q| + 1)^(g-1) |p - q|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCertificate {
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Result of checking a [`GrowthCertificate`] on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub lipschitz_ok: bool,
    /// First violation found, if any.
    pub violation: Option<String>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.lower_ok && self.upper_ok && self.lipschitz_ok
    }
}

/// Lower modulus `m` with `G(p + q) - G(p) >= m(q)` on a right-branch bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Modulus {
    /// `m(q) = slope * q`.
    Linear { slope: f64 },
    /// `m(q) = coef * q^exponent`, used when the bracket touches `p = 0`.
    Power { coef: f64, exponent: f64 },
}

impl Modulus {
    pub fn eval(&self, q: f64) -> f64 {
        match *self {
            Modulus::Linear { slope } => slope * q,
            Modulus::Power { coef, exponent } => coef * q.powf(exponent),
        }
    }

    /// True for the superlinear modulus used when the linear one degenerates.
    pub fn is_fallback(&self) -> bool {
        matches!(self, Modulus::Power { .. })
    }

    /// `Phi(p) = int_p^k dq / m(q)` by adaptive quadrature in `log q`.
    pub fn phi(&self, p: f64, k: f64) -> f64 {
        if p >= k {
            return 0.0;
        }
        let f = |u: f64| {
            let q = u.exp();
            q / self.eval(q)
        };
        let (a, b) = (p.ln(), k.ln());
        let scale = f(a).abs().max(f(b).abs());
        adaptive_simpson(&f, a, b, 1e-15 * scale.max(1.0) * (b - a))
    }

    /// Closed form of [`phi`](Self::phi).
    pub fn phi_closed_form(&self, p: f64, k: f64) -> f64 {
        if p >= k {
            return 0.0;
        }
        match *self {
            Modulus::Linear { slope } => (k / p).ln() / slope,
            Modulus::Power { coef, exponent } if (exponent - 1.0).abs() < 1e-15 => (k / p).ln() / coef,
            Modulus::Power { coef, exponent } => {
                (p.powf(1.0 - exponent) - k.powf(1.0 - exponent)) / (coef * (exponent - 1.0))
            }
        }
    }

    /// Solves `Phi(p) = z` for `p` in `(0, k]` using the quadrature form of `Phi`.
    pub fn phi_inverse(&self, z: f64, k: f64) -> f64 {
        if z <= 0.0 {
            return k;
        }
        let g = |u: f64| self.phi(u.exp(), k) - z;
        let hi = k.ln();
        let mut step = 1.0;
        let mut lo = hi - step;
        while g(lo) < 0.0 {
            step *= 2.0;
            lo = hi - step;
            if step > 2000.0 {
                return 0.0;
            }
        }
        let mut hi = hi;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

/// A quasiconvex nonlinearity with optional growth certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiconvexG {
    family: Family,
    growth: Option<GrowthCertificate>,
}

fn abs_pow(p: f64, gamma: f64) -> f64 {
    let a = p.abs();
    if gamma == 2.0 {
        a * a
    } else if gamma == 1.0 {
        a
    } else if gamma.fract() == 0.0 && gamma <= 16.0 {
        a.powi(gamma as i32)
    } else {
        a.powf(gamma)
    }
}

impl QuasiconvexG {
    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("power exponent {gamma} < 1")));
        }
        Ok(QuasiconvexG {
            family: Family::Power { gamma },
            growth: Some(GrowthCertificate {
                gamma,
                c1: 1.0,
                c2: gamma.max(1.0),
            }),
        })
    }

    pub fn asym_power(gamma_left: f64, gamma_right: f64) -> Result<Self> {
        if !(gamma_left >= 1.0 && gamma_right >= 1.0) {
            return Err(Error::InvalidParameter("power exponents must be >= 1".into()));
        }
        let growth = (gamma_left == gamma_right).then_some(GrowthCertificate {
            gamma: gamma_left,
            c1: 1.0,
            c2: gamma_left.max(1.0),
        });
        Ok(QuasiconvexG {
            family: Family::AsymPower {
                gamma_left,
                gamma_right,
            },
            growth,
        })
    }

    pub fn log_quasiconvex() -> Self {
        QuasiconvexG {
            family: Family::LogQuasiconvex,
            growth: None,
        }
    }

    pub fn tabulated(table: Table) -> Self {
        QuasiconvexG {
            family: Family::Tabulated(table),
            growth: None,
        }
    }

    pub fn with_growth(mut self, cert: GrowthCertificate) -> Self {
        self.growth = Some(cert);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn growth(&self) -> Option<GrowthCertificate> {
        self.growth
    }

    /// `G(p)`.
    #[inline]
    pub fn eval(&self, p: f64) -> f64 {
        match &self.family {
            Family::Power { gamma } => abs_pow(p, *gamma),
            Family::AsymPower {
                gamma_left,
                gamma_right,
            } => {
                if p < 0.0 {
                    abs_pow(p, *gamma_left)
                } else {
                    abs_pow(p, *gamma_right)
                }
            }
            Family::LogQuasiconvex => (p * p).ln_1p(),
            Family::Tabulated(t) => t.eval(p),
        }
    }

    /// `G'(p)`; the right derivative at kinks of tabulated data.
    pub fn derivative(&self, p: f64) -> f64 {
        let sgn = if p < 0.0 { -1.0 } else { 1.0 };
        match &self.family {
            Family::Power { gamma } => sgn * gamma * abs_pow(p, gamma - 1.0),
            Family::AsymPower {
                gamma_left,
                gamma_right,
            } => {
                let g = if p < 0.0 { *gamma_left } else { *gamma_right };
                sgn * g * abs_pow(p, g - 1.0)
            }
            Family::LogQuasiconvex => 2.0 * p / (1.0 + p * p),
            Family::Tabulated(t) => t.slope(t.segment(p)),
        }
    }

    /// Inverse of the chosen branch at level `y >= 0`.
    pub fn branch_inverse(&self, branch: Branch, y: f64) -> Result<f64> {
        if y < 0.0 {
            return Err(Error::NegativeLevel(y));
        }
        let s = branch.sign();
        Ok(match &self.family {
            Family::Power { gamma } => s * y.powf(1.0 / gamma),
            Family::AsymPower {
                gamma_left,
                gamma_right,
            } => match branch {
                Branch::Left => -y.powf(1.0 / gamma_left),
                Branch::Right => y.powf(1.0 / gamma_right),
            },
            Family::LogQuasiconvex => s * y.exp_m1().sqrt(),
            Family::Tabulated(_) => self.bisect_inverse(branch, y),
        })
    }

    fn bisect_inverse(&self, branch: Branch, y: f64) -> f64 {
        let s = branch.sign();
        let mut hi = 1.0;
        while self.eval(s * hi) < y {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(s * mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        s * 0.5 * (lo + hi)
    }

    /// Lipschitz constant of `G` on `[lo, hi]`.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        match &self.family {
            Family::Power { gamma } => gamma * abs_pow(lo.abs().max(hi.abs()), gamma - 1.0),
            Family::AsymPower {
                gamma_left,
                gamma_right,
            } => {
                let left = if lo < 0.0 {
                    gamma_left * abs_pow(lo, gamma_left - 1.0)
                } else {
                    0.0
                };
                let right = if hi > 0.0 {
                    gamma_right * abs_pow(hi, gamma_right - 1.0)
                } else {
                    0.0
                };
                left.max(right)
            }
            Family::LogQuasiconvex => {
                if lo <= 1.0 && hi >= -1.0 && (lo <= -1.0 || hi >= 1.0) {
                    1.0
                } else {
                    [lo, hi]
                        .iter()
                        .map(|&p| self.derivative(p).abs())
                        .fold(0.0, f64::max)
                }
            }
            Family::Tabulated(t) => {
                1.01 * t
                    .segments_on(lo, hi)
                    .map(|k| t.slope(k).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Lower modulus of the right branch on the bracket `[p_lo, p_hi]`, `0 <= p_lo`.
    ///
    /// Returns the linear modulus `inf G'` when it is positive, and a
    /// superlinear family-specific modulus when the bracket starts at 0.
    pub fn monotonicity_modulus_on(&self, p_lo: f64, p_hi: f64) -> Result<Modulus> {
        const DEGENERATE: f64 = 1e-12;
        let linear = match &self.family {
            Family::Power { gamma }
            | Family::AsymPower {
                gamma_right: gamma, ..
            } => gamma * abs_pow(p_lo, gamma - 1.0),
            Family::LogQuasiconvex => self.derivative(p_lo).min(self.derivative(p_hi)),
            Family::Tabulated(t) => t
                .segments_on(p_lo, p_hi)
                .map(|k| t.slope(k))
                .fold(f64::INFINITY, f64::min),
        };
        if linear > DEGENERATE {
            return Ok(Modulus::Linear { slope: linear });
        }
        match &self.family {
            Family::Power { gamma }
            | Family::AsymPower {
                gamma_right: gamma, ..
            } => Ok(Modulus::Power {
                coef: 1.0,
                exponent: *gamma,
            }),
            // G'(r) >= 2 r / (1 + P^2) on [0, P] gives G(p + q) - G(p) >= q^2 / (1 + P^2).
            Family::LogQuasiconvex => Ok(Modulus::Power {
                coef: 1.0 / (1.0 + p_hi * p_hi),
                exponent: 2.0,
            }),
            Family::Tabulated(_) => Err(Error::InvalidParameter(
                "tabulated right branch has no positive slope on the bracket".into(),
            )),
        }
    }

    /// Modulus on the bracket `[G2^-1(lambda - beta), G2^-1(lambda)]`.
    pub fn monotonicity_modulus(&self, lambda: f64, beta: f64) -> Result<Modulus> {
        let lo = self.branch_inverse(Branch::Right, lambda - beta)?;
        let hi = self.branch_inverse(Branch::Right, lambda)?;
        self.monotonicity_modulus_on(lo, hi)
    }

    /// `sup { |G_i^-1(y + eps) - G_i^-1(y)| : y_lo <= y <= y_hi - eps }`.
    pub fn inverse_continuity_modulus(&self, branch: Branch, y_lo: f64, y_hi: f64, eps: f64) -> Result<f64> {
        if y_hi - eps < y_lo {
            return Err(Error::InvalidParameter("interval shorter than eps".into()));
        }
        let n = 2000;
        let mut best: f64 = 0.0;
        for k in 0..=n {
            let y = y_lo + (y_hi - eps - y_lo) * k as f64 / n as f64;
            let d = self.branch_inverse(branch, y + eps)? - self.branch_inverse(branch, y)?;
            best = best.max(d.abs());
        }
        Ok(best)
    }

    /// `p -> G(-p)`, which swaps the branches.
    pub fn reflected(&self) -> QuasiconvexG {
        let family = match &self.family {
            Family::AsymPower {
                gamma_left,
                gamma_right,
            } => Family::AsymPower {
                gamma_left: *gamma_right,
                gamma_right: *gamma_left,
            },
            Family::Tabulated(t) => Family::Tabulated(t.mirrored()),
            f => f.clone(),
        };
        QuasiconvexG {
            family,
            growth: self.growth,
        }
    }

    /// Checks `cert` on `n + 1` lattice points of `[-big_p, big_p]`, including all pairs.
    pub fn validate_growth(&self, cert: &GrowthCertificate, big_p: f64, n: usize) -> GrowthReport {
        let GrowthCertificate { gamma, c1, c2 } = *cert;
        let pts: Vec<f64> = (0..=n)
            .map(|k| -big_p + 2.0 * big_p * k as f64 / n as f64)
            .collect();
        let vals: Vec<f64> = pts.iter().map(|&p| self.eval(p)).collect();
        let slack = |x: f64| 1e-12 * x.abs().max(1.0);
        let mut report = GrowthReport {
            lower_ok: true,
            upper_ok: true,
            lipschitz_ok: true,
            violation: None,
        };
        let flag = |ok: &mut bool, msg: String, violation: &mut Option<String>| {
            if *ok {
                *ok = false;
                violation.get_or_insert(msg);
            }
        };
        for (&p, &g) in pts.iter().zip(&vals) {
            let lower = c1 * abs_pow(p, gamma) - 1.0 / c1;
            if g < lower - slack(lower) {
                flag(&mut report.lower_ok, format!("lower bound at p = {p}"), &mut report.violation);
            }
            let upper = c2 * (abs_pow(p, gamma) + 1.0);
            if g > upper + slack(upper) {
                flag(&mut report.upper_ok, format!("upper bound at p = {p}"), &mut report.violation);
            }
        }
        'outer: for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let (p, q) = (pts[i], pts[j]);
                let bound = c2 * (p.abs() + q.abs() + 1.0).powf(gamma - 1.0) * (p - q).abs();
                if (vals[i] - vals[j]).abs() > bound + slack(bound) {
                    flag(
                        &mut report.lipschitz_ok,
                        format!("local Lipschitz bound at ({p}, {q})"),
                        &mut report.violation,
                    );
                    break 'outer;
                }
            }
        }
        report
    }

    /// Validates the attached certificate, failing when absent or violated.
    pub fn ensure_growth(&self, big_p: f64, n: usize) -> Result<GrowthReport> {
        let cert = self
            .growth
            .ok_or_else(|| Error::GrowthViolated("no growth certificate attached".into()))?;
        let report = self.validate_growth(&cert, big_p, n);
        if report.passed() {
            Ok(report)
        } else {
            Err(Error::GrowthViolated(report.violation.unwrap_or_default()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p2() -> QuasiconvexG {
        QuasiconvexG::power(2.0).unwrap()
    }

    #[test]
    fn branch_inverses() {
        assert!((p2().branch_inverse(Branch::Right, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((p2().branch_inverse(Branch::Left, 2.0).unwrap() + 2f64.sqrt()).abs() < 1e-15);
        let lg = QuasiconvexG::log_quasiconvex();
        let y = lg.branch_inverse(Branch::Right, 1.0).unwrap();
        assert!((y - (std::f64::consts::E - 1.0).sqrt()).abs() < 1e-14);
        assert!(matches!(p2().branch_inverse(Branch::Right, -0.1), Err(Error::NegativeLevel(_))));
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(p2().lipschitz_on(0.0, 2.0), 4.0);
        assert_eq!(p2().lipschitz_on(-1.0, 1.0), 2.0);
        assert_eq!(QuasiconvexG::log_quasiconvex().lipschitz_on(0.0, 10.0), 1.0);
        let lg = QuasiconvexG::log_quasiconvex();
        assert!((lg.lipschitz_on(2.0, 3.0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn modulus_examples() {
        assert_eq!(p2().monotonicity_modulus(2.0, 1.0).unwrap(), Modulus::Linear { slope: 2.0 });
        assert_eq!(p2().monotonicity_modulus(5.0, 1.0).unwrap(), Modulus::Linear { slope: 4.0 });
        let m = p2().monotonicity_modulus(1.0, 1.0).unwrap();
        assert!(m.is_fallback());
        assert_eq!(m, Modulus::Power { coef: 1.0, exponent: 2.0 });
    }

    #[test]
    fn phi_quadrature_matches_closed_form() {
        let k = 2f64.sqrt() - 1.0;
        for m in [
            Modulus::Linear { slope: 2.0 },
            Modulus::Power { coef: 1.0, exponent: 2.0 },
            Modulus::Power { coef: 0.3, exponent: 1.5 },
        ] {
            for p in [1e-8, 1e-4, 0.1] {
                let (a, b) = (m.phi(p, k), m.phi_closed_form(p, k));
                assert!((a - b).abs() <= 1e-10 * b.max(1.0), "{m:?} p={p}: {a} vs {b}");
            }
        }
        let z = Modulus::Linear { slope: 2.0 }.phi(1e-6, k);
        assert!((z - 6.4668).abs() < 1e-3);
    }

    #[test]
    fn phi_inverse_inverts() {
        let k = 0.7;
        for m in [Modulus::Linear { slope: 1.3 }, Modulus::Power { coef: 1.0, exponent: 2.0 }] {
            for z in [0.5, 3.0, 40.0] {
                let p = m.phi_inverse(z, k);
                assert!((m.phi_closed_form(p, k) - z).abs() < 1e-9 * z.max(1.0));
            }
        }
        let m = Modulus::Linear { slope: 2.0 };
        assert!((m.phi_inverse(3.0, k) - k * (-6.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn growth_examples() {
        let cert = GrowthCertificate {
            gamma: 2.0,
            c1: 1.0,
            c2: 1.0,
        };
        assert!(p2().validate_growth(&cert, 5.0, 200).passed());
        let lg = QuasiconvexG::log_quasiconvex().validate_growth(&cert, 10.0, 200);
        assert!(!lg.lower_ok);
        let asym = QuasiconvexG::asym_power(2.0, 2.0).unwrap();
        assert!(asym.validate_growth(&cert, 1.0, 200).passed());
        assert!(QuasiconvexG::log_quasiconvex().ensure_growth(10.0, 50).is_err());
        assert!(QuasiconvexG::power(3.0).unwrap().ensure_growth(4.0, 100).is_ok());
    }

    #[test]
    fn table_validation_and_inverse() {
        let left = [(-2.0, 4.0), (-1.0, 1.0), (0.0, 0.0)];
        let right = [(0.0, 0.0), (1.0, 2.0), (3.0, 5.0)];
        let g = QuasiconvexG::tabulated(Table::new(&left, &right).unwrap());
        assert_eq!(g.eval(0.5), 1.0);
        assert_eq!(g.eval(-1.5), 2.5);
        assert_eq!(g.eval(5.0), 8.0);
        assert!((g.branch_inverse(Branch::Right, 3.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((g.branch_inverse(Branch::Left, 2.5).unwrap() + 1.5).abs() < 1e-12);
        assert!((g.lipschitz_on(0.0, 0.5) - 2.02).abs() < 1e-12);
        let bad = [(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)];
        assert!(Table::new(&left, &bad).is_err());
        let parsed = parse_table("p,G\n0,0\n1,2\n# comment\n3,5\n").unwrap();
        assert_eq!(parsed, right.to_vec());
    }

    #[test]
    fn reflection_swaps_branches() {
        let g = QuasiconvexG::asym_power(2.0, 3.0).unwrap();
        let r = g.reflected();
        for p in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert_eq!(r.eval(p), g.eval(-p));
        }
    }

    #[test]
    fn inverse_continuity_for_square_root() {
        let m = p2().inverse_continuity_modulus(Branch::Right, 1.0, 3.0, 0.25).unwrap();
        assert!((m - (1.25f64.sqrt() - 1.0)).abs() < 1e-12);
    }

    fn families() -> Vec<QuasiconvexG> {
        vec![
            p2(),
            QuasiconvexG::power(1.5).unwrap(),
            QuasiconvexG::asym_power(1.2, 3.0).unwrap(),
            QuasiconvexG::log_quasiconvex(),
            QuasiconvexG::tabulated(
                Table::new(&[(-1.0, 2.0), (0.0, 0.0)], &[(0.0, 0.0), (0.5, 0.25), (2.0, 4.0)]).unwrap(),
            ),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn prop_strictly_quasiconvex(idx in 0usize..5, p in -5.0f64..5.0, q in -5.0f64..5.0, t in 0.01f64..0.99) {
            prop_assume!((p - q).abs() > 1e-3);
            let g = &families()[idx];
            let r = t * p + (1.0 - t) * q;
            prop_assert!(g.eval(r) < g.eval(p).max(g.eval(q)));
            prop_assert_eq!(g.eval(0.0), 0.0);
        }

        #[test]
        fn prop_inverse_round_trip(idx in 0usize..5, y in 0.0f64..20.0, right in any::<bool>()) {
            let g = &families()[idx];
            let b = if right { Branch::Right } else { Branch::Left };
            let p = g.branch_inverse(b, y).unwrap();
            prop_assert!(p * b.sign() >= 0.0);
            prop_assert!((g.eval(p) - y).abs() <= 1e-12 * y.max(1.0));
        }

        #[test]
        fn prop_modulus_bounds_increments(idx in 0usize..5, beta in 0.1f64..2.0, gap in 0.0f64..3.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let g = &families()[idx];
            let lambda = beta + gap;
            let lo = g.branch_inverse(Branch::Right, lambda - beta).unwrap();
            let hi = g.branch_inverse(Branch::Right, lambda).unwrap();
            let m = g.monotonicity_modulus_on(lo, hi).unwrap();
            let q = u * (hi - lo);
            let p = lo + v * (hi - lo - q);
            let inc = g.eval(p + q) - g.eval(p);
            prop_assert!(inc >= m.eval(q) - 1e-12 * inc.abs().max(1.0), "{:?}: {} < {}", m, inc, m.eval(q));
        }
    }
}
