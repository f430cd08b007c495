//! Corrector derivatives `f` solving `a f' + G(f) + beta V = lambda`.
//!
//! The right-branch corrector is obtained by shooting forward with RK4 from a
//! far-left start `L`; differences between shots contract at a rate certified
//! by the modulus of `G`, which fixes the burn-in needed for a target accuracy.
//! The left branch uses the mirror image `x -> -x`, `p -> -p`.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::environment::{EnvRealization, HillWitness};
use crate::error::{Error, Result};
use crate::hamiltonian::{Branch, Modulus, QuasiconvexG};
use crate::quad::{cumulative_trapezoid, trapezoid};
use crate::stats::batch_means;

const BRACKET_GUARD: f64 = 1e-9;
const GRID_EPS: f64 = 1e-9;

/// Environment, nonlinearity and potential strength of one problem.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub env: Cow<'a, EnvRealization>,
    pub g: Cow<'a, QuasiconvexG>,
    pub beta: f64,
}

/// A corrector derivative sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorProfile {
    pub branch: Branch,
    pub lambda: f64,
    pub beta: f64,
    pub dx: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    /// Invariant interval for `f`.
    pub bracket: (f64, f64),
    /// Length of the burn-in stretch before the reported region.
    pub burn_in: f64,
    /// Certified bound on the distance to the exact corrector on the region.
    pub cert_bound: f64,
}

/// Burn-in needed for a target accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurnIn {
    pub modulus: Modulus,
    /// Bracket width, the initial gap between any two shots.
    pub width: f64,
    /// Scaled length `z*` with `Phi^-1(z*) = tol`.
    pub s_length: f64,
    /// Spatial length guaranteeing scaled length `z*` (`a <= 1`).
    pub x_length: f64,
}

/// Ergodic average of a corrector with a batch-means confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub lambda: f64,
    pub branch: Branch,
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub window_length: f64,
    pub n_batches: usize,
    pub burn_in: f64,
}

/// Order of the pieces in a glued profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlueOrder {
    /// Right-branch corrector on the left, left-branch on the right; a subsolution profile.
    TwoOne,
    /// Left-branch corrector on the left, right-branch on the right; a supersolution profile.
    OneTwo,
}

impl fmt::Display for GlueOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GlueOrder::TwoOne => "2-1",
            GlueOrder::OneTwo => "1-2",
        })
    }
}

impl FromStr for GlueOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2-1" | "21" => Ok(GlueOrder::TwoOne),
            "1-2" | "12" => Ok(GlueOrder::OneTwo),
            _ => Err(Error::InvalidParameter(format!("unknown glue order `{s}`"))),
        }
    }
}

/// Points inside a hill where each corrector has small `G(f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowSlopePoints {
    pub order: GlueOrder,
    pub z1: f64,
    pub z2: f64,
}

/// Settings for [`Problem::build_glued_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlueConfig {
    pub dx: f64,
    /// Accuracy of the underlying correctors.
    pub tol: f64,
    /// Extra grid on each side of the hill.
    pub margin: f64,
    /// Scaled length of each cubic blending zone.
    pub blend: f64,
}

impl Default for GlueConfig {
    fn default() -> Self {
        GlueConfig {
            dx: 0.01,
            tol: 1e-3,
            margin: 2.0,
            blend: 1.0,
        }
    }
}

/// Derivative of a glued corrector at level `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedProfile {
    pub order: GlueOrder,
    pub delta: f64,
    pub beta: f64,
    pub dx: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub low_slope: LowSlopePoints,
    pub hill: HillWitness,
    /// Range of `a f' + G(f) + beta V` over interior grid nodes.
    pub residual_band: (f64, f64),
}

impl GluedProfile {
    /// Whether the residual band lies in `[beta - 3 delta - tol, beta + 4 delta + tol]`.
    pub fn band_within(&self, tol: f64) -> bool {
        self.residual_band.0 >= self.beta - 3.0 * self.delta - tol
            && self.residual_band.1 <= self.beta + 4.0 * self.delta + tol
    }

    /// Antiderivative, zero at `x = 0` when the grid contains it, else at the first node.
    pub fn antiderivative(&self) -> Vec<f64> {
        antiderivative(&self.x, &self.f, self.dx)
    }
}

fn antiderivative(x: &[f64], f: &[f64], dx: f64) -> Vec<f64> {
    let mut out = cumulative_trapezoid(f, dx);
    let anchor = x
        .iter()
        .position(|&y| y.abs() < 0.5 * dx)
        .map(|k| out[k])
        .unwrap_or(0.0);
    for v in &mut out {
        *v -= anchor;
    }
    out
}

impl CorrectorProfile {
    /// Antiderivative `F` of the profile, zero at `x = 0` when the grid contains it.
    pub fn antiderivative(&self) -> Vec<f64> {
        antiderivative(&self.x, &self.f, self.dx)
    }

    /// Linear interpolation of `f`, clamped to the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let t = ((x - self.x[0]) / self.dx).clamp(0.0, (self.x.len() - 1) as f64);
        let k = (t.floor() as usize).min(self.x.len() - 2);
        let w = t - k as f64;
        self.f[k] + w * (self.f[k + 1] - self.f[k])
    }

    /// Index of the grid node closest to `x`.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let t = ((x - self.x[0]) / self.dx).round();
        (t >= 0.0 && (t as usize) < self.x.len()).then_some(t as usize)
    }

    /// Centered-difference residual `a f' + G(f) + beta V - lambda` at interior nodes.
    pub fn residuals(&self, env: &EnvRealization, g: &QuasiconvexG) -> Vec<f64> {
        (1..self.x.len() - 1)
            .map(|k| {
                let (a, v) = env.sample_unchecked(self.x[k]);
                let df = (self.f[k + 1] - self.f[k - 1]) / (2.0 * self.dx);
                a * df + g.eval(self.f[k]) + self.beta * v - self.lambda
            })
            .collect()
    }

    /// Writes `x,f` rows under a `#` metadata header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# lambda: {:?}", self.lambda)?;
        writeln!(w, "# branch: {}", self.branch)?;
        writeln!(w, "# beta: {:?}", self.beta)?;
        writeln!(w, "# burn_in: {:?}", self.burn_in)?;
        writeln!(w, "# cert_bound: {:?}", self.cert_bound)?;
        writeln!(w, "x,f")?;
        for (x, f) in self.x.iter().zip(&self.f) {
            writeln!(w, "{x:?},{f:?}")?;
        }
        Ok(())
    }
}

fn grid_index_floor(x: f64, dx: f64) -> i64 {
    (x / dx + GRID_EPS).floor() as i64
}

fn grid_index_ceil(x: f64, dx: f64) -> i64 {
    (x / dx - GRID_EPS).ceil() as i64
}

impl<'a> Problem<'a> {
    pub fn new(env: &'a EnvRealization, g: &'a QuasiconvexG, beta: f64) -> Self {
        Problem {
            env: Cow::Borrowed(env),
            g: Cow::Borrowed(g),
            beta,
        }
    }

    /// The problem under `x -> -x`, `p -> -p`, which exchanges the branches.
    pub fn reflected(&self) -> Problem<'static> {
        Problem {
            env: Cow::Owned(self.env.reflected()),
            g: Cow::Owned(self.g.reflected()),
            beta: self.beta,
        }
    }

    /// Lowest level with a corrector: `beta` times the supremum of `V`.
    pub fn base_level(&self) -> f64 {
        self.beta * self.env.v_law_bounds().1
    }

    /// Invariant interval of the branch-`i` corrector at level `lambda`.
    pub fn bracket(&self, lambda: f64, branch: Branch) -> Result<(f64, f64)> {
        let base = self.base_level();
        if lambda < base - 1e-12 {
            return Err(Error::LevelBelowThreshold { lambda, min: base });
        }
        let (v_inf, v_sup) = self.env.v_law_bounds();
        let near = self.g.branch_inverse(branch, (lambda - self.beta * v_sup).max(0.0))?;
        let far = self.g.branch_inverse(branch, lambda - self.beta * v_inf)?;
        Ok((near.min(far), near.max(far)))
    }

    /// Burn-in so that two shots started anywhere in the bracket differ by at most `tol`.
    pub fn burn_in_length(&self, lambda: f64, branch: Branch, tol: f64) -> Result<BurnIn> {
        let (lo, hi) = self.bracket(lambda, branch)?;
        let modulus = match branch {
            Branch::Right => self.g.monotonicity_modulus_on(lo, hi)?,
            Branch::Left => self.g.reflected().monotonicity_modulus_on(-hi, -lo)?,
        };
        let width = hi - lo;
        let s_length = if tol >= width { 0.0 } else { modulus.phi(tol, width) };
        Ok(BurnIn {
            modulus,
            width,
            s_length,
            x_length: s_length,
        })
    }

    /// Integrates the right-branch ODE on grid nodes `k_start..=k_end` from `f = c`.
    fn integrate_right(
        &self,
        lambda: f64,
        bracket: (f64, f64),
        k_start: i64,
        k_end: i64,
        c: f64,
        dx: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let env = &*self.env;
        let g = &*self.g;
        let beta = self.beta;
        let rhs = |x: f64, f: f64| {
            let (a, v) = env.sample_unchecked(x);
            (lambda - g.eval(f) - beta * v) / a
        };
        let n = (k_end - k_start + 1).max(1) as usize;
        let mut xs = Vec::with_capacity(n);
        let mut fs = Vec::with_capacity(n);
        let (lo, hi) = (bracket.0 - BRACKET_GUARD, bracket.1 + BRACKET_GUARD);
        let mut f = c;
        for k in k_start..=k_end {
            let x = k as f64 * dx;
            if k > k_start {
                let x0 = (k - 1) as f64 * dx;
                let k1 = rhs(x0, f);
                let k2 = rhs(x0 + 0.5 * dx, f + 0.5 * dx * k1);
                let k3 = rhs(x0 + 0.5 * dx, f + 0.5 * dx * k2);
                let k4 = rhs(x, f + dx * k3);
                f += dx / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            if !f.is_finite() {
                return Err(Error::NonFinite { x });
            }
            if f < lo || f > hi {
                return Err(Error::BracketExit {
                    x,
                    f,
                    lo: bracket.0,
                    hi: bracket.1,
                });
            }
            xs.push(x);
            fs.push(f);
        }
        Ok((xs, fs))
    }

    fn check_grid(&self, dx: f64) -> Result<()> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidParameter(format!("step {dx}")));
        }
        Ok(())
    }

    /// Shoots from `f(L) = c` across the rest of the window in the stable direction:
    /// rightward for the right branch, leftward for the left branch.
    pub fn shoot(&self, lambda: f64, branch: Branch, l: f64, c: f64, dx: f64) -> Result<CorrectorProfile> {
        self.check_grid(dx)?;
        let bracket = self.bracket(lambda, branch)?;
        if c < bracket.0 - BRACKET_GUARD || c > bracket.1 + BRACKET_GUARD {
            return Err(Error::InvalidParameter(format!(
                "initial value {c} outside the bracket [{}, {}]",
                bracket.0, bracket.1
            )));
        }
        if let Branch::Left = branch {
            let mut p = self.reflected().shoot(lambda, Branch::Right, -l, -c, dx)?;
            mirror_profile(&mut p);
            return Ok(p);
        }
        if !self.env.contains(l) {
            return Err(Error::OutOfWindow {
                x: l,
                lo: self.env.x_min(),
                hi: self.env.x_max(),
            });
        }
        let k_start = grid_index_ceil(l, dx);
        let k_end = grid_index_floor(self.env.x_max(), dx);
        let (x, f) = self.integrate_right(lambda, bracket, k_start, k_end, c, dx)?;
        Ok(CorrectorProfile {
            branch,
            lambda,
            beta: self.beta,
            dx,
            x,
            f,
            bracket,
            burn_in: 0.0,
            cert_bound: bracket.1 - bracket.0,
        })
    }

    /// Corrector on `region` with a certified burn-in, checked by a second shot
    /// from a bracket endpoint.
    pub fn corrector_profile(
        &self,
        lambda: f64,
        branch: Branch,
        region: (f64, f64),
        tol: f64,
        dx: f64,
    ) -> Result<CorrectorProfile> {
        self.check_grid(dx)?;
        if let Branch::Left = branch {
            let mut p = self
                .reflected()
                .corrector_profile(lambda, Branch::Right, (-region.1, -region.0), tol, dx)?;
            mirror_profile(&mut p);
            return Ok(p);
        }
        let bracket = self.bracket(lambda, branch)?;
        let burn = self.burn_in_length(lambda, branch, tol)?;
        let k0 = grid_index_ceil(region.0, dx);
        let k1 = grid_index_floor(region.1, dx);
        if k1 <= k0 {
            return Err(Error::InvalidParameter("region shorter than one step".into()));
        }
        let k_start = grid_index_floor(k0 as f64 * dx - burn.x_length, dx);
        let l = k_start as f64 * dx;
        let (x_lo, x_hi) = self.env.window();
        if l < x_lo - GRID_EPS * dx || k1 as f64 * dx > x_hi + GRID_EPS * dx {
            return Err(Error::WindowTooSmall {
                len: x_hi - x_lo,
                reason: format!(
                    "region [{}, {}] with burn-in {} needs [{l}, {}]",
                    region.0, region.1, burn.x_length, region.1
                ),
            });
        }
        let mid = 0.5 * (bracket.0 + bracket.1);
        let (xs, f_mid) = self.integrate_right(lambda, bracket, k_start, k1, mid, dx)?;
        let (_, f_end) = self.integrate_right(lambda, bracket, k_start, k1, bracket.1, dx)?;
        let off = (k0 - k_start) as usize;
        let diff = f_mid[off..]
            .iter()
            .zip(&f_end[off..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let s_burn = self.env.s_between(l, xs[off])?;
        let cert_bound = if burn.width <= tol {
            burn.width
        } else {
            burn.modulus.phi_inverse(s_burn, burn.width)
        };
        if diff > 2.0 * tol.max(cert_bound) {
            return Err(Error::CertificateViolated {
                diff,
                bound: 2.0 * tol,
            });
        }
        Ok(CorrectorProfile {
            branch,
            lambda,
            beta: self.beta,
            dx,
            x: xs[off..].to_vec(),
            f: f_mid[off..].to_vec(),
            bracket,
            burn_in: xs[off] - l,
            cert_bound,
        })
    }

    /// Average of the corrector over `[0, x_len]` with a 95% batch-means interval.
    pub fn estimate_theta(
        &self,
        lambda: f64,
        branch: Branch,
        x_len: f64,
        n_batches: usize,
        tol: f64,
        dx: f64,
    ) -> Result<ThetaEstimate> {
        if n_batches < 10 {
            return Err(Error::InvalidParameter(format!("{n_batches} batches; at least 10 needed")));
        }
        let p = self.corrector_profile(lambda, branch, (0.0, x_len), tol, dx)?;
        let intervals = p.f.len() - 1;
        if intervals < n_batches {
            return Err(Error::InvalidParameter("fewer grid steps than batches".into()));
        }
        let length = intervals as f64 * dx;
        let mean = trapezoid(&p.f, dx) / length;
        let bounds: Vec<usize> = (0..=n_batches).map(|b| b * intervals / n_batches).collect();
        let batches: Vec<f64> = bounds
            .windows(2)
            .map(|w| trapezoid(&p.f[w[0]..=w[1]], dx) / ((w[1] - w[0]) as f64 * dx))
            .collect();
        let bm = batch_means(&batches, mean);
        Ok(ThetaEstimate {
            lambda,
            branch,
            mean: bm.mean,
            ci_halfwidth: bm.half_width,
            window_length: length,
            n_batches,
            burn_in: p.burn_in,
        })
    }

    /// Low-slope points of the pair `(f1, f2)` at level `beta` inside `hill`.
    pub fn find_low_slope_points(
        &self,
        f1: &CorrectorProfile,
        f2: &CorrectorProfile,
        delta: f64,
        hill: &HillWitness,
        order: GlueOrder,
    ) -> Result<LowSlopePoints> {
        let g = &*self.g;
        let beta = self.beta;
        if f1.x != f2.x {
            return Err(Error::InvalidParameter("profiles must share a grid".into()));
        }
        if !(delta > 0.0 && delta < beta) {
            return Err(Error::InvalidParameter(format!("delta {delta} must lie in (0, beta)")));
        }
        if beta * hill.v_min_on_interval < beta - delta - 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "hill height {} below 1 - delta/beta",
                hill.v_min_on_interval
            )));
        }
        let p2 = g.branch_inverse(Branch::Right, beta)?;
        let p1 = g.branch_inverse(Branch::Left, beta)?;
        let budget2 = p2 / delta;
        let budget1 = -p1 / delta;
        let spread = (p2 - p1) / delta;
        let need = match order {
            GlueOrder::TwoOne => spread,
            GlueOrder::OneTwo => 2.0 * spread,
        };
        if hill.scaled_length <= need {
            return Err(Error::HillTooShort {
                have: hill.scaled_length,
                need,
            });
        }
        let idx = |x: f64| {
            f1.index_of(x)
                .ok_or_else(|| Error::OutOfWindow {
                    x,
                    lo: f1.x[0],
                    hi: *f1.x.last().unwrap(),
                })
        };
        let s = |x: f64| self.env.s_at(x);
        let (i_l1, i_l2) = (idx(hill.l1)?, idx(hill.l2)?);
        // Start points: the hill ends, or interior points leaving each scan its budget.
        let (x1, x2) = match order {
            GlueOrder::TwoOne => (i_l2, i_l1),
            GlueOrder::OneTwo => {
                let s_l1 = s(hill.l1)?;
                let s_l2 = s(hill.l2)?;
                let mut x1 = i_l1;
                while x1 < i_l2 && s(f1.x[x1])? - s_l1 <= budget1 {
                    x1 += 1;
                }
                let mut x2 = i_l2;
                while x2 > i_l1 && s_l2 - s(f1.x[x2])? <= budget2 {
                    x2 -= 1;
                }
                (x1, x2)
            }
        };
        let mut z2 = x2;
        while g.eval(f2.f[z2]) > 2.0 * delta {
            if z2 >= i_l2 {
                return Err(Error::NoLowSlopePoint("right-branch scan left the hill".into()));
            }
            z2 += 1;
        }
        let mut z1 = x1;
        while g.eval(f1.f[z1]) > 2.0 * delta {
            if z1 <= i_l1 {
                return Err(Error::NoLowSlopePoint("left-branch scan left the hill".into()));
            }
            z1 -= 1;
        }
        let slack = 1e-9 + 2.0 * f1.dx;
        if s(f1.x[z2])? - s(f1.x[x2])? > budget2 + slack {
            return Err(Error::NoLowSlopePoint(format!("right-branch scan exceeded budget {budget2}")));
        }
        if s(f1.x[x1])? - s(f1.x[z1])? > budget1 + slack {
            return Err(Error::NoLowSlopePoint(format!("left-branch scan exceeded budget {budget1}")));
        }
        let ordered = match order {
            GlueOrder::TwoOne => z2 < z1,
            GlueOrder::OneTwo => z1 < z2,
        };
        if !ordered {
            return Err(Error::NoLowSlopePoint("low-slope points out of order".into()));
        }
        Ok(LowSlopePoints {
            order,
            z1: f1.x[z1],
            z2: f1.x[z2],
        })
    }

    /// Glues the two correctors at level `beta` across `hill` with a bridge whose
    /// scaled slope stays in `[-2 delta, delta]` and level below `3 delta`.
    pub fn build_glued_profile(
        &self,
        delta: f64,
        hill: &HillWitness,
        order: GlueOrder,
        cfg: &GlueConfig,
    ) -> Result<GluedProfile> {
        let beta = self.beta;
        let g = &*self.g;
        let region = (hill.l1 - cfg.margin, hill.l2 + cfg.margin);
        let f1 = self.corrector_profile(beta, Branch::Left, region, cfg.tol, cfg.dx)?;
        let f2 = self.corrector_profile(beta, Branch::Right, region, cfg.tol, cfg.dx)?;
        let low = self.find_low_slope_points(&f1, &f2, delta, hill, order)?;
        let (left, z_left, right, z_right) = match order {
            GlueOrder::TwoOne => (&f2, low.z2, &f1, low.z1),
            GlueOrder::OneTwo => (&f1, low.z1, &f2, low.z2),
        };
        let il = left.index_of(z_left).expect("low-slope point on grid");
        let ir = right.index_of(z_right).expect("low-slope point on grid");
        let env = &*self.env;
        let sigma_a = env.s_at(z_left)?;
        let sigma_b = env.s_at(z_right)?;
        let span = sigma_b - sigma_a;
        let b = cfg.blend;
        if span < 2.0 * b {
            return Err(Error::HillTooShort {
                have: span,
                need: 2.0 * b,
            });
        }
        // Bridge in the scaled variable sigma = s(x), where a d/dx = d/dsigma.
        let va = left.f[il];
        let vb = right.f[ir];
        let slope_of = |x: f64, v: f64| {
            let (_, pot) = env.sample_unchecked(x);
            beta - g.eval(v) - beta * pot
        };
        let da = slope_of(z_left, va);
        let db = slope_of(z_right, vb);
        let m = (vb - va) / span;
        let bridge = |sigma: f64| -> (f64, f64) {
            if sigma <= sigma_a + b {
                hermite(sigma - sigma_a, b, va, da, va + m * b, m)
            } else if sigma >= sigma_b - b {
                hermite(sigma - (sigma_b - b), b, vb - m * b, m, vb, db)
            } else {
                (va + m * (sigma - sigma_a), m)
            }
        };
        let mut f = Vec::with_capacity(left.f.len());
        for k in 0..left.x.len() {
            let x = left.x[k];
            let value = if k <= il {
                left.f[k]
            } else if k >= ir {
                right.f[k]
            } else {
                let (gv, dg) = bridge(env.s_at(x)?);
                let tiny = 1e-12;
                if g.eval(gv) > 3.0 * delta + tiny || dg < -2.0 * delta - tiny || dg > delta + tiny {
                    return Err(Error::BridgeConstraint {
                        x,
                        detail: format!("G(g) = {}, a g' = {dg}", g.eval(gv)),
                    });
                }
                gv
            };
            f.push(value);
        }
        let x = left.x.clone();
        let dx = cfg.dx;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 1..x.len() - 1 {
            let (a, v) = env.sample_unchecked(x[k]);
            let r = a * (f[k + 1] - f[k - 1]) / (2.0 * dx) + g.eval(f[k]) + beta * v;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok(GluedProfile {
            order,
            delta,
            beta,
            dx,
            x,
            f,
            low_slope: low,
            hill: *hill,
            residual_band: (lo, hi),
        })
    }
}

/// Cubic Hermite interpolant on `[0, h]` and its derivative at `t`.
fn hermite(t: f64, h: f64, p0: f64, d0: f64, p1: f64, d1: f64) -> (f64, f64) {
    let u = t / h;
    let (u2, u3) = (u * u, u * u * u);
    let value = (2.0 * u3 - 3.0 * u2 + 1.0) * p0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * p1
        + (u3 - u2) * h * d1;
    let deriv = ((6.0 * u2 - 6.0 * u) * p0
        + (3.0 * u2 - 4.0 * u + 1.0) * h * d0
        + (-6.0 * u2 + 6.0 * u) * p1
        + (3.0 * u2 - 2.0 * u) * h * d1)
        / h;
    (value, deriv)
}

/// Maps a right-branch profile of the mirrored problem back to a left-branch profile.
fn mirror_profile(p: &mut CorrectorProfile) {
    p.branch = Branch::Left;
    p.x.reverse();
    p.f.reverse();
    for v in p.x.iter_mut().chain(p.f.iter_mut()) {
        *v = -*v;
    }
    p.bracket = (-p.bracket.1, -p.bracket.0);
}
