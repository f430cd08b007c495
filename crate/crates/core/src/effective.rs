//! Effective Hamiltonian from the averaged corrector map `lambda -> theta_i(lambda)`.
//!
//! Outside the interval `(theta_1(b), theta_2(b))`, where `b` is the base level,
//! the effective Hamiltonian is the inverse of the monotone map `theta_i`; inside
//! it is constant and equal to `b`.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::corrector::{Problem, ThetaEstimate};
use crate::error::{Error, Result};
use crate::hamiltonian::Branch;

/// Resolution of each ergodic average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaConfig {
    pub x_len: f64,
    pub n_batches: usize,
    /// Corrector accuracy.
    pub tol: f64,
    pub dx: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig {
            x_len: 2000.0,
            n_batches: 20,
            tol: 1e-6,
            dx: 0.01,
        }
    }
}

/// Stopping rules for [`invert_theta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertConfig {
    /// Target `|theta_hat(lambda) - theta|`.
    pub theta_tol: f64,
    /// Largest acceptable confidence half-width of the final estimate.
    pub max_ci: f64,
}

impl Default for InvertConfig {
    fn default() -> Self {
        InvertConfig {
            theta_tol: 1e-3,
            max_ci: 0.05,
        }
    }
}

/// A level with `theta_i(lambda) = theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub theta: f64,
    pub branch: Branch,
    pub lambda: f64,
    /// Final bisection interval.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Interval for the exact level, widened by the statistical error.
    pub h_lo: f64,
    pub h_hi: f64,
    pub estimate: ThetaEstimate,
}

impl Problem<'_> {
    /// [`Problem::estimate_theta`] with settings from `cfg`.
    pub fn theta(&self, lambda: f64, branch: Branch, cfg: &ThetaConfig) -> Result<ThetaEstimate> {
        self.estimate_theta(lambda, branch, cfg.x_len, cfg.n_batches, cfg.tol, cfg.dx)
    }
}

/// Bound on `|d lambda / d theta_i|` near `lambda`: the Lipschitz constant of
/// `G_i` on `[G_i^-1(lambda - 1 - beta), G_i^-1(lambda + 2)]`.
fn level_lipschitz(prob: &Problem<'_>, lambda: f64, branch: Branch) -> Result<f64> {
    let lo = prob.g.branch_inverse(branch, (lambda - 1.0 - prob.beta).max(0.0))?;
    let hi = prob.g.branch_inverse(branch, lambda + 2.0)?;
    Ok(prob.g.lipschitz_on(lo, hi))
}

/// Solves `theta_i(lambda) = theta` by bisection, doubling the upper level first.
///
/// The same realization is used at every level, so the estimated map is
/// monotone and bisection is well posed. Fails inside the flat interval.
pub fn invert_theta(
    prob: &Problem<'_>,
    theta: f64,
    branch: Branch,
    cfg: &ThetaConfig,
    inv: &InvertConfig,
) -> Result<Inversion> {
    let sgn = branch.sign();
    let target = sgn * theta;
    let base = prob.base_level();
    let check_ci = |e: &ThetaEstimate| {
        if e.ci_halfwidth > inv.max_ci {
            Err(Error::CiTooLarge {
                ci: e.ci_halfwidth,
                max: inv.max_ci,
            })
        } else {
            Ok(())
        }
    };
    let finish = |lambda: f64, lo: f64, hi: f64, est: ThetaEstimate| -> Result<Inversion> {
        let kappa = level_lipschitz(prob, lambda, branch)?;
        let spread = kappa * (est.ci_halfwidth + (sgn * est.mean - target).abs());
        Ok(Inversion {
            theta,
            branch,
            lambda,
            lambda_lo: lo,
            lambda_hi: hi,
            h_lo: (lo.min(lambda) - spread).max(base),
            h_hi: hi.max(lambda) + spread,
            estimate: est,
        })
    };
    // The base-level corrector is the slowest to converge, so it is only
    // computed when the target could lie at or below the flat endpoint.
    let (b_lo, b_hi) = prob.bracket(base, branch)?;
    let far = (sgn * b_lo).max(sgn * b_hi);
    let est0 = if target <= far {
        let e = prob.theta(base, branch, cfg)?;
        check_ci(&e)?;
        Some(e)
    } else {
        None
    };
    if let Some(est0) = est0.filter(|e| target <= sgn * e.mean) {
        let t0 = sgn * est0.mean;
        if target >= t0 - est0.ci_halfwidth - inv.theta_tol {
            return finish(base, base, base, est0);
        }
        let (lo, hi) = match branch {
            Branch::Right => (f64::NEG_INFINITY, est0.mean),
            Branch::Left => (est0.mean, f64::INFINITY),
        };
        return Err(Error::InsideFlatPiece { theta, lo, hi });
    }
    let mut lo = base;
    let mut step = 1.0;
    let mut hi = base + step;
    loop {
        let est = prob.theta(hi, branch, cfg)?;
        if sgn * est.mean >= target {
            break;
        }
        lo = hi;
        step *= 2.0;
        hi = base + step;
        if step > 1e8 {
            return Err(Error::NoUpperLevel(theta));
        }
    }
    let mut last = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let est = prob.theta(mid, branch, cfg)?;
        let t = sgn * est.mean;
        last = Some((mid, est));
        if (t - target).abs() <= inv.theta_tol {
            break;
        }
        if t < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    let (lambda, est) = last.expect("at least one bisection step");
    check_ci(&est)?;
    finish(lambda, lo, hi, est)
}

/// Which piece of the effective Hamiltonian a slope falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    Left,
    Flat,
    Right,
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Piece::Left => "left",
            Piece::Flat => "flat",
            Piece::Right => "right",
        })
    }
}

/// One tabulated value of the effective Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRow {
    pub theta: f64,
    pub h: f64,
    pub h_lo: f64,
    pub h_hi: f64,
    pub piece: Piece,
}

/// Tabulated effective Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveH {
    pub base_level: f64,
    /// Averages of both correctors at the base level: the ends of the flat piece.
    pub flat_left: ThetaEstimate,
    pub flat_right: ThetaEstimate,
    /// Rows sorted by slope.
    pub rows: Vec<EffectiveRow>,
}

impl EffectiveH {
    /// The flat interval `(theta_1(b), theta_2(b))` as estimated.
    pub fn flat_interval(&self) -> (f64, f64) {
        (self.flat_left.mean, self.flat_right.mean)
    }

    /// Piecewise-linear interpolation of the table; exact `b` on the flat piece.
    pub fn eval(&self, theta: f64) -> Result<f64> {
        let (l, r) = self.flat_interval();
        if theta > l && theta < r {
            return Ok(self.base_level);
        }
        let rows = &self.rows;
        let (first, last) = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => (a.theta, b.theta),
            _ => (f64::NAN, f64::NAN),
        };
        if rows.is_empty() || theta < first || theta > last {
            return Err(Error::OutsideTable {
                theta,
                lo: first,
                hi: last,
            });
        }
        let k = rows.partition_point(|r| r.theta <= theta).clamp(1, rows.len() - 1);
        let (a, b) = (&rows[k - 1], &rows[k]);
        if b.theta == a.theta {
            return Ok(a.h);
        }
        let w = (theta - a.theta) / (b.theta - a.theta);
        Ok(a.h + w * (b.h - a.h))
    }

    /// `(theta, lambda)` pairs on one monotone branch.
    pub fn branch_table(&self, branch: Branch) -> Vec<(f64, f64)> {
        let piece = match branch {
            Branch::Left => Piece::Left,
            Branch::Right => Piece::Right,
        };
        self.rows
            .iter()
            .filter(|r| r.piece == piece)
            .map(|r| (r.theta, r.h))
            .collect()
    }

    /// Writes `theta,H,H_lo,H_hi,branch` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,H,H_lo,H_hi,branch")?;
        for r in &self.rows {
            writeln!(w, "{:?},{:?},{:?},{:?},{}", r.theta, r.h, r.h_lo, r.h_hi, r.piece)?;
        }
        Ok(())
    }
}

/// Effective Hamiltonian at each slope in `thetas`, evaluated in parallel.
pub fn build_effective_h(
    prob: &Problem<'_>,
    thetas: &[f64],
    cfg: &ThetaConfig,
    inv: &InvertConfig,
) -> Result<EffectiveH> {
    let base = prob.base_level();
    let (flat_left, flat_right) = rayon::join(
        || prob.theta(base, Branch::Left, cfg),
        || prob.theta(base, Branch::Right, cfg),
    );
    let (flat_left, flat_right) = (flat_left?, flat_right?);
    let mut sorted = thetas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rows: Result<Vec<EffectiveRow>> = sorted
        .par_iter()
        .map(|&theta| {
            let branch = if theta >= flat_right.mean {
                Branch::Right
            } else if theta <= flat_left.mean {
                Branch::Left
            } else {
                return Ok(EffectiveRow {
                    theta,
                    h: base,
                    h_lo: base,
                    h_hi: base,
                    piece: Piece::Flat,
                });
            };
            let r = invert_theta(prob, theta, branch, cfg, inv)?;
            Ok(EffectiveRow {
                theta,
                h: r.lambda,
                h_lo: r.h_lo,
                h_hi: r.h_hi,
                piece: match branch {
                    Branch::Left => Piece::Left,
                    Branch::Right => Piece::Right,
                },
            })
        })
        .collect();
    Ok(EffectiveH {
        base_level: base,
        flat_left,
        flat_right,
        rows: rows?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_env, EnvKind, EnvParams, EnvSpec};
    use crate::hamiltonian::QuasiconvexG;

    fn constant(v0: f64) -> crate::environment::EnvRealization {
        let spec = EnvSpec::new(EnvKind::Constant, 0).with_params(EnvParams {
            v0,
            ..EnvParams::default()
        });
        generate_env(&spec, (-20.0, 60.0), 0.01).unwrap()
    }

    fn quick() -> ThetaConfig {
        ThetaConfig {
            x_len: 20.0,
            n_batches: 10,
            tol: 1e-8,
            dx: 0.01,
        }
    }

    #[test]
    fn constant_environment_inverts_to_g() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let inv = InvertConfig {
            theta_tol: 1e-10,
            max_ci: 1e-6,
        };
        let env = constant(0.0);
        let prob = Problem::new(&env, &g, 1.0);
        let r = invert_theta(&prob, 2.0, Branch::Right, &quick(), &inv).unwrap();
        assert!((r.lambda - 4.0).abs() < 1e-8);
        assert!(r.h_lo <= r.lambda && r.lambda <= r.h_hi);
        let env = constant(1.0);
        let prob = Problem::new(&env, &g, 1.0);
        let r = invert_theta(&prob, 1.5, Branch::Right, &quick(), &inv).unwrap();
        assert!((r.lambda - 3.25).abs() < 1e-8);
        let r = invert_theta(&prob, -1.5, Branch::Left, &quick(), &inv).unwrap();
        assert!((r.lambda - 3.25).abs() < 1e-8);
    }

    #[test]
    fn constant_environment_has_degenerate_flat_piece() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let env = constant(0.0);
        let prob = Problem::new(&env, &g, 1.0);
        let inv = InvertConfig {
            theta_tol: 1e-10,
            max_ci: 1e-6,
        };
        let thetas = [-1.5, -0.5, 0.0, 0.5, 1.0, 2.0];
        let h = build_effective_h(&prob, &thetas, &quick(), &inv).unwrap();
        assert_eq!(h.flat_interval(), (0.0, 0.0));
        for r in &h.rows {
            assert!((r.h - r.theta * r.theta).abs() < 1e-8, "{r:?}");
        }
        assert!((h.eval(0.75).unwrap() - 0.5 * (0.25 + 1.0)).abs() < 1e-8);
        assert!(h.eval(5.0).is_err());
    }

    #[test]
    fn inside_flat_piece_is_an_error() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let spec = EnvSpec::new(EnvKind::Periodic, 1);
        let env = generate_env(&spec, (-1200.0, 1100.0), 0.01).unwrap();
        let prob = Problem::new(&env, &g, 1.0);
        let cfg = ThetaConfig {
            x_len: 50.0,
            n_batches: 10,
            tol: 1e-3,
            dx: 0.01,
        };
        let r = invert_theta(&prob, 0.0, Branch::Right, &cfg, &InvertConfig::default());
        assert!(matches!(r, Err(Error::InsideFlatPiece { .. })));
    }

    #[test]
    fn periodic_inversion_matches_dense_grid() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let spec = EnvSpec::new(EnvKind::Periodic, 4);
        let env = generate_env(&spec, (-100.0, 60.0), 0.01).unwrap();
        let prob = Problem::new(&env, &g, 1.0);
        let cfg = ThetaConfig {
            x_len: 50.0,
            n_batches: 10,
            tol: 1e-9,
            dx: 0.01,
        };
        let inv = InvertConfig {
            theta_tol: 1e-5,
            max_ci: 1e-3,
        };
        let r = invert_theta(&prob, 1.5, Branch::Right, &cfg, &inv).unwrap();
        // Dense grid of levels, then linear interpolation.
        let levels: Vec<f64> = (0..=40).map(|k| 1.5 + 0.05 * k as f64).collect();
        let thetas: Vec<f64> = levels
            .iter()
            .map(|&l| prob.theta(l, Branch::Right, &cfg).unwrap().mean)
            .collect();
        let k = thetas.iter().position(|&t| t >= 1.5).unwrap();
        let w = (1.5 - thetas[k - 1]) / (thetas[k] - thetas[k - 1]);
        let oracle = levels[k - 1] + w * 0.05;
        assert!((r.lambda - oracle).abs() < 1e-3, "{} vs {oracle}", r.lambda);
    }

    #[test]
    fn iid_flat_endpoints_are_strictly_bracketed() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let spec = EnvSpec::new(EnvKind::IidInterp, 11);
        let env = generate_env(&spec, (-3500.0, 3500.0), 0.01).unwrap();
        let prob = Problem::new(&env, &g, 1.0);
        let cfg = ThetaConfig {
            x_len: 2000.0,
            n_batches: 20,
            tol: 1e-3,
            dx: 0.02,
        };
        let h = build_effective_h(&prob, &[-2.0, 0.0, 2.0], &cfg, &InvertConfig::default()).unwrap();
        let (l, r) = h.flat_interval();
        assert!(-1.0 < l && l < 0.0 && 0.0 < r && r < 1.0, "{l} {r}");
        assert_eq!(h.rows[1].piece, Piece::Flat);
        assert_eq!(h.rows[1].h, 1.0);
        assert!(h.rows[0].h > 1.0 && h.rows[2].h > 1.0);
    }

    #[test]
    fn periodic_branch_tables_are_monotone() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let spec = EnvSpec::new(EnvKind::Periodic, 2);
        let env = generate_env(&spec, (-1300.0, 1300.0), 0.01).unwrap();
        let prob = Problem::new(&env, &g, 1.0);
        let cfg = ThetaConfig {
            x_len: 40.0,
            n_batches: 10,
            tol: 1e-3,
            dx: 0.01,
        };
        let thetas: Vec<f64> = (-6..=6).map(|k| 0.5 * k as f64).collect();
        let h = build_effective_h(&prob, &thetas, &cfg, &InvertConfig::default()).unwrap();
        for b in [Branch::Left, Branch::Right] {
            let t = h.branch_table(b);
            assert!(t.len() >= 3);
            for w in t.windows(2) {
                let d = (w[1].1 - w[0].1) * b.sign();
                assert!(d > 0.0, "{b:?} {w:?}");
            }
        }
        for r in &h.rows {
            assert!(r.h >= 1.0 && r.h_lo <= r.h && r.h <= r.h_hi);
        }
    }
}
