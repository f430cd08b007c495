//! Explicit monotone scheme for `u_t = a(x) u_xx + G(u_x) + beta V(x)`,
//! homogenization sweeps and residual probes for perturbed profiles.

use std::f64::consts::FRAC_2_PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corrector::{CorrectorProfile, GluedProfile, Problem};
use crate::environment::HillWitness;
use crate::error::{Error, Result};
use crate::hamiltonian::{Branch, QuasiconvexG};

/// Upwind numerical Hamiltonian `max(G(min(p-, 0)), G(max(p+, 0)))`.
#[inline]
pub fn godunov_flux(g: &QuasiconvexG, p_minus: f64, p_plus: f64) -> f64 {
    g.eval(p_minus.min(0.0)).max(g.eval(p_plus.max(0.0)))
}

/// One explicit Euler update of node value `u0` from its neighbours.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn scheme_update(
    g: &QuasiconvexG,
    a: f64,
    v: f64,
    beta: f64,
    um: f64,
    u0: f64,
    up: f64,
    dx: f64,
    dt: f64,
) -> f64 {
    let pm = (u0 - um) / dx;
    let pp = (up - u0) / dx;
    u0 + dt * (a * (up - 2.0 * u0 + um) / (dx * dx) + godunov_flux(g, pm, pp) + beta * v)
}

/// `dt (2 a_max / dx^2 + kappa / dx)`.
pub fn cfl_number(a_max: f64, kappa: f64, dx: f64, dt: f64) -> f64 {
    dt * (2.0 * a_max / (dx * dx) + kappa / dx)
}

/// A priori range of discrete gradients for data of slope `theta`.
pub fn gradient_range(g: &QuasiconvexG, beta: f64, theta: f64) -> Result<(f64, f64)> {
    let lambda_max = 2.0 * beta + g.eval(theta);
    let lo = theta.min(g.branch_inverse(Branch::Left, lambda_max)?) - 1.0;
    let hi = theta.max(g.branch_inverse(Branch::Right, lambda_max)?) + 1.0;
    Ok((lo, hi))
}

/// Ghost-node rule at both ends of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Ghost values continue the boundary value with a fixed slope.
    Linear { slope: f64 },
    /// Ghost values repeat the last interior difference.
    ClampedGradient,
}

/// Discretization of one run on the grid `x_j = j dx`, `|j| <= half_width / dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub dx: f64,
    /// Time step; derived from `cfl_max` when absent.
    pub dt: Option<f64>,
    pub half_width: f64,
    pub t_final: f64,
    pub boundary: Boundary,
    pub cfl_max: f64,
}

impl SchemeConfig {
    pub fn nodes_per_side(&self) -> usize {
        (self.half_width / self.dx).round() as usize
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.nodes_per_side() as i64;
        (-n..=n).map(|j| j as f64 * self.dx).collect()
    }
}

/// Final slice of an [`evolve`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub steps: usize,
    pub cfl: f64,
    /// Gradient range used for the CFL bound.
    pub grad_range: (f64, f64),
    /// Extreme one-sided differences seen during the run.
    pub grad_seen: (f64, f64),
    /// Whether `grad_seen` left `grad_range`.
    pub excursion: bool,
}

impl Evolution {
    /// Value at the node nearest to `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        let dx = self.x[1] - self.x[0];
        let k = ((x - self.x[0]) / dx).round().clamp(0.0, (self.x.len() - 1) as f64) as usize;
        self.u[k]
    }
}

fn data_gradients(u: &[f64], dx: f64) -> (f64, f64) {
    u.windows(2)
        .map(|w| (w[1] - w[0]) / dx)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)))
}

/// Evolves `u0`, given on [`SchemeConfig::grid`], to `t_final`.
pub fn evolve(prob: &Problem<'_>, u0: &[f64], cfg: &SchemeConfig) -> Result<Evolution> {
    let x = cfg.grid();
    if u0.len() != x.len() {
        return Err(Error::InvalidParameter(format!(
            "initial data has {} values for {} nodes",
            u0.len(),
            x.len()
        )));
    }
    if !(cfg.dx > 0.0 && cfg.t_final >= 0.0 && cfg.cfl_max > 0.0) {
        return Err(Error::InvalidParameter("dx, t_final and cfl_max must be positive".into()));
    }
    let env = &*prob.env;
    let g = &*prob.g;
    let beta = prob.beta;
    let (lo, hi) = (x[0] - cfg.dx, x[x.len() - 1] + cfg.dx);
    if !env.contains(lo) || !env.contains(hi) {
        return Err(Error::WindowTooSmall {
            len: env.x_max() - env.x_min(),
            reason: format!("scheme grid needs [{lo}, {hi}]"),
        });
    }
    let (a, v): (Vec<f64>, Vec<f64>) = x.iter().map(|&y| env.sample_unchecked(y)).unzip();
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let theta = match cfg.boundary {
        Boundary::Linear { slope } => slope,
        Boundary::ClampedGradient => 0.0,
    };
    let (r_lo, r_hi) = gradient_range(g, beta, theta)?;
    let (d_lo, d_hi) = data_gradients(u0, cfg.dx);
    let grad_range = (r_lo.min(d_lo - 1.0), r_hi.max(d_hi + 1.0));
    let kappa = g.lipschitz_on(grad_range.0, grad_range.1);
    let unit = cfl_number(a_max, kappa, cfg.dx, 1.0);
    let (dt, steps) = match cfg.dt {
        Some(dt) => {
            let steps = (cfg.t_final / dt).round() as usize;
            (dt, steps)
        }
        None => {
            let steps = if cfg.t_final == 0.0 {
                0
            } else {
                (cfg.t_final * unit / cfg.cfl_max).ceil() as usize
            };
            (if steps == 0 { 0.0 } else { cfg.t_final / steps as f64 }, steps)
        }
    };
    let cfl = unit * dt;
    if cfl > cfg.cfl_max * (1.0 + 1e-12) {
        return Err(Error::CflViolated {
            cfl,
            max: cfg.cfl_max,
        });
    }
    let n = x.len();
    let mut u = u0.to_vec();
    let mut next = vec![0.0; n];
    let (mut seen_lo, mut seen_hi) = (d_lo, d_hi);
    let dx = cfg.dx;
    for step in 0..steps {
        let ghost = |u: &[f64]| match cfg.boundary {
            Boundary::Linear { slope } => (u[0] - slope * dx, u[n - 1] + slope * dx),
            Boundary::ClampedGradient if n >= 2 => (2.0 * u[0] - u[1], 2.0 * u[n - 1] - u[n - 2]),
            Boundary::ClampedGradient => (u[0], u[0]),
        };
        let (gl, gr) = ghost(&u);
        for j in 0..n {
            let um = if j == 0 { gl } else { u[j - 1] };
            let up = if j + 1 == n { gr } else { u[j + 1] };
            next[j] = scheme_update(g, a[j], v[j], beta, um, u[j], up, dx, dt);
        }
        std::mem::swap(&mut u, &mut next);
        let (s_lo, s_hi) = data_gradients(&u, dx);
        if !(s_lo.is_finite() && s_hi.is_finite()) {
            return Err(Error::Unstable {
                t: (step + 1) as f64 * dt,
            });
        }
        seen_lo = seen_lo.min(s_lo);
        seen_hi = seen_hi.max(s_hi);
    }
    Ok(Evolution {
        x,
        u,
        t: steps as f64 * dt,
        dt,
        steps,
        cfl,
        grad_range,
        grad_seen: (seen_lo, seen_hi),
        excursion: seen_lo < grad_range.0 || seen_hi > grad_range.1,
    })
}

/// Settings for [`homogenize_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub dx: f64,
    /// Half-width `M` of the domain in macroscopic units; runs use `[-M/eps, M/eps]`.
    pub half_width: f64,
    pub cfl_max: f64,
    /// Hill `(h, C)` to look for inside the domain of the smallest `eps`.
    pub hill: Option<(f64, f64)>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dx: 0.05,
            half_width: 4.0,
            cfl_max: 0.9,
            hill: None,
        }
    }
}

/// One `eps` of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    /// `eps u(1/eps, 0)` for linear data of slope `theta`.
    pub value: f64,
    /// Change of `value` when `M` is doubled.
    pub domain_sensitivity: f64,
    pub excursion: bool,
}

/// Outcome of [`homogenize_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub theta: f64,
    /// Effective Hamiltonian at `theta`, when supplied.
    pub reference: Option<f64>,
    /// Rows with strictly decreasing `eps`.
    pub rows: Vec<SweepRow>,
    /// Hill found in the domain of the smallest `eps`.
    pub hill: Option<HillWitness>,
    /// Whether a hill was requested.
    pub hill_requested: Option<(f64, f64)>,
}

impl SweepResult {
    /// `|value - reference|` per row.
    pub fn errors(&self) -> Option<Vec<f64>> {
        let r = self.reference?;
        Some(self.rows.iter().map(|row| (row.value - r).abs()).collect())
    }

    /// Writes `theta,epsilon,value,reference,domain_sensitivity` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,epsilon,value,reference,domain_sensitivity")?;
        let r = self.reference.unwrap_or(f64::NAN);
        for row in &self.rows {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?}",
                self.theta, row.epsilon, row.value, r, row.domain_sensitivity
            )?;
        }
        Ok(())
    }
}

/// Runs `eps u(1/eps, 0)` from `u(0, x) = theta x` for every `eps`, each on
/// `[-M/eps, M/eps]` and on the doubled domain.
pub fn homogenize_sweep(
    prob: &Problem<'_>,
    theta: f64,
    epsilons: &[f64],
    cfg: &SweepConfig,
    reference: Option<f64>,
) -> Result<SweepResult> {
    let mut eps: Vec<f64> = epsilons.to_vec();
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter("epsilons must be positive".into()));
    }
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let runs: Vec<(usize, f64)> = eps
        .iter()
        .flat_map(|&e| [(1usize, e), (2usize, e)])
        .collect();
    let values: Result<Vec<(f64, bool)>> = runs
        .par_iter()
        .map(|&(factor, e)| {
            let cfg_run = SchemeConfig {
                dx: cfg.dx,
                dt: None,
                half_width: factor as f64 * cfg.half_width / e,
                t_final: 1.0 / e,
                boundary: Boundary::Linear { slope: theta },
                cfl_max: cfg.cfl_max,
            };
            let u0: Vec<f64> = cfg_run.grid().iter().map(|&x| theta * x).collect();
            let ev = evolve(prob, &u0, &cfg_run)?;
            Ok((e * ev.value_at(0.0), ev.excursion))
        })
        .collect();
    let values = values?;
    let rows = eps
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let (v1, x1) = values[2 * k];
            let (v2, x2) = values[2 * k + 1];
            SweepRow {
                epsilon: e,
                value: v1,
                domain_sensitivity: (v2 - v1).abs(),
                excursion: x1 || x2,
            }
        })
        .collect();
    let e_min = eps[eps.len() - 1];
    let hill = cfg.hill.and_then(|(h, c)| {
        let l = cfg.half_width / e_min;
        prob.env.find_hill_in((-l, l), h, c)
    });
    Ok(SweepResult {
        theta,
        reference,
        rows,
        hill,
        hill_requested: cfg.hill,
    })
}

/// Sign a probe checks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// Residual `>= -tol`.
    Sub,
    /// Residual `<= tol`.
    Super,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Sub => "sub",
            ProbeKind::Super => "super",
        })
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sub" => Ok(ProbeKind::Sub),
            "super" => Ok(ProbeKind::Super),
            _ => Err(Error::InvalidParameter(format!("unknown probe kind `{s}`"))),
        }
    }
}

/// Profile whose perturbation is probed.
#[derive(Debug, Clone, Copy)]
pub enum ProbeTarget<'a> {
    /// `t (lambda -+ (kappa + 1) delta) + F -+ delta psi`, with `F' = f`.
    Corrector {
        profile: &'a CorrectorProfile,
        delta: f64,
    },
    /// Glued antiderivative with drift `beta - 3 delta` (sub) or `beta + 4 delta` (super).
    Glued(&'a GluedProfile),
}

/// Range of the residual `a phi_xx + G(phi_x) + beta V - phi_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub min_residual: f64,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ProbeReport {
    /// Writes `kind,min_residual,max_residual,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,min_residual,max_residual,pass")?;
        writeln!(
            w,
            "{},{:?},{:?},{}",
            self.kind, self.min_residual, self.max_residual, self.pass
        )
    }
}

/// `psi(x) = (2/pi) int_0^x atan`, returned with its first two derivatives.
pub fn psi(x: f64) -> (f64, f64, f64) {
    (
        FRAC_2_PI * (x * x.atan() - 0.5 * x.mul_add(x, 1.0).ln()),
        FRAC_2_PI * x.atan(),
        FRAC_2_PI / x.mul_add(x, 1.0),
    )
}

/// Evaluates the residual of a perturbed profile at interior grid nodes.
pub fn residual_probe(
    prob: &Problem<'_>,
    target: ProbeTarget<'_>,
    kind: ProbeKind,
    tol: f64,
) -> Result<ProbeReport> {
    let env = &*prob.env;
    let g = &*prob.g;
    let beta = prob.beta;
    let sgn = match kind {
        ProbeKind::Sub => -1.0,
        ProbeKind::Super => 1.0,
    };
    let (x, f, dx): (&[f64], &[f64], f64) = match target {
        ProbeTarget::Corrector { profile, .. } => (&profile.x, &profile.f, profile.dx),
        ProbeTarget::Glued(p) => (&p.x, &p.f, p.dx),
    };
    if x.len() < 3 {
        return Err(Error::InvalidParameter("profile needs at least 3 nodes".into()));
    }
    let residual: Box<dyn Fn(usize, f64, f64) -> f64 + '_> = match target {
        ProbeTarget::Corrector { profile, delta } => {
            if delta.is_nan() || delta <= 0.0 {
                return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
            }
            let (lo, hi) = profile.bracket;
            let kappa = g.lipschitz_on(lo - 1.0, hi + 1.0);
            let drift = profile.lambda + sgn * (kappa + 1.0) * delta;
            Box::new(move |j, a, v| {
                let (_, d1, d2) = psi(x[j]);
                let fp = (f[j + 1] - f[j - 1]) / (2.0 * dx);
                a * (fp + sgn * delta * d2) + g.eval(f[j] + sgn * delta * d1) + beta * v - drift
            })
        }
        ProbeTarget::Glued(p) => {
            let drift = match kind {
                ProbeKind::Sub => beta - 3.0 * p.delta,
                ProbeKind::Super => beta + 4.0 * p.delta,
            };
            Box::new(move |j, a, v| {
                let fp = (f[j + 1] - f[j - 1]) / (2.0 * dx);
                a * fp + g.eval(f[j]) + beta * v - drift
            })
        }
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (j, &xj) in x.iter().enumerate().take(x.len() - 1).skip(1) {
        let (a, v) = env.sample(xj)?;
        let r = residual(j, a, v);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let pass = match kind {
        ProbeKind::Sub => lo >= -tol,
        ProbeKind::Super => hi <= tol,
    };
    Ok(ProbeReport {
        kind,
        min_residual: lo,
        max_residual: hi,
        tol,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_env, EnvKind, EnvParams, EnvRealization, EnvSpec};
    use proptest::prelude::*;

    fn constant(v0: f64, a0: f64, window: (f64, f64)) -> EnvRealization {
        let spec = EnvSpec::new(EnvKind::Constant, 0).with_params(EnvParams {
            v0,
            a0,
            ..EnvParams::default()
        });
        generate_env(&spec, window, 0.05).unwrap()
    }

    #[test]
    fn flux_is_consistent() {
        let g = QuasiconvexG::power(2.0).unwrap();
        for (p, want) in [(-2.0, 4.0), (0.0, 0.0), (3.0, 9.0)] {
            assert_eq!(godunov_flux(&g, p, p), want);
        }
        let lq = QuasiconvexG::log_quasiconvex();
        for k in -40..=40 {
            let p = 0.1 * k as f64;
            assert!((godunov_flux(&lq, p, p) - lq.eval(p)).abs() <= 1e-12);
        }
    }

    #[test]
    fn update_is_monotone_on_lattice() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let dx = 0.5;
        let kappa = g.lipschitz_on(-4.0, 4.0);
        let dt = 0.9 / cfl_number(1.0, kappa, dx, 1.0);
        let vals: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
        let up = |um: f64, u0: f64, up: f64| scheme_update(&g, 1.0, 0.3, 1.0, um, u0, up, dx, dt);
        for i in 0..21 {
            for j in 0..21 {
                for k in 0..21 {
                    let base = up(vals[i], vals[j], vals[k]);
                    if i < 20 {
                        assert!(up(vals[i + 1], vals[j], vals[k]) >= base);
                    }
                    if j < 20 {
                        assert!(up(vals[i], vals[j + 1], vals[k]) >= base);
                    }
                    if k < 20 {
                        assert!(up(vals[i], vals[j], vals[k + 1]) >= base);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_data_is_exact() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let env = constant(0.5, 0.7, (-30.0, 30.0));
        let prob = Problem::new(&env, &g, 1.0);
        let theta = 0.8;
        let cfg = SchemeConfig {
            dx: 0.1,
            dt: None,
            half_width: 20.0,
            t_final: 1.0,
            boundary: Boundary::Linear { slope: theta },
            cfl_max: 0.9,
        };
        let u0: Vec<f64> = cfg.grid().iter().map(|&x| theta * x).collect();
        let ev = evolve(&prob, &u0, &cfg).unwrap();
        assert!((ev.t - 1.0).abs() < 1e-12);
        for (x, u) in ev.x.iter().zip(&ev.u) {
            let exact = theta * x + g.eval(theta) + 0.5;
            assert!((u - exact).abs() < 1e-10, "{x}: {u} vs {exact}");
        }
        assert!(!ev.excursion);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let env = constant(0.0, 1.0, (-30.0, 30.0));
        let prob = Problem::new(&env, &g, 1.0);
        let cfg = SchemeConfig {
            dx: 0.1,
            dt: Some(0.01),
            half_width: 5.0,
            t_final: 1.0,
            boundary: Boundary::ClampedGradient,
            cfl_max: 0.9,
        };
        let u0 = vec![0.0; cfg.grid().len()];
        assert!(matches!(evolve(&prob, &u0, &cfg), Err(Error::CflViolated { .. })));
    }

    #[test]
    fn constant_sweep_returns_g() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let env = constant(0.0, 1.0, (-100.0, 100.0));
        let prob = Problem::new(&env, &g, 1.0);
        let cfg = SweepConfig {
            dx: 0.1,
            half_width: 2.0,
            ..SweepConfig::default()
        };
        let r = homogenize_sweep(&prob, 1.3, &[0.125, 0.25, 0.5], &cfg, Some(1.69)).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[0].epsilon, 0.5);
        for (row, err) in r.rows.iter().zip(r.errors().unwrap()) {
            assert!(err < 1e-10, "{row:?}");
            assert!(row.domain_sensitivity < 1e-10);
        }
    }

    #[test]
    fn constant_corrector_probes_pass() {
        let g = QuasiconvexG::power(2.0).unwrap();
        let env = constant(1.0, 0.6, (-30.0, 30.0));
        let prob = Problem::new(&env, &g, 1.0);
        let profile = prob
            .corrector_profile(3.0, Branch::Right, (-10.0, 10.0), 1e-9, 0.01)
            .unwrap();
        for kind in [ProbeKind::Sub, ProbeKind::Super] {
            let target = ProbeTarget::Corrector {
                profile: &profile,
                delta: 0.1,
            };
            let r = residual_probe(&prob, target, kind, 1e-9).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn psi_derivatives_match_differences() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-4;
            let (p, d1, d2) = psi(x);
            assert!(((psi(x + h).0 - psi(x - h).0) / (2.0 * h) - d1).abs() < 1e-7);
            assert!(((psi(x + h).1 - psi(x - h).1) / (2.0 * h) - d2).abs() < 1e-7);
            assert!(p >= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn comparison_is_preserved(
            base in proptest::collection::vec(-1.0f64..1.0, 41),
            gap in proptest::collection::vec(0.0f64..0.5, 41),
            seed in 0u64..1000,
        ) {
            let g = QuasiconvexG::power(2.0).unwrap();
            let env = generate_env(&EnvSpec::new(EnvKind::IidInterp, seed), (-5.0, 5.0), 0.01).unwrap();
            let prob = Problem::new(&env, &g, 1.0);
            let cfg = SchemeConfig {
                dx: 0.1,
                dt: None,
                half_width: 2.0,
                t_final: 0.05,
                boundary: Boundary::Linear { slope: 0.3 },
                cfl_max: 0.9,
            };
            let lower = base.clone();
            let upper: Vec<f64> = base.iter().zip(&gap).map(|(b, d)| b + d).collect();
            let a = evolve(&prob, &lower, &cfg).unwrap();
            let b = evolve(&prob, &upper, &cfg).unwrap();
            prop_assert!(!a.excursion && !b.excursion);
            for (u, w) in a.u.iter().zip(&b.u) {
                prop_assert!(u <= w);
            }
        }
    }
}
