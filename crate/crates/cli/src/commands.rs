use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use viscohom_core::{
    build_effective_h, homogenize_sweep, residual_probe, Branch, GlueConfig, GlueOrder, Problem,
    ProbeKind, ProbeTarget, SweepConfig,
};

use crate::config::{config_err, parse_branch, section, RunConfig};
use crate::Failure;

/// What a command produced.
pub struct Report {
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
    /// False when a scientific check failed; the files are still written.
    pub passed: bool,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    let f = fs::File::create(path)
        .map_err(|e| Failure::Check(anyhow::anyhow!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_with<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Check(anyhow::anyhow!("writing {}: {e}", path.display())))
}

/// Concatenates per-item CSVs, keeping only the first header line.
fn stack_csv<W: Write, T>(
    w: &mut W,
    items: &[T],
    write: impl Fn(&T, &mut Vec<u8>) -> std::io::Result<()>,
) -> std::io::Result<()> {
    for (k, item) in items.iter().enumerate() {
        let mut buf = Vec::new();
        write(item, &mut buf)?;
        let skip = match k {
            0 => 0,
            _ => buf.iter().position(|&b| b == b'\n').map_or(0, |p| p + 1),
        };
        w.write_all(&buf[skip..])?;
    }
    Ok(())
}

pub fn gen_env(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let env = cfg.build_env()?;
    let path = out.join("env.csv");
    write_with(&path, |w| env.write_columnar(w))?;
    let (a_lo, a_hi) = (env.a_min(), env.a_max());
    let v = env.v_values();
    let v_lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let v_hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Report {
        outputs: vec![path],
        summary: json!({
            "kind": env.kind().name(),
            "seed": env.seed(),
            "nodes": env.len(),
            "window": [env.x_min(), env.x_max()],
            "a_range": [a_lo, a_hi],
            "v_range": [v_lo, v_hi],
        }),
        passed: true,
    })
}

pub fn corrector(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let c = section(&cfg.corrector, "corrector")?;
    let branch = parse_branch(&c.branch)?;
    let env = cfg.build_env()?;
    let g = cfg.build_g()?;
    let prob = Problem::new(&env, &g, cfg.problem.beta);
    let p = prob
        .corrector_profile(c.lambda, branch, (c.region[0], c.region[1]), c.tol, c.dx)
        .map_err(Failure::from_core)?;
    let path = out.join("corrector.csv");
    write_with(&path, |w| p.write_csv(w))?;
    Ok(Report {
        outputs: vec![path],
        summary: json!({
            "lambda": p.lambda,
            "branch": p.branch.name(),
            "bracket": [p.bracket.0, p.bracket.1],
            "burn_in": p.burn_in,
            "cert_bound": p.cert_bound,
            "nodes": p.x.len(),
        }),
        passed: true,
    })
}

pub fn theta_curve(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let t = section(&cfg.theta, "theta")?;
    if t.lambdas.is_empty() {
        return Err(config_err("theta.lambdas is empty"));
    }
    let mut branches = t
        .branches
        .iter()
        .map(|s| parse_branch(s))
        .collect::<Result<Vec<_>, _>>()?;
    branches.sort_by_key(|b| b.index());
    branches.dedup();
    let mut lambdas = t.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let env = cfg.build_env()?;
    let g = cfg.build_g()?;
    let prob = Problem::new(&env, &g, cfg.problem.beta);
    let tc = t.theta_config();
    let items: Vec<(Branch, f64)> = branches
        .iter()
        .flat_map(|&b| lambdas.iter().map(move |&l| (b, l)))
        .collect();
    let rows = items
        .par_iter()
        .map(|&(branch, lambda)| {
            let est = prob.theta(lambda, branch, &tc)?;
            let (lo, hi) = prob.bracket(lambda, branch)?;
            let ginv = g.branch_inverse(branch, lambda)?;
            Ok((est, lo, hi, ginv))
        })
        .collect::<viscohom_core::Result<Vec<_>>>()
        .map_err(Failure::from_core)?;
    let path = out.join("theta_curve.csv");
    write_with(&path, |w| {
        writeln!(w, "lambda,branch,theta,ci_halfwidth,bracket_lo,bracket_hi,ginv_lambda")?;
        for (est, lo, hi, ginv) in &rows {
            writeln!(
                w,
                "{:?},{},{:?},{:?},{:?},{:?},{:?}",
                est.lambda, est.branch, est.mean, est.ci_halfwidth, lo, hi, ginv
            )?;
        }
        Ok(())
    })?;
    let max_ci = rows.iter().map(|r| r.0.ci_halfwidth).fold(0.0, f64::max);
    Ok(Report {
        outputs: vec![path],
        summary: json!({ "rows": rows.len(), "max_ci_halfwidth": max_ci }),
        passed: true,
    })
}

pub fn effective(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let e = section(&cfg.effective, "effective")?;
    let tc = cfg.theta.clone().unwrap_or_default().theta_config();
    let env = cfg.build_env()?;
    let g = cfg.build_g()?;
    let prob = Problem::new(&env, &g, cfg.problem.beta);
    let h = build_effective_h(&prob, &e.thetas, &tc, &e.invert_config()).map_err(Failure::from_core)?;
    let path = out.join("effective.csv");
    write_with(&path, |w| h.write_csv(w))?;
    let (l, r) = h.flat_interval();
    Ok(Report {
        outputs: vec![path],
        summary: json!({
            "base_level": h.base_level,
            "flat_interval": [l, r],
            "flat_ci_halfwidth": [h.flat_left.ci_halfwidth, h.flat_right.ci_halfwidth],
            "rows": h.rows.len(),
        }),
        passed: true,
    })
}

/// Rows of an `effective.csv`: slope, value and whether the row is on the flat piece.
fn read_effective_table(path: &Path) -> Result<Vec<(f64, f64, bool)>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || config_err(format!("{} line {}: `{line}`", path.display(), i + 1));
        if cols.len() != 5 {
            return Err(bad());
        }
        let theta: f64 = cols[0].parse().map_err(|_| bad())?;
        let h: f64 = cols[1].parse().map_err(|_| bad())?;
        rows.push((theta, h, cols[4] == "flat"));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows)
}

/// Interpolates the table; slopes between flat rows take the flat value.
fn lookup_effective(rows: &[(f64, f64, bool)], theta: f64) -> Result<f64, Failure> {
    let flat: Vec<&(f64, f64, bool)> = rows.iter().filter(|r| r.2).collect();
    if let (Some(a), Some(b)) = (flat.first(), flat.last()) {
        if theta >= a.0 && theta <= b.0 {
            return Ok(a.1);
        }
    }
    let k = rows.partition_point(|r| r.0 < theta);
    match (k.checked_sub(1).map(|j| rows[j]), rows.get(k)) {
        (_, Some(b)) if b.0 == theta => Ok(b.1),
        (Some(a), Some(b)) => Ok(a.1 + (theta - a.0) / (b.0 - a.0) * (b.1 - a.1)),
        _ => Err(config_err(format!("slope {theta} is outside the effective table"))),
    }
}

pub fn homogenize(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let hc = section(&cfg.homogenize, "homogenize")?;
    let g = cfg.build_g()?;
    let growth = g
        .ensure_growth(cfg.hamiltonian.growth_p, cfg.hamiltonian.growth_n)
        .map_err(Failure::from_core)?;
    let table = hc.effective_table.as_deref().map(read_effective_table).transpose()?;
    let mut thetas = hc.thetas.clone();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let references = thetas
        .iter()
        .map(|&t| table.as_deref().map(|rows| lookup_effective(rows, t)).transpose())
        .collect::<Result<Vec<_>, _>>()?;
    let hill = match (hc.hill_h, hc.hill_c) {
        (Some(h), Some(c)) => Some((h, c)),
        (None, None) => None,
        _ => return Err(config_err("homogenize.hill_h and hill_c must be given together")),
    };
    let env = cfg.build_env()?;
    let prob = Problem::new(&env, &g, cfg.problem.beta);
    let sc = SweepConfig {
        dx: hc.dx,
        half_width: hc.half_width,
        cfl_max: hc.cfl_max,
        hill,
    };
    let mut results = Vec::with_capacity(thetas.len());
    for (&theta, &reference) in thetas.iter().zip(&references) {
        results.push(
            homogenize_sweep(&prob, theta, &hc.epsilons, &sc, reference).map_err(Failure::from_core)?,
        );
    }
    let path = out.join("homogenize.csv");
    write_with(&path, |w| stack_csv(w, &results, |r, b| r.write_csv(b)))?;
    let summary: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "theta": r.theta,
                "reference": r.reference,
                "errors": r.errors(),
                "excursion": r.rows.iter().any(|row| row.excursion),
                "hill": r.hill.map(|w| json!([w.l1, w.l2, w.scaled_length])),
            })
        })
        .collect();
    Ok(Report {
        outputs: vec![path],
        summary: json!({ "growth_checked": growth.passed(), "sweeps": summary }),
        passed: true,
    })
}

pub fn hill_check(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let hc = section(&cfg.hill, "hill")?;
    let env = cfg.build_env()?;
    let range = hc.range.map_or((env.x_min(), env.x_max()), |r| (r[0], r[1]));
    let witness = env.find_hill_in(range, hc.h, hc.c);
    let singular = hc.singular_c.map(|c| env.check_singular_hill(c));
    let path = out.join("hill.csv");
    write_with(&path, |w| {
        writeln!(w, "h,C,status,l1,l2,scaled_length,v_min")?;
        match witness {
            Some(h) => writeln!(
                w,
                "{:?},{:?},found,{:?},{:?},{:?},{:?}",
                hc.h, hc.c, h.l1, h.l2, h.scaled_length, h.v_min_on_interval
            ),
            None => writeln!(w, "{:?},{:?},none,,,,", hc.h, hc.c),
        }
    })?;
    match witness {
        Some(h) => println!("hill [{:?}, {:?}] scaled length {:?}", h.l1, h.l2, h.scaled_length),
        None => println!("none"),
    }
    Ok(Report {
        outputs: vec![path],
        summary: json!({
            "range": [range.0, range.1],
            "witness": witness.map(|h| json!({
                "l1": h.l1,
                "l2": h.l2,
                "scaled_length": h.scaled_length,
                "v_min": h.v_min_on_interval,
            })),
            "singular_point": singular,
        }),
        passed: true,
    })
}

pub fn probe(cfg: &RunConfig, out: &Path) -> Result<Report, Failure> {
    let pc = section(&cfg.probe, "probe")?;
    let beta = cfg.problem.beta;
    let mut kinds = pc
        .kinds
        .iter()
        .map(|s| s.parse::<ProbeKind>().map_err(Failure::from_core))
        .collect::<Result<Vec<_>, _>>()?;
    kinds.sort_by_key(|k| matches!(k, ProbeKind::Super));
    kinds.dedup();
    let env = cfg.build_env()?;
    let g = cfg.build_g()?;
    let prob = Problem::new(&env, &g, beta);
    let tol = pc.tol.unwrap_or(10.0 * pc.dx);
    let reports = match pc.target.as_str() {
        "corrector" => {
            let lambda = pc.lambda.ok_or_else(|| config_err("probe.lambda is required"))?;
            let region = pc.region.ok_or_else(|| config_err("probe.region is required"))?;
            let delta = pc.delta.ok_or_else(|| config_err("probe.delta is required"))?;
            let branch = parse_branch(&pc.branch)?;
            let profile = prob
                .corrector_profile(lambda, branch, (region[0], region[1]), pc.corrector_tol, pc.dx)
                .map_err(Failure::from_core)?;
            kinds
                .iter()
                .map(|&k| residual_probe(&prob, ProbeTarget::Corrector { profile: &profile, delta }, k, tol))
                .collect::<viscohom_core::Result<Vec<_>>>()
        }
        "glued" => {
            let delta = pc.delta.unwrap_or(beta / 4.0);
            let h = pc.hill_h.unwrap_or(1.0 - delta / beta);
            let c = pc.hill_c.unwrap_or(30.0);
            let Some(hill) = env.find_hill(h, c) else {
                return Err(Failure::Check(anyhow::anyhow!(
                    "no hill with h = {h}, C = {c} in the env window"
                )));
            };
            let glue = GlueConfig {
                dx: pc.dx,
                tol: pc.corrector_tol,
                margin: pc.margin,
                blend: pc.blend,
            };
            kinds
                .iter()
                .map(|&k| {
                    let order = match k {
                        ProbeKind::Sub => GlueOrder::TwoOne,
                        ProbeKind::Super => GlueOrder::OneTwo,
                    };
                    let p = prob.build_glued_profile(delta, &hill, order, &glue)?;
                    residual_probe(&prob, ProbeTarget::Glued(&p), k, tol)
                })
                .collect()
        }
        other => return Err(config_err(format!("unknown probe target `{other}`"))),
    }
    .map_err(Failure::from_core)?;
    let path = out.join("probe.csv");
    write_with(&path, |w| stack_csv(w, &reports, |r, b| r.write_csv(b)))?;
    let passed = reports.iter().all(|r| r.pass);
    Ok(Report {
        outputs: vec![path],
        summary: json!({
            "tol": tol,
            "probes": reports
                .iter()
                .map(|r| json!({
                    "kind": r.kind.to_string(),
                    "min_residual": r.min_residual,
                    "max_residual": r.max_residual,
                    "pass": r.pass,
                }))
                .collect::<Vec<_>>(),
        }),
        passed,
    })
}
