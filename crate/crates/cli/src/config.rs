use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use viscohom_core::hamiltonian::parse_table;
use viscohom_core::{
    generate_env, Branch, EnvKind, EnvParams, EnvRealization, EnvSpec, GrowthCertificate,
    InvertConfig, QuasiconvexG, Table, ThetaConfig,
};

use crate::Failure;

/// Parsed configuration file. Sections map to modules; no section nests deeper.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub hamiltonian: HamiltonianSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub output: OutputSection,
    pub corrector: Option<CorrectorSection>,
    pub theta: Option<ThetaSection>,
    pub effective: Option<EffectiveSection>,
    pub homogenize: Option<HomogenizeSection>,
    pub hill: Option<HillSection>,
    pub probe: Option<ProbeSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    /// Read a columnar env file instead of generating one.
    pub file: Option<PathBuf>,
    pub kind: Option<String>,
    pub seed: Option<u64>,
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_dx_env")]
    pub dx_env: f64,
    pub a0: Option<f64>,
    pub v0: Option<f64>,
    pub kappa: Option<f64>,
    pub corr_len: Option<f64>,
    pub gain: Option<f64>,
    pub a_floor: Option<f64>,
}

fn default_dx_env() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    /// `power`, `asym-power`, `log` or `table`.
    pub family: String,
    pub gamma: Option<f64>,
    pub gamma_left: Option<f64>,
    pub gamma_right: Option<f64>,
    /// `p,G` points spanning both signs of `p`.
    pub table: Option<PathBuf>,
    pub growth_gamma: Option<f64>,
    pub growth_c1: Option<f64>,
    pub growth_c2: Option<f64>,
    /// Half-width of the lattice used to check the growth certificate.
    #[serde(default = "default_growth_p")]
    pub growth_p: f64,
    #[serde(default = "default_growth_n")]
    pub growth_n: usize,
}

fn default_growth_p() -> f64 {
    10.0
}

fn default_growth_n() -> usize {
    400
}

impl Default for HamiltonianSection {
    fn default() -> Self {
        HamiltonianSection {
            family: "power".into(),
            gamma: None,
            gamma_left: None,
            gamma_right: None,
            table: None,
            growth_gamma: None,
            growth_c1: None,
            growth_c2: None,
            growth_p: default_growth_p(),
            growth_n: default_growth_n(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub beta: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorSection {
    pub lambda: f64,
    #[serde(default = "default_branch")]
    pub branch: String,
    pub region: [f64; 2],
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dx")]
    pub dx: f64,
}

fn default_branch() -> String {
    "right".into()
}

fn default_tol() -> f64 {
    1e-6
}

fn default_dx() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSection {
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_branches")]
    pub branches: Vec<String>,
    #[serde(default = "default_x_len")]
    pub x_len: f64,
    #[serde(default = "default_batches")]
    pub n_batches: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dx")]
    pub dx: f64,
}

fn default_branches() -> Vec<String> {
    vec!["left".into(), "right".into()]
}

fn default_x_len() -> f64 {
    ThetaConfig::default().x_len
}

fn default_batches() -> usize {
    ThetaConfig::default().n_batches
}

impl Default for ThetaSection {
    fn default() -> Self {
        ThetaSection {
            lambdas: Vec::new(),
            branches: default_branches(),
            x_len: default_x_len(),
            n_batches: default_batches(),
            tol: default_tol(),
            dx: default_dx(),
        }
    }
}

impl ThetaSection {
    pub fn theta_config(&self) -> ThetaConfig {
        ThetaConfig {
            x_len: self.x_len,
            n_batches: self.n_batches,
            tol: self.tol,
            dx: self.dx,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveSection {
    pub thetas: Vec<f64>,
    #[serde(default = "default_theta_tol")]
    pub theta_tol: f64,
    #[serde(default = "default_max_ci")]
    pub max_ci: f64,
}

fn default_theta_tol() -> f64 {
    InvertConfig::default().theta_tol
}

fn default_max_ci() -> f64 {
    InvertConfig::default().max_ci
}

impl EffectiveSection {
    pub fn invert_config(&self) -> InvertConfig {
        InvertConfig {
            theta_tol: self.theta_tol,
            max_ci: self.max_ci,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizeSection {
    pub thetas: Vec<f64>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_sweep_dx")]
    pub dx: f64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_cfl")]
    pub cfl_max: f64,
    pub hill_h: Option<f64>,
    pub hill_c: Option<f64>,
    /// Effective Hamiltonian CSV written by the `effective` command.
    pub effective_table: Option<PathBuf>,
}

fn default_sweep_dx() -> f64 {
    0.05
}

fn default_half_width() -> f64 {
    4.0
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HillSection {
    pub h: f64,
    pub c: f64,
    /// Search range; the whole env window when absent.
    pub range: Option<[f64; 2]>,
    /// Also look for a node with `a <= singular_c` and `V >= 1 - singular_c`.
    pub singular_c: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// `corrector` or `glued`.
    pub target: String,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    pub delta: Option<f64>,
    pub tol: Option<f64>,
    #[serde(default = "default_dx")]
    pub dx: f64,
    #[serde(default = "default_probe_corr_tol")]
    pub corrector_tol: f64,
    pub lambda: Option<f64>,
    #[serde(default = "default_branch")]
    pub branch: String,
    pub region: Option<[f64; 2]>,
    pub hill_h: Option<f64>,
    pub hill_c: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_blend")]
    pub blend: f64,
}

fn default_kinds() -> Vec<String> {
    vec!["sub".into(), "super".into()]
}

fn default_probe_corr_tol() -> f64 {
    1e-3
}

fn default_margin() -> f64 {
    2.0
}

fn default_blend() -> f64 {
    1.0
}

pub fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow::anyhow!(msg.into()))
}

impl RunConfig {
    /// Reads `path`, resolving relative file references against its directory.
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.env.file);
        rebase(&mut cfg.hamiltonian.table);
        rebase(&mut cfg.output.dir);
        if let Some(h) = cfg.homogenize.as_mut() {
            rebase(&mut h.effective_table);
        }
        Ok(cfg)
    }

    /// Checks everything that does not need an environment sample.
    pub fn validate(&self) -> Result<(), Failure> {
        if !(self.problem.beta > 0.0 && self.problem.beta.is_finite()) {
            return Err(config_err(format!("problem.beta = {} must be positive", self.problem.beta)));
        }
        if self.env.file.is_none() {
            self.env_spec()?;
            if self.env.window.is_none() {
                return Err(config_err("env.window is required"));
            }
        }
        Ok(())
    }

    pub fn env_spec(&self) -> Result<EnvSpec, Failure> {
        let e = &self.env;
        let kind: EnvKind = e
            .kind
            .as_deref()
            .ok_or_else(|| config_err("env.kind is required"))?
            .parse()
            .map_err(Failure::from_core)?;
        let seed = e
            .seed
            .ok_or_else(|| config_err("env.seed is required (or pass --seed-override)"))?;
        let d = EnvParams::default();
        let params = EnvParams {
            a0: e.a0.unwrap_or(d.a0),
            v0: e.v0.unwrap_or(d.v0),
            kappa: e.kappa.unwrap_or(d.kappa),
            corr_len: e.corr_len.unwrap_or(d.corr_len),
            gain: e.gain.unwrap_or(d.gain),
            a_floor: e.a_floor.unwrap_or(d.a_floor),
        };
        let spec = EnvSpec::new(kind, seed).with_params(params);
        spec.validate().map_err(Failure::from_core)?;
        Ok(spec)
    }

    pub fn build_env(&self) -> Result<EnvRealization, Failure> {
        if let Some(path) = &self.env.file {
            let f = fs::File::open(path)
                .map_err(|e| config_err(format!("cannot open {}: {e}", path.display())))?;
            return EnvRealization::read_columnar(std::io::BufReader::new(f))
                .map_err(Failure::from_core);
        }
        let spec = self.env_spec()?;
        let [lo, hi] = self.env.window.ok_or_else(|| config_err("env.window is required"))?;
        generate_env(&spec, (lo, hi), self.env.dx_env).map_err(Failure::from_core)
    }

    pub fn build_g(&self) -> Result<QuasiconvexG, Failure> {
        let h = &self.hamiltonian;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| config_err(format!("hamiltonian.{name} is required")))
        };
        let g = match h.family.as_str() {
            "power" => QuasiconvexG::power(h.gamma.unwrap_or(2.0)),
            "asym-power" => {
                QuasiconvexG::asym_power(need(h.gamma_left, "gamma_left")?, need(h.gamma_right, "gamma_right")?)
            }
            "log" => Ok(QuasiconvexG::log_quasiconvex()),
            "table" => {
                let path = h
                    .table
                    .as_ref()
                    .ok_or_else(|| config_err("hamiltonian.table is required"))?;
                let text = fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                let pts = parse_table(&text).map_err(Failure::from_core)?;
                let left: Vec<_> = pts.iter().copied().filter(|p| p.0 <= 0.0).collect();
                let right: Vec<_> = pts.iter().copied().filter(|p| p.0 >= 0.0).collect();
                Table::new(&left, &right).map(QuasiconvexG::tabulated)
            }
            other => return Err(config_err(format!("unknown hamiltonian family `{other}`"))),
        }
        .map_err(Failure::from_core)?;
        Ok(match (h.growth_gamma, h.growth_c1, h.growth_c2) {
            (Some(gamma), Some(c1), Some(c2)) => g.with_growth(GrowthCertificate { gamma, c1, c2 }),
            (None, None, None) => g,
            _ => {
                return Err(config_err(
                    "growth_gamma, growth_c1 and growth_c2 must be given together",
                ))
            }
        })
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

pub fn parse_branch(s: &str) -> Result<Branch, Failure> {
    s.parse().map_err(Failure::from_core)
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, Failure> {
    s.as_ref()
        .ok_or_else(|| config_err(format!("section [{name}] is required for this command")))
}
