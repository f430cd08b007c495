//! Stationary random environments `(a, V)` on a uniform lattice.
//!
//! Every generator is a deterministic function of `(seed, absolute coordinate)`:
//! random values are drawn from a counter-based ChaCha stream addressed by the
//! knot index, so regenerating a translated window reproduces the same field.
//! Between lattice nodes both coefficients are linearly interpolated.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

const STREAM_PHASE: u64 = 0;
const STREAM_V: u64 = 1;
const STREAM_A: u64 = 2;
const LATTICE_EPS: f64 = 1e-9;

/// Generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    /// `V` interpolates iid uniforms at the integers (random phase); `a` is constant.
    IidInterp,
    /// Logistic squash of a smooth Gaussian moving average; `a` from an independent field.
    GaussSquash,
    /// `V = sin^2(pi (x + U))`, `a = 1`.
    Periodic,
    /// `V` as in `IidInterp`, `a = max(1 - V, a_floor)`.
    CoupledSingular,
    /// `V = v0`, `a = a0`. Has no hills unless `v0 = 1`.
    Constant,
}

impl EnvKind {
    pub const ALL: [EnvKind; 5] = [
        EnvKind::IidInterp,
        EnvKind::GaussSquash,
        EnvKind::Periodic,
        EnvKind::CoupledSingular,
        EnvKind::Constant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::IidInterp => "iid-interp",
            EnvKind::GaussSquash => "gauss-squash",
            EnvKind::Periodic => "periodic",
            EnvKind::CoupledSingular => "coupled-singular",
            EnvKind::Constant => "constant",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// Tunable constants of the generator families. Unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    /// Constant diffusion for `IidInterp` and `Constant`.
    pub a0: f64,
    /// Constant potential for `Constant`.
    pub v0: f64,
    /// Lower bound of `a` for `GaussSquash`.
    pub kappa: f64,
    /// Kernel radius for `GaussSquash`.
    pub corr_len: f64,
    /// Logistic gain for `GaussSquash`.
    pub gain: f64,
    /// Smallest diffusion for `CoupledSingular`.
    pub a_floor: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            a0: 1.0,
            v0: 1.0,
            kappa: 0.5,
            corr_len: 1.0,
            gain: 2.0,
            a_floor: 1e-3,
        }
    }
}

/// A generator: family, constants and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub params: EnvParams,
    pub seed: u64,
}

impl EnvSpec {
    pub fn new(kind: EnvKind, seed: u64) -> Self {
        EnvSpec {
            kind,
            params: EnvParams::default(),
            seed,
        }
    }

    pub fn with_params(mut self, params: EnvParams) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self.kind {
            EnvKind::IidInterp if !(p.a0 > 0.0 && p.a0 <= 1.0) => bad("a0 must lie in (0, 1]"),
            EnvKind::Constant if !(p.a0 > 0.0 && p.a0 <= 1.0) => bad("a0 must lie in (0, 1]"),
            EnvKind::Constant if !(0.0..=1.0).contains(&p.v0) => bad("v0 must lie in [0, 1]"),
            EnvKind::GaussSquash if !(p.kappa > 0.0 && p.kappa <= 1.0) => {
                bad("kappa must lie in (0, 1]")
            }
            EnvKind::GaussSquash if !(p.corr_len > 0.0 && p.gain > 0.0) => {
                bad("corr_len and gain must be positive")
            }
            EnvKind::CoupledSingular if !(p.a_floor > 0.0 && p.a_floor <= 1.0) => {
                bad("a_floor must lie in (0, 1]")
            }
            _ => Ok(()),
        }
    }

    /// Essential infimum and supremum of `V` under the law of this family.
    pub fn v_law_bounds(&self) -> (f64, f64) {
        match self.kind {
            EnvKind::Constant => (self.params.v0, self.params.v0),
            _ => (0.0, 1.0),
        }
    }
}

/// Affine map from local coordinates to generator coordinates,
/// `y = sign * ((k + shift_steps) * dx + shift_frac)` at lattice node `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Frame {
    sign: f64,
    shift_steps: i64,
    shift_frac: f64,
}

impl Frame {
    const IDENTITY: Frame = Frame {
        sign: 1.0,
        shift_steps: 0,
        shift_frac: 0.0,
    };

    fn coord(&self, k: i64, dx: f64) -> f64 {
        self.sign * ((k + self.shift_steps) as f64 * dx + self.shift_frac)
    }
}

fn knot_rng(seed: u64, stream: u64, n: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // 256 words per knot leave room for rejection sampling.
    rng.set_word_pos(u128::from((n as u64) ^ (1 << 63)) << 8);
    rng
}

fn knot_uniform(seed: u64, stream: u64, n: i64) -> f64 {
    knot_rng(seed, stream, n).random::<f64>()
}

fn knot_normal(seed: u64, stream: u64, n: i64) -> f64 {
    StandardNormal.sample(&mut knot_rng(seed, stream, n))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn kernel(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - r * r).powi(4)
    }
}

/// Knots per kernel radius for the Gaussian moving average.
const GAUSS_KNOTS_PER_RADIUS: f64 = 4.0;

struct Generator {
    spec: EnvSpec,
    phase: f64,
    gauss_norm: f64,
}

impl Generator {
    fn new(spec: EnvSpec) -> Self {
        let phase = knot_uniform(spec.seed, STREAM_PHASE, 0);
        let gauss_norm = if spec.kind == EnvKind::GaussSquash {
            let int_w2 = adaptive_simpson(&|r: f64| kernel(r).powi(2), -1.0, 1.0, 1e-14);
            (GAUSS_KNOTS_PER_RADIUS * int_w2).sqrt()
        } else {
            1.0
        };
        Generator {
            spec,
            phase,
            gauss_norm,
        }
    }

    /// Evaluates `(a, V)` at the given generator coordinates.
    fn fill(&self, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| (l.min(y), h.max(y)));
        let p = &self.spec.params;
        let seed = self.spec.seed;
        match self.spec.kind {
            EnvKind::Constant => (vec![p.a0; ys.len()], vec![p.v0; ys.len()]),
            EnvKind::Periodic => {
                let v = ys
                    .iter()
                    .map(|y| (std::f64::consts::PI * (y + self.phase)).sin().powi(2))
                    .collect();
                (vec![1.0; ys.len()], v)
            }
            EnvKind::IidInterp | EnvKind::CoupledSingular => {
                let n0 = (lo - self.phase).floor() as i64;
                let n1 = (hi - self.phase).floor() as i64 + 1;
                let knots: Vec<f64> = (n0..=n1).map(|n| knot_uniform(seed, STREAM_V, n)).collect();
                let v: Vec<f64> = ys
                    .iter()
                    .map(|&y| {
                        let t = y - self.phase;
                        let n = t.floor();
                        let w = t - n;
                        let i = (n as i64 - n0) as usize;
                        (1.0 - w) * knots[i] + w * knots[i + 1]
                    })
                    .collect();
                let a = if self.spec.kind == EnvKind::IidInterp {
                    vec![p.a0; ys.len()]
                } else {
                    v.iter().map(|v| (1.0 - v).max(p.a_floor)).collect()
                };
                (a, v)
            }
            EnvKind::GaussSquash => {
                let h = p.corr_len / GAUSS_KNOTS_PER_RADIUS;
                let n0 = ((lo - p.corr_len) / h - self.phase).floor() as i64 - 1;
                let n1 = ((hi + p.corr_len) / h - self.phase).ceil() as i64 + 1;
                let xi_v: Vec<f64> = (n0..=n1).map(|n| knot_normal(seed, STREAM_V, n)).collect();
                let xi_a: Vec<f64> = (n0..=n1).map(|n| knot_normal(seed, STREAM_A, n)).collect();
                let mut a = Vec::with_capacity(ys.len());
                let mut v = Vec::with_capacity(ys.len());
                for &y in ys {
                    let first = ((y - p.corr_len) / h - self.phase).floor() as i64;
                    let last = ((y + p.corr_len) / h - self.phase).ceil() as i64;
                    let (mut gv, mut ga) = (0.0, 0.0);
                    for n in first..=last {
                        let w = kernel((y - (n as f64 + self.phase) * h) / p.corr_len);
                        let i = (n - n0) as usize;
                        gv += w * xi_v[i];
                        ga += w * xi_a[i];
                    }
                    v.push(logistic(p.gain * gv / self.gauss_norm));
                    a.push(p.kappa + (1.0 - p.kappa) * logistic(p.gain * ga / self.gauss_norm));
                }
                (a, v)
            }
        }
    }
}

/// Evaluates the generator directly at generator coordinates `ys`,
/// bypassing any lattice. Returns `(a, V)`.
pub fn eval_generator(spec: &EnvSpec, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    Generator::new(*spec).fill(ys)
}

/// Interval `[l1, l2]` on which `V >= h` with scaled length at least the requested `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillWitness {
    pub l1: f64,
    pub l2: f64,
    pub scaled_length: f64,
    pub v_min_on_interval: f64,
}

/// A sampled environment on a window of lattice nodes `k * dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvRealization {
    spec: EnvSpec,
    frame: Frame,
    i0: i64,
    dx: f64,
    a: Vec<f64>,
    v: Vec<f64>,
    s: Vec<f64>,
}

/// Samples `spec` on the lattice nodes of `dx_env` inside `window`.
pub fn generate_env(spec: &EnvSpec, window: (f64, f64), dx_env: f64) -> Result<EnvRealization> {
    spec.validate()?;
    if !(dx_env > 0.0 && dx_env.is_finite()) {
        return Err(Error::InvalidParameter(format!("dx_env = {dx_env}")));
    }
    let (lo, hi) = window;
    let len = hi - lo;
    if len.is_nan() || len <= 0.0 {
        return Err(Error::WindowTooSmall {
            len,
            reason: "empty window".into(),
        });
    }
    if spec.kind == EnvKind::GaussSquash && len < 2.0 * spec.params.corr_len {
        return Err(Error::WindowTooSmall {
            len,
            reason: format!("needs at least twice the correlation length {}", spec.params.corr_len),
        });
    }
    let i0 = (lo / dx_env - LATTICE_EPS).ceil() as i64;
    let i1 = (hi / dx_env + LATTICE_EPS).floor() as i64;
    if i1 - i0 < 1 {
        return Err(Error::WindowTooSmall {
            len,
            reason: "fewer than two lattice nodes".into(),
        });
    }
    EnvRealization::sample_frame(*spec, Frame::IDENTITY, i0, (i1 - i0 + 1) as usize, dx_env)
}

impl EnvRealization {
    fn sample_frame(spec: EnvSpec, frame: Frame, i0: i64, n: usize, dx: f64) -> Result<Self> {
        let ys: Vec<f64> = (0..n as i64).map(|k| frame.coord(i0 + k, dx)).collect();
        let (a, v) = Generator::new(spec).fill(&ys);
        Ok(Self::from_parts(spec, frame, i0, dx, a, v))
    }

    fn from_parts(spec: EnvSpec, frame: Frame, i0: i64, dx: f64, a: Vec<f64>, v: Vec<f64>) -> Self {
        let mut s = Vec::with_capacity(a.len());
        let mut acc = 0.0;
        for k in 0..a.len() {
            if k > 0 {
                acc += 0.5 * dx * (1.0 / a[k - 1] + 1.0 / a[k]);
            }
            s.push(acc);
        }
        EnvRealization {
            spec,
            frame,
            i0,
            dx,
            a,
            v,
            s,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn kind(&self) -> EnvKind {
        self.spec.kind
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Index of the first node on the absolute lattice.
    pub fn first_index(&self) -> i64 {
        self.i0
    }

    pub fn node_x(&self, k: usize) -> f64 {
        (self.i0 + k as i64) as f64 * self.dx
    }

    pub fn x_min(&self) -> f64 {
        self.node_x(0)
    }

    pub fn x_max(&self) -> f64 {
        self.node_x(self.len() - 1)
    }

    pub fn window(&self) -> (f64, f64) {
        (self.x_min(), self.x_max())
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }

    pub fn v_values(&self) -> &[f64] {
        &self.v
    }

    /// Cumulative trapezoid of `1/a` from the left end of the window.
    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    pub fn a_max(&self) -> f64 {
        self.a.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn a_min(&self) -> f64 {
        self.a.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn v_law_bounds(&self) -> (f64, f64) {
        self.spec.v_law_bounds()
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = LATTICE_EPS * self.dx;
        x >= self.x_min() - tol && x <= self.x_max() + tol
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x - self.x_min()) / self.dx;
        let last = self.len() - 2;
        let k = (t.floor().max(0.0) as usize).min(last);
        (k, (t - k as f64).clamp(0.0, 1.0))
    }

    /// `(a(x), V(x))`.
    pub fn sample(&self, x: f64) -> Result<(f64, f64)> {
        if !self.contains(x) {
            return Err(self.out_of_window(x));
        }
        Ok(self.sample_unchecked(x))
    }

    /// `(a(x), V(x))` with `x` clamped to the window.
    #[inline]
    pub fn sample_unchecked(&self, x: f64) -> (f64, f64) {
        let (k, w) = self.locate(x);
        (
            self.a[k] + w * (self.a[k + 1] - self.a[k]),
            self.v[k] + w * (self.v[k + 1] - self.v[k]),
        )
    }

    fn out_of_window(&self, x: f64) -> Error {
        Error::OutOfWindow {
            x,
            lo: self.x_min(),
            hi: self.x_max(),
        }
    }

    /// Scaled coordinate `s(x_min, x)`: the lattice trapezoid of `1/a`,
    /// completed by a partial trapezoid inside the last cell.
    pub fn s_at(&self, x: f64) -> Result<f64> {
        if !self.contains(x) {
            return Err(self.out_of_window(x));
        }
        let (k, w) = self.locate(x);
        let ax = self.a[k] + w * (self.a[k + 1] - self.a[k]);
        Ok(self.s[k] + 0.5 * w * self.dx * (1.0 / self.a[k] + 1.0 / ax))
    }

    /// `s(x1, x2) = int_{x1}^{x2} dy / a(y)`, signed.
    pub fn s_between(&self, x1: f64, x2: f64) -> Result<f64> {
        Ok(self.s_at(x2)? - self.s_at(x1)?)
    }

    /// The environment translated by `z`: `V'(x) = V(x + z)`, same window.
    ///
    /// Shifts by lattice multiples are exact: node values are bit-identical
    /// to the unshifted generator at the translated nodes.
    pub fn shift(&self, z: f64) -> Result<EnvRealization> {
        let steps = z / self.dx;
        let mut frame = self.frame;
        if (steps - steps.round()).abs() <= LATTICE_EPS * steps.abs().max(1.0) {
            frame.shift_steps += steps.round() as i64;
        } else {
            frame.shift_frac += z;
        }
        Self::sample_frame(self.spec, frame, self.i0, self.len(), self.dx)
    }

    /// The mirror image `x -> -x`, obtained by reversing the node arrays.
    pub fn reflected(&self) -> EnvRealization {
        let n = self.len() as i64;
        let frame = Frame {
            sign: -self.frame.sign,
            shift_steps: -self.frame.shift_steps,
            shift_frac: -self.frame.shift_frac,
        };
        let mut a = self.a.clone();
        let mut v = self.v.clone();
        a.reverse();
        v.reverse();
        Self::from_parts(self.spec, frame, -(self.i0 + n - 1), self.dx, a, v)
    }

    /// First maximal interval with `V >= h` and scaled length at least `c`,
    /// found by a single left-to-right sweep.
    pub fn find_hill(&self, h: f64, c: f64) -> Option<HillWitness> {
        self.find_hill_in((self.x_min(), self.x_max()), h, c)
    }

    /// As [`find_hill`](Self::find_hill), restricted to nodes inside `range`.
    pub fn find_hill_in(&self, range: (f64, f64), h: f64, c: f64) -> Option<HillWitness> {
        let mut sweep = HillSweep::new(h, c);
        for k in 0..self.len() {
            let x = self.node_x(k);
            if x < range.0 - LATTICE_EPS || x > range.1 + LATTICE_EPS {
                continue;
            }
            if let Some(w) = sweep.push(x, self.a[k], self.v[k]) {
                return Some(w);
            }
        }
        sweep.open_witness()
    }

    /// First node `z` with `a(z) <= c` and `V(z) >= 1 - c`.
    pub fn check_singular_hill(&self, c: f64) -> Option<f64> {
        (0..self.len())
            .find(|&k| self.a[k] <= c && self.v[k] >= 1.0 - c)
            .map(|k| self.node_x(k))
    }

    /// Writes the columnar text format: `#` header lines, then `x,a,V,s` rows.
    pub fn write_columnar<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.spec.params;
        writeln!(w, "# kind: {}", self.spec.kind)?;
        writeln!(w, "# seed: {}", self.spec.seed)?;
        writeln!(w, "# dx_env: {:?}", self.dx)?;
        writeln!(
            w,
            "# params: a0={:?},v0={:?},kappa={:?},corr_len={:?},gain={:?},a_floor={:?}",
            p.a0, p.v0, p.kappa, p.corr_len, p.gain, p.a_floor
        )?;
        writeln!(
            w,
            "# frame: sign={:?},shift_steps={},shift_frac={:?}",
            self.frame.sign, self.frame.shift_steps, self.frame.shift_frac
        )?;
        writeln!(w, "# first_index: {}", self.i0)?;
        writeln!(w, "x,a,V,s")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?}",
                self.node_x(k),
                self.a[k],
                self.v[k],
                self.s[k]
            )?;
        }
        Ok(())
    }

    /// Reads the format produced by [`write_columnar`](Self::write_columnar).
    pub fn read_columnar<R: BufRead>(r: R) -> Result<EnvRealization> {
        let mut kind = None;
        let mut seed = None;
        let mut dx = None;
        let mut params = EnvParams::default();
        let mut frame = Frame::IDENTITY;
        let mut i0 = None;
        let (mut a, mut v, mut s) = (Vec::new(), Vec::new(), Vec::new());
        let perr = |m: String| Error::Parse(m);
        for line in r.lines() {
            let line = line.map_err(|e| perr(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line == "x,a,V,s" {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (key, val) = h
                    .split_once(':')
                    .ok_or_else(|| perr(format!("bad header `{line}`")))?;
                let val = val.trim();
                match key.trim() {
                    "kind" => kind = Some(val.parse::<EnvKind>()?),
                    "seed" => seed = Some(parse_num::<u64>(val)?),
                    "dx_env" => dx = Some(parse_num::<f64>(val)?),
                    "first_index" => i0 = Some(parse_num::<i64>(val)?),
                    "params" => {
                        for (k, x) in key_values(val)? {
                            let x = parse_num::<f64>(x)?;
                            match k {
                                "a0" => params.a0 = x,
                                "v0" => params.v0 = x,
                                "kappa" => params.kappa = x,
                                "corr_len" => params.corr_len = x,
                                "gain" => params.gain = x,
                                "a_floor" => params.a_floor = x,
                                _ => return Err(perr(format!("unknown parameter `{k}`"))),
                            }
                        }
                    }
                    "frame" => {
                        for (k, x) in key_values(val)? {
                            match k {
                                "sign" => frame.sign = parse_num(x)?,
                                "shift_steps" => frame.shift_steps = parse_num(x)?,
                                "shift_frac" => frame.shift_frac = parse_num(x)?,
                                _ => return Err(perr(format!("unknown frame field `{k}`"))),
                            }
                        }
                    }
                    other => return Err(perr(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(perr(format!("expected 4 columns in `{line}`")));
            }
            a.push(parse_num::<f64>(cols[1])?);
            v.push(parse_num::<f64>(cols[2])?);
            s.push(parse_num::<f64>(cols[3])?);
        }
        let kind = kind.ok_or_else(|| perr("missing `kind` header".into()))?;
        let seed = seed.ok_or_else(|| perr("missing `seed` header".into()))?;
        let dx = dx.ok_or_else(|| perr("missing `dx_env` header".into()))?;
        let i0 = i0.ok_or_else(|| perr("missing `first_index` header".into()))?;
        if a.len() < 2 {
            return Err(perr("fewer than two rows".into()));
        }
        Ok(EnvRealization {
            spec: EnvSpec { kind, params, seed },
            frame,
            i0,
            dx,
            a,
            v,
            s,
        })
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("cannot parse `{s}`")))
}

fn key_values(s: &str) -> Result<Vec<(&str, &str)>> {
    s.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("expected key=value in `{kv}`")))
        })
        .collect()
}

/// Streaming state of the left-to-right hill sweep.
struct HillSweep {
    h: f64,
    c: f64,
    /// Last node as `(x, a, s)`.
    last: Option<(f64, f64, f64)>,
    /// Open streak as `(l1, s(l1), min V)`.
    streak: Option<(f64, f64, f64)>,
}

impl HillSweep {
    fn new(h: f64, c: f64) -> Self {
        HillSweep {
            h,
            c,
            last: None,
            streak: None,
        }
    }

    /// Feeds the next node; returns a witness when a long enough streak closes.
    fn push(&mut self, x: f64, a: f64, v: f64) -> Option<HillWitness> {
        let prev = self.last;
        let s = match prev {
            Some((px, pa, ps)) => ps + 0.5 * (x - px) * (1.0 / pa + 1.0 / a),
            None => 0.0,
        };
        let mut closed = None;
        if v >= self.h {
            match &mut self.streak {
                Some((_, _, vmin)) => *vmin = vmin.min(v),
                None => self.streak = Some((x, s, v)),
            }
        } else if let (Some((l1, s1, vmin)), Some((l2, _, s2))) = (self.streak.take(), prev) {
            if s2 - s1 >= self.c {
                closed = Some(HillWitness {
                    l1,
                    l2,
                    scaled_length: s2 - s1,
                    v_min_on_interval: vmin,
                });
            }
        }
        self.last = Some((x, a, s));
        closed
    }

    /// The streak still open at the last node, if long enough.
    fn open_witness(&self) -> Option<HillWitness> {
        let (l1, s1, vmin) = self.streak?;
        let (l2, _, s2) = self.last?;
        (s2 - s1 >= self.c).then_some(HillWitness {
            l1,
            l2,
            scaled_length: s2 - s1,
            v_min_on_interval: vmin,
        })
    }
}

/// Outcome of a hill search over windows `[0, W]` with `W` doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillSearch {
    pub witness: Option<HillWitness>,
    /// Smallest doubled window length that contained the witness, or the cap.
    pub window_len: f64,
}

/// Searches `[0, W]` for a hill, doubling `W` from `start_len` up to `cap_len`.
///
/// The sweep streams fixed-size blocks, so memory does not grow with `W`;
/// the result equals [`EnvRealization::find_hill`] on the full window `[0, W]`.
pub fn find_hill_doubling(
    spec: &EnvSpec,
    dx_env: f64,
    h: f64,
    c: f64,
    start_len: f64,
    cap_len: f64,
) -> Result<HillSearch> {
    spec.validate()?;
    const BLOCK_NODES: i64 = 1 << 16;
    let gen = Generator::new(*spec);
    let mut sweep = HillSweep::new(h, c);
    let mut next = 0i64;
    let mut w = start_len;
    loop {
        let end = (w / dx_env + LATTICE_EPS).floor() as i64;
        while next <= end {
            let stop = (next + BLOCK_NODES).min(end + 1);
            let ys: Vec<f64> = (next..stop).map(|k| k as f64 * dx_env).collect();
            let (a, v) = gen.fill(&ys);
            for (j, &x) in ys.iter().enumerate() {
                if let Some(wit) = sweep.push(x, a[j], v[j]) {
                    return Ok(HillSearch {
                        witness: Some(wit),
                        window_len: w,
                    });
                }
            }
            next = stop;
        }
        if let Some(wit) = sweep.open_witness() {
            return Ok(HillSearch {
                witness: Some(wit),
                window_len: w,
            });
        }
        if w >= cap_len {
            return Ok(HillSearch {
                witness: None,
                window_len: w,
            });
        }
        w = (2.0 * w).min(cap_len);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env(kind: EnvKind, seed: u64, window: (f64, f64), dx: f64) -> EnvRealization {
        generate_env(&EnvSpec::new(kind, seed), window, dx).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EnvKind::ALL {
            assert_eq!(k.name().parse::<EnvKind>().unwrap(), k);
        }
        assert!(matches!("brownian".parse::<EnvKind>(), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn coefficients_stay_in_range() {
        for kind in EnvKind::ALL {
            let e = env(kind, 3, (-20.0, 20.0), 0.01);
            for k in 0..e.len() {
                let (a, v) = (e.a_values()[k], e.v_values()[k]);
                assert!(a > 0.0 && a <= 1.0, "{kind}: a = {a}");
                assert!((0.0..=1.0).contains(&v), "{kind}: V = {v}");
            }
        }
    }

    #[test]
    fn constant_env_scaled_length() {
        let spec = EnvSpec::new(EnvKind::Constant, 0).with_params(EnvParams {
            a0: 0.5,
            ..EnvParams::default()
        });
        let e = generate_env(&spec, (0.0, 10.0), 0.01).unwrap();
        assert!((e.s_between(1.0, 3.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn iid_interp_matches_knot_interpolation() {
        let spec = EnvSpec::new(EnvKind::IidInterp, 11);
        let e = generate_env(&spec, (-3.0, 3.0), 0.25).unwrap();
        let phase = knot_uniform(11, STREAM_PHASE, 0);
        for k in 0..e.len() {
            let t = e.node_x(k) - phase;
            let n = t.floor();
            let w = t - n;
            let u0 = knot_uniform(11, STREAM_V, n as i64);
            let u1 = knot_uniform(11, STREAM_V, n as i64 + 1);
            assert!((e.v_values()[k] - ((1.0 - w) * u0 + w * u1)).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_shift_by_one_period() {
        let e = env(EnvKind::Periodic, 5, (0.0, 10.0), 0.01);
        let shifted = e.shift(1.0).unwrap();
        for (v, w) in e.v_values().iter().zip(shifted.v_values()) {
            assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_shift_is_bit_exact() {
        for kind in [EnvKind::IidInterp, EnvKind::GaussSquash, EnvKind::CoupledSingular] {
            let e = env(kind, 9, (-10.0, 10.0), 0.05);
            let m = 37;
            let shifted = e.shift(m as f64 * 0.05).unwrap();
            for k in 0..e.len() - m {
                assert_eq!(shifted.v_values()[k].to_bits(), e.v_values()[k + m].to_bits());
                assert_eq!(shifted.a_values()[k].to_bits(), e.a_values()[k + m].to_bits());
            }
        }
    }

    #[test]
    fn gauss_window_must_cover_correlation_length() {
        let spec = EnvSpec::new(EnvKind::GaussSquash, 1);
        assert!(matches!(
            generate_env(&spec, (0.0, 1.5), 0.01),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn out_of_window_sampling_fails() {
        let e = env(EnvKind::IidInterp, 1, (0.0, 1.0), 0.1);
        assert!(matches!(e.sample(1.5), Err(Error::OutOfWindow { .. })));
        assert!(e.sample(1.0).is_ok());
    }

    #[test]
    fn gauss_scaled_length_matches_quadrature() {
        // Richardson combination of two lattice resolutions against an
        // adaptive quadrature of the generator itself.
        let spec = EnvSpec::new(EnvKind::GaussSquash, 21);
        let (x1, x2) = (0.3, 4.7);
        let coarse = generate_env(&spec, (-1.0, 6.0), 2e-3).unwrap();
        let fine = generate_env(&spec, (-1.0, 6.0), 1e-3).unwrap();
        let rich = (4.0 * fine.s_between(x1, x2).unwrap() - coarse.s_between(x1, x2).unwrap()) / 3.0;
        let inv_a = |y: f64| 1.0 / eval_generator(&spec, &[y]).0[0];
        let oracle = adaptive_simpson(&inv_a, x1, x2, 1e-12);
        assert!((rich - oracle).abs() < 1e-8, "{rich} vs {oracle}");
    }

    #[test]
    fn constant_full_potential_is_one_hill() {
        let spec = EnvSpec::new(EnvKind::Constant, 0);
        let e = generate_env(&spec, (0.0, 50.0), 0.1).unwrap();
        let w = e.find_hill(0.5, 10.0).unwrap();
        assert_eq!((w.l1, w.l2), (0.0, 50.0));
        assert!((w.scaled_length - 50.0).abs() < 1e-9);
    }

    #[test]
    fn periodic_has_no_long_high_hill() {
        for seed in 0..10 {
            let e = env(EnvKind::Periodic, seed, (0.0, 200.0), 0.01);
            assert!(e.find_hill(0.9, 1.0).is_none());
        }
    }

    fn brute_force_hill(e: &EnvRealization, h: f64, c: f64) -> Option<(f64, f64)> {
        let n = e.len();
        let mut k = 0;
        while k < n {
            if e.v_values()[k] < h {
                k += 1;
                continue;
            }
            let mut j = k;
            while j + 1 < n && e.v_values()[j + 1] >= h {
                j += 1;
            }
            if e.s_values()[j] - e.s_values()[k] >= c {
                return Some((e.node_x(k), e.node_x(j)));
            }
            k = j + 1;
        }
        None
    }

    #[test]
    fn iid_hill_matches_brute_force() {
        for seed in 0..5 {
            let e = env(EnvKind::IidInterp, seed, (-100.0, 100.0), 0.05);
            let w = e.find_hill(0.5, 2.0).expect("hill exists");
            let (l1, l2) = brute_force_hill(&e, 0.5, 2.0).unwrap();
            assert_eq!((w.l1, w.l2), (l1, l2));
            assert!(w.v_min_on_interval >= 0.5);
        }
    }

    #[test]
    fn doubling_search_agrees_with_window_search() {
        let spec = EnvSpec::new(EnvKind::IidInterp, 4);
        let found = find_hill_doubling(&spec, 0.05, 0.5, 4.0, 16.0, 4096.0).unwrap();
        let w = found.witness.expect("hill exists");
        let e = generate_env(&spec, (0.0, found.window_len), 0.05).unwrap();
        let direct = e.find_hill(0.5, 4.0).unwrap();
        assert!((w.l1 - direct.l1).abs() < 1e-9 && (w.l2 - direct.l2).abs() < 1e-9);
        assert!((w.scaled_length - direct.scaled_length).abs() < 1e-9);
    }

    #[test]
    fn coupled_singular_points_exist() {
        let e = env(EnvKind::CoupledSingular, 2, (0.0, 400.0), 0.01);
        for c in [0.2, 0.1, 0.05] {
            let z = e.check_singular_hill(c).expect("singular point");
            let (a, v) = e.sample(z).unwrap();
            assert!(a <= c && v >= 1.0 - c);
        }
    }

    #[test]
    fn reflection_is_an_involution() {
        let e = env(EnvKind::GaussSquash, 8, (-5.0, 7.0), 0.01);
        let r = e.reflected();
        assert_eq!(r.window(), (-7.0, 5.0));
        let (a, v) = e.sample(2.345).unwrap();
        let (ar, vr) = r.sample(-2.345).unwrap();
        assert!((a - ar).abs() < 1e-14 && (v - vr).abs() < 1e-14);
        let rr = r.reflected();
        assert_eq!(rr.a_values(), e.a_values());
        assert_eq!(rr.window(), e.window());
    }

    #[test]
    fn reflected_shift_matches_generator() {
        let e = env(EnvKind::IidInterp, 13, (-5.0, 5.0), 0.1);
        let r = e.reflected().shift(1.0).unwrap();
        // r(x) = e(-(x + 1))
        for x in [-3.0, 0.0, 2.5] {
            let (_, v) = r.sample(x).unwrap();
            let (_, w) = e.sample(-(x + 1.0)).unwrap();
            assert!((v - w).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_s_is_additive(seed in 0u64..1000, x in -9.0f64..9.0, y in -9.0f64..9.0, z in -9.0f64..9.0) {
            let e = env(EnvKind::GaussSquash, seed, (-10.0, 10.0), 0.01);
            let lhs = e.s_between(x, y).unwrap() + e.s_between(y, z).unwrap();
            prop_assert!((lhs - e.s_between(x, z).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn prop_shift_matches_translated_sampling(seed in 0u64..1000, m in -40i64..40) {
            let e = env(EnvKind::IidInterp, seed, (-10.0, 10.0), 0.05);
            let z = m as f64 * 0.05;
            let shifted = e.shift(z).unwrap();
            for x in [-4.0, -1.3, 0.0, 2.2, 3.9] {
                let (_, v1) = shifted.sample(x).unwrap();
                let (_, v2) = e.sample(x + z).unwrap();
                prop_assert!((v1 - v2).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_columnar_round_trip(seed in any::<u64>(), kind_idx in 0usize..5) {
            let e = env(EnvKind::ALL[kind_idx], seed, (-3.0, 3.0), 0.1);
            let mut buf = Vec::new();
            e.write_columnar(&mut buf).unwrap();
            let back = EnvRealization::read_columnar(&buf[..]).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
