//! Experiment configuration.
//!
//! Config files are TOML restricted to flat `key = value` pairs under section
//! headers. Every key can also be set from the command line as
//! `section.key=value`. Unknown sections and keys are errors.
//!
//! Defaults depend on the experiment, so the experiment is resolved first and
//! the remaining keys are applied on top of its defaults.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fcp_core::surrogate::Basis;
use fcp_core::GridKind;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{io_err, HarnessError, Result};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "FCP_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    DarcyMc,
    PoissonQuantile,
    NsForecast,
    GridAblation,
    Superres,
    VolumeAblation,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::DarcyMc,
        Experiment::PoissonQuantile,
        Experiment::NsForecast,
        Experiment::GridAblation,
        Experiment::Superres,
        Experiment::VolumeAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::DarcyMc => "darcy_mc",
            Experiment::PoissonQuantile => "poisson_quantile",
            Experiment::NsForecast => "ns_forecast",
            Experiment::GridAblation => "grid_ablation",
            Experiment::Superres => "superres",
            Experiment::VolumeAblation => "volume_ablation",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

/// Which reference solver the data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Darcy,
    Poisson,
    NavierStokes,
}

impl Experiment {
    pub fn problem(self) -> Problem {
        match self {
            Experiment::DarcyMc => Problem::Darcy,
            Experiment::NsForecast => Problem::NavierStokes,
            _ => Problem::Poisson,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    /// Cells per axis.
    pub resolution: usize,
    pub geometry: GridKind,
    pub n_modes: usize,
    pub decay: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// `"direct"` or `"jacobi"`.
    pub poisson_method: String,
    pub jacobi_tol: f64,
    pub viscosity: f64,
    pub forcing_amplitude: f64,
    pub dt: f64,
    pub cfl: f64,
    /// Simulated time between forecast steps.
    pub step_interval: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateConfig {
    pub basis: Basis,
    pub modes: usize,
    pub ridge: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub quantile_steps: usize,
    pub step_size: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub members: usize,
    pub noise_scale: f64,
    /// Keep only members within `τ` of the ensemble mean.
    pub conditioned: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportConfig {
    pub train_resolution: usize,
    pub calibration_resolutions: Vec<usize>,
    pub target_resolutions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationConfig {
    /// Independent calibration/test redraws used for averaged coverage.
    pub resamples: usize,
    pub geometries: Vec<GridKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub alpha: f64,
    pub seed: u64,
    pub data: DataConfig,
    pub solver: SolverConfig,
    pub surrogate: SurrogateConfig,
    pub ensemble: EnsembleConfig,
    pub transport: TransportConfig,
    pub evaluation: EvaluationConfig,
    /// Output root; not part of the config hash.
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fcp_out"))
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            alpha: 0.1,
            seed: 0,
            data: DataConfig {
                n_train: 500,
                n_cal: 100,
                n_test: 100,
                resolution: 32,
                geometry: GridKind::Uniform,
                n_modes: 4,
                decay: 1.0,
                amplitude: 1.0,
            },
            solver: SolverConfig {
                poisson_method: "direct".into(),
                jacobi_tol: 1e-10,
                viscosity: 1e-3,
                forcing_amplitude: 0.1,
                dt: 0.05,
                cfl: 0.5,
                step_interval: 1.0,
                steps: 8,
            },
            surrogate: SurrogateConfig {
                basis: Basis::Fourier,
                modes: 6,
                ridge: 1e-8,
                q_lo: 0.05,
                q_hi: 0.95,
                quantile_steps: 300,
                step_size: 0.01,
            },
            ensemble: EnsembleConfig {
                members: 32,
                noise_scale: 0.02,
                conditioned: true,
            },
            transport: TransportConfig {
                train_resolution: 16,
                calibration_resolutions: vec![18, 20, 22, 24],
                target_resolutions: vec![32, 64],
            },
            evaluation: EvaluationConfig {
                resamples: 1,
                geometries: GridKind::MAPPED.to_vec(),
            },
            out: default_out(),
        };
        match experiment {
            Experiment::DarcyMc => {
                cfg.data.n_train = 2000;
                cfg.data.n_cal = 250;
                cfg.data.n_test = 250;
                cfg.data.resolution = 256;
                cfg.data.n_modes = 6;
                cfg.surrogate.basis = Basis::Cosine;
                cfg.surrogate.modes = 16;
                cfg.surrogate.ridge = 1e-6;
            }
            Experiment::NsForecast => {
                cfg.data.n_train = 12;
                cfg.data.n_cal = 4;
                cfg.data.n_test = 4;
                cfg.data.resolution = 64;
                // Smooth, weakly nonlinear initial vorticity that a small
                // linear one-step surrogate can represent.
                cfg.data.n_modes = 2;
                cfg.data.amplitude = 0.3;
                cfg.solver.step_interval = 0.25;
                cfg.surrogate.modes = 3;
                cfg.surrogate.ridge = 1e-6;
                cfg.ensemble.noise_scale = 0.05;
            }
            Experiment::Superres => {
                // Every input mode is resolved at the training resolution,
                // so the error is dominated by the training solver's
                // discretization bias, which grows with the target resolution.
                cfg.data.n_modes = 7;
                cfg.surrogate.modes = 8;
            }
            _ => {}
        }
        cfg
    }

    /// Loads `file` (if any) on top of the defaults of its experiment, then
    /// applies `overrides` (`section.key=value`) in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut entries: Vec<(String, Value)> = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            entries.extend(parse_document(&text)?);
        }
        for o in overrides {
            entries.push(parse_override(o)?);
        }
        let experiment = match entries.iter().rev().find(|(k, _)| k == "run.experiment") {
            Some((_, v)) => as_str("run.experiment", v)?.parse()?,
            None => Experiment::PoissonQuantile,
        };
        let mut cfg = ExperimentConfig::defaults(experiment);
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `section.key=value` override given as text.
    pub fn set_str(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = parse_override(assignment)?;
        if k == "run.experiment" {
            let e: Experiment = as_str(&k, &v)?.parse()?;
            if e != self.experiment {
                return Err(HarnessError::Config(
                    "run.experiment cannot change after defaults are applied".into(),
                ));
            }
        }
        self.set(&k, &v)
    }

    fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "run.experiment" => self.experiment = as_str(key, v)?.parse()?,
            "run.alpha" => self.alpha = as_f64(key, v)?,
            "run.seed" => self.seed = as_u64(key, v)?,
            "run.out" => self.out = PathBuf::from(as_str(key, v)?),
            "data.n_train" => self.data.n_train = as_usize(key, v)?,
            "data.n_cal" => self.data.n_cal = as_usize(key, v)?,
            "data.n_test" => self.data.n_test = as_usize(key, v)?,
            "data.resolution" => self.data.resolution = as_usize(key, v)?,
            "data.geometry" => self.data.geometry = as_kind(key, as_str(key, v)?)?,
            "data.n_modes" => self.data.n_modes = as_usize(key, v)?,
            "data.decay" => self.data.decay = as_f64(key, v)?,
            "data.amplitude" => self.data.amplitude = as_f64(key, v)?,
            "solver.poisson_method" => self.solver.poisson_method = as_str(key, v)?.to_string(),
            "solver.jacobi_tol" => self.solver.jacobi_tol = as_f64(key, v)?,
            "solver.viscosity" => self.solver.viscosity = as_f64(key, v)?,
            "solver.forcing_amplitude" => self.solver.forcing_amplitude = as_f64(key, v)?,
            "solver.dt" => self.solver.dt = as_f64(key, v)?,
            "solver.cfl" => self.solver.cfl = as_f64(key, v)?,
            "solver.step_interval" => self.solver.step_interval = as_f64(key, v)?,
            "solver.steps" => self.solver.steps = as_usize(key, v)?,
            "surrogate.basis" => {
                self.surrogate.basis = match as_str(key, v)? {
                    "fourier" => Basis::Fourier,
                    "cosine" => Basis::Cosine,
                    other => return Err(HarnessError::Config(format!("{key}: unknown basis {other:?}"))),
                }
            }
            "surrogate.modes" => self.surrogate.modes = as_usize(key, v)?,
            "surrogate.ridge" => self.surrogate.ridge = as_f64(key, v)?,
            "surrogate.q_lo" => self.surrogate.q_lo = as_f64(key, v)?,
            "surrogate.q_hi" => self.surrogate.q_hi = as_f64(key, v)?,
            "surrogate.quantile_steps" => self.surrogate.quantile_steps = as_usize(key, v)?,
            "surrogate.step_size" => self.surrogate.step_size = as_f64(key, v)?,
            "ensemble.members" => self.ensemble.members = as_usize(key, v)?,
            "ensemble.noise_scale" => self.ensemble.noise_scale = as_f64(key, v)?,
            "ensemble.conditioned" => {
                self.ensemble.conditioned = v
                    .as_bool()
                    .ok_or_else(|| HarnessError::Config(format!("{key}: expected true or false")))?
            }
            "transport.train_resolution" => self.transport.train_resolution = as_usize(key, v)?,
            "transport.calibration_resolutions" => self.transport.calibration_resolutions = as_usize_list(key, v)?,
            "transport.target_resolutions" => self.transport.target_resolutions = as_usize_list(key, v)?,
            "evaluation.resamples" => self.evaluation.resamples = as_usize(key, v)?,
            "evaluation.geometries" => {
                self.evaluation.geometries = as_str_list(key, v)?
                    .iter()
                    .map(|s| as_kind(key, s))
                    .collect::<Result<_>>()?
            }
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("run.alpha must lie in (0, 1), got {}", self.alpha));
        }
        for (name, n) in [
            ("data.n_train", self.data.n_train),
            ("data.n_cal", self.data.n_cal),
            ("data.n_test", self.data.n_test),
            ("data.resolution", self.data.resolution),
            ("data.n_modes", self.data.n_modes),
            ("solver.steps", self.solver.steps),
            ("surrogate.modes", self.surrogate.modes),
            ("ensemble.members", self.ensemble.members),
            ("evaluation.resamples", self.evaluation.resamples),
        ] {
            if n == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        for (name, x) in [
            ("data.decay", self.data.decay),
            ("data.amplitude", self.data.amplitude),
            ("solver.jacobi_tol", self.solver.jacobi_tol),
            ("solver.viscosity", self.solver.viscosity),
            ("solver.forcing_amplitude", self.solver.forcing_amplitude),
            ("solver.dt", self.solver.dt),
            ("solver.cfl", self.solver.cfl),
            ("solver.step_interval", self.solver.step_interval),
            ("surrogate.ridge", self.surrogate.ridge),
            ("surrogate.step_size", self.surrogate.step_size),
            ("ensemble.noise_scale", self.ensemble.noise_scale),
        ] {
            if !x.is_finite() || x < 0.0 {
                return fail(format!("{name} must be finite and nonnegative, got {x}"));
            }
        }
        for (name, x) in [
            ("solver.jacobi_tol", self.solver.jacobi_tol),
            ("solver.viscosity", self.solver.viscosity),
            ("solver.dt", self.solver.dt),
            ("solver.cfl", self.solver.cfl),
            ("solver.step_interval", self.solver.step_interval),
        ] {
            if x == 0.0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if !matches!(self.solver.poisson_method.as_str(), "direct" | "jacobi") {
            return fail(format!(
                "solver.poisson_method must be \"direct\" or \"jacobi\", got {:?}",
                self.solver.poisson_method
            ));
        }
        let s = &self.surrogate;
        if !(0.0 < s.q_lo && s.q_lo < 0.5 && 0.5 < s.q_hi && s.q_hi < 1.0) {
            return fail(format!("need 0 < q_lo < 0.5 < q_hi < 1, got {} and {}", s.q_lo, s.q_hi));
        }
        let t = &self.transport;
        if t.calibration_resolutions.len() < 2 {
            return fail("transport.calibration_resolutions needs at least 2 entries".into());
        }
        if t.target_resolutions.is_empty() {
            return fail("transport.target_resolutions is empty".into());
        }
        if self.evaluation.geometries.is_empty() {
            return fail("evaluation.geometries is empty".into());
        }
        Ok(())
    }

    /// Canonical TOML rendering of every setting except the output root.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let seed = if self.seed <= i64::MAX as u64 {
            self.seed.to_string()
        } else {
            format!("\"{}\"", self.seed)
        };
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "experiment = \"{}\"", self.experiment);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        let _ = writeln!(s, "seed = {seed}");
        let d = &self.data;
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "n_train = {}\nn_cal = {}\nn_test = {}", d.n_train, d.n_cal, d.n_test);
        let _ = writeln!(s, "resolution = {}\ngeometry = \"{}\"", d.resolution, d.geometry);
        let _ = writeln!(
            s,
            "n_modes = {}\ndecay = {:?}\namplitude = {:?}",
            d.n_modes, d.decay, d.amplitude
        );
        let v = &self.solver;
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(
            s,
            "poisson_method = \"{}\"\njacobi_tol = {:?}",
            v.poisson_method, v.jacobi_tol
        );
        let _ = writeln!(
            s,
            "viscosity = {:?}\nforcing_amplitude = {:?}",
            v.viscosity, v.forcing_amplitude
        );
        let _ = writeln!(s, "dt = {:?}\ncfl = {:?}", v.dt, v.cfl);
        let _ = writeln!(s, "step_interval = {:?}\nsteps = {}", v.step_interval, v.steps);
        let g = &self.surrogate;
        let basis = match g.basis {
            Basis::Fourier => "fourier",
            Basis::Cosine => "cosine",
        };
        let _ = writeln!(s, "\n[surrogate]");
        let _ = writeln!(s, "basis = \"{basis}\"\nmodes = {}\nridge = {:?}", g.modes, g.ridge);
        let _ = writeln!(s, "q_lo = {:?}\nq_hi = {:?}", g.q_lo, g.q_hi);
        let _ = writeln!(
            s,
            "quantile_steps = {}\nstep_size = {:?}",
            g.quantile_steps, g.step_size
        );
        let e = &self.ensemble;
        let _ = writeln!(s, "\n[ensemble]");
        let _ = writeln!(
            s,
            "members = {}\nnoise_scale = {:?}\nconditioned = {}",
            e.members, e.noise_scale, e.conditioned
        );
        let t = &self.transport;
        let _ = writeln!(s, "\n[transport]");
        let _ = writeln!(s, "train_resolution = {}", t.train_resolution);
        let _ = writeln!(s, "calibration_resolutions = [{}]", list(&t.calibration_resolutions));
        let _ = writeln!(s, "target_resolutions = [{}]", list(&t.target_resolutions));
        let _ = writeln!(s, "\n[evaluation]");
        let _ = writeln!(s, "resamples = {}", self.evaluation.resamples);
        let geoms: Vec<String> = self.evaluation.geometries.iter().map(|g| format!("\"{g}\"")).collect();
        let _ = writeln!(s, "geometries = [{}]", geoms.join(", "));
        s
    }

    /// SHA-256 of [`render`](Self::render), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    /// Directory holding this experiment's outputs.
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.experiment.name())
    }
}

fn parse_document(text: &str) -> Result<Vec<(String, Value)>> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string().trim_end().to_string()))?;
    let mut out = Vec::new();
    for (section, body) in table {
        let body = match body {
            Value::Table(t) => t,
            _ => {
                return Err(HarnessError::Config(format!(
                    "key {section:?} must appear under a section header"
                )))
            }
        };
        for (k, v) in body {
            if v.is_table() {
                return Err(HarnessError::Config(format!(
                    "nested section {section}.{k} is not allowed"
                )));
            }
            out.push((format!("{section}.{k}"), v));
        }
    }
    Ok(out)
}

/// Parses `section.key=value`. The value is read as a TOML value when
/// possible and as a bare string otherwise.
fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {s:?} is not of the form section.key=value")))?;
    let (k, v) = (k.trim(), v.trim());
    if !k.contains('.') {
        return Err(HarnessError::Config(format!(
            "override key {k:?} needs a section prefix"
        )));
    }
    let value = match format!("v = {v}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

fn type_err(key: &str, want: &str, v: &Value) -> HarnessError {
    HarnessError::Config(format!("{key}: expected {want}, got {v}"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| type_err(key, "a string", v))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_err(key, "a number", v)),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => s.parse().map_err(|_| type_err(key, "an unsigned integer", v)),
        _ => Err(type_err(key, "an unsigned integer", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    usize::try_from(as_u64(key, v)?).map_err(|_| type_err(key, "a smaller integer", v))
}

fn as_usize_list(key: &str, v: &Value) -> Result<Vec<usize>> {
    match v {
        Value::Array(a) => a.iter().map(|x| as_usize(key, x)).collect(),
        Value::String(s) => s
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| type_err(key, "a list of integers", v)))
            .collect(),
        Value::Integer(_) => Ok(vec![as_usize(key, v)?]),
        _ => Err(type_err(key, "a list of integers", v)),
    }
}

fn as_str_list(key: &str, v: &Value) -> Result<Vec<String>> {
    match v {
        Value::Array(a) => a.iter().map(|x| as_str(key, x).map(str::to_string)).collect(),
        Value::String(s) => Ok(s.split(',').map(|x| x.trim().to_string()).collect()),
        _ => Err(type_err(key, "a list of strings", v)),
    }
}

fn as_kind(key: &str, s: &str) -> Result<GridKind> {
    let kind: GridKind = s
        .parse()
        .map_err(|_| HarnessError::Config(format!("{key}: unknown grid geometry {s:?}")))?;
    if kind == GridKind::Explicit {
        return Err(HarnessError::Config(format!(
            "{key}: explicit grids cannot be configured"
        )));
    }
    Ok(kind)
}
