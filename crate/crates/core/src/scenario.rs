//! Declarative TOML scenarios and the bundled experiment set.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{CompensatorConfig, InternalModelForm};
use crate::estimator::EstimatorConfig;
use crate::lti::{is_hurwitz, Polynomial};
use crate::plants::{check_params, linearized_tf, BallPlateParams};
use crate::signals::{FrequencyBounds, HarmonicDisturbance};
use crate::sim::SimConfig;
use crate::switching::SwitchingConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
    #[error("unknown sweep parameter `{0}` (expected K, tau, sigma, k or omega)")]
    UnknownParam(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ScenarioError {
    /// Violated invariants for a validation failure.
    pub fn violations(&self) -> &[String] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    ClosedLoop,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::OpenLoop => "open_loop",
            Mode::ClosedLoop => "closed_loop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantModel {
    /// Per-axis transfer function.
    #[default]
    Linear,
    /// Full ball-and-plate dynamics with servos; the ball may leave the plate.
    Nonlinear,
}

// ---- file layout -------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub m_b: Option<f64>,
    pub r_b: Option<f64>,
    pub i_b: Option<f64>,
    pub g: Option<f64>,
    pub l: Option<f64>,
    pub d: Option<f64>,
    pub k_m: Option<f64>,
    pub t_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub profile: Option<String>,
    pub model: Option<PlantModel>,
    pub params: Option<ParamOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub omega_min: f64,
    pub omega_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k: Option<f64>,
    pub sigma: Option<f64>,
    pub observer_gains: Option<Vec<f64>>,
    /// Ascending coefficients.
    pub alpha: Option<Vec<f64>>,
    pub form: Option<InternalModelForm>,
    /// Internal model fixed at this frequency for the whole run; disables switching.
    pub fixed_omega: Option<f64>,
    pub fade_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub gain: f64,
    pub tau: Option<f64>,
    pub theta0: Option<f64>,
    pub warmup: Option<f64>,
    pub w_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    pub enabled: Option<bool>,
    pub dwell_window: Option<f64>,
    pub stability_tol: Option<f64>,
    pub t_min_switch: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub step: Option<f64>,
    pub duration: Option<f64>,
    pub noise_std: Option<f64>,
    pub rng_seed: Option<u64>,
    pub strict_delay: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Scenario exactly as written, before defaults are filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub mode: Mode,
    #[serde(default)]
    pub plant: PlantSection,
    pub disturbance: DisturbanceSection,
    pub bounds: Option<BoundsSection>,
    pub controller: Option<ControllerSection>,
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub switching: SwitchingSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

// ---- resolved scenario -------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub profile: String,
    pub params: BallPlateParams,
    pub model: PlantModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSpec {
    pub enabled: bool,
    pub config: SwitchingConfig,
}

/// Fully defaulted scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub plant: PlantSpec,
    pub disturbance: HarmonicDisturbance,
    pub bounds: FrequencyBounds,
    /// Present in closed-loop mode.
    pub controller: Option<CompensatorConfig>,
    pub fixed_omega: Option<f64>,
    pub estimator: EstimatorConfig,
    pub switching: SwitchingSpec,
    pub sim: SimConfig,
    pub output_dir: Option<PathBuf>,
    pub source: ScenarioFile,
}

pub const DEFAULT_OMEGA_MIN: f64 = 1.0;
pub const DEFAULT_OMEGA_MAX: f64 = 10.0;
pub const DEFAULT_TAU: f64 = 0.1;

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ScenarioError::Parse {
                origin: origin.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Fills defaults and checks every cross-module invariant.
    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        let mut bad: Vec<String> = Vec::new();

        let profile = self.plant.profile.clone().unwrap_or_else(|| "paper".to_string());
        let mut params = match BallPlateParams::profile(&profile) {
            Ok(p) => p,
            Err(e) => {
                bad.push(e.to_string());
                BallPlateParams::paper()
            }
        };
        if let Some(o) = &self.plant.params {
            let fields = [
                (&mut params.m_b, o.m_b),
                (&mut params.r_b, o.r_b),
                (&mut params.i_b, o.i_b),
                (&mut params.g, o.g),
                (&mut params.l, o.l),
                (&mut params.d, o.d),
                (&mut params.k_m, o.k_m),
                (&mut params.t_m, o.t_m),
            ];
            for (slot, v) in fields {
                if let Some(v) = v {
                    *slot = v;
                }
            }
        }
        bad.extend(params.violations().into_iter().map(String::from));
        let plant = PlantSpec { profile, params, model: self.plant.model.unwrap_or_default() };

        let bounds = self.bounds.as_ref().map_or(
            FrequencyBounds::new(DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX),
            |b| FrequencyBounds::new(b.omega_min, b.omega_max),
        );
        let d = &self.disturbance;
        let disturbance = HarmonicDisturbance::new(d.amplitude, d.frequency, d.phase).with_offset(d.offset);
        bad.extend(disturbance.validate(Some(bounds)).into_iter().map(String::from));

        let e = &self.estimator;
        let mut estimator = EstimatorConfig::new(e.gain, e.tau.unwrap_or(DEFAULT_TAU), bounds);
        if let Some(v) = e.theta0 {
            estimator.theta0 = v;
        }
        if let Some(v) = e.warmup {
            estimator.warmup = v;
        }
        if let Some(v) = e.w_threshold {
            estimator.w_threshold = v;
        }
        bad.extend(estimator.violations().iter().map(ToString::to_string));

        let s = &self.switching;
        let mut sw = SwitchingConfig::with_defaults(estimator.warmup, estimator.tau);
        if let Some(v) = s.dwell_window {
            sw.dwell_window = v;
        }
        if let Some(v) = s.stability_tol {
            sw.stability_tol = v;
        }
        if let Some(v) = s.t_min_switch {
            sw.t_min_switch = v;
        }
        bad.extend(sw.violations().into_iter().map(String::from));

        let defaults = SimConfig::default();
        let sim = SimConfig {
            step: self.sim.step.unwrap_or(defaults.step),
            duration: self.sim.duration.unwrap_or(defaults.duration),
            noise_std: self.sim.noise_std.unwrap_or(defaults.noise_std),
            rng_seed: self.sim.rng_seed.unwrap_or(defaults.rng_seed),
            strict_delay: self.sim.strict_delay.unwrap_or(defaults.strict_delay),
        };
        bad.extend(sim.violations(estimator.tau).into_iter().map(String::from));

        let mut fixed_omega = None;
        let controller = match (self.mode, &self.controller) {
            (Mode::OpenLoop, _) => None,
            (Mode::ClosedLoop, None) => {
                bad.push("closed-loop mode needs a [controller] section".to_string());
                None
            }
            (Mode::ClosedLoop, Some(c)) => {
                fixed_omega = c.fixed_omega;
                let mut cfg = CompensatorConfig::ball_and_plate(c.fixed_omega.unwrap_or(bounds.min), bounds);
                if let Some(v) = c.k {
                    cfg.k = v;
                }
                if let Some(v) = c.sigma {
                    cfg.sigma = v;
                }
                if let Some(v) = &c.observer_gains {
                    cfg.observer_gains = v.clone();
                }
                if let Some(v) = &c.alpha {
                    cfg.alpha = Polynomial::new(v.clone());
                }
                if let Some(v) = c.form {
                    cfg.form = v;
                }
                if let Some(v) = c.fade_steps {
                    cfg.fade_steps = v;
                }
                let violations = cfg.violations();
                bad.extend(violations.iter().map(ToString::to_string));
                if violations.is_empty() && plant_is_valid(&params) {
                    bad.extend(loop_violations(&cfg, &params));
                }
                Some(cfg)
            }
        };
        let enabled = self.mode == Mode::ClosedLoop && fixed_omega.is_none() && s.enabled.unwrap_or(true);

        if !bad.is_empty() {
            return Err(ScenarioError::Invalid(bad));
        }
        check_params(&params);
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".to_string()),
            mode: self.mode,
            plant,
            disturbance,
            bounds,
            controller,
            fixed_omega,
            estimator,
            switching: SwitchingSpec { enabled, config: sw },
            sim,
            output_dir: self.output.dir.clone(),
            source: self.clone(),
        })
    }

    /// Sets a sweepable scalar: `K`, `tau`, `sigma`, `k` or `omega`.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), ScenarioError> {
        match name {
            "K" | "gain" => self.estimator.gain = value,
            "tau" => self.estimator.tau = Some(value),
            "omega" => self.disturbance.frequency = value,
            "sigma" => self.controller.get_or_insert_with(Default::default).sigma = Some(value),
            "k" => self.controller.get_or_insert_with(Default::default).k = Some(value),
            other => return Err(ScenarioError::UnknownParam(other.to_string())),
        }
        Ok(())
    }
}

fn plant_is_valid(p: &BallPlateParams) -> bool {
    p.violations().is_empty()
}

/// Relative-degree match and a Hurwitz closed-loop polynomial at the
/// initial internal-model frequency.
fn loop_violations(cfg: &CompensatorConfig, params: &BallPlateParams) -> Vec<String> {
    let mut bad = Vec::new();
    let Ok(tf) = linearized_tf(params) else {
        bad.push("plant transfer function is invalid".to_string());
        return bad;
    };
    if tf.relative_degree() != cfg.rho() {
        bad.push(format!(
            "observer order rho = {} must equal plant relative degree {}",
            cfg.rho(),
            tf.relative_degree()
        ));
        return bad;
    }
    let tf = tf.normalized();
    let gamma = cfg.form.char_poly(tf.den(), tf.num(), cfg.k, &cfg.alpha, cfg.internal_model_freq);
    if !is_hurwitz(&gamma).unwrap_or(false) {
        bad.push(format!(
            "closed-loop characteristic polynomial is not Hurwitz at omega = {}",
            cfg.internal_model_freq
        ));
    }
    bad
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        ScenarioFile::parse(text, origin)?.resolve()
    }

    /// Pre-switch internal-model frequency.
    pub fn initial_internal_model(&self) -> Option<f64> {
        self.controller.as_ref().map(|c| c.internal_model_freq)
    }

    /// Copy with one sweepable scalar replaced and re-validated.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, ScenarioError> {
        let mut f = self.source.clone();
        f.set_param(name, value)?;
        let mut s = f.resolve()?;
        s.sim.rng_seed = self.sim.rng_seed;
        s.source.sim.rng_seed = Some(self.sim.rng_seed);
        Ok(s)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.rng_seed = seed;
        self.source.sim.rng_seed = Some(seed);
        self
    }
}

/// Loads a scenario from a file path, or a bundled scenario by name when no
/// such file exists.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(name) = path.to_str() {
            if let Some(text) = bundled(name) {
                return Scenario::from_toml(text, name);
            }
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    Scenario::from_toml(&text, &path.display().to_string())
}

pub const BUNDLED: [(&str, &str); 5] = [
    ("fig3a", include_str!("../scenarios/fig3a.toml")),
    ("fig3b", include_str!("../scenarios/fig3b.toml")),
    ("fig3c", include_str!("../scenarios/fig3c.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_bundled(name: &str) -> Result<Scenario, ScenarioError> {
    let text = bundled(name).ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))?;
    Scenario::from_toml(text, name)
}
