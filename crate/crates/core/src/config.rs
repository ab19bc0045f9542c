//! TOML scenario and model files.
//!
//! A scenario file may start from a preset (`preset = "sweep-local"`) and
//! override parts of it. `[model]`, `[excitation]` and `[initial]` replace the
//! preset's value as a whole; `[control]`, `[integrator]` and `[output]` are
//! merged key by key. Unknown keys are rejected.
//!
//! ```toml
//! name = "chain"
//! primary_mode = 1
//!
//! [model]
//! masses = [0.01, 1.5]
//! rayleigh = { alpha = 0.1, beta = 0.001 }
//! springs = [
//!     { nodes = [0, 1], k0 = 825.0, gamma = 1.0 },
//!     { nodes = [1, 2], k0 = 300.0, gamma = 5.0 },
//! ]
//!
//! [initial]
//! kind = "pure-mode-displacement"
//! mode = 1
//! node = 2
//! displacement = -0.002
//!
//! [control]
//! observation = "q1"
//!
//! [integrator]
//! t_end = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{BasisSelector, ControllerSettings, ObservationVariable, SwitchRule};
use crate::excitation::{Excitation, InitialCondition};
use crate::integrator::{IntegratorSettings, Stepper};
use crate::model::{Constraint, HighScale, PhaseConstraint, SpringElement, StiffnessPhase, SystemModel};
use crate::scenario::{preset, Scenario};
use crate::Error;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> Error {
    ConfigError::Invalid(msg.into()).into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    Number(f64),
    Word(String),
}

impl GammaValue {
    fn to_scale(&self) -> Result<HighScale, Error> {
        match self {
            GammaValue::Number(g) => Ok(HighScale::Factor(*g)),
            GammaValue::Word(w) if matches!(w.as_str(), "inf" | "rigid") => Ok(HighScale::Rigid),
            GammaValue::Word(w) => Err(invalid(format!("gamma must be a number or \"inf\", got \"{w}\""))),
        }
    }

    fn from_scale(s: HighScale) -> Self {
        match s {
            HighScale::Factor(g) => GammaValue::Number(g),
            HighScale::Rigid => GammaValue::Word("inf".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringSpec {
    pub nodes: [usize; 2],
    pub k0: f64,
    #[serde(default = "unit_gamma")]
    pub gamma: GammaValue,
}

fn unit_gamma() -> GammaValue {
    GammaValue::Number(1.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Lock,
    Merge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub nodes: Vec<usize>,
    pub phase: StiffnessPhase,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayleighSpec {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub masses: Vec<f64>,
    #[serde(default)]
    pub rayleigh: RayleighSpec,
    pub springs: Vec<SpringSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintSpec>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<SystemModel, Error> {
        let springs = self
            .springs
            .iter()
            .map(|s| Ok(SpringElement::new(s.nodes[0], s.nodes[1], s.k0, s.gamma.to_scale()?)))
            .collect::<Result<Vec<_>, Error>>()?;
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let constraint = match (c.kind, c.nodes.as_slice()) {
                    (ConstraintKind::Lock, [n]) => Constraint::Lock(*n),
                    (ConstraintKind::Merge, [a, b]) => Constraint::Merge(*a, *b),
                    (kind, nodes) => {
                        return Err(invalid(format!("{kind:?} constraint cannot take nodes {nodes:?}")))
                    }
                };
                Ok(PhaseConstraint { constraint, phase: c.phase })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(SystemModel::new(
            self.masses.clone(),
            springs,
            self.rayleigh.alpha,
            self.rayleigh.beta,
            constraints,
        )?)
    }

    pub fn from_model(model: &SystemModel) -> Self {
        let (alpha, beta) = model.rayleigh();
        Self {
            masses: model.masses().to_vec(),
            rayleigh: RayleighSpec { alpha, beta },
            springs: model
                .springs()
                .iter()
                .map(|s| SpringSpec {
                    nodes: [s.endpoints.0, s.endpoints.1],
                    k0: s.base_stiffness,
                    gamma: GammaValue::from_scale(s.scale_high),
                })
                .collect(),
            constraints: model
                .declared_constraints()
                .iter()
                .map(|c| {
                    let (kind, nodes) = match c.constraint {
                        Constraint::Lock(n) => (ConstraintKind::Lock, vec![n]),
                        Constraint::Merge(a, b) => (ConstraintKind::Merge, vec![a, b]),
                    };
                    ConstraintSpec { kind, nodes, phase: c.phase }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExcitationSpec {
    Free,
    Harmonic { amplitude: f64, frequency: f64, node: usize },
    Sweep { amplitude: f64, f0: f64, f1: f64, t1: f64, node: usize },
}

impl From<&ExcitationSpec> for Excitation {
    fn from(s: &ExcitationSpec) -> Self {
        match *s {
            ExcitationSpec::Free => Excitation::Free,
            ExcitationSpec::Harmonic { amplitude, frequency, node } => {
                Excitation::Harmonic { amplitude, frequency, node }
            }
            ExcitationSpec::Sweep { amplitude, f0, f1, t1, node } => {
                Excitation::LinearSweep { amplitude, f0, f1, t1, node }
            }
        }
    }
}

impl From<&Excitation> for ExcitationSpec {
    fn from(e: &Excitation) -> Self {
        match *e {
            Excitation::Free => ExcitationSpec::Free,
            Excitation::Harmonic { amplitude, frequency, node } => {
                ExcitationSpec::Harmonic { amplitude, frequency, node }
            }
            Excitation::LinearSweep { amplitude, f0, f1, t1, node } => {
                ExcitationSpec::Sweep { amplitude, f0, f1, t1, node }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Rest,
    Physical { u: Vec<f64>, v: Vec<f64> },
    PureMode { mode: usize, amplitude: f64 },
    PureModeDisplacement { mode: usize, node: usize, displacement: f64 },
    StaticLoad { node: usize, displacement: f64 },
}

impl From<&InitialSpec> for InitialCondition {
    fn from(s: &InitialSpec) -> Self {
        match s.clone() {
            InitialSpec::Rest => InitialCondition::Rest,
            InitialSpec::Physical { u, v } => InitialCondition::Physical { u, v },
            InitialSpec::PureMode { mode, amplitude } => InitialCondition::PureMode { mode, amplitude },
            InitialSpec::PureModeDisplacement { mode, node, displacement } => {
                InitialCondition::PureModeDisplacement { mode, node, displacement }
            }
            InitialSpec::StaticLoad { node, displacement } => {
                InitialCondition::StaticLoad { node, displacement }
            }
        }
    }
}

impl From<&InitialCondition> for InitialSpec {
    fn from(c: &InitialCondition) -> Self {
        match c.clone() {
            InitialCondition::Rest => InitialSpec::Rest,
            InitialCondition::Physical { u, v } => InitialSpec::Physical { u, v },
            InitialCondition::PureMode { mode, amplitude } => InitialSpec::PureMode { mode, amplitude },
            InitialCondition::PureModeDisplacement { mode, node, displacement } => {
                InitialSpec::PureModeDisplacement { mode, node, displacement }
            }
            InitialCondition::StaticLoad { node, displacement } => {
                InitialSpec::StaticLoad { node, displacement }
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    /// `"u<node>"` or `"q<mode>"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    /// `"low"` or `"current"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    /// `"event"` or `"sampled"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dwell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

pub fn parse_observation(text: &str, basis: BasisSelector) -> Result<ObservationVariable, Error> {
    let bad = || invalid(format!("observation must look like \"u2\" or \"q1\", got \"{text}\""));
    let (prefix, index) = text.split_at_checked(1).ok_or_else(bad)?;
    let index: usize = index.parse().map_err(|_| bad())?;
    match prefix {
        "u" => Ok(ObservationVariable::PhysicalDof(index)),
        "q" => Ok(ObservationVariable::ModalAmplitude { mode: index, basis }),
        _ => Err(bad()),
    }
}

impl ControlSpec {
    fn apply(&self, c: &mut ControllerSettings) -> Result<(), Error> {
        let current_basis = match c.observation {
            ObservationVariable::ModalAmplitude { basis, .. } => basis,
            ObservationVariable::PhysicalDof(_) => BasisSelector::Low,
        };
        let basis = match self.basis.as_deref() {
            None => current_basis,
            Some("low") => BasisSelector::Low,
            Some("current") => BasisSelector::Current,
            Some(other) => return Err(invalid(format!("basis must be \"low\" or \"current\", got \"{other}\""))),
        };
        c.observation = match (&self.observation, c.observation) {
            (Some(text), _) => parse_observation(text, basis)?,
            (None, ObservationVariable::ModalAmplitude { mode, .. }) => {
                ObservationVariable::ModalAmplitude { mode, basis }
            }
            (None, physical) => physical,
        };
        if let Some(rule) = &self.rule {
            c.rule = match rule.as_str() {
                "event" => SwitchRule::EventDriven,
                "sampled" => SwitchRule::Sampled,
                other => return Err(invalid(format!("rule must be \"event\" or \"sampled\", got \"{other}\""))),
            };
        }
        if self.dwell.is_some() {
            c.dwell_time = self.dwell;
        }
        if let Some(t) = self.tolerance {
            c.event_tolerance = t;
        }
        if let Some(e) = self.enabled {
            c.enabled = e;
        }
        if let Some([a, b]) = self.window {
            c.window = Some((a, b));
        }
        Ok(())
    }

    fn from_settings(c: &ControllerSettings) -> Self {
        let (observation, basis) = match c.observation {
            ObservationVariable::PhysicalDof(n) => (format!("u{n}"), None),
            ObservationVariable::ModalAmplitude { mode, basis } => (
                format!("q{mode}"),
                Some(match basis {
                    BasisSelector::Low => "low".to_string(),
                    BasisSelector::Current => "current".to_string(),
                }),
            ),
        };
        Self {
            observation: Some(observation),
            basis,
            rule: Some(
                match c.rule {
                    SwitchRule::EventDriven => "event",
                    SwitchRule::Sampled => "sampled",
                }
                .into(),
            ),
            dwell: c.dwell_time,
            tolerance: Some(c.event_tolerance),
            enabled: Some(c.enabled),
            window: c.window.map(|(a, b)| [a, b]),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// `"gauss-legendre"` or `"exact-modal"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stepper: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<f64>,
}

impl IntegratorSpec {
    fn apply(&self, s: &mut IntegratorSettings) -> Result<(), Error> {
        if self.dt.is_some() {
            s.dt = self.dt;
        }
        if let Some(t) = self.t_end {
            s.t_end = t;
        }
        if let Some(st) = &self.stepper {
            s.stepper = match st.as_str() {
                "gauss-legendre" => Stepper::GaussLegendre,
                "exact-modal" => Stepper::ExactModal,
                other => {
                    return Err(invalid(format!(
                        "stepper must be \"gauss-legendre\" or \"exact-modal\", got \"{other}\""
                    )))
                }
            };
        }
        if let Some(n) = self.steps_per_period {
            s.steps_per_period = n;
        }
        Ok(())
    }

    fn from_settings(s: &IntegratorSettings) -> Self {
        Self {
            dt: s.dt,
            t_end: Some(s.t_end),
            stepper: Some(
                match s.stepper {
                    Stepper::GaussLegendre => "gauss-legendre",
                    Stepper::ExactModal => "exact-modal",
                }
                .into(),
            ),
            steps_per_period: Some(s.steps_per_period),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Model file path, relative to the scenario file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primary_mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excitation: Option<ExcitationSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioFile {
    /// Resolves the file into a scenario. `base_dir` anchors `model_file`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Scenario, Error> {
        let base = self.preset.as_deref().map(preset).transpose()?;
        let model = match (&self.model, &self.model_file, &base) {
            (Some(_), Some(_), _) => return Err(invalid("give either [model] or model_file, not both")),
            (Some(spec), None, _) => spec.build()?,
            (None, Some(path), _) => {
                let path = base_dir.map_or_else(|| path.clone(), |d| d.join(path));
                load_model(&path)?
            }
            (None, None, Some(b)) => b.model.clone(),
            (None, None, None) => return Err(invalid("scenario needs [model], model_file or preset")),
        };
        let mut control = base.as_ref().map(|b| b.control.clone()).unwrap_or_default();
        self.control.apply(&mut control)?;
        let mut integrator = base.as_ref().map(|b| b.integrator.clone()).unwrap_or_default();
        if base.is_none() && self.integrator.t_end.is_none() {
            return Err(invalid("[integrator] t_end is required without a preset"));
        }
        self.integrator.apply(&mut integrator)?;
        let mut output = base.as_ref().map(|b| b.output.clone()).unwrap_or_default();
        if let Some(stride) = self.output.stride {
            output.stride = stride;
        }
        if let Some(plot) = &self.output.plot {
            output.plot = plot.clone();
        }
        let scenario = Scenario {
            name: self
                .name
                .clone()
                .or_else(|| base.as_ref().map(|b| b.name.clone()))
                .unwrap_or_else(|| "scenario".into()),
            description: self
                .description
                .clone()
                .or_else(|| base.as_ref().map(|b| b.description.clone()))
                .unwrap_or_default(),
            excitation: match (&self.excitation, &base) {
                (Some(e), _) => e.into(),
                (None, Some(b)) => b.excitation.clone(),
                (None, None) => Excitation::Free,
            },
            initial: match (&self.initial, &base) {
                (Some(i), _) => i.into(),
                (None, Some(b)) => b.initial.clone(),
                (None, None) => InitialCondition::Rest,
            },
            primary_mode: self
                .primary_mode
                .or(base.as_ref().map(|b| b.primary_mode))
                .unwrap_or(1),
            model,
            control,
            integrator,
            output,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Complete, self-contained description of a scenario.
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            name: Some(s.name.clone()),
            description: Some(s.description.clone()),
            preset: None,
            model_file: None,
            primary_mode: Some(s.primary_mode),
            model: Some(ModelSpec::from_model(&s.model)),
            excitation: Some((&s.excitation).into()),
            initial: Some((&s.initial).into()),
            control: ControlSpec::from_settings(&s.control),
            integrator: IntegratorSpec::from_settings(&s.integrator),
            output: OutputSpec {
                stride: Some(s.output.stride),
                plot: Some(s.output.plot.clone()),
            },
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, Error> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()).into())
}

pub fn parse_model(text: &str) -> Result<SystemModel, Error> {
    parse::<ModelSpec>(text)?.build()
}

pub fn load_model(path: &Path) -> Result<SystemModel, Error> {
    parse_model(&read(path)?)
}

pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, Error> {
    parse::<ScenarioFile>(text)?.build(base_dir)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    parse_scenario(&read(path)?, path.parent())
}

pub fn scenario_to_toml(s: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from_scenario(s)).expect("scenario files always serialize")
}

/// A preset name, or else a path to a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, Error> {
    match preset(name_or_path) {
        Ok(s) => Ok(s),
        Err(Error::UnknownScenario(_)) if Path::new(name_or_path).is_file() => {
            load_scenario(Path::new(name_or_path))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset_names;

    const CHAIN: &str = r#"
masses = [0.01, 1.5]
rayleigh = { alpha = 0.1, beta = 0.001 }

[[springs]]
nodes = [0, 1]
k0 = 825.0
gamma = "inf"

[[springs]]
nodes = [1, 2]
k0 = 300.0
"#;

    #[test]
    fn model_file_parses() {
        let m = parse_model(CHAIN).unwrap();
        assert_eq!(m.dofs(), 2);
        assert_eq!(m.springs()[0].scale_high, HighScale::Rigid);
        assert_eq!(m.springs()[1].scale_high, HighScale::Factor(1.0));
        assert_eq!(m.rayleigh(), (0.1, 0.001));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = parse_model(&format!("{CHAIN}\ncolor = 3\n")).unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError::Parse(_))), "{err}");
        let err = parse_scenario("preset = \"single-dof\"\n[control]\nobservaton = \"u1\"\n", None).unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError::Parse(_))), "{err}");
        let err = parse_scenario(
            "preset = \"single-dof\"\n[excitation]\nkind = \"harmonic\"\namplitude = 1.0\nfrequency = 2.0\nnode = 1\nphase = 0.0\n",
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError::Parse(_))), "{err}");
    }

    #[test]
    fn bad_values_are_errors() {
        assert!(parse_model(&CHAIN.replace("\"inf\"", "\"huge\"")).is_err());
        assert!(parse_scenario("preset = \"single-dof\"\n[control]\nobservation = \"x1\"\n", None).is_err());
        assert!(parse_scenario("preset = \"single-dof\"\n[integrator]\nstepper = \"euler\"\n", None).is_err());
        assert!(parse_scenario("preset = \"nope\"\n", None).is_err());
        assert!(parse_scenario(&format!("[model]\n{}", CHAIN.replace("[[springs]]", "[[model.springs]]")), None).is_err());
    }

    #[test]
    fn preset_overrides_merge() {
        let s = parse_scenario(
            "preset = \"sweep-local\"\nname = \"narrow\"\n[control]\nwindow = [40.0, 60.0]\n[integrator]\nt_end = 80.0\n",
            None,
        )
        .unwrap();
        let base = preset("sweep-local").unwrap();
        assert_eq!(s.name, "narrow");
        assert_eq!(s.control.window, Some((40.0, 60.0)));
        assert_eq!(s.control.observation, base.control.observation);
        assert_eq!(s.integrator.t_end, 80.0);
        assert_eq!(s.excitation, base.excitation);
        assert_eq!(s.output, base.output);
    }

    #[test]
    fn every_preset_round_trips_through_toml() {
        for name in preset_names() {
            let s = preset(name).unwrap();
            let text = scenario_to_toml(&s);
            let back = parse_scenario(&text, None).unwrap();
            assert_eq!(back.model, s.model, "{name}");
            assert_eq!(back.excitation, s.excitation, "{name}");
            assert_eq!(back.initial, s.initial, "{name}");
            assert_eq!(back.control, s.control, "{name}");
            assert_eq!(back.integrator, s.integrator, "{name}");
            assert_eq!(back.output, s.output, "{name}");
            assert_eq!(back.name, s.name);
        }
    }

    #[test]
    fn model_file_is_relative_to_scenario() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("chain.toml"), CHAIN).unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "model_file = \"chain.toml\"\n[integrator]\nt_end = 2.0\n").unwrap();
        let s = load_scenario(&path).unwrap();
        assert_eq!(s.model, parse_model(CHAIN).unwrap());
        assert_eq!(s.initial, InitialCondition::Rest);
        assert_eq!(resolve_scenario(path.to_str().unwrap()).unwrap().model, s.model);
        assert!(matches!(resolve_scenario("no-such-thing"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn constraint_specs() {
        let text = format!(
            "{CHAIN}\n[[constraints]]\nkind = \"merge\"\nnodes = [1]\nphase = \"high\"\n"
        )
        .replace("\"inf\"", "1.0");
        assert!(parse_model(&text).is_err());
        let ok = text.replace("nodes = [1]\nphase", "nodes = [1, 2]\nphase");
        let m = parse_model(&ok).unwrap();
        assert_eq!(m.declared_constraints()[0].constraint, Constraint::Merge(1, 2));
    }
}
