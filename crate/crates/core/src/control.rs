//! Switched-stiffness control logic.
//!
//! The stiffness is high while the magnitude of the observation variable
//! grows (`c·ċ ≥ 0`) and low while it shrinks. In a clean oscillation this
//! means an *increase* right after every zero crossing of `c` and a
//! *decrease* right after every extremum.

use nalgebra::DVector;
use thiserror::Error;

use crate::integrator::SimState;
use crate::modal::ModalBasis;
use crate::model::StiffnessPhase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("modal observation needs a modal basis")]
    MissingBasis,
    #[error("observation refers to node {node}, model has {dofs} free nodes")]
    NoSuchNode { node: usize, dofs: usize },
    #[error("observation refers to mode {mode}, basis has {modes} modes")]
    NoSuchMode { mode: usize, modes: usize },
    #[error("invalid controller setting: {0}")]
    Invalid(String),
}

/// Which basis a modal observation is projected on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisSelector {
    /// The low-phase basis, for the whole run.
    #[default]
    Low,
    /// The basis of whichever phase is active.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationVariable {
    /// Displacement of a free node (1-based).
    PhysicalDof(usize),
    /// Modal amplitude `q_mode` (1-based).
    ModalAmplitude { mode: usize, basis: BasisSelector },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchRule {
    /// Sign of `c·ċ` with exact event localization.
    #[default]
    EventDriven,
    /// `|c(t_{i+1})| ≥ |c(t_i)|` on consecutive grid samples.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchKind {
    /// Low → high, normally at a zero crossing.
    Increase,
    /// High → low, normally at an extremum.
    Decrease,
}

impl SwitchKind {
    pub fn into_phase(self) -> StiffnessPhase {
        match self {
            SwitchKind::Increase => StiffnessPhase::High,
            SwitchKind::Decrease => StiffnessPhase::Low,
        }
    }

    pub fn from_target(phase: StiffnessPhase) -> Self {
        match phase {
            StiffnessPhase::High => SwitchKind::Increase,
            StiffnessPhase::Low => SwitchKind::Decrease,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub kind: SwitchKind,
    /// `c` at the event.
    pub observation_value: f64,
    /// `ċ` at the event.
    pub observation_rate: f64,
    pub state_before: SimState,
    pub state_after: SimState,
    /// Work done on the system by the switching device, `E(after) − E(before)`.
    pub extracted_energy: f64,
}

pub fn desired_phase(c: f64, c_dot: f64) -> StiffnessPhase {
    if c * c_dot >= 0.0 {
        StiffnessPhase::High
    } else {
        StiffnessPhase::Low
    }
}

pub fn desired_phase_sampled(c_prev: f64, c_next: f64) -> StiffnessPhase {
    if c_next.abs() >= c_prev.abs() {
        StiffnessPhase::High
    } else {
        StiffnessPhase::Low
    }
}

/// Phase at t = 0. At rest with a displacement (`ċ = 0`, `c ≠ 0`) the sign
/// of `c·c̈` tells where `|c|` is heading; otherwise [`desired_phase`].
pub fn initial_phase(c: f64, c_dot: f64, c_ddot: f64) -> StiffnessPhase {
    if c_dot == 0.0 && c != 0.0 {
        desired_phase(c, c_ddot)
    } else {
        desired_phase(c, c_dot)
    }
}

/// Reads `(c, ċ)` from a physical state.
pub fn evaluate_observation(
    obs: ObservationVariable,
    u: &DVector<f64>,
    v: &DVector<f64>,
    basis: Option<&ModalBasis>,
) -> Result<(f64, f64), ControlError> {
    match obs {
        ObservationVariable::PhysicalDof(node) => {
            if node == 0 || node > u.len() {
                return Err(ControlError::NoSuchNode {
                    node,
                    dofs: u.len(),
                });
            }
            Ok((u[node - 1], v[node - 1]))
        }
        ObservationVariable::ModalAmplitude { mode, .. } => {
            let basis = basis.ok_or(ControlError::MissingBasis)?;
            if mode == 0 || mode > basis.modes() {
                return Err(ControlError::NoSuchMode {
                    mode,
                    modes: basis.modes(),
                });
            }
            let row = basis.shapes.column(mode - 1).transpose() * basis.mass();
            Ok((row.dot(&u.transpose()), row.dot(&v.transpose())))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub observation: ObservationVariable,
    pub rule: SwitchRule,
    /// Minimum time between switches; `None` means one integrator step.
    pub dwell_time: Option<f64>,
    /// Localization tolerance on the event indicator (`c` or `ċ`).
    pub event_tolerance: f64,
    /// Modulation is active only inside `[start, stop]`; outside, the phase
    /// is held low.
    pub window: Option<(f64, f64)>,
    pub enabled: bool,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            observation: ObservationVariable::PhysicalDof(1),
            rule: SwitchRule::EventDriven,
            dwell_time: None,
            event_tolerance: 1e-10,
            window: None,
            enabled: true,
        }
    }
}

impl ControllerSettings {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.event_tolerance > 0.0) {
            return Err(ControlError::Invalid(format!(
                "event tolerance must be positive, got {}",
                self.event_tolerance
            )));
        }
        if let Some(d) = self.dwell_time {
            if !(d >= 0.0) {
                return Err(ControlError::Invalid(format!("dwell time {d} < 0")));
            }
        }
        if let Some((a, b)) = self.window {
            if !(a >= 0.0 && b >= a) {
                return Err(ControlError::Invalid(format!("window [{a}, {b}] is empty")));
            }
        }
        Ok(())
    }

    pub fn modulating_at(&self, t: f64) -> bool {
        self.enabled && self.window.is_none_or(|(a, b)| t >= a && t < b)
    }
}

/// Evaluates the switching law against the bases of both phases and keeps
/// the event log of a run.
#[derive(Debug, Clone)]
pub struct SwitchController {
    settings: ControllerSettings,
    weights: [DVector<f64>; 2],
    bases: [ModalBasis; 2],
    events: Vec<SwitchEvent>,
    last_switch: Option<f64>,
}

impl SwitchController {
    pub fn new(
        settings: ControllerSettings,
        low: ModalBasis,
        high: ModalBasis,
    ) -> Result<Self, ControlError> {
        settings.validate()?;
        let dofs = low.dofs();
        match settings.observation {
            ObservationVariable::PhysicalDof(node) if node == 0 || node > dofs => {
                return Err(ControlError::NoSuchNode { node, dofs });
            }
            ObservationVariable::ModalAmplitude { mode, basis } => {
                let modes = match basis {
                    BasisSelector::Low => low.modes(),
                    BasisSelector::Current => low.modes().min(high.modes()),
                };
                if mode == 0 || mode > modes {
                    return Err(ControlError::NoSuchMode { mode, modes });
                }
            }
            _ => {}
        }
        let weights = [StiffnessPhase::Low, StiffnessPhase::High].map(|phase| {
            let basis = match settings.observation {
                ObservationVariable::ModalAmplitude { basis: BasisSelector::Current, .. }
                    if phase == StiffnessPhase::High =>
                {
                    &high
                }
                _ => &low,
            };
            let mut w = DVector::zeros(dofs);
            for i in 0..dofs {
                let mut unit = DVector::zeros(dofs);
                unit[i] = 1.0;
                w[i] = evaluate_observation(settings.observation, &unit, &unit, Some(basis))
                    .expect("observation checked above")
                    .0;
            }
            w
        });
        Ok(Self {
            settings,
            weights,
            bases: [low, high],
            events: Vec::new(),
            last_switch: None,
        })
    }

    pub fn settings(&self) -> &ControllerSettings {
        &self.settings
    }

    pub fn basis(&self, phase: StiffnessPhase) -> &ModalBasis {
        &self.bases[phase.as_index()]
    }

    /// Weights `w` with `c = wᵀu` while `phase` is active.
    pub fn observation_weights(&self, phase: StiffnessPhase) -> &DVector<f64> {
        &self.weights[phase.as_index()]
    }

    pub fn observe(
        &self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        phase: StiffnessPhase,
    ) -> (f64, f64) {
        let w = self.observation_weights(phase);
        (w.dot(u), w.dot(v))
    }

    /// Phase the event-driven law asks for at time `t`.
    pub fn target_phase(
        &self,
        t: f64,
        u: &DVector<f64>,
        v: &DVector<f64>,
        phase: StiffnessPhase,
    ) -> StiffnessPhase {
        if !self.settings.modulating_at(t) {
            return StiffnessPhase::Low;
        }
        let (c, c_dot) = self.observe(u, v, phase);
        desired_phase(c, c_dot)
    }

    /// Phase the sampled law asks for given the previous grid value of `c`.
    pub fn target_phase_sampled(&self, t: f64, c_prev: f64, c_next: f64) -> StiffnessPhase {
        if !self.settings.modulating_at(t) {
            return StiffnessPhase::Low;
        }
        desired_phase_sampled(c_prev, c_next)
    }

    pub fn dwell_satisfied(&self, t: f64, dt: f64) -> bool {
        let dwell = self.settings.dwell_time.unwrap_or(dt);
        self.last_switch.is_none_or(|last| t - last >= dwell * (1.0 - 1e-9))
    }

    pub fn record(&mut self, event: SwitchEvent) {
        self.last_switch = Some(event.time);
        self.events.push(event);
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SwitchEvent> {
        self.events
    }
}
