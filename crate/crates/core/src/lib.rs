//! Simulation of structures with switched stiffness.
//!
//! A lumped mass–spring chain alternates between a low and a high stiffness
//! phase under a state-dependent switching law. The crate integrates the
//! resulting piecewise-linear system with exactly localized switching
//! instants. The energy loss is split into the work of the switching device
//! and modal dissipation, with the primary mode booked separately.
//!
//! ```
//! use stiffmod::{preset, run_scenario};
//!
//! let out = run_scenario(&preset("single-dof").unwrap()).unwrap();
//! assert!(out.summary.final_energy_ratio < 0.01);
//! ```

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod control;
pub mod energy;
pub mod excitation;
pub mod integrator;
pub mod io;
pub mod modal;
pub mod model;
pub mod plot;
pub mod scenario;

use thiserror::Error;

pub use control::{
    BasisSelector, ControllerSettings, ObservationVariable, SwitchController, SwitchEvent,
    SwitchKind, SwitchRule,
};
pub use energy::{build_ledger, CycleLoss, EnergyLedger, EventMark, HalfCycleRate};
pub use excitation::{Excitation, InitialCondition};
pub use integrator::{simulate, IntegratorSettings, SimState, Stepper, Trajectory};
pub use modal::ModalBasis;
pub use model::{
    Constraint, HighScale, PhaseConstraint, SpringElement, StiffnessPhase, SystemModel,
};
pub use scenario::{preset, run_scenario, RunOutput, RunSummary, Scenario};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Modal(#[from] modal::ModalError),
    #[error(transparent)]
    Excitation(#[from] excitation::ExcitationError),
    #[error(transparent)]
    Control(#[from] control::ControlError),
    #[error(transparent)]
    Integrator(#[from] integrator::IntegratorError),
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(String),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("{0}")]
    Scenario(String),
}
