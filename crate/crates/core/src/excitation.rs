//! External forces and initial conditions.

use std::f64::consts::PI;

use nalgebra::DVector;
use thiserror::Error;

use crate::modal::{ModalBasis, ModalError};
use crate::model::{StiffnessPhase, SystemModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("invalid excitation: {0}")]
    Invalid(String),
    #[error("node {node} does not exist (model has {dofs} free nodes)")]
    NoSuchNode { node: usize, dofs: usize },
    #[error(transparent)]
    Modal(#[from] ModalError),
    #[error("static shape needs a grounded (invertible) stiffness matrix")]
    Ungrounded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Excitation {
    Free,
    Harmonic {
        amplitude: f64,
        frequency: f64,
        node: usize,
    },
    /// `F sin(2πt(f0 + t(f1 − f0)/(2 t1)))`, instantaneous frequency rising
    /// linearly from `f0` at t = 0 to `f1` at `t1`.
    LinearSweep {
        amplitude: f64,
        f0: f64,
        f1: f64,
        t1: f64,
        node: usize,
    },
}

impl Excitation {
    pub fn validate(&self, dofs: usize) -> Result<(), ExcitationError> {
        let node_ok = |node: usize| {
            if node == 0 || node > dofs {
                Err(ExcitationError::NoSuchNode { node, dofs })
            } else {
                Ok(())
            }
        };
        match *self {
            Excitation::Free => Ok(()),
            Excitation::Harmonic {
                amplitude,
                frequency,
                node,
            } => {
                if !(amplitude >= 0.0) || !(frequency > 0.0) {
                    return Err(ExcitationError::Invalid(format!(
                        "harmonic needs amplitude >= 0 and frequency > 0 (got {amplitude}, {frequency})"
                    )));
                }
                node_ok(node)
            }
            Excitation::LinearSweep {
                amplitude,
                f0,
                f1,
                t1,
                node,
            } => {
                if !(amplitude >= 0.0) {
                    return Err(ExcitationError::Invalid(format!("sweep amplitude {amplitude} < 0")));
                }
                if !(f0 > 0.0 && f1 > f0) {
                    return Err(ExcitationError::Invalid(format!(
                        "sweep needs f1 > f0 > 0 (got f0 = {f0}, f1 = {f1})"
                    )));
                }
                if !(t1 > 0.0) {
                    return Err(ExcitationError::Invalid(format!("sweep duration {t1} <= 0")));
                }
                node_ok(node)
            }
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Excitation::Free)
    }

    fn node_and_amplitude(&self) -> Option<(usize, f64)> {
        match *self {
            Excitation::Free => None,
            Excitation::Harmonic { amplitude, node, .. }
            | Excitation::LinearSweep { amplitude, node, .. } => Some((node, amplitude)),
        }
    }

    /// Phase angle of the sinusoid.
    pub fn phase_angle(&self, t: f64) -> f64 {
        match *self {
            Excitation::Free => 0.0,
            Excitation::Harmonic { frequency, .. } => 2.0 * PI * frequency * t,
            Excitation::LinearSweep { f0, f1, t1, .. } => {
                2.0 * PI * t * (f0 + t * (f1 - f0) / (2.0 * t1))
            }
        }
    }

    /// `d(phase)/dt / 2π`.
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        match *self {
            Excitation::Free => 0.0,
            Excitation::Harmonic { frequency, .. } => frequency,
            Excitation::LinearSweep { f0, f1, t1, .. } => f0 + t * (f1 - f0) / t1,
        }
    }

    pub fn force_at(&self, t: f64, dofs: usize) -> DVector<f64> {
        let mut f = DVector::zeros(dofs);
        if let Some((node, amp)) = self.node_and_amplitude() {
            f[node - 1] = amp * self.phase_angle(t).sin();
        }
        f
    }

    /// Time derivative of [`force_at`](Self::force_at).
    pub fn force_rate_at(&self, t: f64, dofs: usize) -> DVector<f64> {
        let mut f = DVector::zeros(dofs);
        if let Some((node, amp)) = self.node_and_amplitude() {
            let omega = 2.0 * PI * self.instantaneous_frequency(t);
            f[node - 1] = amp * omega * self.phase_angle(t).cos();
        }
        f
    }
}

/// How the state at t = 0 is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Rest,
    Physical {
        u: Vec<f64>,
        v: Vec<f64>,
    },
    /// Pure mode of the low-phase basis with the given modal amplitude.
    PureMode { mode: usize, amplitude: f64 },
    /// Pure low-phase mode scaled so that `u[node] = displacement`.
    PureModeDisplacement {
        mode: usize,
        node: usize,
        displacement: f64,
    },
    /// Static deflection under a point load at `node` (other nodes unloaded),
    /// scaled so that `u[node] = displacement`.
    StaticLoad { node: usize, displacement: f64 },
}

impl InitialCondition {
    pub fn resolve(
        &self,
        model: &SystemModel,
    ) -> Result<(DVector<f64>, DVector<f64>), ExcitationError> {
        let n = model.dofs();
        let check_node = |node: usize| {
            if node == 0 || node > n {
                Err(ExcitationError::NoSuchNode { node, dofs: n })
            } else {
                Ok(())
            }
        };
        match self {
            InitialCondition::Rest => Ok((DVector::zeros(n), DVector::zeros(n))),
            InitialCondition::Physical { u, v } => {
                if u.len() != n || v.len() != n {
                    return Err(ExcitationError::Invalid(format!(
                        "initial state needs {n} displacements and velocities"
                    )));
                }
                Ok((DVector::from_column_slice(u), DVector::from_column_slice(v)))
            }
            InitialCondition::PureMode { mode, amplitude } => {
                let basis = ModalBasis::for_phase(model, StiffnessPhase::Low)?;
                pure_mode_initial_state(&basis, *mode, *amplitude)
            }
            InitialCondition::PureModeDisplacement {
                mode,
                node,
                displacement,
            } => {
                check_node(*node)?;
                let basis = ModalBasis::for_phase(model, StiffnessPhase::Low)?;
                let phi = basis.shape(*mode)?;
                let at = phi[node - 1];
                if at == 0.0 {
                    return Err(ExcitationError::Invalid(format!(
                        "mode {mode} has a node at {node}"
                    )));
                }
                pure_mode_initial_state(&basis, *mode, displacement / at)
            }
            InitialCondition::StaticLoad { node, displacement } => {
                check_node(*node)?;
                let k = model.stiffness_matrix(StiffnessPhase::Low);
                let mut load = DVector::zeros(n);
                load[node - 1] = 1.0;
                let shape = k.lu().solve(&load).ok_or(ExcitationError::Ungrounded)?;
                let u = shape.clone() * (displacement / shape[node - 1]);
                Ok((u, DVector::zeros(n)))
            }
        }
    }
}

/// `u = φ_mode · amplitude`, `v = 0`. `mode` is 1-based.
pub fn pure_mode_initial_state(
    basis: &ModalBasis,
    mode: usize,
    amplitude: f64,
) -> Result<(DVector<f64>, DVector<f64>), ExcitationError> {
    let phi = basis.shape(mode)?;
    Ok((phi * amplitude, DVector::zeros(basis.dofs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::identify_reference_parameters;
    use proptest::prelude::*;

    fn reference_sweep() -> Excitation {
        Excitation::LinearSweep {
            amplitude: 1.0,
            f0: 1.0,
            f1: 3.0,
            t1: 100.0,
            node: 2,
        }
    }

    #[test]
    fn sweep_values() {
        let s = reference_sweep();
        assert_eq!(s.force_at(0.0, 2)[1], 0.0);
        // phase at t1 is 2π·100·2 = 400π
        assert!(s.force_at(100.0, 2)[1].abs() < 1e-11);
        assert_eq!(s.force_at(100.0, 2)[0], 0.0);
        assert!((s.phase_angle(100.0) - 400.0 * PI).abs() < 1e-9);
        assert_eq!(Excitation::Free.force_at(3.7, 2), DVector::zeros(2));
    }

    #[test]
    fn sweep_instantaneous_frequency_endpoints() {
        let s = reference_sweep();
        // finite-difference derivative of the phase
        let h = 1e-6;
        for (t, f) in [(0.0, 1.0), (100.0, 3.0)] {
            let fd = (s.phase_angle(t + h) - s.phase_angle(t - h)) / (2.0 * h) / (2.0 * PI);
            assert!((fd - f).abs() < 1e-6, "t = {t}: {fd}");
            assert!((s.instantaneous_frequency(t) - f).abs() < 1e-12);
        }
    }

    #[test]
    fn force_rate_matches_finite_difference() {
        let s = reference_sweep();
        for t in [0.3, 17.2, 46.0, 99.9] {
            let h = 1e-6;
            let fd = (s.force_at(t + h, 2)[1] - s.force_at(t - h, 2)[1]) / (2.0 * h);
            assert!((fd - s.force_rate_at(t, 2)[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn invalid_excitations() {
        let bad = [
            Excitation::LinearSweep { amplitude: -1.0, f0: 1.0, f1: 3.0, t1: 1.0, node: 1 },
            Excitation::LinearSweep { amplitude: 1.0, f0: 3.0, f1: 1.0, t1: 1.0, node: 1 },
            Excitation::LinearSweep { amplitude: 1.0, f0: 0.0, f1: 1.0, t1: 1.0, node: 1 },
            Excitation::LinearSweep { amplitude: 1.0, f0: 1.0, f1: 3.0, t1: 0.0, node: 1 },
            Excitation::Harmonic { amplitude: 1.0, frequency: 1.0, node: 3 },
        ];
        for e in bad {
            assert!(e.validate(2).is_err(), "{e:?}");
        }
        assert!(reference_sweep().validate(2).is_ok());
    }

    #[test]
    fn pure_mode_states() {
        let model = identify_reference_parameters();
        let basis = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let (u, v) = pure_mode_initial_state(&basis, 1, 0.0).unwrap();
        assert_eq!(u, DVector::zeros(2));
        assert_eq!(v, DVector::zeros(2));
        assert!(pure_mode_initial_state(&basis, 3, 1.0).is_err());

        let ic = InitialCondition::PureModeDisplacement { mode: 1, node: 2, displacement: -0.002 };
        let (u, v) = ic.resolve(&model).unwrap();
        assert!((u[1] + 0.002).abs() < 1e-15);
        let q = basis.project(&u).unwrap();
        assert!(q[1].abs() < 1e-12 * q[0].abs());
        assert_eq!(v, DVector::zeros(2));
    }

    #[test]
    fn static_load_shape_is_nearly_first_mode() {
        let model = identify_reference_parameters();
        let (u, _) = InitialCondition::StaticLoad { node: 2, displacement: -0.002 }
            .resolve(&model)
            .unwrap();
        // u1 = k2/(k1+k2)·u2 for an unloaded first node
        assert!((u[0] - 300.0 / 1125.0 * u[1]).abs() < 1e-15);
        let basis = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let q = basis.project(&u).unwrap();
        assert!(q[1].abs() < 0.03 * q[0].abs());
    }

    proptest! {
        #[test]
        fn sweep_is_continuous(t in 0.0f64..100.0) {
            let s = reference_sweep();
            let h = 1e-9;
            let a = s.force_at(t, 2)[1];
            let b = s.force_at(t + h, 2)[1];
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
