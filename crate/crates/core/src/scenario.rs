//! Named experiment presets and the run driver.

use std::fmt;

use nalgebra::DVector;

use crate::control::{BasisSelector, ControllerSettings, ObservationVariable};
use crate::energy::{build_ledger, cycle_losses, EnergyLedger};
use crate::excitation::{Excitation, InitialCondition};
use crate::integrator::{resolve_dt, simulate, IntegratorSettings, Trajectory};
use crate::model::{
    serial_reference, Constraint, HighScale, PhaseConstraint, SpringElement, StiffnessPhase,
    SystemModel,
};
use crate::Error;

/// Output selections of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    /// Write every `stride`-th sample.
    pub stride: usize,
    /// Columns drawn by the SVG emitter.
    pub plot: Vec<String>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            stride: 1,
            plot: vec!["u1".into()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub model: SystemModel,
    pub excitation: Excitation,
    pub initial: InitialCondition,
    pub control: ControllerSettings,
    pub integrator: IntegratorSettings,
    /// 1-based mode whose dissipation is booked as passive.
    pub primary_mode: usize,
    pub output: OutputSettings,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), Error> {
        self.excitation.validate(self.model.dofs())?;
        self.control.validate()?;
        let t_end = self.integrator.t_end;
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Scenario(format!("t_end must be positive, got {t_end}")));
        }
        if let Some((a, b)) = self.control.window {
            if a < 0.0 || b > t_end {
                return Err(Error::Scenario(format!(
                    "modulation window [{a}, {b}] is outside [0, {t_end}]"
                )));
            }
        }
        if self.output.stride == 0 {
            return Err(Error::Scenario("output stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Same scenario with the controller switched off (Low phase throughout).
    pub fn unmodulated(&self) -> Self {
        let mut s = self.clone();
        s.name = format!("{}-unmodulated", self.name);
        s.control.enabled = false;
        s
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("single-dof", "undamped single DoF switching between 220 and 300 N/m"),
    ("coupleable", "two oscillators coupled at zero crossings and released at extrema"),
    ("coupleable-constant", "the coupleable pair permanently coupled"),
    ("serial-global", "two-DoF chain, both springs scaled by 2.421, pure first-mode start"),
    ("serial-local", "two-DoF chain, upper spring scaled by 5, pure first-mode start"),
    ("serial-global-mild", "two-DoF chain, both springs scaled by 1.3636, static-load start"),
    ("serial-local-lock", "two-DoF chain, lower spring made rigid, static-load start"),
    ("sweep-global", "1 to 3 Hz sweep on the chain, global modulation between 30 and 70 s"),
    ("sweep-local", "1 to 3 Hz sweep on the chain, local modulation between 30 and 70 s"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn serial(
    name: &str,
    description: &str,
    scale1: HighScale,
    scale2: HighScale,
    observation: ObservationVariable,
    initial: InitialCondition,
) -> Scenario {
    Scenario {
        name: name.into(),
        description: description.into(),
        model: serial_reference(scale1, scale2),
        excitation: Excitation::Free,
        initial,
        control: ControllerSettings {
            observation,
            ..Default::default()
        },
        integrator: IntegratorSettings {
            t_end: 4.0,
            ..Default::default()
        },
        primary_mode: 1,
        output: OutputSettings {
            stride: 1,
            plot: vec!["u2".into(), "L".into(), "L_a".into(), "L_s".into(), "L_p".into()],
        },
    }
}

const FIRST_MODE: ObservationVariable = ObservationVariable::ModalAmplitude {
    mode: 1,
    basis: BasisSelector::Low,
};

fn pure_first_mode() -> InitialCondition {
    InitialCondition::PureModeDisplacement {
        mode: 1,
        node: 2,
        displacement: -0.002,
    }
}

fn coupleable(name: &str, description: &str, coupled_phase: StiffnessPhase, enabled: bool) -> Scenario {
    let model = SystemModel::new(
        vec![1.0, 0.01],
        vec![
            SpringElement::new(0, 1, 100.0, HighScale::Factor(1.0)),
            SpringElement::new(0, 2, 500.0, HighScale::Factor(1.0)),
        ],
        0.0,
        0.005,
        vec![PhaseConstraint {
            constraint: Constraint::Merge(1, 2),
            phase: coupled_phase,
        }],
    )
    .expect("preset parameters are valid");
    Scenario {
        name: name.into(),
        description: description.into(),
        model,
        excitation: Excitation::Free,
        initial: InitialCondition::Physical {
            u: vec![0.0, 0.0],
            v: vec![0.1, 0.1],
        },
        control: ControllerSettings {
            observation: ObservationVariable::PhysicalDof(1),
            enabled,
            ..Default::default()
        },
        integrator: IntegratorSettings {
            t_end: 6.0,
            ..Default::default()
        },
        primary_mode: 1,
        output: OutputSettings {
            stride: 1,
            plot: vec!["u1".into(), "u2".into()],
        },
    }
}

fn sweep(name: &str, description: &str, scale1: HighScale, scale2: HighScale) -> Scenario {
    let mut s = serial(name, description, scale1, scale2, FIRST_MODE, InitialCondition::Rest);
    s.excitation = Excitation::LinearSweep {
        amplitude: 1.0,
        f0: 1.0,
        f1: 3.0,
        t1: 100.0,
        node: 2,
    };
    s.control.window = Some((30.0, 70.0));
    s.integrator.t_end = 100.0;
    s.output.stride = 10;
    s.output.plot = vec!["u2".into()];
    s
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<Scenario, Error> {
    let description = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| *d)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    let s = match name {
        "single-dof" => {
            let model = SystemModel::new(
                vec![1.5],
                vec![SpringElement::new(0, 1, 220.0, HighScale::Factor(300.0 / 220.0))],
                0.0,
                0.0,
                vec![],
            )
            .expect("preset parameters are valid");
            Scenario {
                name: name.into(),
                description: description.into(),
                model,
                excitation: Excitation::Free,
                initial: InitialCondition::Physical {
                    u: vec![0.01],
                    v: vec![0.0],
                },
                control: ControllerSettings {
                    observation: ObservationVariable::PhysicalDof(1),
                    ..Default::default()
                },
                integrator: IntegratorSettings {
                    t_end: 6.0,
                    ..Default::default()
                },
                primary_mode: 1,
                output: OutputSettings {
                    stride: 1,
                    plot: vec!["u1".into(), "E".into()],
                },
            }
        }
        "coupleable" => coupleable(name, description, StiffnessPhase::High, true),
        "coupleable-constant" => coupleable(name, description, StiffnessPhase::Low, false),
        "serial-global" => serial(
            name,
            description,
            HighScale::Factor(2.421),
            HighScale::Factor(2.421),
            FIRST_MODE,
            pure_first_mode(),
        ),
        "serial-local" => serial(
            name,
            description,
            HighScale::Factor(1.0),
            HighScale::Factor(5.0),
            FIRST_MODE,
            pure_first_mode(),
        ),
        "serial-global-mild" => serial(
            name,
            description,
            HighScale::Factor(1.3636),
            HighScale::Factor(1.3636),
            ObservationVariable::PhysicalDof(2),
            InitialCondition::StaticLoad { node: 2, displacement: -0.002 },
        ),
        "serial-local-lock" => serial(
            name,
            description,
            HighScale::Rigid,
            HighScale::Factor(1.0),
            ObservationVariable::PhysicalDof(2),
            InitialCondition::StaticLoad { node: 2, displacement: -0.002 },
        ),
        "sweep-global" => sweep(name, description, HighScale::Factor(2.421), HighScale::Factor(2.421)),
        "sweep-local" => sweep(name, description, HighScale::Factor(1.0), HighScale::Factor(5.0)),
        _ => unreachable!("every listed preset is built above"),
    };
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub dt: f64,
    pub samples: usize,
    pub events: usize,
    /// Peak |u| per node.
    pub peak_displacement: Vec<f64>,
    pub initial_energy: f64,
    /// `E(t_end)/E(0)`; NaN for runs starting at rest.
    pub final_energy_ratio: f64,
    /// `L_a/L`, `L_s/L` and `L_p/L` at the end of the run.
    pub loss_shares: [f64; 3],
    pub max_closure_residual: f64,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {} samples, dt = {:.3e} s, {} switch events", self.name, self.samples, self.dt, self.events)?;
        for (i, p) in self.peak_displacement.iter().enumerate() {
            writeln!(f, "  peak |u{}| = {:.6e} m", i + 1, p)?;
        }
        writeln!(f, "  E(0) = {:.6e} J, E(end)/E(0) = {:.6e}", self.initial_energy, self.final_energy_ratio)?;
        let [a, s, p] = self.loss_shares;
        writeln!(f, "  loss shares: L_a/L = {a:.4}, L_s/L = {s:.4}, L_p/L = {p:.4}")?;
        write!(f, "  max |L - (L_a + L_s + L_p)| = {:.3e} J", self.max_closure_residual)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    pub summary: RunSummary,
}

pub fn summarize(name: &str, dt: f64, trajectory: &Trajectory, ledger: &EnergyLedger) -> RunSummary {
    let peak_displacement = (0..trajectory.dofs())
        .map(|d| {
            (0..trajectory.len())
                .map(|k| trajectory.displacement(k, d).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let e0 = ledger.initial_energy();
    let last = ledger.len() - 1;
    let l = ledger.loss[last];
    let share = |x: f64| if l != 0.0 { x / l } else { 0.0 };
    RunSummary {
        name: name.into(),
        dt,
        samples: trajectory.len(),
        events: trajectory.events().len(),
        peak_displacement,
        initial_energy: e0,
        final_energy_ratio: if e0 != 0.0 { ledger.energy[last] / e0 } else { f64::NAN },
        loss_shares: [
            share(ledger.pseudo_active[last]),
            share(ledger.semi_active[last]),
            share(ledger.passive[last]),
        ],
        max_closure_residual: ledger.max_closure_residual(),
    }
}

/// Runs a scenario and builds its energy ledger.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, Error> {
    scenario.validate()?;
    let initial: (DVector<f64>, DVector<f64>) = scenario.initial.resolve(&scenario.model)?;
    let dt = resolve_dt(&scenario.model, &scenario.control, &scenario.integrator)?;
    let trajectory = simulate(
        &scenario.model,
        &scenario.excitation,
        initial,
        scenario.control.clone(),
        &scenario.integrator,
    )?;
    let ledger = build_ledger(&scenario.model, &trajectory, &scenario.excitation, scenario.primary_mode)?;
    let summary = summarize(&scenario.name, dt, &trajectory, &ledger);
    Ok(RunOutput {
        trajectory,
        ledger,
        summary,
    })
}

/// Mean relative loss per full cycle of a run.
pub fn mean_cycle_loss(ledger: &EnergyLedger) -> Option<f64> {
    let cycles = cycle_losses(ledger);
    if cycles.is_empty() {
        return None;
    }
    Some(cycles.iter().map(|c| c.relative).sum::<f64>() / cycles.len() as f64)
}

/// Result of [`match_local_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleMatch {
    pub gamma: f64,
    pub target_loss: f64,
    pub achieved_loss: f64,
}

/// Finds the upper-spring factor γ2 whose local modulation gives the same
/// mean per-cycle loss as global modulation with `global_gamma`, searching
/// `[lo, hi]` by bisection.
pub fn match_local_scale(global_gamma: f64, lo: f64, hi: f64, tol: f64) -> Result<ScaleMatch, Error> {
    let loss_of = |scale1: f64, scale2: f64| -> Result<f64, Error> {
        let mut s = preset("serial-local")?;
        s.model = serial_reference(HighScale::Factor(scale1), HighScale::Factor(scale2));
        let out = run_scenario(&s)?;
        mean_cycle_loss(&out.ledger)
            .ok_or_else(|| Error::Scenario("run is too short for a full cycle".into()))
    };
    let target = loss_of(global_gamma, global_gamma)?;
    let (mut a, mut b) = (lo, hi);
    let fa = loss_of(1.0, a)? - target;
    let fb = loss_of(1.0, b)? - target;
    if fa.signum() == fb.signum() {
        return Err(Error::Scenario(format!(
            "no local factor in [{lo}, {hi}] matches the global loss {target:.6}"
        )));
    }
    let mut f_lo = fa;
    let mut mid = 0.5 * (a + b);
    let mut achieved = target + fa;
    while b - a > tol {
        mid = 0.5 * (a + b);
        let fm = loss_of(1.0, mid)? - target;
        achieved = target + fm;
        if fm.signum() == f_lo.signum() {
            a = mid;
            f_lo = fm;
        } else {
            b = mid;
        }
    }
    Ok(ScaleMatch {
        gamma: mid,
        target_loss: target,
        achieved_loss: achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_and_validates() {
        for name in preset_names() {
            let s = preset(name).unwrap();
            assert_eq!(s.name, name);
            s.validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn window_outside_run_is_rejected() {
        let mut s = preset("sweep-local").unwrap();
        s.integrator.t_end = 50.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn summary_of_single_dof() {
        let out = run_scenario(&preset("single-dof").unwrap()).unwrap();
        let s = &out.summary;
        assert!((s.peak_displacement[0] - 0.01).abs() < 1e-12);
        assert!(s.final_energy_ratio < 0.01);
        assert!((s.loss_shares[0] - 1.0).abs() < 1e-6);
        assert_eq!(s.loss_shares[1], 0.0);
    }
}
