//! Energy bookkeeping along a trajectory.
//!
//! The loss `L = E − E(0) − W` (W is the work of the external force) is split
//! into a pseudo-active part `L_a` charged at switching instants, a passive
//! part `L_p` dissipated by the primary mode and a semi-active part `L_s`
//! dissipated by all other modes.
//!
//! Dissipation is integrated per LTI segment with the trapezoid rule plus the
//! endpoint-derivative correction `−h²/12·(f'(b) − f'(a))`, which makes it
//! fourth-order accurate. Derivatives come from the equations of motion.

use nalgebra::DVector;
use thiserror::Error;

use crate::control::{SwitchEvent, SwitchKind};
use crate::excitation::Excitation;
use crate::integrator::{SimState, Trajectory};
use crate::modal::{ModalBasis, ModalError};
use crate::model::{PhaseMatrices, StiffnessPhase, SystemModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("need at least {needed} {what} events, found {found}")]
    TooFewEvents {
        what: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("primary mode {mode} does not exist ({modes} modes)")]
    NoSuchMode { mode: usize, modes: usize },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Modal(#[from] ModalError),
}

/// Ledger values captured at a switching instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMark {
    pub time: f64,
    pub kind: SwitchKind,
    pub observation_rate: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub potential_before: f64,
    pub work: f64,
    /// Cumulative `L_a` before this event's charge.
    pub pseudo_active_before: f64,
    pub extracted: f64,
    /// Cumulative `−∫vᵀCv`.
    pub dissipation: f64,
    /// Cumulative per-mode dissipation `L̃_i`.
    pub modal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub primary_mode: usize,
    pub times: Vec<f64>,
    pub potential: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub energy: Vec<f64>,
    pub work: Vec<f64>,
    pub loss: Vec<f64>,
    pub pseudo_active: Vec<f64>,
    pub dissipation: Vec<f64>,
    /// `modal[i][k]`: cumulative `L̃_{i+1}` at sample k.
    pub modal: Vec<Vec<f64>>,
    pub passive: Vec<f64>,
    pub semi_active: Vec<f64>,
    pub marks: Vec<EventMark>,
}

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_energy(&self) -> f64 {
        self.energy.first().copied().unwrap_or(0.0)
    }

    pub fn modes(&self) -> usize {
        self.modal.len()
    }

    /// `L − (L_a + L_s + L_p)` per sample.
    pub fn closure_residual(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.loss[k] - (self.pseudo_active[k] + self.semi_active[k] + self.passive[k]))
            .collect()
    }

    pub fn max_closure_residual(&self) -> f64 {
        self.closure_residual().into_iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Energy scale for relative tolerances: `|E(0)|`, or the peak energy for
    /// runs that start at rest.
    pub fn energy_scale(&self) -> f64 {
        let e0 = self.initial_energy().abs();
        if e0 > 0.0 {
            e0
        } else {
            self.energy.iter().fold(0.0, |m, e| m.max(e.abs()))
        }
    }

    /// Largest gap between the physical and modal dissipation routes.
    pub fn modal_cross_check(&self) -> f64 {
        (0..self.len())
            .map(|k| (self.dissipation[k] - self.semi_active[k] - self.passive[k]).abs())
            .fold(0.0, f64::max)
    }
}

/// Spring sum `Σ ½·Δk_j·e_j²` for a stiffness reduction at the
/// displacement `u`. Rigid springs carry no elongation while locked and
/// contribute nothing.
pub fn extracted_energy_step(model: &SystemModel, u: &DVector<f64>) -> f64 {
    model
        .springs()
        .iter()
        .filter_map(|s| s.stiffness_drop().map(|dk| 0.5 * dk * s.elongation(u).powi(2)))
        .sum()
}

/// Cumulative sum of `(time, ΔE)` steps evaluated at `times`; a step at
/// `t_e` counts from `t_e` on.
pub fn accumulate_pseudo_active(steps: &[(f64, f64)], times: &[f64]) -> Vec<f64> {
    let mut sorted = steps.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    let mut next = 0;
    for &t in times {
        while next < sorted.len() && sorted[next].0 <= t {
            acc += sorted[next].1;
            next += 1;
        }
        out.push(acc);
    }
    out
}

/// `∫_a^b f` from endpoint values and derivatives (corrected trapezoid).
fn corrected_trapezoid(h: f64, fa: f64, fb: f64, dfa: f64, dfb: f64) -> f64 {
    0.5 * h * (fa + fb) - h * h / 12.0 * (dfb - dfa)
}

struct Phase {
    pm: PhaseMatrices,
    basis: ModalBasis,
    damping: DVector<f64>,
}

/// Integrand values and their time derivatives at one state.
struct Point {
    t: f64,
    dissipation: (f64, f64),
    work: (f64, f64),
    modal: Vec<(f64, f64)>,
}

struct Builder<'a> {
    excitation: &'a Excitation,
    phases: [Phase; 2],
    modes: usize,
}

impl Builder<'_> {
    fn point(&self, s: &SimState) -> Point {
        let n = s.u.len();
        let phase = &self.phases[s.phase.as_index()];
        let f = self.excitation.force_at(s.t, n);
        let fdot = self.excitation.force_rate_at(s.t, n);
        let a = phase.pm.acceleration(&s.u, &s.v, &f);
        let cv = &phase.pm.damping * &s.v;
        let q_dot = phase.basis.project(&s.v).expect("dimensions checked");
        let q_ddot = phase.basis.project(&a).expect("dimensions checked");
        let mut modal = vec![(0.0, 0.0); self.modes];
        for (i, m) in modal.iter_mut().enumerate().take(phase.basis.modes()) {
            let c = phase.damping[i];
            *m = (c * q_dot[i] * q_dot[i], 2.0 * c * q_dot[i] * q_ddot[i]);
        }
        Point {
            t: s.t,
            dissipation: (s.v.dot(&cv), 2.0 * a.dot(&cv)),
            work: (f.dot(&s.v), fdot.dot(&s.v) + f.dot(&a)),
            modal,
        }
    }
}

/// Compensated (Neumaier) running sum. Long runs add millions of small
/// increments, and plain summation would put a round-off floor above the
/// quadrature error.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.carry += (self.total - t) + x;
        } else {
            self.carry += (x - t) + self.total;
        }
        self.total = t;
    }

    fn value(&self) -> f64 {
        self.total + self.carry
    }
}

#[derive(Default)]
struct Running {
    work: Sum,
    dissipation: Sum,
    modal: Vec<Sum>,
    pseudo_active: Sum,
}

impl Running {
    fn add_segment(&mut self, a: &Point, b: &Point) {
        let h = b.t - a.t;
        if h <= 0.0 {
            return;
        }
        let q = |x: (f64, f64), y: (f64, f64)| corrected_trapezoid(h, x.0, y.0, x.1, y.1);
        self.work.add(q(a.work, b.work));
        self.dissipation.add(-q(a.dissipation, b.dissipation));
        for (acc, (x, y)) in self.modal.iter_mut().zip(a.modal.iter().zip(&b.modal)) {
            acc.add(-q(*x, *y));
        }
    }

    fn modal(&self) -> Vec<f64> {
        self.modal.iter().map(Sum::value).collect()
    }
}

/// Builds the ledger of a trajectory. `primary_mode` is 1-based and names
/// the mode whose dissipation counts as passive.
pub fn build_ledger(
    model: &SystemModel,
    trajectory: &Trajectory,
    excitation: &Excitation,
    primary_mode: usize,
) -> Result<EnergyLedger, EnergyError> {
    if trajectory.is_empty() {
        return Err(EnergyError::EmptyTrajectory);
    }
    let make = |phase| -> Result<Phase, EnergyError> {
        let pm = model.assemble(phase);
        let basis = ModalBasis::from_phase_matrices(&pm)?;
        let damping = basis.modal_damping.diagonal();
        Ok(Phase { pm, basis, damping })
    };
    let phases = [make(StiffnessPhase::Low)?, make(StiffnessPhase::High)?];
    let modes = phases[0].basis.modes().max(phases[1].basis.modes());
    if primary_mode == 0 || primary_mode > modes {
        return Err(EnergyError::NoSuchMode { mode: primary_mode, modes });
    }
    warn_if_undersampled(trajectory, &phases);
    let builder = Builder { excitation, phases, modes };

    let n = trajectory.len();
    let mut ledger = EnergyLedger {
        primary_mode,
        times: trajectory.times().to_vec(),
        potential: Vec::with_capacity(n),
        kinetic: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        work: Vec::with_capacity(n),
        loss: Vec::with_capacity(n),
        pseudo_active: Vec::with_capacity(n),
        dissipation: Vec::with_capacity(n),
        modal: vec![Vec::with_capacity(n); modes],
        passive: Vec::with_capacity(n),
        semi_active: Vec::with_capacity(n),
        marks: Vec::new(),
    };
    let mut run = Running {
        modal: vec![Sum::default(); modes],
        ..Default::default()
    };
    let events = trajectory.events();
    let mut next_event = 0;
    let mut e0 = 0.0;
    let mut prev = builder.point(&trajectory.state(0, model));

    for k in 0..n {
        let state = trajectory.state(k, model);
        if k > 0 {
            while next_event < events.len() && events[next_event].time <= state.t {
                let ev = &events[next_event];
                let before = builder.point(&ev.state_before);
                run.add_segment(&prev, &before);
                ledger.marks.push(mark(model, ev, &run));
                run.pseudo_active.add(ev.extracted_energy);
                prev = builder.point(&ev.state_after);
                next_event += 1;
            }
            let here = builder.point(&state);
            run.add_segment(&prev, &here);
            prev = here;
        }
        let u = model.potential_energy(&state.u, state.phase);
        let t = model.kinetic_energy(&state.v);
        if k == 0 {
            e0 = u + t;
        }
        ledger.potential.push(u);
        ledger.kinetic.push(t);
        ledger.energy.push(u + t);
        let work = run.work.value();
        let modal = run.modal();
        ledger.work.push(work);
        ledger.loss.push(u + t - e0 - work);
        ledger.pseudo_active.push(run.pseudo_active.value());
        ledger.dissipation.push(run.dissipation.value());
        for (series, value) in ledger.modal.iter_mut().zip(&modal) {
            series.push(*value);
        }
        let (ls, lp) = split(&modal, primary_mode);
        ledger.semi_active.push(ls);
        ledger.passive.push(lp);
    }
    Ok(ledger)
}

fn mark(model: &SystemModel, ev: &SwitchEvent, run: &Running) -> EventMark {
    EventMark {
        time: ev.time,
        kind: ev.kind,
        observation_rate: ev.observation_rate,
        energy_before: ev.state_before.energy(model),
        energy_after: ev.state_after.energy(model),
        potential_before: model.potential_energy(&ev.state_before.u, ev.state_before.phase),
        work: run.work.value(),
        pseudo_active_before: run.pseudo_active.value(),
        extracted: ev.extracted_energy,
        dissipation: run.dissipation.value(),
        modal: run.modal(),
    }
}

fn split(modal: &[f64], primary_mode: usize) -> (f64, f64) {
    let ls = modal
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != primary_mode - 1)
        .map(|(_, l)| l)
        .sum();
    (ls, modal[primary_mode - 1])
}

fn warn_if_undersampled(trajectory: &Trajectory, phases: &[Phase; 2]) {
    let dt = trajectory
        .times()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    let used = |p: StiffnessPhase| (0..trajectory.len()).any(|k| trajectory.phase(k) == p);
    let fmax = [StiffnessPhase::Low, StiffnessPhase::High]
        .into_iter()
        .filter(|&p| used(p) || trajectory.events().iter().any(|e| e.state_after.phase == p))
        .flat_map(|p| phases[p.as_index()].basis.frequencies_hz())
        .fold(0.0, f64::max);
    if fmax > 0.0 && dt * fmax > 1.0 / 20.0 {
        log::warn!(
            "trajectory has {:.1} samples per period of the fastest mode; dissipation quadrature is unreliable",
            1.0 / (dt * fmax)
        );
    }
}

/// Cumulative `−∫vᵀCv` per sample, segment-split at events.
pub fn dissipation_quadrature(
    model: &SystemModel,
    trajectory: &Trajectory,
    excitation: &Excitation,
) -> Result<Vec<f64>, EnergyError> {
    Ok(build_ledger(model, trajectory, excitation, 1)?.dissipation)
}

/// Cumulative `L̃_i` per mode and sample, with modal velocities taken in the
/// basis of the phase active in each segment.
pub fn modal_dissipation(
    model: &SystemModel,
    trajectory: &Trajectory,
    excitation: &Excitation,
) -> Result<Vec<Vec<f64>>, EnergyError> {
    Ok(build_ledger(model, trajectory, excitation, 1)?.modal)
}

/// Splits per-mode dissipation series into `(L_s, L_p)`.
pub fn decompose(modal: &[Vec<f64>], primary_mode: usize) -> Result<(Vec<f64>, Vec<f64>), EnergyError> {
    if primary_mode == 0 || primary_mode > modal.len() {
        return Err(EnergyError::NoSuchMode { mode: primary_mode, modes: modal.len() });
    }
    let n = modal[0].len();
    let mut ls = Vec::with_capacity(n);
    let mut lp = Vec::with_capacity(n);
    let mut column = vec![0.0; modal.len()];
    for k in 0..n {
        for (c, series) in column.iter_mut().zip(modal) {
            *c = series[k];
        }
        let (s, p) = split(&column, primary_mode);
        ls.push(s);
        lp.push(p);
    }
    Ok((ls, lp))
}

/// Energy changes over one half cycle `[e_i, e_{i+1})` between consecutive
/// Decrease events, each divided by `E(e_i⁻)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCycleRate {
    pub start: f64,
    pub end: f64,
    pub energy: f64,
    pub total: f64,
    pub pseudo_active: f64,
    pub passive: f64,
    /// Residual `ΔE − ΔE_a − ΔE_p − ΔW`.
    pub semi_active: f64,
    /// Same quantity from the modal route, for cross-checking.
    pub semi_active_modal: f64,
    pub work: f64,
}

pub fn half_cycle_rates(ledger: &EnergyLedger) -> Result<Vec<HalfCycleRate>, EnergyError> {
    let decreases: Vec<&EventMark> = ledger
        .marks
        .iter()
        .filter(|m| m.kind == SwitchKind::Decrease)
        .collect();
    if decreases.len() < 2 {
        return Err(EnergyError::TooFewEvents {
            what: "Decrease",
            needed: 2,
            found: decreases.len(),
        });
    }
    let p = ledger.primary_mode - 1;
    Ok(decreases
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let e = a.energy_before;
            let total = b.energy_before - a.energy_before;
            let pseudo_active = b.pseudo_active_before - a.pseudo_active_before;
            let passive = b.modal[p] - a.modal[p];
            let work = b.work - a.work;
            let modal_total: f64 = b.modal.iter().zip(&a.modal).map(|(x, y)| x - y).sum();
            HalfCycleRate {
                start: a.time,
                end: b.time,
                energy: e,
                total: total / e,
                pseudo_active: pseudo_active / e,
                passive: passive / e,
                semi_active: (total - pseudo_active - passive - work) / e,
                semi_active_modal: (modal_total - passive) / e,
                work: work / e,
            }
        })
        .collect())
}

/// Loss over one full cycle, between Increase events with the same sign of
/// `ċ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleLoss {
    pub start: f64,
    pub end: f64,
    pub energy: f64,
    /// `ΔL` over the cycle (J, ≤ 0 for unforced decay).
    pub loss: f64,
    pub relative: f64,
}

pub fn cycle_losses(ledger: &EnergyLedger) -> Vec<CycleLoss> {
    let increases: Vec<&EventMark> = ledger
        .marks
        .iter()
        .filter(|m| m.kind == SwitchKind::Increase)
        .collect();
    let loss_at = |m: &EventMark| m.energy_before - ledger.initial_energy() - m.work;
    let mut out = Vec::new();
    for (i, a) in increases.iter().enumerate() {
        let same_sign = increases[i + 1..]
            .iter()
            .find(|b| (b.observation_rate > 0.0) == (a.observation_rate > 0.0));
        if let Some(b) = same_sign {
            let loss = loss_at(b) - loss_at(a);
            out.push(CycleLoss {
                start: a.time,
                end: b.time,
                energy: a.energy_before,
                loss,
                relative: loss / a.energy_before,
            });
        }
    }
    out
}
