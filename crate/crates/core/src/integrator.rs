//! Time integration of the piecewise-LTI system.
//!
//! Within a stiffness phase the system is linear and time invariant, so each
//! phase gets a precomputed one-step propagator. Switching instants are
//! localized by bisection on the step length and the integration restarts
//! from the switched state.
//!
//! Two propagators are available: the 2-stage Gauss–Legendre collocation
//! method (order 4, the default) and exact modal propagation, which is only
//! valid for unforced segments and is used as a reference.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::control::{
    desired_phase, initial_phase, ControlError, ControllerSettings, SwitchController, SwitchEvent, SwitchKind,
    SwitchRule,
};
use crate::excitation::Excitation;
use crate::modal::{ModalBasis, ModalError};
use crate::model::{Constraint, PhaseMatrices, StiffnessPhase, SystemModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step {dt} s under-resolves the highest active mode ({freq:.3} Hz); limit is {limit} s")]
    Resolution { dt: f64, freq: f64, limit: f64 },
    #[error("exact modal propagation cannot handle external forcing")]
    ExactForced,
    #[error("invalid integrator setting: {0}")]
    Invalid(String),
    #[error("indicator does not change sign on [{a}, {b}]")]
    NoSignChange { a: f64, b: f64 },
    #[error("state has {got} DoFs, model has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Modal(#[from] ModalError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub phase: StiffnessPhase,
    pub active_constraints: Vec<Constraint>,
}

impl SimState {
    pub fn new(t: f64, u: DVector<f64>, v: DVector<f64>, phase: StiffnessPhase, model: &SystemModel) -> Self {
        Self {
            t,
            u,
            v,
            phase,
            active_constraints: model.constraints(phase),
        }
    }

    pub fn energy(&self, model: &SystemModel) -> f64 {
        model.potential_energy(&self.u, self.phase) + model.kinetic_energy(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    #[default]
    GaussLegendre,
    ExactModal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    /// Fixed step; `None` picks `1 / (steps_per_period · f_max)`.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub stepper: Stepper,
    pub steps_per_period: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 1.0,
            stepper: Stepper::GaussLegendre,
            steps_per_period: 200.0,
        }
    }
}

/// Minimum steps per period of the fastest active mode.
pub const MIN_STEPS_PER_PERIOD: f64 = 20.0;

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // √3/6
const GL_C: [f64; 2] = [0.5 - SQRT3_6, 0.5 + SQRT3_6];
const GL_A: [[f64; 2]; 2] = [[0.25, 0.25 - SQRT3_6], [0.25 + SQRT3_6, 0.25]];

/// Linear one-step map on the reduced state `y = [r; ṙ]`, stored in
/// increment form `y1 − y0 = D y0 + B [g(t0 + c1 h); g(t0 + c2 h)]` so that
/// the state update can be summed with compensation.
#[derive(Debug, Clone)]
struct Propagator {
    h: f64,
    d: DMatrix<f64>,
    b: Option<DMatrix<f64>>,
}

/// Reduced first-order dynamics of one phase.
#[derive(Debug, Clone)]
struct PhaseDynamics {
    pm: PhaseMatrices,
    masses: Vec<f64>,
    n: usize,
    a: DMatrix<f64>,
    fixed: Option<Propagator>,
}

impl PhaseDynamics {
    fn new(model: &SystemModel, phase: StiffnessPhase) -> Self {
        let pm = model.assemble(phase);
        let n = pm.reduction.reduced();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let minv = pm.reduced_mass_inv();
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a.view_mut((n, 0), (n, n)).copy_from(&(-(minv * pm.reduced_stiffness())));
        a.view_mut((n, n), (n, n)).copy_from(&(-(minv * pm.reduced_damping())));
        Self {
            masses: model.masses().to_vec(),
            pm,
            n,
            a,
            fixed: None,
        }
    }

    fn gauss(&self, h: f64) -> Propagator {
        let n2 = 2 * self.n;
        let mut big = DMatrix::<f64>::identity(2 * n2, 2 * n2);
        for i in 0..2 {
            for j in 0..2 {
                let block = &self.a * (-h * GL_A[i][j]);
                let mut view = big.view_mut((i * n2, j * n2), (n2, n2));
                view += block;
            }
        }
        let s = big.try_inverse().expect("Gauss–Legendre stage matrix is regular");
        let mut sum = DMatrix::<f64>::zeros(n2, 2 * n2);
        sum.view_mut((0, 0), (n2, n2)).fill_with_identity();
        sum.view_mut((0, n2), (n2, n2)).fill_with_identity();
        let b = &sum * s * (0.5 * h);
        let mut stacked_a = DMatrix::zeros(2 * n2, n2);
        stacked_a.view_mut((0, 0), (n2, n2)).copy_from(&self.a);
        stacked_a.view_mut((n2, 0), (n2, n2)).copy_from(&self.a);
        let d = &b * stacked_a;
        Propagator { h, d, b: Some(b) }
    }

    fn exact(&self, h: f64) -> Result<Propagator, ModalError> {
        let n = self.n;
        let m = self.pm.reduced_mass();
        let basis = ModalBasis::solve(&m, self.pm.reduced_stiffness(), self.pm.reduced_damping())?;
        let phi = &basis.shapes;
        let to_modal = phi.transpose() * &m;
        let mut e = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let [[e00, e01], [e10, e11]] =
                modal_transition(basis.eigenvalues[i], basis.modal_damping[(i, i)], h);
            e[(i, i)] = e00;
            e[(i, n + i)] = e01;
            e[(n + i, i)] = e10;
            e[(n + i, n + i)] = e11;
        }
        let mut left = DMatrix::zeros(2 * n, 2 * n);
        left.view_mut((0, 0), (n, n)).copy_from(phi);
        left.view_mut((n, n), (n, n)).copy_from(phi);
        let mut right = DMatrix::zeros(2 * n, 2 * n);
        right.view_mut((0, 0), (n, n)).copy_from(&to_modal);
        right.view_mut((n, n), (n, n)).copy_from(&to_modal);
        Ok(Propagator {
            h,
            d: left * e * right - DMatrix::<f64>::identity(2 * n, 2 * n),
            b: None,
        })
    }

    fn propagator(&self, h: f64, stepper: Stepper) -> Result<Propagator, ModalError> {
        match stepper {
            Stepper::GaussLegendre => Ok(self.gauss(h)),
            Stepper::ExactModal => self.exact(h),
        }
    }

    fn reduce(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let red = &self.pm.reduction;
        let r = red.project(&self.masses, u);
        let rd = red.project(&self.masses, v);
        let mut y = DVector::zeros(2 * self.n);
        y.rows_mut(0, self.n).copy_from(&r);
        y.rows_mut(self.n, self.n).copy_from(&rd);
        y
    }

    fn expand(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let red = &self.pm.reduction;
        (
            red.expand(&y.rows(0, self.n).into_owned()),
            red.expand(&y.rows(self.n, self.n).into_owned()),
        )
    }

    /// `[0; M_r⁻¹ Tᵀ f(t)]`.
    fn forcing(&self, excitation: &Excitation, t: f64) -> DVector<f64> {
        let f = excitation.force_at(t, self.masses.len());
        let mut g = DVector::zeros(2 * self.n);
        g.rows_mut(self.n, self.n)
            .copy_from(&(self.pm.reduced_mass_inv() * self.pm.reduction.restrict(&f)));
        g
    }

    fn apply(&self, p: &Propagator, y: &DVector<f64>, excitation: &Excitation, t0: f64) -> DVector<f64> {
        let mut inc = &p.d * y;
        if let (Some(b), false) = (&p.b, excitation.is_free()) {
            let n2 = 2 * self.n;
            let mut g = DVector::zeros(2 * n2);
            g.rows_mut(0, n2).copy_from(&self.forcing(excitation, t0 + GL_C[0] * p.h));
            g.rows_mut(n2, n2).copy_from(&self.forcing(excitation, t0 + GL_C[1] * p.h));
            inc += b * g;
        }
        inc
    }

    /// `y(t0 + h) − y(t0)`.
    fn increment(
        &self,
        y: &DVector<f64>,
        excitation: &Excitation,
        t0: f64,
        h: f64,
        stepper: Stepper,
    ) -> Result<DVector<f64>, ModalError> {
        if h == 0.0 {
            return Ok(DVector::zeros(y.len()));
        }
        match (&self.fixed, stepper) {
            (Some(p), _) if (p.h - h).abs() <= 1e-12 * p.h => Ok(self.apply(p, y, excitation, t0)),
            (_, Stepper::GaussLegendre) => Ok(self.gauss_increment(y, excitation, t0, h)),
            (_, Stepper::ExactModal) => Ok(self.apply(&self.exact(h)?, y, excitation, t0)),
        }
    }

    /// One Gauss–Legendre step of arbitrary length, solving the stage
    /// system directly. Used for the partial steps of event localization.
    fn gauss_increment(&self, y: &DVector<f64>, excitation: &Excitation, t0: f64, h: f64) -> DVector<f64> {
        let n2 = 2 * self.n;
        let mut big = DMatrix::<f64>::identity(2 * n2, 2 * n2);
        for i in 0..2 {
            for j in 0..2 {
                let mut view = big.view_mut((i * n2, j * n2), (n2, n2));
                view -= &self.a * (h * GL_A[i][j]);
            }
        }
        let ay = &self.a * y;
        let mut rhs = DVector::zeros(2 * n2);
        for i in 0..2 {
            let mut stage = rhs.rows_mut(i * n2, n2);
            stage.copy_from(&ay);
            if !excitation.is_free() {
                stage += self.forcing(excitation, t0 + GL_C[i] * h);
            }
        }
        let k = big.lu().solve(&rhs).expect("Gauss–Legendre stage matrix is regular");
        (k.rows(0, n2) + k.rows(n2, n2)) * (0.5 * h)
    }

    fn advance(
        &self,
        y: &DVector<f64>,
        excitation: &Excitation,
        t0: f64,
        h: f64,
        stepper: Stepper,
    ) -> Result<DVector<f64>, ModalError> {
        Ok(y + self.increment(y, excitation, t0, h, stepper)?)
    }

    fn highest_frequency(&self) -> Result<f64, ModalError> {
        let basis = ModalBasis::from_phase_matrices(&self.pm)?;
        Ok(basis.frequencies_hz().into_iter().fold(0.0, f64::max))
    }
}

/// Exact transition matrix of `q̈ + c q̇ + k q = 0` over time `h`.
fn modal_transition(k: f64, c: f64, h: f64) -> [[f64; 2]; 2] {
    let sigma = 0.5 * c;
    let disc = sigma * sigma - k;
    let scale = (sigma * sigma).max(k.abs()).max(f64::MIN_POSITIVE);
    let (cc, ss) = if disc.abs() <= 1e-14 * scale {
        (1.0, h)
    } else if disc < 0.0 {
        let w = (-disc).sqrt();
        ((w * h).cos(), (w * h).sin() / w)
    } else {
        let w = disc.sqrt();
        ((w * h).cosh(), (w * h).sinh() / w)
    };
    let decay = (-sigma * h).exp();
    [
        [decay * (cc + sigma * ss), decay * ss],
        [-decay * k * ss, decay * (cc - sigma * ss)],
    ]
}

/// Advances `M ü + C u̇ + K u = f` by one step of length `dt` in the state's
/// phase, with no switching inside the step.
pub fn step(
    model: &SystemModel,
    state: &SimState,
    excitation: &Excitation,
    dt: f64,
    stepper: Stepper,
) -> Result<SimState, IntegratorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegratorError::Invalid(format!("step must be positive, got {dt}")));
    }
    if state.u.len() != model.dofs() || state.v.len() != model.dofs() {
        return Err(IntegratorError::DimensionMismatch {
            expected: model.dofs(),
            got: state.u.len(),
        });
    }
    if stepper == Stepper::ExactModal && !excitation.is_free() {
        return Err(IntegratorError::ExactForced);
    }
    let dynamics = PhaseDynamics::new(model, state.phase);
    check_resolution(dt, dynamics.highest_frequency()?)?;
    let y = dynamics.reduce(&state.u, &state.v);
    let y1 = dynamics.advance(&y, excitation, state.t, dt, stepper)?;
    let (u, v) = dynamics.expand(&y1);
    Ok(SimState {
        t: state.t + dt,
        u,
        v,
        phase: state.phase,
        active_constraints: state.active_constraints.clone(),
    })
}

fn check_resolution(dt: f64, freq: f64) -> Result<(), IntegratorError> {
    if freq > 0.0 {
        let limit = 1.0 / (MIN_STEPS_PER_PERIOD * freq);
        if dt > limit * (1.0 + 1e-12) {
            return Err(IntegratorError::Resolution { dt, freq, limit });
        }
    }
    Ok(())
}

/// Finds the first `x` in `(lo, hi]` where `pred` turns true, assuming it is
/// false at `lo` and true at `hi`. Returns the bracket end on the true side.
fn bisect_first(
    mut lo: f64,
    mut hi: f64,
    mut pred: impl FnMut(f64) -> bool,
    mut done: impl FnMut(f64) -> bool,
) -> f64 {
    for _ in 0..200 {
        if done(hi) || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Localizes the sign change of `g` on `[a, b]` by bisection. The returned
/// time lies on the far side of the crossing with `|g| ≤ tol` unless the
/// bracket collapses to machine precision first.
pub fn locate_event(
    g: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, IntegratorError> {
    let ga = g(a);
    let gb = g(b);
    if ga == 0.0 {
        return Ok(a);
    }
    if ga.signum() == gb.signum() && gb != 0.0 {
        return Err(IntegratorError::NoSignChange { a, b });
    }
    let side = ga.signum();
    Ok(bisect_first(
        a,
        b,
        |t| g(t).signum() != side || g(t) == 0.0,
        |t| g(t).abs() <= tol,
    ))
}

/// Result of [`apply_switch`].
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub state: SimState,
    /// `E(after) − E(before)`: the device's work on the system.
    pub extracted_energy: f64,
}

/// Moves a state into `target` phase. Displacements and velocities are kept
/// unless the new phase constrains them: locked nodes are zeroed and merged
/// nodes take their mass-weighted (momentum-conserving) common value.
pub fn apply_switch(model: &SystemModel, state: &SimState, target: StiffnessPhase) -> SwitchOutcome {
    let constraints = model.constraints(target);
    let (u, v) = if constraints.is_empty() {
        (state.u.clone(), state.v.clone())
    } else {
        let red = crate::model::Reduction::new(model.dofs(), &constraints);
        (
            red.expand(&red.project(model.masses(), &state.u)),
            red.expand(&red.project(model.masses(), &state.v)),
        )
    };
    let after = SimState {
        t: state.t,
        u,
        v,
        phase: target,
        active_constraints: constraints,
    };
    SwitchOutcome {
        extracted_energy: after.energy(model) - state.energy(model),
        state: after,
    }
}

/// Uniformly sampled states plus the exact switch events of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dofs: usize,
    times: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    force: Vec<f64>,
    phases: Vec<StiffnessPhase>,
    events: Vec<SwitchEvent>,
}

impl Trajectory {
    pub fn new(dofs: usize) -> Self {
        Self {
            dofs,
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            force: Vec::new(),
            phases: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        t: f64,
        u: &DVector<f64>,
        v: &DVector<f64>,
        force: &DVector<f64>,
        phase: StiffnessPhase,
    ) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.u.extend(u.iter());
        self.v.extend(v.iter());
        self.force.extend(force.iter());
        self.phases.push(phase);
    }

    pub fn set_events(&mut self, events: Vec<SwitchEvent>) {
        self.events = events;
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn u(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.u[k * self.dofs..(k + 1) * self.dofs])
    }

    pub fn v(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.v[k * self.dofs..(k + 1) * self.dofs])
    }

    pub fn force(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.force[k * self.dofs..(k + 1) * self.dofs])
    }

    /// Displacement of DoF `dof` (0-based) at sample `k`.
    pub fn displacement(&self, k: usize, dof: usize) -> f64 {
        self.u[k * self.dofs + dof]
    }

    pub fn velocity(&self, k: usize, dof: usize) -> f64 {
        self.v[k * self.dofs + dof]
    }

    pub fn phase(&self, k: usize) -> StiffnessPhase {
        self.phases[k]
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn state(&self, k: usize, model: &SystemModel) -> SimState {
        SimState::new(self.times[k], self.u(k), self.v(k), self.phases[k], model)
    }

    /// Series of one displacement DoF (0-based).
    pub fn displacement_series(&self, dof: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.displacement(k, dof)).collect()
    }
}

/// Phases that can occur in a run with these controller settings.
pub fn active_phases(model: &SystemModel, control: &ControllerSettings) -> Vec<StiffnessPhase> {
    if control.enabled && model.has_high_phase_change() {
        vec![StiffnessPhase::Low, StiffnessPhase::High]
    } else {
        vec![StiffnessPhase::Low]
    }
}

/// Highest natural frequency (Hz) over the phases that can be active.
pub fn highest_active_frequency(
    model: &SystemModel,
    control: &ControllerSettings,
) -> Result<f64, ModalError> {
    let mut f = 0.0f64;
    for phase in active_phases(model, control) {
        f = f.max(PhaseDynamics::new(model, phase).highest_frequency()?);
    }
    Ok(f)
}

/// Step used for a run: the configured one, or `1/(steps_per_period·f_max)`.
pub fn resolve_dt(
    model: &SystemModel,
    control: &ControllerSettings,
    settings: &IntegratorSettings,
) -> Result<f64, IntegratorError> {
    let fmax = highest_active_frequency(model, control)?;
    let dt = match settings.dt {
        Some(dt) => dt,
        None if fmax > 0.0 => 1.0 / (settings.steps_per_period * fmax),
        None => settings.t_end / 1000.0,
    };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegratorError::Invalid(format!("step must be positive, got {dt}")));
    }
    check_resolution(dt, fmax)?;
    Ok(dt)
}

struct Run<'a> {
    model: &'a SystemModel,
    excitation: &'a Excitation,
    dynamics: [PhaseDynamics; 2],
    controller: SwitchController,
    /// Observation weights on the reduced coordinates of each phase.
    weights: [DVector<f64>; 2],
    stepper: Stepper,
    dt: f64,
    t: f64,
    y: DVector<f64>,
    /// Compensation term of the running state sum.
    carry: DVector<f64>,
    phase: StiffnessPhase,
}

impl Run<'_> {
    /// `y += inc` with Kahan compensation. Long runs take millions of steps
    /// and plain summation would let round-off swamp the energy balance.
    fn accept(&mut self, inc: &DVector<f64>) {
        let corrected = inc - &self.carry;
        let sum = &self.y + &corrected;
        self.carry = (&sum - &self.y) - corrected;
        self.y = sum;
    }

    fn set_state(&mut self, y: DVector<f64>) {
        self.carry = DVector::zeros(y.len());
        self.y = y;
    }

    fn dyn_(&self) -> &PhaseDynamics {
        &self.dynamics[self.phase.as_index()]
    }

    fn full_state(&self, y: &DVector<f64>, t: f64) -> SimState {
        let (u, v) = self.dyn_().expand(y);
        SimState::new(t, u, v, self.phase, self.model)
    }

    /// `(c, ċ)` straight from the reduced state.
    fn observe(&self, y: &DVector<f64>) -> (f64, f64) {
        let w = &self.weights[self.phase.as_index()];
        let n = w.len();
        (w.dot(&y.rows(0, n)), w.dot(&y.rows(n, n)))
    }

    fn target_at(&self, y: &DVector<f64>, t: f64) -> StiffnessPhase {
        if !self.controller.settings().modulating_at(t) {
            return StiffnessPhase::Low;
        }
        let (c, c_dot) = self.observe(y);
        desired_phase(c, c_dot)
    }

    fn switch_to(&mut self, target: StiffnessPhase) {
        let before = self.full_state(&self.y, self.t);
        let (c, c_dot) = self.controller.observe(&before.u, &before.v, before.phase);
        let outcome = apply_switch(self.model, &before, target);
        self.phase = target;
        let y = self.dyn_().reduce(&outcome.state.u, &outcome.state.v);
        self.set_state(y);
        self.controller.record(SwitchEvent {
            time: self.t,
            kind: SwitchKind::from_target(target),
            observation_value: c,
            observation_rate: c_dot,
            state_before: before,
            state_after: outcome.state,
            extracted_energy: outcome.extracted_energy,
        });
    }

    /// Integrates from `self.t` to `t_stop`, switching wherever the
    /// event-driven law demands.
    fn advance_to(&mut self, t_stop: f64, event_driven: bool) -> Result<(), IntegratorError> {
        while self.t < t_stop {
            let t0 = self.t;
            let h = t_stop - t0;
            let inc = self.dyn_().increment(&self.y, self.excitation, t0, h, self.stepper)?;
            let y1 = &self.y + &inc;
            let wants_switch = |run: &Self, y: &DVector<f64>, t: f64| {
                run.target_at(y, t) != run.phase && run.controller.dwell_satisfied(t, run.dt)
            };
            if !(event_driven && wants_switch(self, &y1, t_stop)) {
                self.accept(&inc);
                self.t = t_stop;
                break;
            }
            let target = self.phase.other();
            let tol = self.controller.settings().event_tolerance;
            let indicator = |run: &Self, y: &DVector<f64>| {
                let (c, c_dot) = run.observe(y);
                match target {
                    StiffnessPhase::High => c,
                    StiffnessPhase::Low => c_dot,
                }
            };
            // Bisection on the step fraction; `hi` always lies past the
            // crossing.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut y_hi = y1;
            for _ in 0..200 {
                if indicator(self, &y_hi).abs() <= tol || hi - lo <= 4.0 * f64::EPSILON {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let y_mid = self.dyn_().advance(&self.y, self.excitation, t0, mid * h, self.stepper)?;
                if wants_switch(self, &y_mid, t0 + mid * h) {
                    hi = mid;
                    y_hi = y_mid;
                } else {
                    lo = mid;
                }
            }
            let t_event = if hi >= 1.0 { t_stop } else { t0 + hi * h };
            if hi >= 1.0 {
                self.accept(&inc);
            } else {
                self.set_state(y_hi);
            }
            self.t = t_event;
            self.switch_to(target);
        }
        Ok(())
    }
}

/// Simulates a switched run from `(u0, v0)` at t = 0 to `settings.t_end`.
///
/// Samples are taken on the grid `k·dt` (plus `t_end`); a sample reflects
/// every switch at or before its time stamp.
pub fn simulate(
    model: &SystemModel,
    excitation: &Excitation,
    initial: (DVector<f64>, DVector<f64>),
    control: ControllerSettings,
    settings: &IntegratorSettings,
) -> Result<Trajectory, IntegratorError> {
    let n = model.dofs();
    if initial.0.len() != n || initial.1.len() != n {
        return Err(IntegratorError::DimensionMismatch {
            expected: n,
            got: initial.0.len(),
        });
    }
    if !(settings.t_end > 0.0 && settings.t_end.is_finite()) {
        return Err(IntegratorError::Invalid(format!("t_end must be positive, got {}", settings.t_end)));
    }
    if settings.stepper == Stepper::ExactModal && !excitation.is_free() {
        return Err(IntegratorError::ExactForced);
    }
    let dt = resolve_dt(model, &control, settings)?;
    let low = ModalBasis::for_phase(model, StiffnessPhase::Low)?;
    let high = ModalBasis::for_phase(model, StiffnessPhase::High)?;
    let controller = SwitchController::new(control, low, high)?;
    let mut dynamics = [
        PhaseDynamics::new(model, StiffnessPhase::Low),
        PhaseDynamics::new(model, StiffnessPhase::High),
    ];
    for d in &mut dynamics {
        d.fixed = Some(d.propagator(dt, settings.stepper)?);
    }

    let (u0, v0) = initial;
    let phase0 = if controller.settings().modulating_at(0.0) {
        let f0 = excitation.force_at(0.0, n);
        let a0 = dynamics[0].pm.acceleration(&u0, &v0, &f0);
        let (c, c_dot) = controller.observe(&u0, &v0, StiffnessPhase::Low);
        let (c_ddot, _) = controller.observe(&a0, &a0, StiffnessPhase::Low);
        initial_phase(c, c_dot, c_ddot)
    } else {
        StiffnessPhase::Low
    };
    let y0 = dynamics[phase0.as_index()].reduce(&u0, &v0);

    let rule = controller.settings().rule;
    let mut boundaries: Vec<f64> = controller
        .settings()
        .window
        .map(|(a, b)| vec![a, b])
        .unwrap_or_default();
    boundaries.retain(|&b| b > 0.0 && b < settings.t_end);

    let weights = [StiffnessPhase::Low, StiffnessPhase::High].map(|p| {
        dynamics[p.as_index()]
            .pm
            .reduction
            .restrict(controller.observation_weights(p))
    });
    let mut run = Run {
        model,
        excitation,
        weights,
        dynamics,
        controller,
        stepper: settings.stepper,
        dt,
        t: 0.0,
        carry: DVector::zeros(y0.len()),
        y: y0,
        phase: phase0,
    };

    let mut traj = Trajectory::new(n);
    let record = |run: &Run, traj: &mut Trajectory| {
        let (u, v) = run.dyn_().expand(&run.y);
        traj.push(run.t, &u, &v, &excitation.force_at(run.t, n), run.phase);
    };
    record(&run, &mut traj);

    let steps = (settings.t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let mut c_prev = run.observe(&run.y).0;
    let event_driven = rule == SwitchRule::EventDriven;
    let mut next_boundary = 0;
    for k in 1..=steps {
        let t_grid = if k == steps { settings.t_end } else { k as f64 * dt };
        while next_boundary < boundaries.len() && boundaries[next_boundary] <= t_grid {
            let b = boundaries[next_boundary];
            run.advance_to(b, event_driven)?;
            let target = run.target_at(&run.y, run.t);
            if target != run.phase {
                run.switch_to(target);
            }
            next_boundary += 1;
        }
        run.advance_to(t_grid, event_driven)?;
        let target = match rule {
            SwitchRule::EventDriven => run.target_at(&run.y, run.t),
            SwitchRule::Sampled => {
                let c = run.observe(&run.y).0;
                let target = run.controller.target_phase_sampled(run.t, c_prev, c);
                c_prev = c;
                target
            }
        };
        if target != run.phase && run.controller.dwell_satisfied(run.t, dt) {
            run.switch_to(target);
        }
        record(&run, &mut traj);
    }
    traj.set_events(run.controller.into_events());
    Ok(traj)
}
