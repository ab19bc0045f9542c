//! Lumped-parameter systems: masses, spring elements with two-valued
//! stiffness, Rayleigh damping and the phase-dependent system matrices.
//!
//! Node 0 is ground. Free nodes are numbered from 1 and map onto degree of
//! freedom `node - 1`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mass of node {node} must be positive, got {mass}")]
    SingularMass { node: usize, mass: f64 },
    #[error("spring {spring}: base stiffness must be positive, got {value}")]
    NonPositiveStiffness { spring: usize, value: f64 },
    #[error("spring {spring}: high-phase scale must be >= 1 or rigid, got {value}")]
    InvalidScale { spring: usize, value: f64 },
    #[error("spring {spring}: endpoint {node} does not exist")]
    UnknownNode { spring: usize, node: usize },
    #[error("spring {spring}: endpoints must differ")]
    DegenerateSpring { spring: usize },
    #[error("Rayleigh coefficients must be non-negative (alpha = {alpha}, beta = {beta})")]
    NegativeDamping { alpha: f64, beta: f64 },
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("{what} must be positive and finite, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("model has no free nodes")]
    Empty,
}

/// One of the two stiffness states of the switching law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StiffnessPhase {
    Low,
    High,
}

impl StiffnessPhase {
    pub fn other(self) -> Self {
        match self {
            StiffnessPhase::Low => StiffnessPhase::High,
            StiffnessPhase::High => StiffnessPhase::Low,
        }
    }

    pub fn as_index(self) -> usize {
        match self {
            StiffnessPhase::Low => 0,
            StiffnessPhase::High => 1,
        }
    }
}

impl fmt::Display for StiffnessPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StiffnessPhase::Low => f.write_str("low"),
            StiffnessPhase::High => f.write_str("high"),
        }
    }
}

/// Stiffness multiplier applied in the high phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HighScale {
    Factor(f64),
    /// The spring becomes rigid; represented as a node lock, never as a
    /// large number.
    Rigid,
}

impl HighScale {
    pub fn is_rigid(self) -> bool {
        matches!(self, HighScale::Rigid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpringElement {
    /// `(a, b)` node indices; 0 is ground.
    pub endpoints: (usize, usize),
    pub base_stiffness: f64,
    pub scale_high: HighScale,
}

impl SpringElement {
    pub fn new(a: usize, b: usize, base_stiffness: f64, scale_high: HighScale) -> Self {
        Self {
            endpoints: (a, b),
            base_stiffness,
            scale_high,
        }
    }

    /// Stiffness in `phase`, or `None` when the spring is rigid.
    pub fn stiffness(&self, phase: StiffnessPhase) -> Option<f64> {
        match (phase, self.scale_high) {
            (StiffnessPhase::Low, _) => Some(self.base_stiffness),
            (StiffnessPhase::High, HighScale::Factor(g)) => Some(g * self.base_stiffness),
            (StiffnessPhase::High, HighScale::Rigid) => None,
        }
    }

    /// Stiffness drop `k0 (1 - γ)` at a high-to-low switch. `None` for rigid
    /// springs.
    pub fn stiffness_drop(&self) -> Option<f64> {
        match self.scale_high {
            HighScale::Factor(g) => Some(self.base_stiffness * (1.0 - g)),
            HighScale::Rigid => None,
        }
    }

    /// Elongation `u_b - u_a` with ground displacement fixed at zero.
    pub fn elongation(&self, u: &DVector<f64>) -> f64 {
        let at = |node: usize| if node == 0 { 0.0 } else { u[node - 1] };
        at(self.endpoints.1) - at(self.endpoints.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Node held at zero displacement.
    Lock(usize),
    /// Two nodes moving as one rigid body.
    Merge(usize, usize),
}

/// A constraint that is active in one stiffness phase only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseConstraint {
    pub constraint: Constraint,
    pub phase: StiffnessPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    masses: Vec<f64>,
    springs: Vec<SpringElement>,
    rayleigh_alpha: f64,
    rayleigh_beta: f64,
    constraints: Vec<PhaseConstraint>,
}

impl SystemModel {
    pub fn new(
        masses: Vec<f64>,
        springs: Vec<SpringElement>,
        rayleigh_alpha: f64,
        rayleigh_beta: f64,
        constraints: Vec<PhaseConstraint>,
    ) -> Result<Self, ModelError> {
        if masses.is_empty() {
            return Err(ModelError::Empty);
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ModelError::SingularMass { node: i + 1, mass: m });
            }
        }
        let nodes = masses.len();
        for (j, s) in springs.iter().enumerate() {
            let (a, b) = s.endpoints;
            for node in [a, b] {
                if node > nodes {
                    return Err(ModelError::UnknownNode { spring: j, node });
                }
            }
            if a == b {
                return Err(ModelError::DegenerateSpring { spring: j });
            }
            if !(s.base_stiffness > 0.0 && s.base_stiffness.is_finite()) {
                return Err(ModelError::NonPositiveStiffness {
                    spring: j,
                    value: s.base_stiffness,
                });
            }
            match s.scale_high {
                HighScale::Factor(g) if !(g >= 1.0 && g.is_finite()) => {
                    return Err(ModelError::InvalidScale { spring: j, value: g });
                }
                HighScale::Rigid if a != 0 && b != 0 => {
                    return Err(ModelError::Constraint(format!(
                        "rigid spring {j} joins free nodes {a} and {b}; lock target is ambiguous \
                         (declare a merge constraint instead)"
                    )));
                }
                _ => {}
            }
        }
        if !(rayleigh_alpha >= 0.0 && rayleigh_beta >= 0.0)
            || !rayleigh_alpha.is_finite()
            || !rayleigh_beta.is_finite()
        {
            return Err(ModelError::NegativeDamping {
                alpha: rayleigh_alpha,
                beta: rayleigh_beta,
            });
        }
        for pc in &constraints {
            match pc.constraint {
                Constraint::Lock(n) if n == 0 || n > nodes => {
                    return Err(ModelError::Constraint(format!("lock on invalid node {n}")));
                }
                Constraint::Merge(a, b) if a == 0 || b == 0 || a > nodes || b > nodes || a == b => {
                    return Err(ModelError::Constraint(format!(
                        "merge of invalid nodes {a} and {b}"
                    )));
                }
                _ => {}
            }
        }
        Ok(Self {
            masses,
            springs,
            rayleigh_alpha,
            rayleigh_beta,
            constraints,
        })
    }

    pub fn dofs(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn springs(&self) -> &[SpringElement] {
        &self.springs
    }

    pub fn rayleigh(&self) -> (f64, f64) {
        (self.rayleigh_alpha, self.rayleigh_beta)
    }

    pub fn declared_constraints(&self) -> &[PhaseConstraint] {
        &self.constraints
    }

    pub fn has_high_phase_change(&self) -> bool {
        self.springs
            .iter()
            .any(|s| s.scale_high != HighScale::Factor(1.0))
            || self.constraints.iter().any(|c| c.phase == StiffnessPhase::High)
    }

    /// Constraints active in `phase`: declared ones plus locks implied by
    /// rigid springs.
    pub fn constraints(&self, phase: StiffnessPhase) -> Vec<Constraint> {
        let mut out: Vec<Constraint> = self
            .constraints
            .iter()
            .filter(|c| c.phase == phase)
            .map(|c| c.constraint)
            .collect();
        if phase == StiffnessPhase::High {
            for s in &self.springs {
                if s.scale_high.is_rigid() {
                    let node = if s.endpoints.0 == 0 {
                        s.endpoints.1
                    } else {
                        s.endpoints.0
                    };
                    if !out.contains(&Constraint::Lock(node)) {
                        out.push(Constraint::Lock(node));
                    }
                }
            }
        }
        out
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.masses))
    }

    /// Stiffness matrix of `phase`. Rigid springs are left out; their effect
    /// is carried by the phase's lock constraints.
    pub fn stiffness_matrix(&self, phase: StiffnessPhase) -> DMatrix<f64> {
        let n = self.dofs();
        let mut k = DMatrix::zeros(n, n);
        for s in &self.springs {
            let Some(kj) = s.stiffness(phase) else {
                continue;
            };
            let (a, b) = s.endpoints;
            if a > 0 {
                k[(a - 1, a - 1)] += kj;
            }
            if b > 0 {
                k[(b - 1, b - 1)] += kj;
            }
            if a > 0 && b > 0 {
                k[(a - 1, b - 1)] -= kj;
                k[(b - 1, a - 1)] -= kj;
            }
        }
        k
    }

    /// `C = αM + βK` built from the given stiffness matrix.
    pub fn damping_matrix(&self, stiffness: &DMatrix<f64>) -> DMatrix<f64> {
        self.mass_matrix() * self.rayleigh_alpha + stiffness * self.rayleigh_beta
    }

    pub fn assemble(&self, phase: StiffnessPhase) -> PhaseMatrices {
        let mass = self.mass_matrix();
        let stiffness = self.stiffness_matrix(phase);
        let damping = self.damping_matrix(&stiffness);
        let constraints = self.constraints(phase);
        let reduction = Reduction::new(self.dofs(), &constraints);
        PhaseMatrices::new(phase, mass, stiffness, damping, constraints, reduction)
    }

    /// Potential energy `½ Σ k_j e_j²` in `phase`; rigid springs carry none.
    pub fn potential_energy(&self, u: &DVector<f64>, phase: StiffnessPhase) -> f64 {
        self.springs
            .iter()
            .filter_map(|s| s.stiffness(phase).map(|k| 0.5 * k * s.elongation(u).powi(2)))
            .sum()
    }

    pub fn kinetic_energy(&self, v: &DVector<f64>) -> f64 {
        self.masses
            .iter()
            .zip(v.iter())
            .map(|(m, v)| 0.5 * m * v * v)
            .sum()
    }
}

/// Maps free degrees of freedom onto the reduced coordinates of a phase.
///
/// `u = T r` where `T` has one nonzero (unit) entry per unlocked DoF; merged
/// DoFs share a column and locked DoFs have an empty row.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    map: Vec<Option<usize>>,
    reduced: usize,
}

impl Reduction {
    pub fn new(dofs: usize, constraints: &[Constraint]) -> Self {
        let mut parent: Vec<usize> = (0..dofs).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for c in constraints {
            if let Constraint::Merge(a, b) = *c {
                let (ra, rb) = (find(&mut parent, a - 1), find(&mut parent, b - 1));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut locked = vec![false; dofs];
        for c in constraints {
            if let Constraint::Lock(n) = *c {
                let r = find(&mut parent, n - 1);
                locked[r] = true;
            }
        }
        let mut root_index = vec![None; dofs];
        let mut map = vec![None; dofs];
        let mut reduced = 0;
        for i in 0..dofs {
            let r = find(&mut parent, i);
            if locked[r] {
                continue;
            }
            let idx = *root_index[r].get_or_insert_with(|| {
                reduced += 1;
                reduced - 1
            });
            map[i] = Some(idx);
        }
        Self { map, reduced }
    }

    pub fn identity(dofs: usize) -> Self {
        Self {
            map: (0..dofs).map(Some).collect(),
            reduced: dofs,
        }
    }

    pub fn dofs(&self) -> usize {
        self.map.len()
    }

    pub fn reduced(&self) -> usize {
        self.reduced
    }

    pub fn is_identity(&self) -> bool {
        self.reduced == self.map.len() && self.map.iter().enumerate().all(|(i, m)| *m == Some(i))
    }

    pub fn index(&self, dof: usize) -> Option<usize> {
        self.map[dof]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.dofs(), self.reduced);
        for (i, m) in self.map.iter().enumerate() {
            if let Some(j) = m {
                t[(i, *j)] = 1.0;
            }
        }
        t
    }

    pub fn expand(&self, r: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dofs(),
            self.map.iter().map(|m| m.map_or(0.0, |j| r[j])),
        )
    }

    /// `Tᵀ x` for a full-size vector (forces).
    pub fn restrict(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.reduced);
        for (i, m) in self.map.iter().enumerate() {
            if let Some(j) = m {
                r[*j] += x[i];
            }
        }
        r
    }

    /// `Tᵀ A T`.
    pub fn reduce_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.matrix();
        t.transpose() * a * t
    }

    /// Mass-weighted projection `r = (TᵀMT)⁻¹ TᵀM u`: locked DoFs are
    /// dropped and merged DoFs take their mass-weighted mean, which conserves
    /// momentum when applied to velocities.
    pub fn project(&self, masses: &[f64], u: &DVector<f64>) -> DVector<f64> {
        let mut num = DVector::<f64>::zeros(self.reduced);
        let mut den = DVector::<f64>::zeros(self.reduced);
        let mut members = vec![0usize; self.reduced];
        let mut single = vec![0.0; self.reduced];
        for (i, m) in self.map.iter().enumerate() {
            if let Some(j) = m {
                num[*j] += masses[i] * u[i];
                den[*j] += masses[i];
                members[*j] += 1;
                single[*j] = u[i];
            }
        }
        // unmerged coordinates are copied, not re-weighted, so they stay bit-exact
        DVector::from_iterator(
            self.reduced,
            (0..self.reduced).map(|j| if members[j] == 1 { single[j] } else { num[j] / den[j] }),
        )
    }
}

/// System matrices of one stiffness phase together with its constraints.
#[derive(Debug, Clone)]
pub struct PhaseMatrices {
    pub phase: StiffnessPhase,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub constraints: Vec<Constraint>,
    pub reduction: Reduction,
    reduced_mass_inv: DMatrix<f64>,
    reduced_stiffness: DMatrix<f64>,
    reduced_damping: DMatrix<f64>,
}

impl PhaseMatrices {
    fn new(
        phase: StiffnessPhase,
        mass: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        damping: DMatrix<f64>,
        constraints: Vec<Constraint>,
        reduction: Reduction,
    ) -> Self {
        let reduced_mass = reduction.reduce_matrix(&mass);
        // Lumped masses stay diagonal under locks and merges.
        let reduced_mass_inv = DMatrix::from_diagonal(&reduced_mass.diagonal().map(|m| 1.0 / m));
        let reduced_stiffness = reduction.reduce_matrix(&stiffness);
        let reduced_damping = reduction.reduce_matrix(&damping);
        Self {
            phase,
            mass,
            stiffness,
            damping,
            constraints,
            reduction,
            reduced_mass_inv,
            reduced_stiffness,
            reduced_damping,
        }
    }

    pub fn reduced_mass(&self) -> DMatrix<f64> {
        self.reduction.reduce_matrix(&self.mass)
    }

    pub fn reduced_mass_inv(&self) -> &DMatrix<f64> {
        &self.reduced_mass_inv
    }

    pub fn reduced_stiffness(&self) -> &DMatrix<f64> {
        &self.reduced_stiffness
    }

    pub fn reduced_damping(&self) -> &DMatrix<f64> {
        &self.reduced_damping
    }

    /// Acceleration of a constraint-consistent state under force `f`.
    pub fn acceleration(
        &self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        f: &DVector<f64>,
    ) -> DVector<f64> {
        let red = &self.reduction;
        let r = red.project(self.mass.diagonal().as_slice(), u);
        let rd = red.project(self.mass.diagonal().as_slice(), v);
        let rhs = red.restrict(f) - &self.reduced_damping * rd - &self.reduced_stiffness * r;
        red.expand(&(&self.reduced_mass_inv * rhs))
    }

    /// Instantaneous dissipated power `vᵀCv`.
    pub fn dissipation_rate(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.damping * v))
    }
}

/// Stiffness of two springs in series. `k1` may be `f64::INFINITY` (rigid).
pub fn serial_stiffness(k1: f64, k2: f64) -> Result<f64, ModelError> {
    if !(k2 > 0.0 && k2.is_finite()) {
        return Err(ModelError::Domain { what: "k2", value: k2 });
    }
    if k1 == f64::INFINITY {
        return Ok(k2);
    }
    if !(k1 > 0.0 && k1.is_finite()) {
        return Err(ModelError::Domain { what: "k1", value: k1 });
    }
    Ok(k1 * k2 / (k1 + k2))
}

/// Duration of one quarter cycle, `(π/2)·√(m/k)`.
pub fn quarter_cycle_period(mass: f64, stiffness: f64) -> Result<f64, ModelError> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(ModelError::Domain { what: "mass", value: mass });
    }
    if !(stiffness > 0.0 && stiffness.is_finite()) {
        return Err(ModelError::Domain {
            what: "stiffness",
            value: stiffness,
        });
    }
    Ok(std::f64::consts::FRAC_PI_2 * (mass / stiffness).sqrt())
}

pub const REFERENCE_K01: f64 = 825.0;
pub const REFERENCE_K02: f64 = 300.0;
pub const REFERENCE_M1: f64 = 0.01;
pub const REFERENCE_M2: f64 = 1.5;
pub const REFERENCE_ALPHA: f64 = 0.1;
pub const REFERENCE_BETA: f64 = 0.001;

/// Serial two-DoF chain `ground -k1- m1 -k2- m2` with the reference
/// parameters and no stiffness change (γ1 = γ2 = 1).
pub fn identify_reference_parameters() -> SystemModel {
    serial_reference(HighScale::Factor(1.0), HighScale::Factor(1.0))
}

/// Reference chain with chosen high-phase scales for both springs.
pub fn serial_reference(scale1: HighScale, scale2: HighScale) -> SystemModel {
    SystemModel::new(
        vec![REFERENCE_M1, REFERENCE_M2],
        vec![
            SpringElement::new(0, 1, REFERENCE_K01, scale1),
            SpringElement::new(1, 2, REFERENCE_K02, scale2),
        ],
        REFERENCE_ALPHA,
        REFERENCE_BETA,
        Vec::new(),
    )
    .expect("reference parameters are valid")
}
