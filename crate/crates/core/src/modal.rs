//! Modal analysis: the symmetric-definite generalized eigenproblem
//! `K φ = λ M φ`, mass-normalized mode shapes and modal transforms.
//!
//! Convention: `u = Φ q` and `q = Φᵀ M u`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::model::{PhaseMatrices, StiffnessPhase, SystemModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModalError {
    #[error("{0} matrix is not symmetric")]
    NonSymmetric(&'static str),
    #[error("mass matrix is not positive definite")]
    IndefiniteMass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mode {mode} does not exist (basis has {count} modes)")]
    NoSuchMode { mode: usize, count: usize },
}

#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub phase: Option<StiffnessPhase>,
    /// λ_i = ω_i², ascending.
    pub eigenvalues: DVector<f64>,
    /// Columns are mass-normalized mode shapes in full DoF coordinates
    /// (zero at locked nodes).
    pub shapes: DMatrix<f64>,
    pub modal_mass: DMatrix<f64>,
    pub modal_damping: DMatrix<f64>,
    pub modal_stiffness: DMatrix<f64>,
    mass: DMatrix<f64>,
}

fn check_symmetric(a: &DMatrix<f64>, name: &'static str) -> Result<(), ModalError> {
    if !a.is_square() {
        return Err(ModalError::NonSymmetric(name));
    }
    let scale = a.abs().max().max(f64::MIN_POSITIVE);
    if (a - a.transpose()).abs().max() > 1e-12 * scale {
        return Err(ModalError::NonSymmetric(name));
    }
    Ok(())
}

impl ModalBasis {
    /// Solves the unconstrained eigenproblem for `(M, K, C)`.
    pub fn solve(
        mass: &DMatrix<f64>,
        stiffness: &DMatrix<f64>,
        damping: &DMatrix<f64>,
    ) -> Result<Self, ModalError> {
        check_symmetric(mass, "mass")?;
        check_symmetric(stiffness, "stiffness")?;
        check_symmetric(damping, "damping")?;
        let n = mass.nrows();
        for m in [stiffness, damping] {
            if m.nrows() != n {
                return Err(ModalError::DimensionMismatch {
                    expected: n,
                    got: m.nrows(),
                });
            }
        }
        let (eigenvalues, shapes) = generalized_eigen(mass, stiffness)?;
        Ok(Self::from_shapes(None, eigenvalues, shapes, mass, stiffness, damping))
    }

    /// Basis of one phase of a model. Constrained phases are solved on the
    /// reduced coordinates and embedded back.
    pub fn for_phase(model: &SystemModel, phase: StiffnessPhase) -> Result<Self, ModalError> {
        Self::from_phase_matrices(&model.assemble(phase))
    }

    pub fn from_phase_matrices(pm: &PhaseMatrices) -> Result<Self, ModalError> {
        let red = &pm.reduction;
        let (eigenvalues, reduced_shapes) =
            generalized_eigen(&pm.reduced_mass(), pm.reduced_stiffness())?;
        let shapes = red.matrix() * reduced_shapes;
        Ok(Self::from_shapes(
            Some(pm.phase),
            eigenvalues,
            shapes,
            &pm.mass,
            &pm.stiffness,
            &pm.damping,
        ))
    }

    fn from_shapes(
        phase: Option<StiffnessPhase>,
        eigenvalues: DVector<f64>,
        shapes: DMatrix<f64>,
        mass: &DMatrix<f64>,
        stiffness: &DMatrix<f64>,
        damping: &DMatrix<f64>,
    ) -> Self {
        let pt = shapes.transpose();
        Self {
            phase,
            eigenvalues,
            modal_mass: &pt * mass * &shapes,
            modal_damping: &pt * damping * &shapes,
            modal_stiffness: &pt * stiffness * &shapes,
            shapes,
            mass: mass.clone(),
        }
    }

    pub fn modes(&self) -> usize {
        self.shapes.ncols()
    }

    pub fn dofs(&self) -> usize {
        self.shapes.nrows()
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| l.max(0.0).sqrt() / (2.0 * std::f64::consts::PI))
            .collect()
    }

    /// 1-based mode index, as used throughout configs and the CLI.
    pub fn shape(&self, mode: usize) -> Result<DVector<f64>, ModalError> {
        if mode == 0 || mode > self.modes() {
            return Err(ModalError::NoSuchMode {
                mode,
                count: self.modes(),
            });
        }
        Ok(self.shapes.column(mode - 1).into_owned())
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    fn check_dofs(&self, x: &DVector<f64>) -> Result<(), ModalError> {
        if x.len() != self.dofs() {
            return Err(ModalError::DimensionMismatch {
                expected: self.dofs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_modes(&self, x: &DVector<f64>) -> Result<(), ModalError> {
        if x.len() != self.modes() {
            return Err(ModalError::DimensionMismatch {
                expected: self.modes(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Modal coordinates of a single physical vector, `Φᵀ M x`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModalError> {
        self.check_dofs(x)?;
        Ok(self.shapes.tr_mul(&(&self.mass * x)))
    }

    pub fn to_modal(
        &self,
        u: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), ModalError> {
        Ok((self.project(u)?, self.project(v)?))
    }

    pub fn from_modal(
        &self,
        q: &DVector<f64>,
        q_dot: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), ModalError> {
        self.check_modes(q)?;
        self.check_modes(q_dot)?;
        Ok((&self.shapes * q, &self.shapes * q_dot))
    }

    /// Modal damping coefficients `c̃_i` (diagonal of `Φᵀ C Φ`).
    pub fn damping_coefficients(&self) -> DVector<f64> {
        self.modal_damping.diagonal()
    }

    pub fn stiffness_coefficients(&self) -> DVector<f64> {
        self.modal_stiffness.diagonal()
    }
}

/// Cholesky reduction `A = L⁻¹ K L⁻ᵀ`, symmetric eigensolve, back
/// substitution `φ = L⁻ᵀ y`. Eigenpairs sorted ascending; each shape's first
/// nonzero entry is made positive.
fn generalized_eigen(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), ModalError> {
    let n = mass.nrows();
    if stiffness.nrows() != n || stiffness.ncols() != n {
        return Err(ModalError::DimensionMismatch {
            expected: n,
            got: stiffness.nrows(),
        });
    }
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let chol = Cholesky::new(mass.clone()).ok_or(ModalError::IndefiniteMass)?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(ModalError::IndefiniteMass)?;
    let a = &l_inv * stiffness * l_inv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let back = l_inv.transpose();
    let mut values = DVector::zeros(n);
    let mut shapes = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        values[col] = eig.eigenvalues[i];
        let mut phi = &back * eig.eigenvectors.column(i);
        // mass-normalize explicitly to scrub rounding from the back transform
        let norm = phi.dot(&(mass * &phi)).sqrt();
        phi /= norm;
        let scale = phi.amax();
        if let Some(first) = phi.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                phi.neg_mut();
            }
        }
        shapes.set_column(col, &phi);
    }
    Ok((values, shapes))
}

/// Converts modal coordinates between two bases of the same node set by way
/// of physical space.
pub fn change_basis(
    q_from: &DVector<f64>,
    from: &ModalBasis,
    to: &ModalBasis,
) -> Result<DVector<f64>, ModalError> {
    if from.dofs() != to.dofs() {
        return Err(ModalError::DimensionMismatch {
            expected: from.dofs(),
            got: to.dofs(),
        });
    }
    from.check_modes(q_from)?;
    to.project(&(&from.shapes * q_from))
}

/// Basis of `γK` predicted from the basis of `K`: same shapes, eigenvalues
/// scaled by γ. Modal damping follows Rayleigh damping, `α + βγλ_i`.
pub fn global_scaling_predicts(basis: &ModalBasis, gamma: f64, rayleigh: (f64, f64)) -> ModalBasis {
    let (alpha, beta) = rayleigh;
    let eigenvalues = &basis.eigenvalues * gamma;
    let modal_stiffness = &basis.modal_stiffness * gamma;
    let modal_damping = &basis.modal_mass * alpha + &modal_stiffness * beta;
    ModalBasis {
        phase: Some(StiffnessPhase::High),
        eigenvalues,
        shapes: basis.shapes.clone(),
        modal_mass: basis.modal_mass.clone(),
        modal_damping,
        modal_stiffness,
        mass: basis.mass.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{identify_reference_parameters, serial_reference, HighScale};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Closed-form 2×2 oracle: roots of det(K − λM) for diagonal M.
    fn char_poly_roots(k: &DMatrix<f64>, m1: f64, m2: f64) -> (f64, f64) {
        let a = m1 * m2;
        let b = -(k[(0, 0)] * m2 + k[(1, 1)] * m1);
        let c = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
        let d = (b * b - 4.0 * a * c).sqrt();
        ((-b - d) / (2.0 * a), (-b + d) / (2.0 * a))
    }

    #[test]
    fn reference_eigenvalues_match_closed_form() {
        let model = identify_reference_parameters();
        let basis = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let (l1, l2) = char_poly_roots(&model.stiffness_matrix(StiffnessPhase::Low), 0.01, 1.5);
        assert_relative_eq!(basis.eigenvalues[0], l1, max_relative = 1e-12);
        assert_relative_eq!(basis.eigenvalues[1], l2, max_relative = 1e-12);
    }

    #[test]
    fn basis_invariants_hold() {
        let model = serial_reference(HighScale::Factor(1.0), HighScale::Factor(5.0));
        for phase in [StiffnessPhase::Low, StiffnessPhase::High] {
            let pm = model.assemble(phase);
            let b = ModalBasis::from_phase_matrices(&pm).unwrap();
            let knorm = pm.stiffness.norm();
            for i in 0..b.modes() {
                let phi = b.shapes.column(i);
                let res = &pm.stiffness * phi - &pm.mass * phi * b.eigenvalues[i];
                assert!(res.norm() < 1e-9 * knorm * phi.norm());
                let first = phi.iter().find(|x| x.abs() > 0.0).unwrap();
                assert!(*first > 0.0);
            }
            assert!((&b.modal_mass - DMatrix::identity(2, 2)).amax() < 1e-9);
            assert!(b.modal_damping[(0, 1)].abs() < 1e-9);
            assert!(b.eigenvalues[0] <= b.eigenvalues[1]);
        }
    }

    #[test]
    fn locked_phase_has_reduced_basis_with_zero_rows() {
        let model = serial_reference(HighScale::Rigid, HighScale::Factor(1.0));
        let b = ModalBasis::for_phase(&model, StiffnessPhase::High).unwrap();
        assert_eq!(b.modes(), 1);
        assert_eq!(b.shapes[(0, 0)], 0.0);
        assert_relative_eq!(b.eigenvalues[0], 300.0 / 1.5, max_relative = 1e-12);
        assert_relative_eq!(b.shapes[(1, 0)], 1.0 / 1.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert_eq!(ModalBasis::solve(&m, &k, &m).unwrap_err(), ModalError::NonSymmetric("stiffness"));
        let bad_m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(ModalBasis::solve(&bad_m, &m, &m).unwrap_err(), ModalError::IndefiniteMass);
    }

    #[test]
    fn modal_transform_examples() {
        let model = identify_reference_parameters();
        let b = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let phi1 = b.shape(1).unwrap();
        let q = b.project(&phi1).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1].abs() < 1e-12);
        let (u, v) = b.from_modal(&DVector::zeros(2), &DVector::zeros(2)).unwrap();
        assert_eq!(u, DVector::zeros(2));
        assert_eq!(v, DVector::zeros(2));
        assert!(matches!(b.shape(3), Err(ModalError::NoSuchMode { .. })));
        assert!(matches!(
            b.to_modal(&DVector::zeros(3), &DVector::zeros(3)),
            Err(ModalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn change_basis_identity_and_cross_term() {
        let model = serial_reference(HighScale::Factor(1.0), HighScale::Factor(5.0));
        let low = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let high = ModalBasis::for_phase(&model, StiffnessPhase::High).unwrap();
        let q = DVector::from_vec(vec![0.3, -0.1]);
        let same = change_basis(&q, &low, &low).unwrap();
        assert!((&same - &q).amax() < 1e-12);
        let there = change_basis(&q, &low, &high).unwrap();
        let back = change_basis(&there, &high, &low).unwrap();
        assert!((&back - &q).amax() < 1e-12);

        // Pure low mode 1 seen from the local high basis: explicit projection.
        let pure = DVector::from_vec(vec![1.0, 0.0]);
        let qh = change_basis(&pure, &low, &high).unwrap();
        let phi1 = low.shapes.column(0);
        let m = model.mass_matrix();
        let expect0 = high.shapes.column(0).dot(&(&m * phi1));
        let expect1 = high.shapes.column(1).dot(&(&m * phi1));
        assert_relative_eq!(qh[0], expect0, epsilon = 1e-14);
        assert_relative_eq!(qh[1], expect1, epsilon = 1e-14);
        assert!(qh[0].abs() > 0.5);
        assert!(qh[1].abs() > 1e-4);
    }

    #[test]
    fn global_prediction_examples() {
        let model = identify_reference_parameters();
        let b = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let same = global_scaling_predicts(&b, 1.0, model.rayleigh());
        assert_eq!(same.eigenvalues, b.eigenvalues);
        let g = global_scaling_predicts(&b, 2.421, model.rayleigh());
        assert!((g.eigenvalues[0] - 354.91).abs() < 0.01);
        let four = global_scaling_predicts(&b, 4.0, model.rayleigh());
        for (f4, f1) in four.frequencies_hz().iter().zip(b.frequencies_hz()) {
            assert_relative_eq!(*f4, 2.0 * f1, max_relative = 1e-12);
        }
        let solved = ModalBasis::for_phase(
            &serial_reference(HighScale::Factor(2.421), HighScale::Factor(2.421)),
            StiffnessPhase::High,
        )
        .unwrap();
        assert!((&solved.eigenvalues - &g.eigenvalues).amax() < 1e-9 * g.eigenvalues.amax());
        assert!((&solved.shapes - &g.shapes).amax() < 1e-9);
        assert!((&solved.modal_damping - &g.modal_damping).amax() < 1e-6);
    }

    #[test]
    fn local_scaling_rotates_mode_shapes() {
        let model = serial_reference(HighScale::Factor(1.0), HighScale::Factor(1.5));
        let low = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let high = ModalBasis::for_phase(&model, StiffnessPhase::High).unwrap();
        let cos = |a: DVector<f64>, b: DVector<f64>| a.dot(&b).abs() / (a.norm() * b.norm());
        let worst = (0..2)
            .map(|i| cos(low.shapes.column(i).into(), high.shapes.column(i).into()))
            .fold(1.0, f64::min);
        assert!(worst < 1.0 - 1e-6);
    }

    proptest! {
        #[test]
        fn proportional_scaling_keeps_shapes(gamma in 0.1f64..20.0, k1 in 10.0f64..1e4, k2 in 10.0f64..1e4) {
            let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 2.0]));
            let k = DMatrix::from_row_slice(2, 2, &[k1 + k2, -k2, -k2, k2]);
            let b = ModalBasis::solve(&m, &k, &(&k * 0.0)).unwrap();
            let s = ModalBasis::solve(&m, &(&k * gamma), &(&k * 0.0)).unwrap();
            for i in 0..2 {
                prop_assert!((s.eigenvalues[i] - gamma * b.eigenvalues[i]).abs() <= 1e-9 * s.eigenvalues[i]);
                let dot = s.shapes.column(i).dot(&(&m * b.shapes.column(i)));
                prop_assert!((dot.abs() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn round_trips_are_identity(u1 in -1.0f64..1.0, u2 in -1.0f64..1.0, v1 in -1.0f64..1.0, v2 in -1.0f64..1.0) {
            let model = serial_reference(HighScale::Factor(1.0), HighScale::Factor(5.0));
            let low = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
            let high = ModalBasis::for_phase(&model, StiffnessPhase::High).unwrap();
            let u = DVector::from_vec(vec![u1, u2]);
            let v = DVector::from_vec(vec![v1, v2]);
            let (q, qd) = low.to_modal(&u, &v).unwrap();
            let (u2b, v2b) = low.from_modal(&q, &qd).unwrap();
            prop_assert!((&u2b - &u).amax() < 1e-12);
            prop_assert!((&v2b - &v).amax() < 1e-12);
            let qh = change_basis(&q, &low, &high).unwrap();
            let phys_to = &high.shapes * &qh;
            let phys_from = &low.shapes * &q;
            prop_assert!((&phys_to - &phys_from).amax() < 1e-12);
        }
    }
}
