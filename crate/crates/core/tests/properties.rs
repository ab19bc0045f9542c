use nalgebra::DVector;
use proptest::prelude::*;
use stiffmod::energy::cycle_losses;
use stiffmod::{
    build_ledger, simulate, BasisSelector, ControllerSettings, Excitation, HighScale,
    IntegratorSettings, ModalBasis, ObservationVariable, SpringElement, StiffnessPhase, SwitchKind,
    SystemModel,
};

fn chain(m: [f64; 2], k: [f64; 2], scales: [f64; 2], rayleigh: (f64, f64)) -> SystemModel {
    SystemModel::new(
        m.to_vec(),
        vec![
            SpringElement::new(0, 1, k[0], HighScale::Factor(scales[0])),
            SpringElement::new(1, 2, k[1], HighScale::Factor(scales[1])),
        ],
        rayleigh.0,
        rayleigh.1,
        vec![],
    )
    .unwrap()
}

fn first_mode_control() -> ControllerSettings {
    ControllerSettings {
        observation: ObservationVariable::ModalAmplitude {
            mode: 1,
            basis: BasisSelector::Low,
        },
        ..Default::default()
    }
}

fn first_mode_start(model: &SystemModel) -> (DVector<f64>, DVector<f64>) {
    let basis = ModalBasis::for_phase(model, StiffnessPhase::Low).unwrap();
    (basis.shape(1).unwrap() * 0.01, DVector::zeros(2))
}

fn settings(t_end: f64) -> IntegratorSettings {
    IntegratorSettings {
        t_end,
        steps_per_period: 40.0,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn half_cycle_loss_matches_stiffness_ratio(
        m in 0.2f64..5.0,
        kl in 20.0f64..2000.0,
        ratio in 1.05f64..4.0,
    ) {
        let kh = kl * ratio;
        let model = SystemModel::new(
            vec![m],
            vec![SpringElement::new(0, 1, kl, HighScale::Factor(ratio))],
            0.0,
            0.0,
            vec![],
        )
        .unwrap();
        let period = 2.0 * std::f64::consts::PI * (m / kl).sqrt();
        let init = (DVector::from_element(1, 0.01), DVector::zeros(1));
        let traj = simulate(&model, &Excitation::Free, init, ControllerSettings::default(), &settings(6.0 * period)).unwrap();
        let energies: Vec<f64> = traj
            .events()
            .iter()
            .filter(|e| e.kind == SwitchKind::Decrease)
            .map(|e| 0.5 * m * e.state_before.v[0].powi(2) + 0.5 * kh * e.state_before.u[0].powi(2))
            .collect();
        prop_assert!(energies.len() >= 6);
        for w in energies.windows(2) {
            prop_assert!((w[1] / w[0] - 1.0 - (kl - kh) / kh).abs() < 1e-8);
        }
    }

    #[test]
    fn ledger_closes_on_random_chains(
        m1 in 0.01f64..1.0,
        m2 in 0.5f64..3.0,
        k1 in 100.0f64..2000.0,
        k2 in 100.0f64..1000.0,
        g1 in 1.0f64..4.0,
        g2 in 1.0f64..4.0,
        alpha in 0.0f64..0.5,
        beta in 0.0f64..2e-3,
    ) {
        let model = chain([m1, m2], [k1, k2], [g1, g2], (alpha, beta));
        let traj = simulate(&model, &Excitation::Free, first_mode_start(&model), first_mode_control(), &settings(2.0)).unwrap();
        let ledger = build_ledger(&model, &traj, &Excitation::Free, 1).unwrap();
        prop_assert!(ledger.max_closure_residual() <= 1e-4 * ledger.energy_scale());
        // Between switches an unforced run can only lose energy. Switches
        // themselves may add energy when the stiffened spring is stretched.
        let e0 = ledger.initial_energy();
        let times = traj.times();
        for k in 1..ledger.len() {
            let switched = traj.events().iter().any(|e| e.time > times[k - 1] && e.time <= times[k]);
            if !switched {
                prop_assert!(ledger.energy[k] <= ledger.energy[k - 1] + 1e-12 * e0);
            }
        }
    }

    #[test]
    fn global_scaling_keeps_a_pure_mode_pure(
        m1 in 0.01f64..1.0,
        m2 in 0.5f64..3.0,
        k1 in 100.0f64..2000.0,
        k2 in 100.0f64..1000.0,
        gamma in 1.1f64..4.0,
        beta in 0.0f64..2e-3,
    ) {
        let model = chain([m1, m2], [k1, k2], [gamma, gamma], (0.1, beta));
        let init = first_mode_start(&model);
        let traj = simulate(&model, &Excitation::Free, init, first_mode_control(), &settings(2.0)).unwrap();
        prop_assert!(!traj.events().is_empty());
        let basis = ModalBasis::for_phase(&model, StiffnessPhase::Low).unwrap();
        let m = model.mass_matrix();
        let q0 = (basis.shapes.transpose() * &m * traj.u(0)).norm();
        for k in 0..traj.len() {
            let q = basis.shapes.transpose() * &m * traj.u(k);
            prop_assert!(q[1].abs() < 1e-9 * q0);
        }
        let ledger = build_ledger(&model, &traj, &Excitation::Free, 1).unwrap();
        let e0 = ledger.initial_energy();
        prop_assert!(ledger.semi_active.iter().all(|s| s.abs() < 1e-9 * e0));
    }
}

#[test]
fn runs_are_deterministic() {
    let model = chain([0.01, 1.5], [825.0, 300.0], [1.0, 5.0], (0.1, 1e-3));
    let run = || simulate(&model, &Excitation::Free, first_mode_start(&model), first_mode_control(), &settings(1.0)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.times(), b.times());
    for k in 0..a.len() {
        assert_eq!(a.u(k), b.u(k));
        assert_eq!(a.v(k), b.v(k));
    }
    assert_eq!(a.events(), b.events());
}

#[test]
fn constant_stiffness_has_no_cycle_structure() {
    let model = chain([0.01, 1.5], [825.0, 300.0], [1.0, 1.0], (0.1, 1e-3));
    let control = ControllerSettings {
        enabled: false,
        ..first_mode_control()
    };
    let traj = simulate(&model, &Excitation::Free, first_mode_start(&model), control, &settings(1.0)).unwrap();
    assert!(traj.events().is_empty());
    let ledger = build_ledger(&model, &traj, &Excitation::Free, 1).unwrap();
    assert!(cycle_losses(&ledger).is_empty());
    assert!(ledger.pseudo_active.iter().all(|&x| x == 0.0));
}
