use num_complex::Complex64;
use proptest::prelude::*;

use spdc_cascade::cascade::{run_cascade, CascadeConfig};
use spdc_cascade::channels::{apply_beamsplitter, loss_registry, AncillaLoss, BeamsplitterSpec, KrausLoss, LossChannel};
use spdc_cascade::detection::{dark_registry, measure_bank, Detector, DetectorParams};
use spdc_cascade::fock::{DensityOperator, FockKet, PureState};
use spdc_cascade::memory::{load_qubit_pair, load_registry, switch_transmissivity};
use spdc_cascade::mux::{herald_prob, monte_carlo_p_success};

/// Random normalized 3-mode state with at most 3 photons per mode.
fn state3() -> impl Strategy<Value = PureState> {
    prop::collection::vec(((0u8..=3, 0u8..=3, 0u8..=3), -1.0f64..1.0, -1.0f64..1.0), 1..6).prop_filter_map(
        "zero state",
        |terms| {
            let mut psi = PureState::new(3);
            for ((a, b, c), re, im) in terms {
                psi.add(FockKet::from([a, b, c]), Complex64::new(re, im));
            }
            (psi.norm_sqr() > 1e-6).then(|| psi.normalized())
        },
    )
}

fn photon_number(rho: &DensityOperator) -> f64 {
    rho.diagonal_expectation(|k| f64::from(k.total()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beamsplitter_is_unitary_and_number_preserving(psi in state3(), t in 0.0f64..=1.0) {
        let spec = BeamsplitterSpec { mode_a: 0, mode_b: 2, transmissivity: t };
        let out = apply_beamsplitter(&psi, &spec).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        let n_in: f64 = psi.terms().map(|(k, a)| a.norm_sqr() * f64::from(k.total())).sum();
        let n_out: f64 = out.terms().map(|(k, a)| a.norm_sqr() * f64::from(k.total())).sum();
        prop_assert!((n_in - n_out).abs() < 1e-11);
        let back = apply_beamsplitter(&out, &spec).unwrap();
        let overlap = psi.inner(&back).unwrap().norm();
        prop_assert!((overlap - 1.0).abs() < 1e-11);
    }

    #[test]
    fn loss_preserves_trace_and_scales_mean(psi in state3(), eta in 0.0f64..=1.0) {
        let rho = DensityOperator::pure(psi);
        let kraus = KrausLoss.attenuate_modes(&rho, &[0, 1, 2], eta).unwrap();
        let ancilla = AncillaLoss.attenuate_modes(&rho, &[0, 1, 2], eta).unwrap();
        prop_assert!((kraus.trace() - 1.0).abs() < 1e-12);
        prop_assert!((photon_number(&kraus) - eta * photon_number(&rho)).abs() < 1e-11);
        prop_assert!(kraus.to_dense().max_abs_diff(&ancilla.to_dense()) < 1e-11);
    }

    #[test]
    fn loss_composes(psi in state3(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let rho = DensityOperator::pure(psi);
        let two = KrausLoss.attenuate_modes(&KrausLoss.attenuate_modes(&rho, &[1], a).unwrap(), &[1], b).unwrap();
        let one = KrausLoss.attenuate_modes(&rho, &[1], a * b).unwrap();
        prop_assert!(two.to_dense().max_abs_diff(&one.to_dense()) < 1e-11);
    }

    #[test]
    fn povm_is_complete(eta in 0.0f64..=1.0, p in 0.0f64..0.5, dark in prop::sample::select(vec!["additive", "saturating"])) {
        let det = Detector::new(DetectorParams::new(eta, p).unwrap(), dark_registry().get(dark).unwrap()).unwrap();
        let levels = 5;
        let mut sum = nalgebra::DMatrix::<f64>::zeros(levels as usize, levels as usize);
        for r in 0..=levels {
            sum += det.povm_element(r, levels);
        }
        let id = nalgebra::DMatrix::<f64>::identity(levels as usize, levels as usize);
        prop_assert!((sum - id).amax() < 1e-12);
    }

    #[test]
    fn bank_outcomes_sum_to_one(psi in state3(), eta in 0.0f64..=1.0, p in 0.0f64..0.2) {
        let rho = DensityOperator::pure(psi);
        let det = Detector::additive(DetectorParams::new(eta, p).unwrap()).unwrap();
        let out = measure_bank(&rho, &[0, 2], &det, None).unwrap();
        let total: f64 = out.values().map(|o| o.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for o in out.values() {
            prop_assert!((o.state.trace() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn memory_side_weights_partition(psi in state3(), model in prop::sample::select(vec!["qubit", "von"])) {
        let mut four = PureState::new(4);
        for (k, a) in psi.terms() {
            four.add(FockKet::from([k.get(0) as u8, k.get(1) as u8, k.get(2) as u8, 0]), *a);
        }
        let rho = DensityOperator::pure(four);
        let r = load_qubit_pair(&rho, load_registry().get(model).unwrap().as_ref()).unwrap();
        prop_assert!((r.p_success_a + r.p_00_a + r.p_invalid_a - 1.0).abs() < 1e-12);
        prop_assert!(r.p_joint <= r.p_success_a.min(r.p_success_b) + 1e-12);
    }

    #[test]
    fn herald_prob_is_a_monotone_probability(p in 0.0f64..=1.0, m in 1u64..1_000_000) {
        let a = herald_prob(p, m);
        let b = herald_prob(p, m + 1);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-15);
        prop_assert!(a >= p - 1e-15);
    }

    #[test]
    fn switch_transmissivity_decreases_with_m(eta_s in 0.01f64..=1.0, e in 0u32..30) {
        let m = 1u64 << e;
        let t = switch_transmissivity(eta_s, m).unwrap();
        prop_assert!(t <= 1.0);
        prop_assert!(switch_transmissivity(eta_s, m + 1).unwrap() <= t + 1e-15);
    }

    #[test]
    fn monte_carlo_is_a_frequency(p in 0.0f64..=1.0, m in 1u64..8, load in 0.0f64..=1.0, seed in any::<u64>()) {
        let mc = monte_carlo_p_success(p, m, load, 200, seed);
        prop_assert!(mc.successes <= mc.trials);
        prop_assert!((mc.estimate - mc.successes as f64 / mc.trials as f64).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cascade_output_is_a_state(
        ns in 1e-3f64..0.2,
        eta_c in 0.3f64..=1.0,
        eta_d in 0.3f64..=1.0,
        p in 0.0f64..1e-2,
        loss in prop::sample::select(vec!["kraus", "ancilla"]),
    ) {
        let mut cfg = CascadeConfig::noisy(ns, eta_c, eta_d, p);
        cfg.loss_impl = loss.into();
        let out = run_cascade(&cfg).unwrap();
        let rho = out.heralded.as_ref().unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-9);
        let f = out.fidelity();
        prop_assert!((0.0..=0.5 + 1e-9).contains(&f));
        prop_assert!(out.p_gen > 0.0 && out.p_gen < 1.0);
        let total: f64 = out.records.iter().map(|r| r.probability).sum();
        prop_assert!((total - out.p_gen).abs() < 1e-12);
        let d = rho.to_dense();
        prop_assert!(d.hermiticity_error() < 1e-12);
        prop_assert!(d.eigenvalues().iter().all(|&l| l > -1e-10));
        prop_assert!(loss_registry().get(loss).is_ok());
    }
}
