//! Idealized heralded quantum memories loading the two dual-rail qubits of
//! a 4-mode state, and the switch-tree loss in front of them.
//!
//! Side A is modes `(0, 1)`, side B modes `(2, 3)`.

use std::sync::Arc;

use serde::Serialize;

use crate::channels::LossChannel;
use crate::error::{invalid, Error, Result};
use crate::fock::{DensityOperator, FockKet};
use crate::registry::Registry;
use crate::spdc::{bell_state, BellSign};

pub const SIDE_A: [usize; 2] = [0, 1];
pub const SIDE_B: [usize; 2] = [2, 3];

/// What one memory does with the photons of its mode pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideVerdict {
    Vacuum,
    Loaded,
    /// Photons present but the memory heralds failure.
    Rejected,
}

/// A memory loading rule, applied identically and independently per side.
pub trait LoadModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn verdict(&self, h: u32, v: u32) -> SideVerdict;
}

/// Projection onto the single-photon qubit subspace; multi-photon inputs
/// herald as failures.
#[derive(Clone, Copy, Debug, Default)]
pub struct QubitProjection;

impl LoadModel for QubitProjection {
    fn name(&self) -> &'static str {
        "qubit"
    }

    fn verdict(&self, h: u32, v: u32) -> SideVerdict {
        match h + v {
            0 => SideVerdict::Vacuum,
            1 => SideVerdict::Loaded,
            _ => SideVerdict::Rejected,
        }
    }
}

/// Vacuum-or-not: any non-empty mode pair loads, so multi-photon inputs load
/// erroneously and stay in the loaded state.
#[derive(Clone, Copy, Debug, Default)]
pub struct VacuumOrNot;

impl LoadModel for VacuumOrNot {
    fn name(&self) -> &'static str {
        "von"
    }

    fn verdict(&self, h: u32, v: u32) -> SideVerdict {
        if h + v == 0 {
            SideVerdict::Vacuum
        } else {
            SideVerdict::Loaded
        }
    }
}

pub fn load_registry() -> Registry<dyn LoadModel> {
    let mut reg: Registry<dyn LoadModel> = Registry::new("memory load model");
    reg.register("qubit", Arc::new(QubitProjection));
    reg.register("von", Arc::new(VacuumOrNot));
    reg
}

#[derive(Clone, Debug, Serialize)]
pub struct LoadResult {
    pub p_success_a: f64,
    pub p_success_b: f64,
    pub p_00_a: f64,
    pub p_00_b: f64,
    /// Weight the memory rejects despite photons being present.
    pub p_invalid_a: f64,
    pub p_invalid_b: f64,
    /// Both sides load.
    pub p_joint: f64,
    /// Normalized state given both sides loaded.
    #[serde(skip)]
    pub loaded_state: Option<DensityOperator>,
}

impl LoadResult {
    /// (1 − p_00,A)(1 − p_00,B).
    pub fn non_vacuum_factor(&self) -> f64 {
        (1.0 - self.p_00_a) * (1.0 - self.p_00_b)
    }

    /// Fidelity of the loaded pair with |Ψ⁺⟩ (0 if nothing loads).
    pub fn fidelity(&self) -> f64 {
        self.loaded_state
            .as_ref()
            .map_or(0.0, |rho| rho.fidelity_pure(&bell_state(BellSign::Plus)).expect("4 modes"))
    }
}

fn side_counts(k: &FockKet, side: [usize; 2]) -> (u32, u32) {
    (k.get(side[0]), k.get(side[1]))
}

/// Loads both dual-rail qubits of a unit-trace 4-mode operator.
pub fn load_qubit_pair(rho: &DensityOperator, model: &dyn LoadModel) -> Result<LoadResult> {
    if rho.modes() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            got: rho.modes(),
        });
    }
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("operator trace {tr} is not 1")));
    }
    let verdict = |k: &FockKet, side| {
        let (h, v) = side_counts(k, side);
        model.verdict(h, v)
    };
    let weight_of = |side, want: SideVerdict| rho.diagonal_expectation(|k| f64::from(u8::from(verdict(k, side) == want)));

    let loaded = rho.project(|k| {
        verdict(k, SIDE_A) == SideVerdict::Loaded && verdict(k, SIDE_B) == SideVerdict::Loaded
    });
    let p_joint = loaded.trace();
    Ok(LoadResult {
        p_success_a: weight_of(SIDE_A, SideVerdict::Loaded),
        p_success_b: weight_of(SIDE_B, SideVerdict::Loaded),
        p_00_a: weight_of(SIDE_A, SideVerdict::Vacuum),
        p_00_b: weight_of(SIDE_B, SideVerdict::Vacuum),
        p_invalid_a: weight_of(SIDE_A, SideVerdict::Rejected),
        p_invalid_b: weight_of(SIDE_B, SideVerdict::Rejected),
        p_joint,
        loaded_state: loaded.normalized(),
    })
}

/// Number of 1×2 switch stages needed to route one of `m` sources.
pub fn switch_stages(m: u64) -> Result<u32> {
    if m == 0 {
        return Err(invalid("number of sources must be at least 1"));
    }
    Ok(if m == 1 { 0 } else { 64 - (m - 1).leading_zeros() })
}

/// Per-mode transmissivity through the switch tree, η_s^⌈log₂ m⌉.
pub fn switch_transmissivity(eta_s: f64, m: u64) -> Result<f64> {
    if !(eta_s > 0.0 && eta_s <= 1.0) {
        return Err(invalid(format!("eta_s = {eta_s} outside (0, 1]")));
    }
    Ok(eta_s.powi(switch_stages(m)? as i32))
}

pub fn apply_switch_loss(
    rho: &DensityOperator,
    eta_s: f64,
    m: u64,
    loss: &dyn LossChannel,
) -> Result<DensityOperator> {
    attenuate_all(rho, switch_transmissivity(eta_s, m)?, loss)
}

/// Same loss `t` on all four modes.
pub fn attenuate_all(rho: &DensityOperator, t: f64, loss: &dyn LossChannel) -> Result<DensityOperator> {
    loss.attenuate_modes(rho, &[0, 1, 2, 3], t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::KrausLoss;
    use crate::fock::PureState;
    use crate::spdc::{truncated_source_state, SourceParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn bell_state_loads_perfectly() {
        let rho = DensityOperator::pure(bell_state(BellSign::Plus));
        for model in [&QubitProjection as &dyn LoadModel, &VacuumOrNot] {
            let r = load_qubit_pair(&rho, model).unwrap();
            assert_abs_diff_eq!(r.p_joint, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.p_success_a, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.p_00_b, 0.0);
            assert_abs_diff_eq!(r.fidelity(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn original_source_projection() {
        let n_s = 0.1;
        let m = truncated_source_state(&SourceParams::new(n_s)).unwrap();
        let rho = DensityOperator::pure(m);
        let q = load_qubit_pair(&rho, &QubitProjection).unwrap();
        // only the one-pair terms survive a qubit projection on both sides
        assert_abs_diff_eq!(q.fidelity(), 1.0, epsilon = 1e-12);
        let v = load_qubit_pair(&rho, &VacuumOrNot).unwrap();
        let (p1, p2) = (
            crate::spdc::pair_prob(1, n_s).unwrap(),
            crate::spdc::pair_prob(2, n_s).unwrap(),
        );
        assert_abs_diff_eq!(v.fidelity(), p1 / (p1 + p2), epsilon = 1e-12);
        assert_abs_diff_eq!(v.p_00_a, q.p_00_a, epsilon = 1e-15);
    }

    #[test]
    fn side_probabilities_partition() {
        let psi = PureState::from_terms(
            4,
            [
                (FockKet::from([1, 0, 0, 1]), num_complex::Complex64::new(0.6, 0.0)),
                (FockKet::from([0, 0, 1, 1]), num_complex::Complex64::new(0.0, 0.48)),
                (FockKet::from([2, 0, 0, 0]), num_complex::Complex64::new(0.64, 0.0)),
            ],
        )
        .unwrap()
        .normalized();
        let rho = DensityOperator::pure(psi);
        for model in [&QubitProjection as &dyn LoadModel, &VacuumOrNot] {
            let r = load_qubit_pair(&rho, model).unwrap();
            assert_abs_diff_eq!(r.p_success_a + r.p_00_a + r.p_invalid_a, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.p_success_b + r.p_00_b + r.p_invalid_b, 1.0, epsilon = 1e-12);
            let again = load_qubit_pair(r.loaded_state.as_ref().unwrap(), model).unwrap();
            assert_abs_diff_eq!(again.p_joint, 1.0, epsilon = 1e-12);
            assert!(
                again
                    .loaded_state
                    .unwrap()
                    .to_dense()
                    .max_abs_diff(&r.loaded_state.as_ref().unwrap().to_dense())
                    < 1e-12
            );
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        let rho = DensityOperator::pure(PureState::vacuum(2));
        assert!(load_qubit_pair(&rho, &QubitProjection).is_err());
        let half = DensityOperator::pure(PureState::vacuum(4)).scaled(0.5);
        assert!(load_qubit_pair(&half, &QubitProjection).is_err());
    }

    #[test]
    fn switch_tree() {
        assert_eq!(switch_stages(1).unwrap(), 0);
        assert_eq!(switch_stages(2).unwrap(), 1);
        assert_eq!(switch_stages(3).unwrap(), 2);
        assert_eq!(switch_stages(4).unwrap(), 2);
        assert_eq!(switch_stages(5).unwrap(), 3);
        assert_eq!(switch_stages(1 << 20).unwrap(), 20);
        assert!(switch_stages(0).is_err());
        assert_abs_diff_eq!(switch_transmissivity(0.9, 4).unwrap(), 0.81, epsilon = 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(switch_transmissivity(h, 2).unwrap(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(switch_transmissivity(h, 2).unwrap().powi(2), 0.5, epsilon = 1e-15);
        assert!(switch_transmissivity(0.0, 2).is_err());
    }

    #[test]
    fn single_source_has_no_switch_loss() {
        let rho = DensityOperator::pure(bell_state(BellSign::Plus));
        let out = apply_switch_loss(&rho, 0.3, 1, &KrausLoss).unwrap();
        assert!(out.to_dense().max_abs_diff(&rho.to_dense()) < 1e-15);
    }
}
