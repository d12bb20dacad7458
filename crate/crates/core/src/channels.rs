//! Linear-optical maps (beamsplitter, phase, mode permutation) and the
//! pure-loss channel.
//!
//! Beamsplitter convention, in creation operators with `t = √T`,
//! `r = √(1−T)`:
//!
//! ```text
//! a† → t·c† + r·d†
//! b† → r·c† − t·d†
//! ```
//!
//! where `c` is the output occupying `mode_a`'s slot and `d` the output in
//! `mode_b`'s slot. The transformation is real, symmetric and its own inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{check_mode_list, DensityOperator, FockKet, PureState};
use crate::registry::Registry;

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {x} outside [0, 1]")))
    }
}

fn check_mode(mode: usize, modes: usize) -> Result<()> {
    if mode < modes {
        Ok(())
    } else {
        Err(Error::ModeOutOfRange { mode, modes })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamsplitterSpec {
    pub mode_a: usize,
    pub mode_b: usize,
    /// Power transmissivity T; amplitudes use √T.
    pub transmissivity: f64,
}

impl BeamsplitterSpec {
    pub fn balanced(mode_a: usize, mode_b: usize) -> Self {
        Self {
            mode_a,
            mode_b,
            transmissivity: 0.5,
        }
    }

    fn validate(&self, modes: usize) -> Result<()> {
        check_mode(self.mode_a, modes)?;
        check_mode(self.mode_b, modes)?;
        if self.mode_a == self.mode_b {
            return Err(Error::OverlappingModes(vec![self.mode_a, self.mode_b]));
        }
        check_unit_interval("transmissivity", self.transmissivity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSpec {
    pub mode: usize,
    pub eta: f64,
}

pub fn apply_beamsplitter(state: &PureState, spec: &BeamsplitterSpec) -> Result<PureState> {
    spec.validate(state.modes())?;
    let t = spec.transmissivity.sqrt();
    let r = (1.0 - spec.transmissivity).sqrt();
    let (ma, mb) = (spec.mode_a, spec.mode_b);
    Ok(state.map_terms(state.modes(), |ket, amp| {
        let na = ket.get(ma);
        let nb = ket.get(mb);
        let total = na + nb;
        let norm = 1.0 / (factorial(na) * factorial(nb)).sqrt();
        let mut out = Vec::new();
        for i in 0..=na {
            let ca = binomial(na, i) * t.powi(i as i32) * r.powi((na - i) as i32);
            for j in 0..=nb {
                let cb = binomial(nb, j) * r.powi(j as i32) * (-t).powi((nb - j) as i32);
                let nc = i + j;
                let coeff = ca * cb * norm * (factorial(nc) * factorial(total - nc)).sqrt();
                if coeff != 0.0 {
                    out.push((ket.with(ma, nc).with(mb, total - nc), amp * coeff));
                }
            }
        }
        out
    }))
}

/// Multiplies each term by `exp(i·phi·n_mode)`.
pub fn apply_phase(state: &PureState, mode: usize, phi: f64) -> Result<PureState> {
    check_mode(mode, state.modes())?;
    Ok(state.map_terms(state.modes(), |ket, amp| {
        let n = f64::from(ket.get(mode));
        [(ket.clone(), amp * Complex64::from_polar(1.0, phi * n))]
    }))
}

/// Output mode `i` receives input mode `perm[i]`.
pub fn swap_modes(state: &PureState, perm: &[usize]) -> Result<PureState> {
    let modes = state.modes();
    if perm.len() != modes || check_mode_list(perm, modes).is_err() {
        return Err(Error::NonBijective(modes));
    }
    Ok(state.map_terms(modes, |ket, amp| [(ket.select(perm), amp)]))
}

/// A pure-loss channel implementation.
pub trait LossChannel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Applies loss of transmissivity `eta` to one mode.
    fn attenuate(&self, rho: &DensityOperator, spec: &AttenuationSpec) -> Result<DensityOperator>;

    /// Applies the same loss independently to every listed mode.
    fn attenuate_modes(
        &self,
        rho: &DensityOperator,
        modes: &[usize],
        eta: f64,
    ) -> Result<DensityOperator> {
        let mut out = rho.clone();
        for &mode in modes {
            out = self.attenuate(&out, &AttenuationSpec { mode, eta })?;
        }
        Ok(out)
    }
}

/// Binomial Kraus decomposition: `K_l|n⟩ = √(C(n,l) η^(n−l) (1−η)^l) |n−l⟩`.
/// Every ensemble member branches into one member per lost-photon count.
#[derive(Clone, Copy, Debug, Default)]
pub struct KrausLoss;

impl KrausLoss {
    fn branches(state: &PureState, mode: usize, eta: f64) -> Vec<PureState> {
        let max_n = state.kets().map(|k| k.get(mode)).max().unwrap_or(0);
        let mut out: Vec<PureState> = (0..=max_n).map(|_| PureState::new(state.modes())).collect();
        for (ket, &amp) in state.terms() {
            let n = ket.get(mode);
            for lost in 0..=n {
                let p = binomial(n, lost) * eta.powi((n - lost) as i32) * (1.0 - eta).powi(lost as i32);
                if p > 0.0 {
                    out[lost as usize].add(ket.with(mode, n - lost), amp * p.sqrt());
                }
            }
        }
        out
    }
}

impl LossChannel for KrausLoss {
    fn name(&self) -> &'static str {
        "kraus"
    }

    fn attenuate(&self, rho: &DensityOperator, spec: &AttenuationSpec) -> Result<DensityOperator> {
        check_mode(spec.mode, rho.modes())?;
        check_unit_interval("eta", spec.eta)?;
        if spec.eta == 1.0 {
            return Ok(rho.clone());
        }
        let mut out = DensityOperator::empty(rho.modes());
        for m in rho.members() {
            for branch in Self::branches(&m.state, spec.mode, spec.eta) {
                out.push_unnormalized(m.weight, branch);
            }
        }
        Ok(out)
    }

    /// Branches on the joint lost-photon tuple in one pass.
    fn attenuate_modes(
        &self,
        rho: &DensityOperator,
        modes: &[usize],
        eta: f64,
    ) -> Result<DensityOperator> {
        check_mode_list(modes, rho.modes())?;
        check_unit_interval("eta", eta)?;
        if eta == 1.0 || modes.is_empty() {
            return Ok(rho.clone());
        }
        let mut out = DensityOperator::empty(rho.modes());
        for m in rho.members() {
            let mut groups: std::collections::BTreeMap<FockKet, PureState> = Default::default();
            for (ket, &amp) in m.state.terms() {
                let mut partial = vec![(FockKet::new(Vec::new()), ket.clone(), 1.0)];
                for &mode in modes {
                    let n = ket.get(mode);
                    let mut next = Vec::with_capacity(partial.len() * (n as usize + 1));
                    for (lost, k, p) in &partial {
                        for l in 0..=n {
                            let q = binomial(n, l) * eta.powi((n - l) as i32) * (1.0 - eta).powi(l as i32);
                            if q > 0.0 {
                                let mut lo = lost.occupations().to_vec();
                                lo.push(l as u8);
                                next.push((FockKet::new(lo), k.with(mode, n - l), p * q));
                            }
                        }
                    }
                    partial = next;
                }
                for (lost, k, p) in partial {
                    groups
                        .entry(lost)
                        .or_insert_with(|| PureState::new(rho.modes()))
                        .add(k, amp * p.sqrt());
                }
            }
            for (_, s) in groups {
                out.push_unnormalized(m.weight, s);
            }
        }
        Ok(out)
    }
}

/// Loss as a beamsplitter onto a vacuum ancilla followed by tracing the
/// ancilla out. Slower; kept as an independent construction.
#[derive(Clone, Copy, Debug, Default)]
pub struct AncillaLoss;

impl LossChannel for AncillaLoss {
    fn name(&self) -> &'static str {
        "ancilla"
    }

    fn attenuate(&self, rho: &DensityOperator, spec: &AttenuationSpec) -> Result<DensityOperator> {
        let modes = rho.modes();
        check_mode(spec.mode, modes)?;
        check_unit_interval("eta", spec.eta)?;
        let bs = BeamsplitterSpec {
            mode_a: spec.mode,
            mode_b: modes,
            transmissivity: spec.eta,
        };
        let widened = rho.map_states(modes + 1, |s| {
            let with_ancilla = s.tensor(&PureState::vacuum(1), None).state;
            apply_beamsplitter(&with_ancilla, &bs)
        })?;
        let keep: Vec<usize> = (0..modes).collect();
        widened.partial_trace(&keep)
    }
}

pub fn loss_registry() -> Registry<dyn LossChannel> {
    let mut reg: Registry<dyn LossChannel> = Registry::new("loss channel");
    reg.register("kraus", Arc::new(KrausLoss));
    reg.register("ancilla", Arc::new(AncillaLoss));
    reg
}

/// One step of a scripted optical circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum CircuitOp {
    Bs {
        mode_a: usize,
        mode_b: usize,
        #[serde(default = "half")]
        transmissivity: f64,
    },
    Phase {
        mode: usize,
        phi: f64,
    },
    Loss {
        mode: usize,
        eta: f64,
    },
    Swap {
        perm: Vec<usize>,
    },
}

fn half() -> f64 {
    0.5
}

/// Ordered list of operations, serialized as a JSON array.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Circuit(pub Vec<CircuitOp>);

impl Circuit {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn apply(&self, rho: &DensityOperator, loss: &dyn LossChannel) -> Result<DensityOperator> {
        let mut out = rho.clone();
        for op in &self.0 {
            out = match op {
                CircuitOp::Bs {
                    mode_a,
                    mode_b,
                    transmissivity,
                } => {
                    let spec = BeamsplitterSpec {
                        mode_a: *mode_a,
                        mode_b: *mode_b,
                        transmissivity: *transmissivity,
                    };
                    out.map_states(out.modes(), |s| apply_beamsplitter(s, &spec))?
                }
                CircuitOp::Phase { mode, phi } => {
                    out.map_states(out.modes(), |s| apply_phase(s, *mode, *phi))?
                }
                CircuitOp::Loss { mode, eta } => loss.attenuate(
                    &out,
                    &AttenuationSpec {
                        mode: *mode,
                        eta: *eta,
                    },
                )?,
                CircuitOp::Swap { perm } => out.map_states(out.modes(), |s| swap_modes(s, perm))?,
            };
        }
        Ok(out)
    }
}

/// π phase, the `β` that toggles between the ± source states.
pub const PI_PHASE: f64 = PI;
