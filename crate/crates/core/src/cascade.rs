//! The cascaded source: two dual-rail SPDC sources whose inner beams meet on
//! a linear-optical Bell-state measurement; a two-click pattern heralds an
//! entangled state on the four outer modes.
//!
//! Joint 8-mode layout (source 1 then source 2, each `(a_H, a_V; b_H, b_V)`):
//!
//! ```text
//! 0 s1.aH   1 s1.aV   2 s1.bH   3 s1.bV   4 s2.aH   5 s2.aV   6 s2.bH   7 s2.bV
//! ```
//!
//! Modes 2–5 are detected, 0, 1, 6, 7 are heralded. The H beamsplitter takes
//! `(mode_a, mode_b) = (4, 2)`, the V beamsplitter `(5, 3)`, and the four
//! detectors read slots `[3, 2, 5, 4]` in that order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_beamsplitter, apply_phase, loss_registry, BeamsplitterSpec};
use crate::detection::{dark_registry, measure_bank, ClickPattern, Detector, DetectorParams};
use crate::error::{invalid, Result};
use crate::fock::{DensityOperator, FockKet, PureState};
use crate::spdc::{
    bell_state, pair_prob_unchecked, source_norm, truncated_source_state, BellSign, SourceParams,
};

pub const JOINT_MODES: usize = 8;
pub const INNER_MODES: [usize; 4] = [2, 3, 4, 5];
pub const OUTER_MODES: [usize; 4] = [0, 1, 6, 7];
pub const DETECTOR_MODES: [usize; 4] = [3, 2, 5, 4];
pub const BS_H: BeamsplitterSpec = BeamsplitterSpec {
    mode_a: 4,
    mode_b: 2,
    transmissivity: 0.5,
};
pub const BS_V: BeamsplitterSpec = BeamsplitterSpec {
    mode_a: 5,
    mode_b: 3,
    transmissivity: 0.5,
};

/// Heralded mode that receives the π correction on `m1 = 1` branches.
pub const CORRECTION_MODE: usize = 1;

/// Dropped truncation weight above which a run logs a warning.
pub const DROP_WARN: f64 = 1e-6;

/// The four desirable patterns with their `(m1, m2)` labels for `+` sources;
/// `−` sources flip `m2`.
pub fn desirable_pattern_table(sign: BellSign) -> BTreeMap<ClickPattern, (u8, u8)> {
    let flip = u8::from(sign == BellSign::Minus);
    [
        ([0, 0, 1, 1], (0, 0)),
        ([1, 1, 0, 0], (0, 1)),
        ([1, 0, 0, 1], (1, 1)),
        ([0, 1, 1, 0], (1, 0)),
    ]
    .into_iter()
    .map(|(p, (m1, m2))| (ClickPattern::from(p), (m1, m2 ^ flip)))
    .collect()
}

/// Patterns with `m1 = 0`.
pub fn default_accepted() -> Vec<ClickPattern> {
    vec![ClickPattern::from([0, 0, 1, 1]), ClickPattern::from([1, 1, 0, 0])]
}

pub fn all_desirable() -> Vec<ClickPattern> {
    desirable_pattern_table(BellSign::Plus).into_keys().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub source: SourceParams,
    pub eta_c: f64,
    pub detector: DetectorParams,
    #[serde(default = "default_accepted")]
    pub accepted: Vec<ClickPattern>,
    /// Cap on total photons of the joint input; `None` keeps every product
    /// term of the two truncated sources.
    #[serde(default)]
    pub n_max: Option<u32>,
    #[serde(default = "additive")]
    pub dark_model: String,
    #[serde(default = "kraus")]
    pub loss_impl: String,
}

fn additive() -> String {
    "additive".into()
}

fn kraus() -> String {
    "kraus".into()
}

impl CascadeConfig {
    pub fn ideal(n_s: f64) -> Self {
        Self {
            source: SourceParams::new(n_s),
            eta_c: 1.0,
            detector: DetectorParams::IDEAL,
            accepted: default_accepted(),
            n_max: None,
            dark_model: additive(),
            loss_impl: kraus(),
        }
    }

    pub fn noisy(n_s: f64, eta_c: f64, eta_d: f64, p_dark: f64) -> Self {
        Self {
            eta_c,
            detector: DetectorParams { eta_d, p_dark },
            ..Self::ideal(n_s)
        }
    }

    pub fn with_all_desirable(mut self) -> Self {
        self.accepted = all_desirable();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.detector.validate()?;
        if !(0.0..=1.0).contains(&self.eta_c) {
            return Err(invalid(format!("eta_c = {} outside [0, 1]", self.eta_c)));
        }
        if self.accepted.is_empty() {
            return Err(invalid("accepted pattern set is empty"));
        }
        let table = desirable_pattern_table(self.source.sign);
        if let Some(p) = self.accepted.iter().find(|p| !table.contains_key(p)) {
            return Err(invalid(format!("pattern {p} is not a desirable pattern")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HeraldRecord {
    pub pattern: ClickPattern,
    pub m1: u8,
    pub m2: u8,
    pub probability: f64,
    /// Unit-trace state of the outer modes for this pattern, uncorrected.
    pub state: DensityOperator,
}

#[derive(Clone, Debug)]
pub struct CascadeOutput {
    pub records: Vec<HeraldRecord>,
    pub p_gen: f64,
    /// Probability-weighted mixture over accepted patterns after the `m1`
    /// correction; `None` if no accepted pattern can occur.
    pub heralded: Option<DensityOperator>,
    pub dropped_weight: f64,
}

impl CascadeOutput {
    /// Fidelity of the corrected mixture with |Ψ⁺⟩ (0 when nothing heralds).
    pub fn fidelity(&self) -> f64 {
        self.heralded
            .as_ref()
            .map_or(0.0, |rho| rho.fidelity_pure(&bell_state(BellSign::Plus)).expect("4 modes"))
    }
}

/// |M±⟩ ⊗ |M±⟩ on the 8-mode layout.
pub fn joint_input(source: &SourceParams, n_max: Option<u32>) -> Result<(PureState, f64)> {
    let m = truncated_source_state(source)?;
    let t = m.tensor(&m, n_max);
    Ok((t.state, t.dropped_weight))
}

/// Sends an 8-mode state through both BSM beamsplitters.
pub fn apply_bsm_optics(state: &PureState) -> Result<PureState> {
    apply_beamsplitter(&apply_beamsplitter(state, &BS_H)?, &BS_V)
}

/// Operator on the four outer modes that reaches an ideal-efficiency BSM,
/// i.e. everything after coupling and before the detector bank.
pub fn pre_detection(config: &CascadeConfig) -> Result<(DensityOperator, f64)> {
    config.validate()?;
    let (input, dropped) = joint_input(&config.source, config.n_max)?;
    if dropped > DROP_WARN {
        log::warn!("joint truncation dropped weight {dropped:.3e}");
    }
    let loss = loss_registry().get(&config.loss_impl)?;
    let rho = DensityOperator::pure(input);
    let rho = loss.attenuate_modes(&rho, &INNER_MODES, config.eta_c)?;
    let rho = rho.map_states(JOINT_MODES, apply_bsm_optics)?;
    Ok((rho, dropped))
}

pub fn run_cascade(config: &CascadeConfig) -> Result<CascadeOutput> {
    let (rho, dropped_weight) = pre_detection(config)?;
    let dark = dark_registry().get(&config.dark_model)?;
    let detector = Detector::new(config.detector, dark)?;
    let outcomes = measure_bank(&rho, &DETECTOR_MODES, &detector, Some(&config.accepted))?;
    let table = desirable_pattern_table(config.source.sign);

    let mut records = Vec::new();
    let mut mixture = DensityOperator::empty(OUTER_MODES.len());
    let mut p_gen = 0.0;
    for pattern in &config.accepted {
        let Some(outcome) = outcomes.get(pattern) else {
            continue;
        };
        let (m1, m2) = table[pattern];
        let corrected = if m1 == 1 {
            outcome
                .state
                .map_states(4, |s| apply_phase(s, CORRECTION_MODE, PI))?
        } else {
            outcome.state.clone()
        };
        mixture.absorb(corrected.scaled(outcome.probability))?;
        p_gen += outcome.probability;
        records.push(HeraldRecord {
            pattern: pattern.clone(),
            m1,
            m2,
            probability: outcome.probability,
            state: outcome.state.clone(),
        });
    }
    Ok(CascadeOutput {
        records,
        p_gen,
        heralded: mixture.normalized(),
        dropped_weight,
    })
}

/// Closed-form heralded state for one desirable pattern with ideal devices:
/// `N'_0 [p(1)/2 (|1,0;0,1⟩ + (−1)^m1 |0,1;1,0⟩)
///        + (−1)^m2 √(p(0)p(2)/3) (|0,0;1,1⟩ + (−1)^m1 |1,1;0,0⟩)]`.
pub fn ideal_heralded_state(n_s: f64, m1: u8, m2: u8) -> PureState {
    let p0 = pair_prob_unchecked(0, n_s);
    let p1 = pair_prob_unchecked(1, n_s);
    let p2 = pair_prob_unchecked(2, n_s);
    let n0p = heralded_norm(n_s);
    let s1 = if m1 == 1 { -1.0 } else { 1.0 };
    let s2 = if m2 == 1 { -1.0 } else { 1.0 };
    let bell = n0p * p1 / 2.0;
    let spur = n0p * s2 * (p0 * p2 / 3.0).sqrt();
    PureState::from_terms(
        4,
        [
            (FockKet::from([1, 0, 0, 1]), bell),
            (FockKet::from([0, 1, 1, 0]), s1 * bell),
            (FockKet::from([0, 0, 1, 1]), spur),
            (FockKet::from([1, 1, 0, 0]), s1 * spur),
        ]
        .map(|(k, a)| (k, Complex64::new(a, 0.0))),
    )
    .expect("4-mode kets")
}

/// N'_0 = (p(1)²/2 + 2p(0)p(2)/3)^(−1/2).
pub fn heralded_norm(n_s: f64) -> f64 {
    let p0 = pair_prob_unchecked(0, n_s);
    let p1 = pair_prob_unchecked(1, n_s);
    let p2 = pair_prob_unchecked(2, n_s);
    (p1 * p1 / 2.0 + 2.0 * p0 * p2 / 3.0).powf(-0.5)
}

/// D′ = 4p(0)p(2) / (3p(1)²).
pub fn spurious_ratio_cascaded(n_s: f64) -> f64 {
    let p0 = pair_prob_unchecked(0, n_s);
    let p1 = pair_prob_unchecked(1, n_s);
    let p2 = pair_prob_unchecked(2, n_s);
    4.0 * p0 * p2 / (3.0 * p1 * p1)
}

/// N_s² / (N_s+1)^6, without the truncation normalization.
pub fn p_gen_closed_form(n_s: f64) -> f64 {
    n_s * n_s / (n_s + 1.0).powi(6)
}

/// The closed form including the N_0⁴ factor from normalizing both
/// truncated sources: the exact ideal-device probability of one desirable
/// pattern.
pub fn p_gen_per_pattern(n_s: f64) -> f64 {
    source_norm(n_s).powi(4) * p_gen_closed_form(n_s)
}

/// One line of the input-term × detection-pattern table.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternRow {
    pub source1: FockKet,
    pub source2: FockKet,
    pub coeff: f64,
    pub output: FockKet,
    pub pattern: ClickPattern,
    pub heralded: FockKet,
}

impl fmt::Display for PatternRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:+.6} {} {} {}",
            self.source1, self.source2, self.coeff, self.output, self.pattern, self.heralded
        )
    }
}

/// Basis kets `|n−k, k; k, n−k⟩` of a single source, up to `pairs` pairs.
pub fn source_basis(pairs: u32) -> Vec<FockKet> {
    let mut out = Vec::new();
    for n in 0..=pairs {
        for k in 0..=n {
            let (a, b) = ((n - k) as u8, k as u8);
            out.push(FockKet::new(vec![a, b, b, a]));
        }
    }
    out
}

/// Every pair of source basis kets with at most `order` pairs in total,
/// propagated through the ideal BSM optics. Rows are grouped by input pair
/// (ordered by total pairs, then by the source-basis order) and by output
/// ket within a group.
pub fn emit_pattern_table(order: u32) -> Result<Vec<PatternRow>> {
    let basis = source_basis(order);
    let pairs = |k: &FockKet| k.total() / 2;
    let mut inputs: Vec<(&FockKet, &FockKet)> = Vec::new();
    for total in 0..=order {
        for s1 in &basis {
            for s2 in &basis {
                if pairs(s1) + pairs(s2) == total {
                    inputs.push((s1, s2));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (s1, s2) in inputs {
        let out = apply_bsm_optics(&PureState::basis(s1.concat(s2)))?;
        for (ket, amp) in out.terms() {
            let pattern = ClickPattern(ket.select(&DETECTOR_MODES).occupations().to_vec());
            rows.push(PatternRow {
                source1: s1.clone(),
                source2: s2.clone(),
                coeff: amp.re,
                output: ket.clone(),
                pattern,
                heralded: ket.select(&OUTER_MODES),
            });
        }
    }
    Ok(rows)
}
