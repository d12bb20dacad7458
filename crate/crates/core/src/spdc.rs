//! SPDC source states: the pair-number distribution, the truncated dual-rail
//! source state |M±⟩ and its construction from two swapped two-mode squeezed
//! vacua.
//!
//! Mode order of a single source is `(a_H, a_V; b_H, b_V)`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_phase, swap_modes};
use crate::error::{invalid, Result};
use crate::fock::{FockKet, PureState};

/// Above this mean photon number the two-pair truncation is unreliable.
pub const TRUNCATION_WARN_NS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BellSign {
    Plus,
    Minus,
}

impl BellSign {
    pub fn factor(self) -> f64 {
        match self {
            BellSign::Plus => 1.0,
            BellSign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            BellSign::Plus => BellSign::Minus,
            BellSign::Minus => BellSign::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub n_s: f64,
    #[serde(default = "plus")]
    pub sign: BellSign,
    #[serde(default = "two")]
    pub pair_cutoff: u32,
}

fn plus() -> BellSign {
    BellSign::Plus
}

fn two() -> u32 {
    2
}

impl SourceParams {
    pub fn new(n_s: f64) -> Self {
        Self {
            n_s,
            sign: BellSign::Plus,
            pair_cutoff: 2,
        }
    }

    pub fn with_sign(mut self, sign: BellSign) -> Self {
        self.sign = sign;
        self
    }

    pub fn with_pair_cutoff(mut self, pair_cutoff: u32) -> Self {
        self.pair_cutoff = pair_cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_s.is_finite() && self.n_s > 0.0) {
            return Err(invalid(format!("n_s must be positive, got {}", self.n_s)));
        }
        if self.n_s > TRUNCATION_WARN_NS {
            // once per process at warn level; sweeps would repeat it per point
            static WARNED: AtomicBool = AtomicBool::new(false);
            let level = if WARNED.swap(true, Ordering::Relaxed) {
                log::Level::Debug
            } else {
                log::Level::Warn
            };
            log::log!(
                level,
                "n_s = {} exceeds {TRUNCATION_WARN_NS}; the pair truncation is a poor approximation here",
                self.n_s
            );
        }
        Ok(())
    }
}

/// p(n) = (n+1)·N_s^n / (N_s+1)^(n+2): probability that a dual-rail source
/// emits n pairs.
pub fn pair_prob(n: u32, n_s: f64) -> Result<f64> {
    if !(n_s.is_finite() && n_s >= 0.0) {
        return Err(invalid(format!("n_s must be non-negative, got {n_s}")));
    }
    Ok(pair_prob_unchecked(n, n_s))
}

pub(crate) fn pair_prob_unchecked(n: u32, n_s: f64) -> f64 {
    let n_f = f64::from(n);
    (n_f + 1.0) * n_s.powi(n as i32) / (n_s + 1.0).powi(n as i32 + 2)
}

/// Normalization N_0 of the two-pair truncated source.
pub fn source_norm(n_s: f64) -> f64 {
    (n_s + 1.0).powi(2) / (6.0 * n_s * n_s + 4.0 * n_s + 1.0).sqrt()
}

/// |M±⟩ = Σ_{n ≤ cutoff} Σ_k (±1)^k √(p(n)/(n+1)) |n−k, k; k, n−k⟩, normalized.
pub fn truncated_source_state(params: &SourceParams) -> Result<PureState> {
    params.validate()?;
    let sign = params.sign.factor();
    let mut state = PureState::new(4);
    for n in 0..=params.pair_cutoff {
        let c = (pair_prob_unchecked(n, params.n_s) / f64::from(n + 1)).sqrt();
        for k in 0..=n {
            let s = if k % 2 == 1 { sign } else { 1.0 };
            let (nk, kk) = (occ(n - k)?, occ(k)?);
            state.add(FockKet::new(vec![nk, kk, kk, nk]), Complex64::new(s * c, 0.0));
        }
    }
    Ok(state.normalized())
}

fn occ(n: u32) -> Result<u8> {
    u8::try_from(n).map_err(|_| invalid(format!("occupation {n} too large")))
}

/// Two two-mode squeezed vacua with `sinh²|ζ| = N_s`, one beam of each
/// swapped, then phase `beta` on the `a_V` mode. Product kets with more than
/// `n_max` pairs in total are dropped; the result is not renormalized.
pub fn tmsv_swapped_state(n_s: f64, n_max: u32, beta: f64) -> Result<PureState> {
    if !(n_s.is_finite() && n_s > 0.0) {
        return Err(invalid(format!("n_s must be positive, got {n_s}")));
    }
    let tmsv = |cap: u32| -> Result<PureState> {
        let mut s = PureState::new(2);
        for i in 0..=cap {
            let amp = (n_s.powi(i as i32) / (1.0 + n_s).powi(i as i32 + 1)).sqrt();
            s.add(FockKet::new(vec![occ(i)?, occ(i)?]), Complex64::new(amp, 0.0));
        }
        Ok(s)
    };
    let one = tmsv(n_max)?;
    let joint = one.tensor(&one, None).state;
    // (i, i, j, j) with the first kept pair as (a_H, b_V) and the second as
    // (a_V, b_H): |i, j; j, i⟩
    let mut truncated = PureState::new(4);
    for (k, a) in joint.terms() {
        if k.total() <= 2 * n_max {
            truncated.add(k.clone(), *a);
        }
    }
    let swapped = swap_modes(&truncated, &[0, 2, 3, 1])?;
    apply_phase(&swapped, 1, beta)
}

/// Phase `beta` that produces |M⁻⟩ from the swapped TMSV pair.
pub fn beta_for(sign: BellSign) -> f64 {
    match sign {
        BellSign::Plus => 0.0,
        BellSign::Minus => PI,
    }
}

/// (|1,0;0,1⟩ ± |0,1;1,0⟩)/√2.
pub fn bell_state(sign: BellSign) -> PureState {
    PureState::from_terms(
        4,
        [
            (FockKet::from([1, 0, 0, 1]), Complex64::new(FRAC_1_SQRT_2, 0.0)),
            (FockKet::from([0, 1, 1, 0]), Complex64::new(sign.factor() * FRAC_1_SQRT_2, 0.0)),
        ],
    )
    .expect("4-mode kets")
}

/// Spurious-to-Bell proportion of the single source, 3N_s/(N_s+1).
pub fn proportion_metric(n_s: f64) -> f64 {
    3.0 * n_s / (n_s + 1.0)
}

/// p(2)/p(1) for the single source.
pub fn pair_ratio(n_s: f64) -> f64 {
    pair_prob_unchecked(2, n_s) / pair_prob_unchecked(1, n_s)
}

/// Closed-form |⟨Ψ±|M±⟩|² = 2N_s(N_s+1)/(6N_s²+4N_s+1).
pub fn source_fidelity_closed_form(n_s: f64) -> f64 {
    2.0 * n_s * (n_s + 1.0) / (6.0 * n_s * n_s + 4.0 * n_s + 1.0)
}

/// Named parameter sets, stored as a JSON object `{name: {...}}`.
pub type Presets = BTreeMap<String, SourceParams>;

pub fn load_presets(path: &Path) -> Result<Presets> {
    let text = std::fs::read_to_string(path)?;
    let presets: Presets = serde_json::from_str(&text)?;
    for p in presets.values() {
        p.validate()?;
    }
    Ok(presets)
}
