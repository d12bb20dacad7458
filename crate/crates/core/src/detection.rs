//! Photon-number-resolving detectors with sub-unity efficiency and dark
//! clicks, and joint measurement of a detector bank.
//!
//! A detector registers `r` counts on `n` incident photons with probability
//! `Σ_k C(n,k) η^k (1−η)^(n−k) · D(r|k)`, where `D` is the dark-count model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channels::binomial;
use crate::error::{invalid, Error, Result};
use crate::fock::{check_mode_list, DensityOperator, FockKet};
use crate::registry::Registry;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub eta_d: f64,
    pub p_dark: f64,
}

impl DetectorParams {
    pub const IDEAL: DetectorParams = DetectorParams {
        eta_d: 1.0,
        p_dark: 0.0,
    };

    pub fn new(eta_d: f64, p_dark: f64) -> Result<Self> {
        let p = Self { eta_d, p_dark };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_d) {
            return Err(invalid(format!("eta_d = {} outside [0, 1]", self.eta_d)));
        }
        if !(0.0..1.0).contains(&self.p_dark) {
            return Err(invalid(format!("p_dark = {} outside [0, 1)", self.p_dark)));
        }
        Ok(())
    }
}

/// How at most one dark click per gate combines with the true count.
pub trait DarkCountModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Distribution of the registered count given `detected` true counts.
    fn registered(&self, detected: u32, p_dark: f64) -> Vec<(u32, f64)>;
}

/// Registered = detected + j with j ~ Bernoulli(p_dark).
#[derive(Clone, Copy, Debug, Default)]
pub struct AdditiveDark;

impl DarkCountModel for AdditiveDark {
    fn name(&self) -> &'static str {
        "additive"
    }

    fn registered(&self, detected: u32, p_dark: f64) -> Vec<(u32, f64)> {
        if p_dark == 0.0 {
            return vec![(detected, 1.0)];
        }
        vec![(detected, 1.0 - p_dark), (detected + 1, p_dark)]
    }
}

/// A dark click is only visible in an otherwise empty gate.
#[derive(Clone, Copy, Debug, Default)]
pub struct SaturatingDark;

impl DarkCountModel for SaturatingDark {
    fn name(&self) -> &'static str {
        "saturating"
    }

    fn registered(&self, detected: u32, p_dark: f64) -> Vec<(u32, f64)> {
        if detected > 0 || p_dark == 0.0 {
            return vec![(detected, 1.0)];
        }
        vec![(0, 1.0 - p_dark), (1, p_dark)]
    }
}

pub fn dark_registry() -> Registry<dyn DarkCountModel> {
    let mut reg: Registry<dyn DarkCountModel> = Registry::new("dark-count model");
    reg.register("additive", Arc::new(AdditiveDark));
    reg.register("saturating", Arc::new(SaturatingDark));
    reg
}

#[derive(Clone)]
pub struct Detector {
    pub params: DetectorParams,
    pub dark: Arc<dyn DarkCountModel>,
}

impl fmt::Debug for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detector")
            .field("params", &self.params)
            .field("dark", &self.dark.name())
            .finish()
    }
}

impl Detector {
    pub fn new(params: DetectorParams, dark: Arc<dyn DarkCountModel>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, dark })
    }

    pub fn additive(params: DetectorParams) -> Result<Self> {
        Self::new(params, Arc::new(AdditiveDark))
    }

    pub fn ideal() -> Self {
        Self {
            params: DetectorParams::IDEAL,
            dark: Arc::new(AdditiveDark),
        }
    }

    /// Full distribution of the registered count on `n` incident photons.
    pub fn response(&self, n: u32) -> Vec<(u32, f64)> {
        let eta = self.params.eta_d;
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for k in 0..=n {
            let pk = binomial(n, k) * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32);
            if pk == 0.0 {
                continue;
            }
            for (r, pd) in self.dark.registered(k, self.params.p_dark) {
                *acc.entry(r).or_default() += pk * pd;
            }
        }
        acc.into_iter().filter(|&(_, p)| p > 0.0).collect()
    }

    /// ⟨n|Π_registered|n⟩.
    pub fn click_prob(&self, registered: u32, n: u32) -> f64 {
        self.response(n)
            .into_iter()
            .find(|&(r, _)| r == registered)
            .map_or(0.0, |(_, p)| p)
    }

    /// Diagonal POVM element Π_registered on Fock levels `0..levels`.
    pub fn povm_element(&self, registered: u32, levels: u32) -> DMatrix<f64> {
        let diag: Vec<f64> = (0..levels).map(|n| self.click_prob(registered, n)).collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
    }
}

/// Registered counts, one per detector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClickPattern(pub Vec<u8>);

impl ClickPattern {
    pub fn total(&self) -> u32 {
        self.0.iter().map(|&c| u32::from(c)).sum()
    }
}

impl<const N: usize> From<[u8; N]> for ClickPattern {
    fn from(v: [u8; N]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&c| c < 10) {
            for c in &self.0 {
                write!(f, "{c}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl fmt::Debug for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Accepts `0011` or `0,0,1,1`.
impl FromStr for ClickPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let counts: Option<Vec<u8>> = if s.contains(',') {
            s.split(',').map(|t| t.trim().parse().ok()).collect()
        } else {
            s.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect()
        };
        match counts {
            Some(c) if !c.is_empty() => Ok(ClickPattern(c)),
            _ => Err(invalid(format!("bad click pattern `{s}`"))),
        }
    }
}

/// Probability of a pattern and the state of the undetected modes given it.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub probability: f64,
    /// Unit-trace conditioned operator on the undetected modes.
    pub state: DensityOperator,
}

#[derive(Serialize)]
struct PatternProbJson<'a> {
    pattern: &'a ClickPattern,
    prob: f64,
}

/// `[{"pattern":[..], "prob":p}, ...]` in pattern order.
pub fn pattern_map_json(outcomes: &BTreeMap<ClickPattern, Outcome>) -> serde_json::Value {
    let rows: Vec<PatternProbJson> = outcomes
        .iter()
        .map(|(pattern, o)| PatternProbJson {
            pattern,
            prob: o.probability,
        })
        .collect();
    serde_json::to_value(rows).expect("plain data")
}

/// Measures `detector_modes` (in order) with identical detectors.
///
/// With `select = None` every pattern with non-zero probability is returned;
/// otherwise only the listed patterns are computed. The remaining modes keep
/// their relative order in the conditioned states.
pub fn measure_bank(
    rho: &DensityOperator,
    detector_modes: &[usize],
    detector: &Detector,
    select: Option<&[ClickPattern]>,
) -> Result<BTreeMap<ClickPattern, Outcome>> {
    check_mode_list(detector_modes, rho.modes())?;
    if let Some(sel) = select {
        if let Some(bad) = sel.iter().find(|p| p.0.len() != detector_modes.len()) {
            return Err(Error::Dimension {
                expected: detector_modes.len(),
                got: bad.0.len(),
            });
        }
    }
    let kept = rho.modes() - detector_modes.len();
    let mut responses: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    let mut acc: BTreeMap<ClickPattern, DensityOperator> = BTreeMap::new();

    for member in rho.members() {
        for (det_ket, phi) in member.state.split_on(detector_modes) {
            for n in det_ket.occupations() {
                responses
                    .entry(u32::from(*n))
                    .or_insert_with(|| detector.response(u32::from(*n)));
            }
            let weighted = pattern_probs(&det_ket, &responses, select);
            for (pattern, p) in weighted {
                acc.entry(pattern)
                    .or_insert_with(|| DensityOperator::empty(kept))
                    .push_unnormalized(member.weight * p, phi.clone());
            }
        }
    }

    Ok(acc
        .into_iter()
        .filter_map(|(pattern, op)| {
            let probability = op.trace();
            op.normalized().map(|state| (pattern, Outcome { probability, state }))
        })
        .collect())
}

fn pattern_probs(
    det_ket: &FockKet,
    responses: &BTreeMap<u32, Vec<(u32, f64)>>,
    select: Option<&[ClickPattern]>,
) -> Vec<(ClickPattern, f64)> {
    let per_detector: Vec<&Vec<(u32, f64)>> = det_ket
        .occupations()
        .iter()
        .map(|n| &responses[&u32::from(*n)])
        .collect();
    match select {
        Some(sel) => sel
            .iter()
            .filter_map(|pattern| {
                let p: f64 = pattern
                    .0
                    .iter()
                    .zip(&per_detector)
                    .map(|(&r, resp)| {
                        resp.iter()
                            .find(|&&(rr, _)| rr == u32::from(r))
                            .map_or(0.0, |&(_, p)| p)
                    })
                    .product();
                (p > 0.0).then(|| (pattern.clone(), p))
            })
            .collect(),
        None => {
            let mut out = vec![(Vec::<u8>::new(), 1.0)];
            for resp in per_detector {
                let mut next = Vec::with_capacity(out.len() * resp.len());
                for (prefix, p) in &out {
                    for &(r, q) in resp {
                        let mut pat = prefix.clone();
                        pat.push(u8::try_from(r).expect("count fits u8"));
                        next.push((pat, p * q));
                    }
                }
                out = next;
            }
            out.into_iter().map(|(p, q)| (ClickPattern(p), q)).collect()
        }
    }
}
