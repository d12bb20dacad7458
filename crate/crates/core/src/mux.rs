//! Multiplexed cascaded source: M cascaded sources behind a switch tree,
//! with the first heralded pair routed into two idealized memories.
//!
//! A point is evaluated as
//!
//! ```text
//! P_success = (1 − (1 − P_gen)^M) · P_load(t),   t = η_s^⌈log₂ M⌉
//! ```
//!
//! where `P_load` is the probability that both memories load the heralded
//! state behind the switch tree. The literal two-sided product
//! `(1 − p_00,A)(1 − p_00,B)` is reported alongside.
//!
//! Two switch-loss models are available. `factor` loads the heralded state
//! as produced and scales each side's non-vacuum probability by `t`, so the
//! loaded fidelity does not depend on M. `state` attenuates the four outer
//! modes before loading, which also lets partially lost multi-photon
//! components load.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{run_cascade, CascadeConfig, CascadeOutput};
use crate::channels::{loss_registry, LossChannel};
use crate::error::{invalid, Error, Result};
use crate::fock::DensityOperator;
use crate::memory::{attenuate_all, load_qubit_pair, load_registry, switch_transmissivity, LoadModel};
use crate::registry::Registry;
use crate::spdc::{bell_state, truncated_source_state, BellSign, SourceParams};

/// 1 − (1 − p)^m, accurate for tiny p.
pub fn herald_prob(p_gen: f64, m: u64) -> f64 {
    -((m as f64) * (-p_gen).ln_1p()).exp_m1()
}

/// (1 − (1 − P_gen)^M)·(1 − p_00,A)·(1 − p_00,B).
pub fn p_success_product_form(p_gen: f64, m: u64, p_00_a: f64, p_00_b: f64) -> f64 {
    herald_prob(p_gen, m) * (1.0 - p_00_a) * (1.0 - p_00_b)
}

/// Device parameters of a sweep; η is applied as detector efficiency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub eta: f64,
    pub eta_s: f64,
    pub p_dark: f64,
    #[serde(default = "von")]
    pub memory_model: String,
    #[serde(default = "factor")]
    pub switch_model: String,
    #[serde(default = "additive")]
    pub dark_model: String,
    #[serde(default = "kraus")]
    pub loss_impl: String,
    /// Accept all four desirable patterns instead of the `m1 = 0` pair.
    #[serde(default)]
    pub all_desirable: bool,
}

fn von() -> String {
    "von".into()
}

fn factor() -> String {
    "factor".into()
}

fn additive() -> String {
    "additive".into()
}

fn kraus() -> String {
    "kraus".into()
}

impl Device {
    pub fn new(eta: f64, eta_s: f64, p_dark: f64) -> Self {
        Self {
            eta,
            eta_s,
            p_dark,
            memory_model: von(),
            switch_model: factor(),
            dark_model: additive(),
            loss_impl: kraus(),
            all_desirable: false,
        }
    }

    pub fn with_memory_model(mut self, name: &str) -> Self {
        self.memory_model = name.to_string();
        self
    }

    pub fn with_switch_model(mut self, name: &str) -> Self {
        self.switch_model = name.to_string();
        self
    }

    pub fn cascade_config(&self, n_s: f64) -> CascadeConfig {
        let mut c = CascadeConfig::noisy(n_s, 1.0, self.eta, self.p_dark);
        c.dark_model = self.dark_model.clone();
        c.loss_impl = self.loss_impl.clone();
        if self.all_desirable {
            c = c.with_all_desirable();
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_s > 0.0 && self.eta_s <= 1.0) {
            return Err(invalid(format!("eta_s = {} outside (0, 1]", self.eta_s)));
        }
        load_registry().get(&self.memory_model)?;
        loss_registry().get(&self.loss_impl)?;
        switch_registry().get(&self.switch_model)?;
        self.cascade_config(0.1).validate()
    }
}

/// Everything about a point that depends on M only through `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadMetrics {
    pub p_gen: f64,
    pub raw_fidelity: f64,
    pub p_00_a: f64,
    pub p_00_b: f64,
    pub p_joint: f64,
    pub fidelity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ns: f64,
    pub m: u64,
    pub p_gen: f64,
    pub p_00: f64,
    pub fidelity: f64,
    pub p_success: f64,
}

type CascadeKey = (u64, u64, u64, String);
type LoadKey = (u64, u64, u64, u64, String);

/// Shared memo of cascade runs and memory loads. Safe to use from many
/// threads; values are pure functions of their keys.
#[derive(Default)]
pub struct PointCache {
    cascades: Mutex<HashMap<CascadeKey, Arc<CascadeOutput>>>,
    loads: Mutex<HashMap<LoadKey, LoadMetrics>>,
}

fn device_tag(d: &Device) -> String {
    format!(
        "{}|{}|{}|{}|{}",
        d.memory_model, d.switch_model, d.dark_model, d.loss_impl, d.all_desirable
    )
}

impl PointCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.loads.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cascade(&self, n_s: f64, device: &Device) -> Result<Arc<CascadeOutput>> {
        let key = (n_s.to_bits(), device.eta.to_bits(), device.p_dark.to_bits(), device_tag(device));
        if let Some(hit) = self.cascades.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let out = Arc::new(run_cascade(&device.cascade_config(n_s))?);
        self.cascades
            .lock()
            .expect("cache lock")
            .insert(key, out.clone());
        Ok(out)
    }

    /// Metrics of the heralded state after a switch tree of transmissivity
    /// `t` and memory loading.
    pub fn metrics(&self, n_s: f64, t: f64, device: &Device) -> Result<LoadMetrics> {
        let key = (
            n_s.to_bits(),
            device.eta.to_bits(),
            t.to_bits(),
            device.p_dark.to_bits(),
            device_tag(device),
        );
        if let Some(hit) = self.loads.lock().expect("cache lock").get(&key) {
            return Ok(*hit);
        }
        let casc = self.cascade(n_s, device)?;
        let metrics = match &casc.heralded {
            None => LoadMetrics {
                p_gen: 0.0,
                raw_fidelity: 0.0,
                p_00_a: 1.0,
                p_00_b: 1.0,
                p_joint: 0.0,
                fidelity: 0.0,
            },
            Some(rho) => {
                let load = switched_load(rho, t, device)?;
                LoadMetrics {
                    p_gen: casc.p_gen,
                    raw_fidelity: casc.fidelity(),
                    p_00_a: load.p_00_a,
                    p_00_b: load.p_00_b,
                    p_joint: load.p_joint,
                    fidelity: load.fidelity,
                }
            }
        };
        self.loads
            .lock()
            .expect("cache lock")
            .insert(key, metrics);
        Ok(metrics)
    }

    /// Loads memoized metrics written by [`PointCache::save`].
    pub fn load_file(&self, path: &Path) -> Result<usize> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut n = 0;
        let mut map = self.loads.lock().expect("cache lock");
        for row in rdr.deserialize() {
            let r: CacheRow = row?;
            let metrics = r.metrics();
            map.insert(
                (r.ns.to_bits(), r.eta.to_bits(), r.t.to_bits(), r.p_dark.to_bits(), r.tag),
                metrics,
            );
            n += 1;
        }
        Ok(n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.loads.lock().expect("cache lock");
        let mut rows: Vec<CacheRow> = map
            .iter()
            .map(|((ns, eta, t, pd, tag), m)| CacheRow {
                ns: f64::from_bits(*ns),
                eta: f64::from_bits(*eta),
                t: f64::from_bits(*t),
                p_dark: f64::from_bits(*pd),
                tag: tag.clone(),
                p_gen: m.p_gen,
                raw_fidelity: m.raw_fidelity,
                p_00_a: m.p_00_a,
                p_00_b: m.p_00_b,
                p_joint: m.p_joint,
                fidelity: m.fidelity,
            })
            .collect();
        rows.sort_by(|a, b| {
            (&a.tag, a.ns, a.eta, a.t, a.p_dark)
                .partial_cmp(&(&b.tag, b.ns, b.eta, b.t, b.p_dark))
                .expect("finite keys")
        });
        let mut w = csv::Writer::from_path(path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    ns: f64,
    eta: f64,
    t: f64,
    p_dark: f64,
    tag: String,
    p_gen: f64,
    raw_fidelity: f64,
    p_00_a: f64,
    p_00_b: f64,
    p_joint: f64,
    fidelity: f64,
}

impl CacheRow {
    fn metrics(&self) -> LoadMetrics {
        LoadMetrics {
            p_gen: self.p_gen,
            raw_fidelity: self.raw_fidelity,
            p_00_a: self.p_00_a,
            p_00_b: self.p_00_b,
            p_joint: self.p_joint,
            fidelity: self.fidelity,
        }
    }
}

/// Full evaluation of one multiplexed configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MuxResult {
    pub n_s: f64,
    pub m: u64,
    pub transmissivity: f64,
    pub metrics: LoadMetrics,
    /// Herald probability times the joint load probability.
    pub p_success: f64,
    /// The literal two-sided `(1 − p_00)` product form.
    pub p_success_product: f64,
}

impl MuxResult {
    pub fn point(&self) -> SweepPoint {
        SweepPoint {
            ns: self.n_s,
            m: self.m,
            p_gen: self.metrics.p_gen,
            p_00: self.metrics.p_00_a,
            fidelity: self.metrics.fidelity,
            p_success: self.p_success,
        }
    }
}

pub fn p_success(n_s: f64, m: u64, device: &Device, cache: &PointCache) -> Result<MuxResult> {
    let t = switch_transmissivity(device.eta_s, m)?;
    let metrics = cache.metrics(n_s, t, device)?;
    let h = herald_prob(metrics.p_gen, m);
    Ok(MuxResult {
        n_s,
        m,
        transmissivity: t,
        metrics,
        p_success: h * metrics.p_joint,
        p_success_product: p_success_product_form(metrics.p_gen, m, metrics.p_00_a, metrics.p_00_b),
    })
}

/// Same pipeline without the cache; used to cross-check it.
pub fn p_success_uncached(n_s: f64, m: u64, device: &Device) -> Result<MuxResult> {
    device.validate()?;
    let casc = run_cascade(&device.cascade_config(n_s))?;
    let rho = casc
        .heralded
        .as_ref()
        .ok_or_else(|| invalid("no accepted pattern can occur"))?;
    let t = switch_transmissivity(device.eta_s, m)?;
    let load = switched_load(rho, t, device)?;
    let metrics = LoadMetrics {
        p_gen: casc.p_gen,
        raw_fidelity: casc.fidelity(),
        p_00_a: load.p_00_a,
        p_00_b: load.p_00_b,
        p_joint: load.p_joint,
        fidelity: load.fidelity,
    };
    Ok(MuxResult {
        n_s,
        m,
        transmissivity: t,
        metrics,
        p_success: herald_prob(casc.p_gen, m) * load.p_joint,
        p_success_product: p_success_product_form(casc.p_gen, m, load.p_00_a, load.p_00_b),
    })
}

/// Memory-load statistics behind a switch tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchedLoad {
    pub p_00_a: f64,
    pub p_00_b: f64,
    pub p_joint: f64,
    pub fidelity: f64,
}

/// How the switch-tree transmissivity `t` enters the memory load.
pub trait SwitchLossModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn load(
        &self,
        heralded: &DensityOperator,
        t: f64,
        loss: &dyn LossChannel,
        memory: &dyn LoadModel,
    ) -> Result<SwitchedLoad>;
}

/// Loss acts on the state of the four outer modes before loading.
#[derive(Clone, Copy, Debug, Default)]
pub struct StateAttenuation;

impl SwitchLossModel for StateAttenuation {
    fn name(&self) -> &'static str {
        "state"
    }

    fn load(
        &self,
        heralded: &DensityOperator,
        t: f64,
        loss: &dyn LossChannel,
        memory: &dyn LoadModel,
    ) -> Result<SwitchedLoad> {
        let r = load_qubit_pair(&attenuate_all(heralded, t, loss)?, memory)?;
        Ok(SwitchedLoad {
            p_00_a: r.p_00_a,
            p_00_b: r.p_00_b,
            p_joint: r.p_joint,
            fidelity: r.fidelity(),
        })
    }
}

/// Each side's non-vacuum probability is multiplied by `t`; the loaded
/// state is that of the unattenuated heralded state.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadingFactor;

impl SwitchLossModel for LoadingFactor {
    fn name(&self) -> &'static str {
        "factor"
    }

    fn load(
        &self,
        heralded: &DensityOperator,
        t: f64,
        _loss: &dyn LossChannel,
        memory: &dyn LoadModel,
    ) -> Result<SwitchedLoad> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("switch transmissivity {t} outside [0, 1]")));
        }
        let r = load_qubit_pair(heralded, memory)?;
        Ok(SwitchedLoad {
            p_00_a: 1.0 - (1.0 - r.p_00_a) * t,
            p_00_b: 1.0 - (1.0 - r.p_00_b) * t,
            p_joint: r.p_joint * t * t,
            fidelity: r.fidelity(),
        })
    }
}

pub fn switch_registry() -> Registry<dyn SwitchLossModel> {
    let mut reg: Registry<dyn SwitchLossModel> = Registry::new("switch-loss model");
    reg.register("factor", Arc::new(LoadingFactor));
    reg.register("state", Arc::new(StateAttenuation));
    reg
}

fn switched_load(rho: &DensityOperator, t: f64, device: &Device) -> Result<SwitchedLoad> {
    let loss = loss_registry().get(&device.loss_impl)?;
    let memory = load_registry().get(&device.memory_model)?;
    let switch = switch_registry().get(&device.switch_model)?;
    switch.load(rho, t, loss.as_ref(), memory.as_ref())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ns: Vec<f64>,
    pub m: Vec<u64>,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn powers_of_two(max_exp: u32) -> Vec<u64> {
    (0..=max_exp).map(|e| 1u64 << e).collect()
}

impl Grid {
    /// 200 log-spaced N_s in [1e-4, 1] and M = 2^0 … 2^20.
    pub fn default_grid() -> Self {
        Self {
            ns: log_space(1e-4, 1.0, 200),
            m: powers_of_two(20),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.m.is_empty() {
            return Err(invalid("sweep grid is empty"));
        }
        if let Some(bad) = self.ns.iter().find(|&&n| !(n.is_finite() && n > 0.0)) {
            return Err(invalid(format!("grid n_s {bad} is not positive")));
        }
        if self.m.contains(&0) {
            return Err(invalid("grid contains M = 0"));
        }
        Ok(())
    }
}

/// Evaluates the grid in N_s-major, M-minor order. Points already present
/// in `done` (keyed by exact `(ns, m)`) are reused as-is.
pub fn sweep_with(
    grid: &Grid,
    device: &Device,
    cache: &PointCache,
    done: &BTreeMap<(u64, u64), SweepPoint>,
) -> Result<Vec<SweepPoint>> {
    grid.validate()?;
    device.validate()?;
    let rows: Vec<Result<Vec<SweepPoint>>> = grid
        .ns
        .par_iter()
        .map(|&ns| {
            grid.m
                .iter()
                .map(|&m| match done.get(&(ns.to_bits(), m)) {
                    Some(p) => Ok(*p),
                    None => p_success(ns, m, device, cache).map(|r| r.point()),
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(grid.ns.len() * grid.m.len());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

pub fn sweep(grid: &Grid, device: &Device, cache: &PointCache) -> Result<Vec<SweepPoint>> {
    sweep_with(grid, device, cache, &BTreeMap::new())
}

pub fn write_points(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sweep CSV; a truncated final line (interrupted write) is ignored.
pub fn read_points(path: &Path) -> Result<Vec<SweepPoint>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<SweepPoint>() {
        match row {
            Ok(p) => out.push(p),
            Err(e) if matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. } | csv::ErrorKind::Deserialize { .. }) => {
                log::warn!("ignoring malformed sweep row: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

/// Sweeps into `path`, reusing rows already in the file when `resume` is
/// set. The file is written through a `.partial` sibling and renamed, so it
/// never holds a truncated table.
pub fn sweep_to_file(
    path: &Path,
    grid: &Grid,
    device: &Device,
    cache: &PointCache,
    resume: bool,
) -> Result<Vec<SweepPoint>> {
    let done: BTreeMap<(u64, u64), SweepPoint> = if resume && path.exists() {
        read_points(path)?
            .into_iter()
            .map(|p| ((p.ns.to_bits(), p.m), p))
            .collect()
    } else {
        BTreeMap::new()
    };
    let points = sweep_with(grid, device, cache, &done)?;
    let tmp = path.with_extension("partial");
    write_points(&tmp, &points)?;
    std::fs::rename(&tmp, path)?;
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub target: f64,
    /// `None` when no point reaches the target.
    pub best: Option<SweepPoint>,
}

/// Best P_success per fidelity target; ties go to smaller M, then smaller
/// N_s.
pub fn envelope(points: &[SweepPoint], targets: &[f64]) -> Result<Vec<EnvelopeRow>> {
    if points.is_empty() {
        return Err(invalid("no sweep points"));
    }
    Ok(targets
        .iter()
        .map(|&target| {
            let best = points
                .iter()
                .filter(|p| p.fidelity >= target)
                .fold(None::<SweepPoint>, |acc, p| match acc {
                    None => Some(*p),
                    Some(b) => {
                        let better = p.p_success > b.p_success
                            || (p.p_success == b.p_success
                                && (p.m < b.m || (p.m == b.m && p.ns < b.ns)));
                        Some(if better { *p } else { b })
                    }
                });
            EnvelopeRow { target, best }
        })
        .collect())
}

pub fn write_envelope(path: &Path, rows: &[EnvelopeRow]) -> Result<()> {
    write_envelope_to(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}

pub fn write_envelope_to<W: Write>(mut f: W, rows: &[EnvelopeRow]) -> Result<()> {
    writeln!(f, "target,attainable,ns,m,p_gen,p_00,fidelity,p_success")?;
    for r in rows {
        match &r.best {
            Some(p) => writeln!(
                f,
                "{},true,{},{},{},{},{},{}",
                r.target, p.ns, p.m, p.p_gen, p.p_00, p.fidelity, p.p_success
            )?,
            None => writeln!(f, "{},false,,,,,,", r.target)?,
        }
    }
    f.flush()?;
    Ok(())
}

/// Best fidelity-constrained P_success for one M over an N_s grid.
pub fn best_for_m(
    m: u64,
    ns_grid: &[f64],
    target_f: f64,
    device: &Device,
    cache: &PointCache,
) -> Result<Option<MuxResult>> {
    let mut best: Option<MuxResult> = None;
    for &ns in ns_grid {
        let r = p_success(ns, m, device, cache)?;
        if r.metrics.fidelity >= target_f && best.is_none_or(|b| r.p_success > b.p_success) {
            best = Some(r);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnaroundOptions {
    pub ns_grid: Vec<f64>,
    /// M values whose optimized P_success trend is examined.
    pub m_grid: Vec<u64>,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for TurnaroundOptions {
    fn default() -> Self {
        Self {
            ns_grid: log_space(1e-4, 0.2, 120),
            m_grid: vec![1, 2],
            lo: 0.65,
            hi: 0.9,
            tol: 1e-4,
        }
    }
}

/// Least-squares slope of ln P*_success against log₂ M at switch
/// transmissivity `eta_s`, where P* is the best fidelity-constrained value
/// for each M. Positive: multiplexing helps.
pub fn mux_trend(
    eta_s: f64,
    eta: f64,
    p_dark: f64,
    target_f: f64,
    opts: &TurnaroundOptions,
    base: &Device,
    cache: &PointCache,
) -> Result<f64> {
    let device = Device {
        eta,
        eta_s,
        p_dark,
        ..base.clone()
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &m in &opts.m_grid {
        let best = best_for_m(m, &opts.ns_grid, target_f, &device, cache)?.ok_or_else(|| {
            invalid(format!("fidelity target {target_f} unattainable at M = {m}"))
        })?;
        xs.push((m as f64).log2());
        ys.push(best.p_success.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("turnaround needs at least two distinct M values"));
    }
    Ok(sxy / sxx)
}

/// Switch transmissivity at which the optimized multiplexing trend changes
/// sign, by bisection on `[opts.lo, opts.hi]`.
pub fn turnaround_eta(
    eta: f64,
    p_dark: f64,
    target_f: f64,
    opts: &TurnaroundOptions,
    base: &Device,
    cache: &PointCache,
) -> Result<f64> {
    let f = |x: f64| mux_trend(x, eta, p_dark, target_f, opts, base, cache);
    let (mut lo, mut hi) = (opts.lo, opts.hi);
    let (mut flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A single original source whose four modes pass a channel of
/// transmissivity `eta` into the same memories; no heralding, so
/// P_success is the joint-load probability.
pub fn single_source(n_s: f64, eta: f64, device: &Device) -> Result<LoadMetrics> {
    let src = DensityOperator::pure(truncated_source_state(&SourceParams::new(n_s))?);
    let raw_fidelity = src.fidelity_pure(&bell_state(BellSign::Plus))?;
    let loss = loss_registry().get(&device.loss_impl)?;
    let memory = load_registry().get(&device.memory_model)?;
    let r = load_qubit_pair(&attenuate_all(&src, eta, loss.as_ref())?, memory.as_ref())?;
    Ok(LoadMetrics {
        p_gen: 1.0,
        raw_fidelity,
        p_00_a: r.p_00_a,
        p_00_b: r.p_00_b,
        p_joint: r.p_joint,
        fidelity: r.fidelity(),
    })
}

/// Small-P_gen model `M·P_gen·(η_s^log₂M)²`: its trend vanishes exactly at
/// η_s = 1/√2.
pub fn turnaround_small_pgen() -> f64 {
    // ln(M·η_s^(2 log₂ M)) = log₂M·(ln 2 + 2 ln η_s)
    (-std::f64::consts::LN_2 / 2.0).exp()
}

/// Monte-Carlo estimate of P_success: each trial draws M Bernoulli(P_gen)
/// heralds and, if any fires, one joint-load Bernoulli(p_load).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    pub std_err: f64,
}

pub fn monte_carlo_p_success(p_gen: f64, m: u64, p_load: f64, trials: u64, seed: u64) -> MonteCarlo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0u64;
    for _ in 0..trials {
        let heralded = (0..m).any(|_| rng.random::<f64>() < p_gen);
        if heralded && rng.random::<f64>() < p_load {
            successes += 1;
        }
    }
    let est = successes as f64 / trials as f64;
    let p_ref = est.clamp(1.0 / trials as f64, 1.0 - 1.0 / trials as f64);
    MonteCarlo {
        trials,
        successes,
        estimate: est,
        std_err: (p_ref * (1.0 - p_ref) / trials as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn product_form_example() {
        assert_abs_diff_eq!(p_success_product_form(0.1, 2, 0.0, 0.0), 0.19, epsilon = 1e-15);
        let p = 1e-12;
        assert_relative_eq!(herald_prob(p, 3), 3.0 * p - 3.0 * p * p + p.powi(3), max_relative = 1e-14);
    }

    #[test]
    fn small_pgen_turnaround_is_inverse_sqrt2() {
        assert_abs_diff_eq!(turnaround_small_pgen(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        let eta_s = std::f64::consts::FRAC_1_SQRT_2;
        for e in 0..=10u32 {
            let m = 1u64 << e;
            let t = switch_transmissivity(eta_s, m).unwrap();
            assert_abs_diff_eq!((m as f64) * t * t, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_helpers() {
        let g = log_space(1e-4, 1.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[4], 1.0);
        assert_abs_diff_eq!(g[2], 1e-2, epsilon = 1e-15);
        assert_eq!(powers_of_two(3), vec![1, 2, 4, 8]);
        let d = Grid::default_grid();
        assert_eq!(d.ns.len(), 200);
        assert_eq!(*d.m.last().unwrap(), 1 << 20);
    }

    #[test]
    fn envelope_ties_and_unattainable() {
        let p = |ns, m, fidelity, p_success| SweepPoint {
            ns,
            m,
            p_gen: 0.0,
            p_00: 0.0,
            fidelity,
            p_success,
        };
        let pts = [p(0.2, 4, 0.95, 0.5), p(0.1, 2, 0.95, 0.5), p(0.05, 2, 0.99, 0.5), p(0.3, 1, 0.5, 0.9)];
        let env = envelope(&pts, &[0.9, 0.999]).unwrap();
        assert_eq!(env[0].best.unwrap().m, 2);
        assert_eq!(env[0].best.unwrap().ns, 0.05);
        assert!(env[1].best.is_none());
        assert!(envelope(&[], &[0.9]).is_err());
    }

    #[test]
    fn switch_models_agree_without_loss() {
        let base = Device::new(0.9, 0.8, 1e-4);
        let cache = PointCache::new();
        let f = p_success(0.05, 1, &base, &cache).unwrap();
        let s = p_success(0.05, 1, &base.clone().with_switch_model("state"), &cache).unwrap();
        assert_abs_diff_eq!(f.p_success, s.p_success, epsilon = 1e-15);
        assert_abs_diff_eq!(f.metrics.fidelity, s.metrics.fidelity, epsilon = 1e-15);
    }

    #[test]
    fn factor_model_scales_load() {
        let d = Device::new(0.9, 0.8, 1e-4);
        let cache = PointCache::new();
        let one = p_success(0.05, 1, &d, &cache).unwrap().metrics;
        let r = p_success(0.05, 8, &d, &cache).unwrap();
        let t = 0.8f64.powi(3);
        assert_abs_diff_eq!(r.transmissivity, t, epsilon = 1e-15);
        assert_abs_diff_eq!(r.metrics.p_joint, one.p_joint * t * t, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 - r.metrics.p_00_a, (1.0 - one.p_00_a) * t, epsilon = 1e-15);
        assert_eq!(r.metrics.fidelity, one.fidelity);
        let u = p_success_uncached(0.05, 8, &d).unwrap();
        assert_abs_diff_eq!(u.p_success, r.p_success, epsilon = 1e-15);
        assert_eq!(switch_registry().names(), vec!["factor", "state"]);
        assert!(d.with_switch_model("nope").validate().is_err());
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let a = monte_carlo_p_success(0.01, 8, 0.5, 10_000, 7);
        let b = monte_carlo_p_success(0.01, 8, 0.5, 10_000, 7);
        assert_eq!(a, b);
    }
}
