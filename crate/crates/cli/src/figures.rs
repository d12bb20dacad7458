//! Named data series for plotting, one registered builder per series.

use std::io::Write;
use std::sync::Arc;

use anyhow::Result;

use spdc_cascade::cascade::{p_gen_closed_form, p_gen_per_pattern, CascadeOutput};
use spdc_cascade::mux::{
    best_for_m, envelope, log_space, p_success, powers_of_two, single_source, sweep, Device, Grid, PointCache,
    SweepPoint,
};
use spdc_cascade::registry::Registry;
use spdc_cascade::spdc::{proportion_metric, source_fidelity_closed_form};

pub struct Context<'a> {
    pub cache: &'a PointCache,
    /// Strategy choices; numeric fields are overwritten per series.
    pub base: Device,
}

impl Context<'_> {
    fn device(&self, eta: f64, eta_s: f64, p_dark: f64) -> Device {
        Device {
            eta,
            eta_s,
            p_dark,
            ..self.base.clone()
        }
    }

    fn cascade(&self, ns: f64, eta: f64, p_dark: f64) -> Result<Arc<CascadeOutput>> {
        Ok(self.cache.cascade(ns, &self.device(eta, 1.0, p_dark))?)
    }

    fn loaded(&self, ns: f64, eta: f64, p_dark: f64) -> Result<f64> {
        Ok(p_success(ns, 1, &self.device(eta, 1.0, p_dark), self.cache)?.metrics.fidelity)
    }
}

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(f64::to_string).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub trait Figure: Send + Sync {
    fn describe(&self) -> &'static str;

    fn build(&self, ctx: &Context) -> Result<Table>;
}

/// N_s axis of the photonic-state plots.
fn state_axis() -> Vec<f64> {
    log_space(1e-4, 0.2, 100)
}

/// Fidelity targets of the envelope plots, dense towards 1.
fn targets() -> Vec<f64> {
    log_space(1e-4, 0.5, 60).into_iter().rev().map(|x| 1.0 - x).collect()
}

fn envelope_rows(points: &[SweepPoint], targets: &[f64]) -> Result<Vec<(f64, SweepPoint)>> {
    Ok(envelope(points, targets)?
        .into_iter()
        .filter_map(|e| e.best.map(|b| (e.target, b)))
        .collect())
}

/// (η, η_s) pairs of the scatter plots.
const DEVICES: [(f64, f64); 4] = [(0.99, 0.99), (0.9, 0.9), (0.6, 0.9), (0.9, 0.6)];
const DARK_LEVELS: [f64; 3] = [0.0, 1e-5, 1e-3];

struct Proportion;

impl Figure for Proportion {
    fn describe(&self) -> &'static str {
        "spurious-to-Bell proportion of the original (D) and cascaded (D') sources"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["ns", "d_source", "d_cascade"]);
        for ns in state_axis() {
            let rho = ctx.cascade(ns, 1.0, 0.0)?;
            let h = rho.heralded.as_ref().expect("ideal source heralds");
            let single = |k: &spdc_cascade::fock::FockKet| k.get(0) + k.get(1) == 1 && k.get(2) + k.get(3) == 1;
            let bell = h.diagonal_expectation(|k| f64::from(u8::from(single(k))));
            t.push(vec![ns, proportion_metric(ns), (1.0 - bell) / bell]);
        }
        Ok(t)
    }
}

struct Fidelities;

impl Figure for Fidelities {
    fn describe(&self) -> &'static str {
        "ideal-device fidelity of original and cascaded sources, raw and memory-loaded"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["ns", "source", "cascade", "source_loaded", "cascade_loaded"]);
        for ns in state_axis() {
            let single = single_source(ns, 1.0, &ctx.base)?;
            t.push(vec![
                ns,
                source_fidelity_closed_form(ns),
                ctx.cascade(ns, 1.0, 0.0)?.fidelity(),
                single.fidelity,
                ctx.loaded(ns, 1.0, 0.0)?,
            ]);
        }
        Ok(t)
    }
}

struct CascadeFidelity;

impl Figure for CascadeFidelity {
    fn describe(&self) -> &'static str {
        "ideal-device cascaded-source fidelity (constant 1/2)"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["ns", "fidelity"]);
        for ns in state_axis() {
            t.push(vec![ns, ctx.cascade(ns, 1.0, 0.0)?.fidelity()]);
        }
        Ok(t)
    }
}

struct IdealPgen;

impl Figure for IdealPgen {
    fn describe(&self) -> &'static str {
        "ideal-device P_gen: closed form, simulated per pattern, simulated over the accepted set"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["ns", "closed_form", "closed_form_normalized", "per_pattern", "p_gen"]);
        for ns in state_axis() {
            let out = ctx.cascade(ns, 1.0, 0.0)?;
            let per_pattern = out.records.first().map_or(0.0, |r| r.probability);
            t.push(vec![ns, p_gen_closed_form(ns), p_gen_per_pattern(ns), per_pattern, out.p_gen]);
        }
        Ok(t)
    }
}

/// Raw cascaded-source metric over (η, P_d) series.
struct NoisySeries {
    describe: &'static str,
    series: &'static [(f64, f64)],
    metric: Metric,
}

#[derive(Clone, Copy)]
enum Metric {
    Fidelity,
    Pgen,
    RawAndLoaded,
}

impl Figure for NoisySeries {
    fn describe(&self) -> &'static str {
        self.describe
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = match self.metric {
            Metric::Fidelity => Table::new(&["ns", "eta", "p_dark", "fidelity"]),
            Metric::Pgen => Table::new(&["ns", "eta", "p_dark", "p_gen"]),
            Metric::RawAndLoaded => Table::new(&["ns", "eta", "p_dark", "raw", "loaded"]),
        };
        for &(eta, pd) in self.series {
            for ns in state_axis() {
                let out = ctx.cascade(ns, eta, pd)?;
                let mut row = vec![ns, eta, pd];
                match self.metric {
                    Metric::Fidelity => row.push(out.fidelity()),
                    Metric::Pgen => row.push(out.p_gen),
                    Metric::RawAndLoaded => row.extend([out.fidelity(), ctx.loaded(ns, eta, pd)?]),
                }
                t.push(row);
            }
        }
        Ok(t)
    }
}

const ETA_SERIES: &[(f64, f64)] = &[(1.0, 0.0), (0.95, 0.0), (0.9, 0.0), (0.8, 0.0), (0.6, 0.0)];
const DARK_SERIES: &[(f64, f64)] = &[(1.0, 0.0), (1.0, 1e-6), (1.0, 1e-5), (1.0, 1e-4), (1.0, 1e-3)];
const MIXED_SERIES: &[(f64, f64)] = &[(0.9, 1e-5), (0.9, 1e-3), (0.6, 1e-5), (0.6, 1e-3)];
const LOADED_SERIES: &[(f64, f64)] = &[(1.0, 0.0), (1.0, 1e-5), (1.0, 1e-3), (0.9, 1e-5), (0.9, 1e-3)];

struct Scatter;

impl Figure for Scatter {
    fn describe(&self) -> &'static str {
        "(fidelity, P_success) over the full (N_s, M) grid for four (eta, eta_s) devices"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["eta", "eta_s", "ns", "m", "fidelity", "p_success"]);
        for (eta, eta_s) in DEVICES {
            for p in sweep(&Grid::default_grid(), &ctx.device(eta, eta_s, 0.0), ctx.cache)? {
                t.push(vec![eta, eta_s, p.ns, p.m as f64, p.fidelity, p.p_success]);
            }
        }
        Ok(t)
    }
}

/// Best P_success per fidelity target for several devices.
struct Envelopes {
    describe: &'static str,
    devices: &'static [(f64, f64)],
    dark: &'static [f64],
}

impl Figure for Envelopes {
    fn describe(&self) -> &'static str {
        self.describe
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["eta", "eta_s", "p_dark", "target", "infidelity", "ns", "m", "p_success"]);
        for &(eta, eta_s) in self.devices {
            for &pd in self.dark {
                let points = sweep(&Grid::default_grid(), &ctx.device(eta, eta_s, pd), ctx.cache)?;
                for (target, b) in envelope_rows(&points, &targets())? {
                    t.push(vec![eta, eta_s, pd, target, 1.0 - target, b.ns, b.m as f64, b.p_success]);
                }
            }
        }
        Ok(t)
    }
}

struct SingleSource;

impl Figure for SingleSource {
    fn describe(&self) -> &'static str {
        "original source into the same memories through eta = 0.9 (comparison curve)"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["ns", "fidelity", "p_success"]);
        for ns in Grid::default_grid().ns {
            let m = single_source(ns, 0.9, &ctx.base)?;
            t.push(vec![ns, m.fidelity, m.p_joint]);
        }
        Ok(t)
    }
}

/// Envelope over N_s for each fixed M.
struct PerMEnvelopes {
    describe: &'static str,
    eta: f64,
    eta_s: f64,
}

impl Figure for PerMEnvelopes {
    fn describe(&self) -> &'static str {
        self.describe
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["m", "target", "ns", "p_success"]);
        let device = ctx.device(self.eta, self.eta_s, 0.0);
        for m in (0..=10).map(|k| 1u64 << (2 * k)) {
            let grid = Grid {
                ns: Grid::default_grid().ns,
                m: vec![m],
            };
            let points = sweep(&grid, &device, ctx.cache)?;
            for (target, b) in envelope_rows(&points, &targets())? {
                t.push(vec![m as f64, target, b.ns, b.p_success]);
            }
        }
        Ok(t)
    }
}

/// Fidelity-constrained best P_success against M.
struct PsuccessVsM {
    describe: &'static str,
    devices: &'static [(f64, f64)],
    targets: &'static [f64],
}

impl Figure for PsuccessVsM {
    fn describe(&self) -> &'static str {
        self.describe
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["eta", "eta_s", "target", "m", "ns", "p_success"]);
        let ns_grid = Grid::default_grid().ns;
        for &(eta, eta_s) in self.devices {
            let device = ctx.device(eta, eta_s, 0.0);
            for &target in self.targets {
                for m in powers_of_two(20) {
                    if let Some(b) = best_for_m(m, &ns_grid, target, &device, ctx.cache)? {
                        t.push(vec![eta, eta_s, target, m as f64, b.n_s, b.p_success]);
                    }
                }
            }
        }
        Ok(t)
    }
}

struct FixedM;

impl Figure for FixedM {
    fn describe(&self) -> &'static str {
        "P_success against infidelity over N_s at M = 2^20 for two lossy devices and three P_d"
    }

    fn build(&self, ctx: &Context) -> Result<Table> {
        let mut t = Table::new(&["eta", "eta_s", "p_dark", "ns", "infidelity", "p_success"]);
        for (eta, eta_s) in [(0.9, 0.6), (0.6, 0.9)] {
            for pd in DARK_LEVELS {
                let device = ctx.device(eta, eta_s, pd);
                for ns in Grid::default_grid().ns {
                    let r = p_success(ns, 1 << 20, &device, ctx.cache)?;
                    t.push(vec![eta, eta_s, pd, ns, 1.0 - r.metrics.fidelity, r.p_success]);
                }
            }
        }
        Ok(t)
    }
}

pub fn registry() -> Registry<dyn Figure> {
    let mut reg: Registry<dyn Figure> = Registry::new("figure");
    reg.register("prop", Arc::new(Proportion));
    reg.register("fid", Arc::new(Fidelities));
    reg.register("fid-cascade", Arc::new(CascadeFidelity));
    reg.register("pgen-ideal", Arc::new(IdealPgen));
    let noisy = |describe, series, metric| Arc::new(NoisySeries { describe, series, metric });
    reg.register("fid-eta", noisy("raw fidelity vs N_s for several eta, P_d = 0", ETA_SERIES, Metric::Fidelity));
    reg.register("fid-dark", noisy("raw fidelity vs N_s for several P_d, eta = 1", DARK_SERIES, Metric::Fidelity));
    reg.register("fid-mixed", noisy("raw fidelity vs N_s for combined eta < 1 and P_d > 0", MIXED_SERIES, Metric::Fidelity));
    reg.register("fid-loaded", noisy("raw and memory-loaded fidelity vs N_s", LOADED_SERIES, Metric::RawAndLoaded));
    reg.register("pgen-eta", noisy("P_gen vs N_s for several eta, P_d = 0", ETA_SERIES, Metric::Pgen));
    reg.register("pgen-dark", noisy("P_gen vs N_s for several P_d, eta = 1", DARK_SERIES, Metric::Pgen));
    reg.register("pgen-mixed", noisy("P_gen vs N_s for combined eta < 1 and P_d > 0", MIXED_SERIES, Metric::Pgen));
    reg.register("scatter", Arc::new(Scatter));
    reg.register(
        "envelope",
        Arc::new(Envelopes {
            describe: "best P_success per fidelity target for four (eta, eta_s) devices",
            devices: &DEVICES,
            dark: &[0.0],
        }),
    );
    reg.register("single-source", Arc::new(SingleSource));
    reg.register(
        "vary-m-low-loss",
        Arc::new(PerMEnvelopes {
            describe: "per-M envelopes, eta = 0.6, eta_s = 0.9",
            eta: 0.6,
            eta_s: 0.9,
        }),
    );
    reg.register(
        "vary-m-high-loss",
        Arc::new(PerMEnvelopes {
            describe: "per-M envelopes, eta = 0.9, eta_s = 0.6",
            eta: 0.9,
            eta_s: 0.6,
        }),
    );
    reg.register(
        "ps-vs-m",
        Arc::new(PsuccessVsM {
            describe: "best P_success vs M at fidelity 0.99 for several devices",
            devices: &[(0.9, 0.9), (0.6, 0.9), (0.9, 0.6)],
            targets: &[0.99],
        }),
    );
    reg.register(
        "ps-maxima",
        Arc::new(PsuccessVsM {
            describe: "best P_success vs M for several fidelity targets, eta = 0.9, eta_s = 0.9",
            devices: &[(0.9, 0.9)],
            targets: &[0.9, 0.95, 0.99, 0.999],
        }),
    );
    reg.register(
        "turnaround",
        Arc::new(PsuccessVsM {
            describe: "best P_success vs M at fidelity 0.95, eta = 0.9, eta_s from 0.65 to 0.9",
            devices: &[(0.9, 0.65), (0.9, 0.7), (0.9, std::f64::consts::FRAC_1_SQRT_2), (0.9, 0.75), (0.9, 0.8), (0.9, 0.85), (0.9, 0.9)],
            targets: &[0.95],
        }),
    );
    reg.register(
        "infid-dark",
        Arc::new(Envelopes {
            describe: "best P_success per infidelity target for three P_d, eta = 0.9, eta_s = 0.9",
            devices: &[(0.9, 0.9)],
            dark: &DARK_LEVELS,
        }),
    );
    reg.register("infid-dark-loss", Arc::new(FixedM));
    reg.register(
        "scatter-pdark",
        Arc::new(Envelopes {
            describe: "envelopes for three devices and three P_d",
            devices: &[(0.9, 0.9), (0.6, 0.9), (0.9, 0.6)],
            dark: &DARK_LEVELS,
        }),
    );
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_figures() {
        let reg = registry();
        assert!(reg.names().contains(&"prop"));
        assert!(reg.names().contains(&"pgen-ideal"));
        assert!(reg.get("nope").is_err());
    }

    #[test]
    fn ideal_cascade_fidelity_is_half() {
        let cache = PointCache::new();
        let ctx = Context {
            cache: &cache,
            base: Device::new(1.0, 1.0, 0.0),
        };
        let t = registry().get("fid-cascade").unwrap().build(&ctx).unwrap();
        assert!(t.rows.iter().all(|r| (r[1] - 0.5).abs() < 1e-9));
        let d = registry().get("prop").unwrap().build(&ctx).unwrap();
        assert!(d.rows.iter().all(|r| (r[2] - 1.0).abs() < 1e-9));
    }
}
