//! Oracle checks run by `cascade-sim validate`.

use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};

use spdc_cascade::cascade::{
    emit_pattern_table, ideal_heralded_state, p_gen_closed_form, p_gen_per_pattern, run_cascade, CascadeConfig,
};
use spdc_cascade::detection::{dark_registry, Detector, DetectorParams};
use spdc_cascade::mux::{
    herald_prob, log_space, monte_carlo_p_success, p_success, turnaround_small_pgen, Device, PointCache,
};
use spdc_cascade::table::{compare_tables, read_pattern_table};

const BUNDLED_FIXTURE: &str = include_str!("../../core/tests/fixtures/pattern_table.csv");

const COEFF_TOL: f64 = 1e-12;
const PGEN_REL_TOL: f64 = 1e-9;
const STATE_TOL: f64 = 1e-12;
const FID_TOL: f64 = 1e-9;
const POVM_TOL: f64 = 1e-12;
const FACTOR_TOL: f64 = 1e-12;
const MC_SIGMAS: f64 = 3.0;
const SMALL_PGEN_TURNAROUND: f64 = std::f64::consts::FRAC_1_SQRT_2;

struct Checks {
    failed: usize,
}

impl Checks {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.failed += usize::from(!pass);
    }
}

pub fn run(fixture: Option<&Path>, seed: u64, trials: u64) -> Result<ExitCode> {
    let reference = match fixture {
        Some(p) => read_pattern_table(std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => read_pattern_table(BUNDLED_FIXTURE.as_bytes())?,
    };
    let mut c = Checks { failed: 0 };

    let cmp = compare_tables(&reference, &emit_pattern_table(2)?);
    let mut detail = format!(
        "{} rows / {} input pairs, max coefficient deviation {:.2e} (tol {COEFF_TOL:e})",
        cmp.rows, cmp.input_pairs, cmp.max_coeff_dev
    );
    for m in cmp.mismatches.iter().take(5) {
        detail.push_str(&format!("; {m}"));
    }
    c.report("pattern table", cmp.passed(COEFF_TOL), detail);

    let grid = log_space(1e-4, 0.2, 20);
    let (mut rel, mut raw) = (0.0f64, 0.0f64);
    for &ns in &grid {
        let out = run_cascade(&CascadeConfig::ideal(ns))?;
        let single = out.records.first().map_or(0.0, |r| r.probability);
        rel = rel.max((single / p_gen_per_pattern(ns) - 1.0).abs());
        raw = raw.max((out.p_gen / p_gen_closed_form(ns) - 1.0).abs());
    }
    c.report(
        "P_gen per pattern",
        rel <= PGEN_REL_TOL,
        format!("max relative deviation from N0^4 Ns^2/(Ns+1)^6 {rel:.2e} (tol {PGEN_REL_TOL:e}); accepted-set P_gen vs unnormalized closed form differs by up to {raw:.3} relative"),
    );

    let (mut state, mut fid_raw, mut fid_loaded) = (0.0f64, 0.0f64, 0.0f64);
    let ideal = Device::new(1.0, 1.0, 0.0);
    let cache = PointCache::new();
    for &ns in &grid {
        let out = run_cascade(&CascadeConfig::ideal(ns).with_all_desirable())?;
        for r in &out.records {
            let f = r.state.fidelity_pure(&ideal_heralded_state(ns, r.m1, r.m2))?;
            state = state.max((1.0 - f).abs());
        }
        fid_raw = fid_raw.max((out.fidelity() - 0.5).abs());
        fid_loaded = fid_loaded.max((p_success(ns, 1, &ideal, &cache)?.metrics.fidelity - 1.0).abs());
    }
    c.report("heralded states", state <= STATE_TOL, format!("max |1-F| vs closed form {state:.2e} (tol {STATE_TOL:e})"));
    c.report(
        "ideal fidelities",
        fid_raw <= FID_TOL && fid_loaded <= FID_TOL,
        format!("max |F_raw-1/2| {fid_raw:.2e}, max |F_loaded-1| {fid_loaded:.2e} (tol {FID_TOL:e})"),
    );

    let dark = dark_registry();
    let mut povm = 0.0f64;
    for name in dark.names() {
        for (eta, p) in [(1.0, 0.0), (0.9, 1e-3), (0.6, 0.1)] {
            let det = Detector::new(DetectorParams::new(eta, p)?, dark.get(name)?)?;
            let levels = 6;
            let sum: nalgebra::DMatrix<f64> = (0..=levels).map(|r| det.povm_element(r, levels)).sum();
            povm = povm.max((sum - nalgebra::DMatrix::identity(levels as usize, levels as usize)).amax());
        }
    }
    c.report("POVM completeness", povm <= POVM_TOL, format!("max deviation from identity {povm:.2e} (tol {POVM_TOL:e})"));

    let mut factor = 0.0f64;
    for pd in [0.0, 1e-3] {
        let a = run_cascade(&CascadeConfig::noisy(0.05, 0.9, 1.0, pd))?;
        let b = run_cascade(&CascadeConfig::noisy(0.05, 1.0, 0.9, pd))?;
        let c2 = run_cascade(&CascadeConfig::noisy(0.05, 0.9f64.sqrt(), 0.9f64.sqrt(), pd))?;
        let da = a.heralded.as_ref().expect("heralds").to_dense();
        for o in [b, c2] {
            factor = factor
                .max(o.heralded.as_ref().expect("heralds").to_dense().max_abs_diff(&da))
                .max((o.p_gen - a.p_gen).abs());
        }
    }
    c.report(
        "efficiency factorization",
        factor <= FACTOR_TOL,
        format!("max difference across eta_c*eta_d = 0.9 splits {factor:.2e} (tol {FACTOR_TOL:e})"),
    );

    let (p_gen, m, load) = (0.01, 64, 0.8);
    let closed = herald_prob(p_gen, m) * load;
    let mc = monte_carlo_p_success(p_gen, m, load, trials, seed);
    let z = (mc.estimate - closed).abs() / mc.std_err.max(f64::MIN_POSITIVE);
    c.report(
        "Monte Carlo",
        z <= MC_SIGMAS,
        format!("closed {closed:.6} vs {trials}-trial estimate {:.6}: {z:.2} sigma (limit {MC_SIGMAS})", mc.estimate),
    );

    let t = turnaround_small_pgen();
    c.report(
        "small-P_gen turnaround",
        (t - SMALL_PGEN_TURNAROUND).abs() < 1e-12,
        format!("{t:.12} vs 1/sqrt(2)"),
    );

    Ok(if c.failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
