//! `cascade-sim`: command-line front end for the spdc-cascade simulator.
//!
//! Exit status: 0 ok, 1 failed validation or I/O, 2 bad arguments.

mod figures;
mod validate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spdc_cascade::cascade::{emit_pattern_table, run_cascade, CascadeConfig};
use spdc_cascade::mux::{
    envelope, log_space, powers_of_two, read_points, sweep_to_file, turnaround_eta, write_envelope_to, Device, Grid,
    PointCache, TurnaroundOptions,
};
use spdc_cascade::spdc::{load_presets, BellSign, SourceParams};
use spdc_cascade::table::write_pattern_table;
use spdc_cascade::Error;

/// Directory holding the memoized load metrics shared between runs.
pub const CACHE_DIR_ENV: &str = "SPDC_CASCADE_CACHE_DIR";
const CACHE_FILE: &str = "load-cache.csv";

#[derive(Parser)]
#[command(name = "cascade-sim", version, about = "Cascaded and multiplexed SPDC entanglement source simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heralded state, P_gen and fidelity of one cascaded source (JSON).
    Cascade(CascadeArgs),
    /// Input-term × detection-pattern table of the ideal BSM (CSV).
    PatternTable(PatternTableArgs),
    /// P_success / fidelity over an (N_s, M) grid (CSV).
    Sweep(SweepArgs),
    /// Best P_success per fidelity target from a sweep file (CSV).
    Envelope(EnvelopeArgs),
    /// Switch transmissivity where multiplexing stops paying off.
    Turnaround(TurnaroundArgs),
    /// Data series behind a named figure (CSV).
    Figure(FigureArgs),
    /// Runs the oracle checks and reports max deviations.
    Validate(ValidateArgs),
    /// Lists the registered strategies and figure ids.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sign {
    Plus,
    Minus,
}

/// Strategy selection shared by the device-level commands.
#[derive(Args, Clone)]
struct Models {
    /// Dark-count model (`additive`, `saturating`).
    #[arg(long, default_value = "additive")]
    dark_model: String,
    /// Pure-loss implementation (`kraus`, `ancilla`).
    #[arg(long, default_value = "kraus")]
    loss_impl: String,
    /// Memory load model (`von`, `qubit`).
    #[arg(long, default_value = "von")]
    memory_model: String,
    /// Switch-loss model (`factor`, `state`).
    #[arg(long, default_value = "factor")]
    switch_model: String,
    /// Herald on all four desirable patterns instead of 0011 and 1100.
    #[arg(long)]
    all_desirable: bool,
}

impl Models {
    fn device(&self, eta: f64, eta_s: f64, p_dark: f64) -> Device {
        Device {
            memory_model: self.memory_model.clone(),
            switch_model: self.switch_model.clone(),
            dark_model: self.dark_model.clone(),
            loss_impl: self.loss_impl.clone(),
            all_desirable: self.all_desirable,
            ..Device::new(eta, eta_s, p_dark)
        }
    }
}

#[derive(Args)]
struct CascadeArgs {
    /// Mean photon number per mode (or take it from --preset).
    #[arg(long)]
    ns: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    eta_c: f64,
    #[arg(long, default_value_t = 1.0)]
    eta_d: f64,
    #[arg(long, default_value_t = 0.0)]
    p_dark: f64,
    #[arg(long, value_enum)]
    sign: Option<Sign>,
    #[arg(long)]
    pair_cutoff: Option<u32>,
    /// Joint photon-number cut on the two-source input.
    #[arg(long)]
    n_max: Option<u32>,
    /// Preset name from --presets.
    #[arg(long, requires = "presets")]
    preset: Option<String>,
    /// JSON file of named source parameter sets.
    #[arg(long)]
    presets: Option<PathBuf>,
    /// Include each pattern's heralded operator in the output.
    #[arg(long)]
    states: bool,
    #[command(flatten)]
    models: Models,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PatternTableArgs {
    /// Largest total number of pairs over both sources.
    #[arg(long, default_value_t = 2)]
    order: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    eta_s: f64,
    #[arg(long, default_value_t = 0.0)]
    p_dark: f64,
    #[arg(long, default_value_t = 1e-4)]
    ns_min: f64,
    #[arg(long, default_value_t = 1.0)]
    ns_max: f64,
    #[arg(long, default_value_t = 200)]
    ns_points: usize,
    /// Largest M is 2^m_max_exp.
    #[arg(long, default_value_t = 20)]
    m_max_exp: u32,
    /// Reuse rows already present in --out.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    models: Models,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.99")]
    targets: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TurnaroundArgs {
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    target_f: f64,
    #[arg(long, default_value_t = 0.0)]
    p_dark: f64,
    /// M values whose optimized P_success trend is fitted.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    m_grid: Vec<u64>,
    #[arg(long, default_value_t = 120)]
    ns_points: usize,
    #[arg(long, default_value_t = 0.65)]
    lo: f64,
    #[arg(long, default_value_t = 0.9)]
    hi: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[command(flatten)]
    models: Models,
}

#[derive(Args)]
struct FigureArgs {
    /// Figure id; see `list`.
    id: String,
    #[command(flatten)]
    models: Models,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Reference pattern table (defaults to the bundled reference table).
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Seed of the Monte-Carlo cross-check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200_000)]
    trials: u64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cache_path() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(|d| PathBuf::from(d).join(CACHE_FILE))
}

fn open_cache() -> Result<PointCache> {
    let cache = PointCache::new();
    if let Some(p) = cache_path().filter(|p| p.exists()) {
        let n = cache.load_file(&p).with_context(|| format!("reading cache {}", p.display()))?;
        log::info!("loaded {n} cached points from {}", p.display());
    }
    Ok(cache)
}

fn close_cache(cache: &PointCache) -> Result<()> {
    if let Some(p) = cache_path() {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        cache.save(&p).with_context(|| format!("writing cache {}", p.display()))?;
    }
    Ok(())
}

fn cmd_cascade(a: &CascadeArgs) -> Result<ExitCode> {
    let mut source = match (&a.preset, &a.presets) {
        (Some(name), Some(path)) => {
            let presets = load_presets(path)?;
            *presets.get(name).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "no preset `{name}` (available: {})",
                    presets.keys().cloned().collect::<Vec<_>>().join(", ")
                ))
            })?
        }
        _ => SourceParams::new(a.ns.ok_or_else(|| Error::InvalidParameter("--ns or --preset is required".into()))?),
    };
    if let Some(ns) = a.ns {
        source.n_s = ns;
    }
    if let Some(s) = a.sign {
        source.sign = match s {
            Sign::Plus => BellSign::Plus,
            Sign::Minus => BellSign::Minus,
        };
    }
    if let Some(c) = a.pair_cutoff {
        source.pair_cutoff = c;
    }
    let mut config = CascadeConfig::noisy(source.n_s, a.eta_c, a.eta_d, a.p_dark);
    config.source = source;
    config.n_max = a.n_max;
    config.dark_model = a.models.dark_model.clone();
    config.loss_impl = a.models.loss_impl.clone();
    if a.models.all_desirable {
        config = config.with_all_desirable();
    }
    let out = run_cascade(&config)?;
    let records: Vec<_> = out
        .records
        .iter()
        .map(|r| {
            let mut v = json!({
                "pattern": r.pattern.to_string(),
                "m1": r.m1,
                "m2": r.m2,
                "probability": r.probability,
            });
            if a.states {
                v["state"] = serde_json::to_value(&r.state).expect("plain data");
            }
            v
        })
        .collect();
    let mut doc = json!({
        "config": config,
        "p_gen": out.p_gen,
        "fidelity": out.fidelity(),
        "dropped_weight": out.dropped_weight,
        "records": records,
    });
    if a.states {
        doc["heralded"] = serde_json::to_value(&out.heralded)?;
    }
    let mut w = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_pattern_table(a: &PatternTableArgs) -> Result<ExitCode> {
    let rows = emit_pattern_table(a.order)?;
    write_pattern_table(&rows, output(a.out.as_deref())?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: &SweepArgs) -> Result<ExitCode> {
    if a.ns_points < 2 || !(a.ns_min > 0.0 && a.ns_min < a.ns_max) {
        return Err(Error::InvalidParameter("need ns_points >= 2 and 0 < ns_min < ns_max".into()).into());
    }
    let grid = Grid {
        ns: log_space(a.ns_min, a.ns_max, a.ns_points),
        m: powers_of_two(a.m_max_exp),
    };
    let device = a.models.device(a.eta, a.eta_s, a.p_dark);
    let cache = open_cache()?;
    let points = sweep_to_file(&a.out, &grid, &device, &cache, a.resume)?;
    close_cache(&cache)?;
    log::info!("wrote {} points to {}", points.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_envelope(a: &EnvelopeArgs) -> Result<ExitCode> {
    if let Some(t) = a.targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidParameter(format!("fidelity target {t} outside [0, 1]")).into());
    }
    let points = read_points(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows = envelope(&points, &a.targets)?;
    for r in rows.iter().filter(|r| r.best.is_none()) {
        log::warn!("fidelity target {} is unattainable on this sweep", r.target);
    }
    write_envelope_to(output(a.out.as_deref())?, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_turnaround(a: &TurnaroundArgs) -> Result<ExitCode> {
    let opts = TurnaroundOptions {
        ns_grid: log_space(1e-4, 0.2, a.ns_points),
        m_grid: a.m_grid.clone(),
        lo: a.lo,
        hi: a.hi,
        tol: a.tol,
    };
    let base = a.models.device(a.eta, a.hi, a.p_dark);
    let cache = open_cache()?;
    let eta_s = turnaround_eta(a.eta, a.p_dark, a.target_f, &opts, &base, &cache)?;
    close_cache(&cache)?;
    println!(
        "{}",
        json!({
            "eta": a.eta,
            "p_dark": a.p_dark,
            "target_f": a.target_f,
            "m_grid": a.m_grid,
            "eta_s": eta_s,
            "loss_db": -10.0 * eta_s.log10(),
        })
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_figure(a: &FigureArgs) -> Result<ExitCode> {
    let fig = figures::registry().get(&a.id)?;
    let cache = open_cache()?;
    let base = a.models.device(1.0, 1.0, 0.0);
    base.validate()?;
    let table = fig.build(&figures::Context { cache: &cache, base })?;
    close_cache(&cache)?;
    table.write(output(a.out.as_deref())?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_list() -> Result<ExitCode> {
    use spdc_cascade::{channels, detection, memory, mux};
    println!("dark models:    {}", detection::dark_registry().names().join(", "));
    println!("loss impls:     {}", channels::loss_registry().names().join(", "));
    println!("memory models:  {}", memory::load_registry().names().join(", "));
    println!("switch models:  {}", mux::switch_registry().names().join(", "));
    println!("figures:");
    let reg = figures::registry();
    for name in reg.names() {
        println!("  {name:<18} {}", reg.get(name)?.describe());
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Cascade(a) => cmd_cascade(a),
        Command::PatternTable(a) => cmd_pattern_table(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Envelope(a) => cmd_envelope(a),
        Command::Turnaround(a) => cmd_turnaround(a),
        Command::Figure(a) => cmd_figure(a),
        Command::Validate(a) => validate::run(a.fixture.as_deref(), a.seed, a.trials),
        Command::List => cmd_list(),
    }
}

/// Parameter and strategy errors are argument errors; the rest are runtime
/// failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidParameter(_)
            | Error::UnknownStrategy { .. }
            | Error::ModeOutOfRange { .. }
            | Error::Dimension { .. }
            | Error::NonBijective(_)
            | Error::OverlappingModes(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
