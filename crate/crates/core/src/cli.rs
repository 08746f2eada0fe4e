//! Command-line front end. All file I/O lives here.
//!
//! Exit codes: 0 success, 1 an asserted check failed, 2 configuration error,
//! 3 solver or I/O failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::{self, RunData, RunReport};
use crate::config::{self, Config, InitialCondition};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::steady;
use crate::stepper::{self, State, Trajectory, RNG_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pca", version, about = "Phase-field prostate tumor model: simulate, analyse, verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and write the time series.
    Simulate(Common),
    /// Compute the steady state three ways and print the agreement table.
    Steady {
        #[command(flatten)]
        common: Common,
        /// Stopping tolerance of the energy minimisation.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Analyse an existing `series.csv` in the output directory.
    Analyze(Common),
    /// Simulate and analyse in one pass.
    Verify(Common),
    /// Run `verify` once per value of the config's sweep axis.
    Sweep(Common),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for random initial data (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config entry, e.g. `--set M=0.2` or `--set run.t_end=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Clamp fields into their bounds after each step (marks the run non-conforming).
    #[arg(long)]
    pub clamp: bool,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_SOLVER
    }
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Simulate(c) => {
            let cfg = load(c)?;
            simulate(&cfg, &c.out)?;
            Ok(EXIT_OK)
        }
        Command::Steady { common, tol } => {
            let cfg = load(common)?;
            run_steady(&cfg, *tol, &common.out)
        }
        Command::Analyze(c) => {
            let cfg = load(c)?;
            let report = analyze_dir(&cfg, &c.out)?;
            print!("{}", analysis::verdict_table(&report));
            Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Verify(c) => {
            let cfg = load(c)?;
            let report = verify(&cfg, &c.out)?;
            print!("{}", analysis::verdict_table(&report));
            Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Sweep(c) => {
            let text = read_config_text(&c.config)?;
            run_sweep(&text, &overrides_of(c)?, c.seed, &c.out)
        }
    }
}

fn read_config_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))
}

fn overrides_of(c: &Common) -> Result<Vec<(String, String)>> {
    let mut ov = c.overrides.iter().map(|s| config::parse_override(s)).collect::<Result<Vec<_>>>()?;
    if c.clamp {
        ov.push(("run.clamp".into(), "true".into()));
    }
    Ok(ov)
}

/// Replace the seed of random initial data; other initial kinds ignore it.
pub fn apply_seed(cfg: &mut Config, seed: Option<u64>) {
    if let (Some(s), InitialCondition::Random { seed, .. }) = (seed, &mut cfg.run.initial) {
        *seed = s;
    }
}

fn load(c: &Common) -> Result<Config> {
    let text = read_config_text(&c.config)?;
    let mut cfg = config::load_config_with_overrides(&text, &overrides_of(c)?)?;
    apply_seed(&mut cfg, c.seed);
    Ok(cfg)
}

fn seed_of(cfg: &Config) -> Option<u64> {
    match cfg.run.initial {
        InitialCondition::Random { seed, .. } => Some(seed),
        _ => None,
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

const DPHI_HEADER: &str = "window_start,integral";

fn dphi_to_csv(windows: &[f64]) -> Result<String> {
    let mut out = format!("{DPHI_HEADER}\n");
    for (k, v) in windows.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite("time-derivative windows"));
        }
        let _ = writeln!(out, "{:?},{v:?}", k as f64);
    }
    Ok(out)
}

fn dphi_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(DPHI_HEADER) {
        return Err(Error::Malformed("unexpected window header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Malformed(format!("window row `{l}`")))
        })
        .collect()
}

/// Integrate `cfg`, writing `series.csv`, `dphi_windows.csv` and (when
/// enabled) field snapshots into `out`.
pub fn simulate(cfg: &Config, out: &Path) -> Result<(Grid, Trajectory)> {
    fs::create_dir_all(out)?;
    let grid = cfg.run.grid()?;
    let initial: State = stepper::initial_state(&grid, &cfg.params, &cfg.run.initial);
    let snap_dir = out.join("snapshots");
    let mut index = 0usize;
    let traj = stepper::integrate_with(&grid, initial, &cfg.run, &cfg.params, &cfg.therapy, |_, state| {
        if cfg.run.snapshots {
            for (name, field) in [("phi", &state.phi), ("sigma", &state.sigma), ("p", &state.p)] {
                write(&snap_dir.join(format!("{name}_{index:06}.txt")), &grid.write_snapshot(field)?)?;
            }
        }
        index += 1;
        Ok(())
    })?;
    write(&out.join("series.csv"), &stepper::series_to_csv(&traj.samples)?)?;
    write(&out.join("dphi_windows.csv"), &dphi_to_csv(&traj.dphi_windows)?)?;
    Ok((grid, traj))
}

fn annotate(report: &mut RunReport, cfg: &Config, plan: Option<crate::config::TimePlan>) {
    report.meta.push(("rng".into(), RNG_NAME.into()));
    if let Some(seed) = seed_of(cfg) {
        report.meta.push(("seed".into(), seed.to_string()));
    }
    if let Some(plan) = plan {
        report.meta.push(("dt".into(), format!("{:?}", plan.dt)));
        report.meta.push(("steps".into(), plan.steps.to_string()));
    }
    report.meta.push((
        "dt_max".into(),
        format!("{:?}", stepper::dt_max(&cfg.params, &cfg.therapy)),
    ));
}

fn finish(report: &RunReport, out: &Path) -> Result<()> {
    write(&out.join("report.csv"), &analysis::report_to_csv(report))?;
    write(&out.join("verdicts.txt"), &analysis::verdict_table(report))
}

/// Analyse the series already present in `out`.
pub fn analyze_dir(cfg: &Config, out: &Path) -> Result<RunReport> {
    let series_path = out.join("series.csv");
    let text = fs::read_to_string(&series_path)
        .map_err(|e| Error::Malformed(format!("cannot read {}: {e}", series_path.display())))?;
    let samples = stepper::series_from_csv(&text)?;
    let windows = match fs::read_to_string(out.join("dphi_windows.csv")) {
        Ok(t) => dphi_from_csv(&t)?,
        Err(_) => Vec::new(),
    };
    let grid = cfg.run.grid()?;
    let data = RunData::from_series(samples, windows, &cfg.params, &cfg.therapy, !cfg.run.clamp)?;
    let mut report = analysis::analyze_run(&grid, &cfg.params, &cfg.therapy, &cfg.run, &data)?;
    annotate(&mut report, cfg, None);
    finish(&report, out)?;
    Ok(report)
}

/// Simulate then analyse, writing every output into `out`.
pub fn verify(cfg: &Config, out: &Path) -> Result<RunReport> {
    let (grid, traj) = simulate(cfg, out)?;
    let mut report =
        analysis::analyze_run(&grid, &cfg.params, &cfg.therapy, &cfg.run, &RunData::from_trajectory(&traj))?;
    annotate(&mut report, cfg, Some(traj.plan));
    finish(&report, out)?;
    Ok(report)
}

pub const STEADY_HEADER: &str = "route,sigma_inf,p_inf,gamma_value,iterations,diff_closed_form,diff_discrete,diff_minimized";

/// Agreement table of the three steady-state routes. Fields are reported by
/// their spatial mean.
pub fn steady_table(grid: &Grid, cmp: &steady::SteadyComparison) -> String {
    let routes = [("closed_form", &cmp.closed), ("discrete", &cmp.discrete), ("minimized", &cmp.minimized)];
    let mut out = format!("{STEADY_HEADER}\n");
    let measure = grid.measure();
    for (name, s) in routes {
        let mean = |f: &crate::grid::Field| grid.inner(f.bc, &f.values, &vec![1.0; f.values.len()]) / measure;
        let d: Vec<String> = routes.iter().map(|(_, o)| format!("{:?}", steady::distance(grid, s, o))).collect();
        let _ = writeln!(
            out,
            "{name},{:?},{:?},{:?},{},{}",
            mean(&s.sigma_inf),
            mean(&s.p_inf),
            s.gamma_value,
            s.iterations,
            d.join(",")
        );
    }
    out
}

fn run_steady(cfg: &Config, tol: f64, out: &Path) -> Result<i32> {
    let grid = cfg.run.grid()?;
    let cmp = steady::compare_routes(&grid, &cfg.params, tol)?;
    let table = steady_table(&grid, &cmp);
    print!("{table}");
    write(&out.join("steady.csv"), &table)?;
    write(&out.join("steady_notes.txt"), &steady_notes(&cfg.params))?;
    Ok(if cmp.max_disagreement() <= 1e-8 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Records whether the classical coercivity restriction `gamma_h/2 > S_h`
/// holds. The minimiser is computed either way: Gamma is a positive definite
/// quadratic for any positive coefficients.
pub fn steady_notes(params: &crate::config::ModelParams) -> String {
    let holds = params.gamma_h / 2.0 > params.supply_h;
    format!(
        "coercivity_restriction,gamma_h/2 > S_h,imposed,false\ncoercivity_restriction,gamma_h/2 > S_h,holds,{holds}\n"
    )
}

/// Short content hash of the model parameters.
pub fn params_hash(cfg: &Config) -> String {
    let text = toml::to_string(&cfg.params).expect("parameters serialise");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

const CHECK_NAMES: [&str; 8] = [
    "max_principle_phi",
    "nutrient_bounds",
    "psa_nonnegative",
    "absorbing_set",
    "h1_bound",
    "exponential_decay",
    "time_derivative_windows",
    "phi_vanishes",
];

fn verdict_cell(report: &RunReport, name: &str) -> &'static str {
    match report.check(name) {
        Some(c) if c.asserted && c.passed => "pass",
        Some(c) if c.asserted => "fail",
        Some(c) if c.passed => "ok",
        _ => "na",
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("PCA_THREADS").ok()?.trim().parse::<usize>().ok().filter(|n| *n > 0)
}

/// One run per sweep value, each in `out/run_XXX`, plus `out/summary.csv`.
pub fn run_sweep(text: &str, overrides: &[(String, String)], seed: Option<u64>, out: &Path) -> Result<i32> {
    let base = config::load_config_with_overrides(text, overrides)?;
    let axis = base.sweep.clone().ok_or_else(|| Error::InvalidConfig("config has no [sweep] axis".into()))?;
    if axis.values.is_empty() {
        return Err(Error::InvalidConfig("sweep axis has no values".into()));
    }
    let path = axis.path();
    fs::create_dir_all(out)?;
    let run_one = |(i, value): (usize, &f64)| -> (usize, f64, Result<(Config, RunReport)>) {
        let mut ov = overrides.to_vec();
        ov.push((path.clone(), format!("{value:?}")));
        let result = config::load_config_with_overrides(text, &ov).and_then(|mut cfg| {
            apply_seed(&mut cfg, seed);
            let report = verify(&cfg, &out.join(format!("run_{i:03}")))?;
            Ok((cfg, report))
        });
        (i, *value, result)
    };
    let items: Vec<(usize, &f64)> = axis.values.iter().enumerate().collect();
    let results: Vec<_> = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| items.into_par_iter().map(run_one).collect()),
        None => items.into_par_iter().map(run_one).collect(),
    };

    let mut summary = format!(
        "index,axis,value,params_hash,condition_met,decay_margin,beta_predicted,decay_rate_E,{},passed,error\n",
        CHECK_NAMES.join(",")
    );
    let mut all_passed = true;
    for (i, value, result) in &results {
        let _ = write!(summary, "{i},{},{value:?},", axis.axis);
        match result {
            Ok((cfg, report)) => {
                let p = &report.predicted;
                let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
                let verdicts: Vec<&str> = CHECK_NAMES.iter().map(|n| verdict_cell(report, n)).collect();
                all_passed &= report.passed();
                let _ = writeln!(
                    summary,
                    "{},{},{:?},{},{},{},{},",
                    params_hash(cfg),
                    p.decay.holds,
                    p.decay.margin,
                    opt(p.beta),
                    opt(report.fitted.decay_rate_e.map(|f| f.0)),
                    verdicts.join(","),
                    report.passed()
                );
            }
            Err(e) => {
                all_passed = false;
                let blanks = ",".repeat(CHECK_NAMES.len());
                let _ = writeln!(summary, ",,,,,{blanks}false,{}", e.to_string().replace([',', '\n'], ";"));
            }
        }
    }
    write(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(if all_passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
