//! Post-processing of trajectories: predicted constants, fitted decay
//! rates and pass/fail checks.

use std::fmt::Write as _;

use crate::config::{validate_decay_condition, DecayCondition, ModelParams, RunConfig, TherapySchedule};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::f_sup_bound;
use crate::stepper::{sigma_tilde, BoundViolation, FieldId, Monitor, Sample, State, Trajectory};

/// Values at or below this are treated as numerical noise when fitting.
pub const UNDERFLOW_FLOOR: f64 = 1e-14;
/// Relative slack on the pointwise exponential-decay inequality.
pub const DECAY_SLACK: f64 = 1e-6;
/// Allowed shortfall of the fitted rate below the predicted one.
pub const RATE_SLACK: f64 = 1e-3;
/// Relative growth tolerated between windowed maxima once they have peaked.
pub const WINDOW_SLACK: f64 = 1e-2;

/// `beta = min{margin, gamma_p/2, gamma_h/2}`, or `ConditionNotMet` with the
/// (negative) margin.
pub fn predict_beta(params: &ModelParams, schedule: &TherapySchedule, lambda1: f64, f_sup: f64) -> Result<f64> {
    let c = validate_decay_condition(params, schedule, lambda1, f_sup);
    if c.holds {
        Ok(c.beta)
    } else {
        Err(Error::ConditionNotMet { margin: c.margin })
    }
}

/// Least-squares slope of `ln E` on `[t_a, t_b]`, negated, and the RMS
/// residual of the linear fit.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64)> {
    let (ta, tb) = window;
    if !(tb > ta) {
        return Err(Error::WindowTooShort);
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= ta && *t <= tb).collect();
    if pts.len() < 2 {
        return Err(Error::WindowTooShort);
    }
    if pts.iter().any(|(_, e)| !(*e > UNDERFLOW_FLOOR)) {
        return Err(Error::SeriesUnderflow { floor: UNDERFLOW_FLOOR });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, e) in &pts {
        sxy += (t - tm) * (e.ln() - ym);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::WindowTooShort);
    }
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|(t, e)| (e.ln() - (ym + slope * (t - tm))).powi(2)).sum();
    Ok((-slope, (rss / n).sqrt()))
}

/// Second half of the span on which the series stays above the floor.
pub fn default_window(series: &[(f64, f64)]) -> Option<(f64, f64)> {
    let t0 = series.first()?.0;
    let last = series.iter().take_while(|(_, e)| *e > UNDERFLOW_FLOOR).last()?.0;
    (last > t0).then(|| (t0 + (last - t0) / 2.0, last))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbingConstants {
    /// `min{2 lambda lambda1, 2 gamma_h, gamma_p}`.
    pub kappa: f64,
    /// `min{2 gamma_h, gamma_p}`.
    pub kappa_decay: f64,
    pub c_bar: f64,
    pub c0: f64,
    /// Time after which `E_init e^{-kappa t} <= C_bar / kappa`.
    pub t0: f64,
}

/// Constants of `dE/dt + kappa E <= C_bar` for `E = |phi|^2 + |sigma|^2 + |p|^2`.
pub fn absorbing_constants_with(
    params: &ModelParams,
    schedule: &TherapySchedule,
    measure: f64,
    lambda1: f64,
    f_sup: f64,
    e_init: f64,
) -> AbsorbingConstants {
    let kappa_decay = (2.0 * params.gamma_h).min(params.gamma_p);
    let kappa = (2.0 * params.lambda * lambda1).min(kappa_decay);
    let st = sigma_tilde(params);
    let alpha = params.alpha_h.max(params.alpha_c);
    let c_bar = 2.0
        * measure
        * (2.0 * f_sup
            + params.gamma_ch().abs() * st * st
            + (params.supply_h + params.supply_c + schedule.s_sup()) * st
            + alpha * alpha / (2.0 * params.gamma_p));
    let t0 = if e_init > 0.0 && c_bar > 0.0 { ((e_init * kappa / c_bar).ln() / kappa).max(0.0) } else { 0.0 };
    AbsorbingConstants { kappa, kappa_decay, c_bar, c0: e_init * (-kappa * t0).exp() + c_bar / kappa, t0 }
}

pub fn absorbing_constants(
    params: &ModelParams,
    schedule: &TherapySchedule,
    grid: &Grid,
    e_init: f64,
) -> Result<AbsorbingConstants> {
    let lambda1 = grid.lambda1()?;
    Ok(absorbing_constants_with(params, schedule, grid.measure(), lambda1, f_sup_bound(params, schedule), e_init))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiVerdict {
    ConvergedToZero,
    ConvergedElsewhere,
    Undecided,
}

impl PhiVerdict {
    pub fn name(self) -> &'static str {
        match self {
            PhiVerdict::ConvergedToZero => "converged-to-zero",
            PhiVerdict::ConvergedElsewhere => "converged-elsewhere",
            PhiVerdict::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiCheck {
    pub verdict: PhiVerdict,
    pub final_norm: f64,
    /// Whether the windowed integrals of `|phi_t|^2` decay after their peak.
    pub derivative_decays: bool,
}

/// Classify the long-time behaviour of phi. Never asserted.
pub fn check_phi_vanishes(samples: &[Sample], dphi_windows: &[f64], eps_conv: f64, kappa: f64) -> PhiCheck {
    let final_norm = samples.last().map_or(0.0, |s| s.l2[0]);
    let t_end = samples.last().map_or(0.0, |s| s.t);
    let derivative_decays = settles(dphi_windows, 1e-14);
    let verdict = if final_norm <= eps_conv {
        PhiVerdict::ConvergedToZero
    } else if t_end >= 5.0 / kappa
        && derivative_decays
        && dphi_windows.last().is_some_and(|w| *w <= eps_conv * eps_conv)
    {
        PhiVerdict::ConvergedElsewhere
    } else {
        PhiVerdict::Undecided
    };
    PhiCheck { verdict, final_norm, derivative_decays }
}

/// True when every value is finite and the sequence never climbs by more
/// than `WINDOW_SLACK` (plus `abs_slack`) above an earlier value once it has
/// reached its maximum.
fn settles(values: &[f64], abs_slack: f64) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let Some(peak) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i) else {
        return true;
    };
    let mut running_min = f64::INFINITY;
    for &v in &values[peak..] {
        if v > running_min * (1.0 + WINDOW_SLACK) + abs_slack {
            return false;
        }
        running_min = running_min.min(v);
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct H1Check {
    pub t1: f64,
    /// Maxima of the full H1 norm over `[t1 + k, t1 + k + 1]`.
    pub windowed_maxima: Vec<f64>,
    /// Supremum over all windows.
    pub c1: f64,
    pub passed: bool,
}

impl H1Check {
    /// Maximum over the final window.
    pub fn eventual(&self) -> f64 {
        *self.windowed_maxima.last().expect("at least one window")
    }
}

/// Windowed maxima of the H1 norm from `t0 + 1` on.
pub fn check_h1_bound(samples: &[Sample], t0: f64) -> Result<H1Check> {
    let t_end = samples.last().map_or(0.0, |s| s.t);
    let required = t0 + 2.0;
    if t_end < required - 1e-9 {
        return Err(Error::RunTooShort { required, actual: t_end });
    }
    let t1 = t0 + 1.0;
    let count = ((t_end - t1) + 1e-9).floor() as usize;
    let windowed_maxima: Vec<f64> = (0..count)
        .map(|k| {
            let (a, b) = (t1 + k as f64, t1 + k as f64 + 1.0);
            samples
                .iter()
                .filter(|s| s.t >= a - 1e-9 && s.t <= b + 1e-9)
                .map(Sample::h1_total)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let c1 = windowed_maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let passed = settles(&windowed_maxima, 1e-12);
    Ok(H1Check { t1, windowed_maxima, c1, passed })
}

/// Weighted L2 distance between two states, summed over the three fields.
pub fn state_distance(grid: &Grid, a: &State, b: &State) -> f64 {
    [(&a.phi, &b.phi), (&a.sigma, &b.sigma), (&a.p, &b.p)]
        .iter()
        .map(|(x, y)| {
            let d: Vec<f64> = x.values.iter().zip(&y.values).map(|(u, v)| u - v).collect();
            grid.inner(x.bc, &d, &d)
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Whether this check contributes to the pass/fail verdict.
    pub asserted: bool,
    pub passed: bool,
    /// Smallest slack observed (negative when violated).
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicted {
    pub sigma_tilde: f64,
    pub lambda1: f64,
    pub f_sup: f64,
    pub decay: DecayCondition,
    pub beta: Option<f64>,
    pub absorbing: AbsorbingConstants,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Fitted {
    pub decay_rate_e: Option<(f64, f64)>,
    pub decay_rate_phi: Option<(f64, f64)>,
}

/// Everything the analysis needs from a run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub samples: Vec<Sample>,
    pub dphi_windows: Vec<f64>,
    pub violations: Vec<BoundViolation>,
    pub monitor: Monitor,
    pub conforming: bool,
}

impl RunData {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        RunData {
            samples: traj.samples.clone(),
            dphi_windows: traj.dphi_windows.clone(),
            violations: traj.max_violation.clone(),
            monitor: traj.monitor,
            conforming: traj.conforming,
        }
    }

    /// Rebuild from a logged series alone: the monitor is decided from the
    /// first sample and violations are read off the min/max columns.
    pub fn from_series(samples: Vec<Sample>, dphi_windows: Vec<f64>, params: &ModelParams, schedule: &TherapySchedule, conforming: bool) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::Malformed("empty series".into()))?;
        let s_ok = schedule.s_le_sc(params);
        let st = sigma_tilde(params);
        let sigma_lower = s_ok && first.min[1] >= 0.0;
        let monitor = Monitor {
            sigma_lower,
            sigma_upper: (sigma_lower && first.max[1] <= st).then_some(st),
            p_lower: s_ok && first.min[2] >= 0.0,
        };
        let mut violations: Vec<BoundViolation> = Vec::new();
        let mut record = |field: FieldId, t: f64, magnitude: f64| {
            if magnitude <= 0.0 {
                return;
            }
            match violations.iter_mut().find(|v| v.field == field) {
                Some(v) if v.magnitude >= magnitude => {}
                Some(v) => *v = BoundViolation { field, index: 0, t, magnitude },
                None => violations.push(BoundViolation { field, index: 0, t, magnitude }),
            }
        };
        for s in &samples {
            record(FieldId::Phi, s.t, (-s.min[0]).max(s.max[0] - 1.0));
            let lo = if monitor.sigma_lower { -s.min[1] } else { 0.0 };
            let hi = monitor.sigma_upper.map_or(0.0, |u| s.max[1] - u);
            record(FieldId::Sigma, s.t, lo.max(hi));
            if monitor.p_lower {
                record(FieldId::P, s.t, -s.min[2]);
            }
        }
        Ok(RunData { samples, dphi_windows, violations, monitor, conforming })
    }

    fn violation(&self, field: FieldId) -> f64 {
        self.violations.iter().filter(|v| v.field == field).map(|v| v.magnitude).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub samples: Vec<Sample>,
    pub predicted: Predicted,
    pub fitted: Fitted,
    pub checks: Vec<Check>,
    pub violations: Vec<BoundViolation>,
    pub h1: Option<H1Check>,
    pub phi: PhiCheck,
    /// Free-form key/value annotations (generator, seed, conformity).
    pub meta: Vec<(String, String)>,
}

impl RunReport {
    /// True iff every asserted check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.asserted || c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn bound_check(name: &'static str, asserted: bool, violation: f64, tau: f64, detail: &str) -> Check {
    Check { name, asserted, passed: violation <= tau, margin: tau - violation, detail: detail.to_string() }
}

fn absorbing_check(samples: &[Sample], ac: &AbsorbingConstants) -> Check {
    let tol = 1e-9 * ac.c_bar.max(1.0);
    let e0 = samples.first().map_or(0.0, Sample::e_hat);
    let mut margin = f64::INFINITY;
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if dt > 0.0 {
            let lhs = (b.e_hat() - a.e_hat()) / dt + ac.kappa * (a.e_hat() + b.e_hat()) / 2.0;
            margin = margin.min(ac.c_bar - lhs);
        }
    }
    let mut gronwall = f64::INFINITY;
    for s in samples {
        let bound = e0 * (-ac.kappa * s.t).exp() + ac.c_bar / ac.kappa;
        gronwall = gronwall.min(bound * (1.0 + 1e-12) - s.e_hat());
    }
    let worst = margin.min(gronwall);
    Check {
        name: "absorbing_set",
        asserted: true,
        passed: margin >= -tol && gronwall >= 0.0,
        margin: if worst.is_finite() { worst } else { 0.0 },
        detail: format!("differential margin {margin:e}; pointwise margin {gronwall:e}"),
    }
}

fn decay_check(samples: &[Sample], pred: &Predicted, fitted: &Fitted) -> Check {
    let asserted = pred.decay.holds && pred.decay.neglected_terms_vanish;
    let Some(beta) = pred.beta else {
        return Check {
            name: "exponential_decay",
            asserted: false,
            passed: false,
            margin: pred.decay.margin,
            detail: "parameter condition not met".into(),
        };
    };
    let e0 = samples.first().map_or(0.0, |s| s.e_dev);
    let mut margin = f64::INFINITY;
    for s in samples {
        let bound = e0 * (-beta * s.t).exp() * (1.0 + DECAY_SLACK);
        margin = margin.min(bound - s.e_dev);
    }
    let pointwise = margin >= 0.0;
    let (rate_ok, rate_text) = match fitted.decay_rate_e {
        Some((rate, _)) => (rate >= beta - RATE_SLACK, format!("fitted rate {rate:?}")),
        // E fell below the floor everywhere after t = 0: decay is faster than any fit can resolve.
        None if e0 <= UNDERFLOW_FLOOR || samples.len() < 2 => (true, "series at floor".into()),
        None => (false, "no fit window".into()),
    };
    let mut detail = format!("beta {beta:?}; {rate_text}");
    if !pred.decay.neglected_terms_vanish {
        detail.push_str("; not asserted: coupling terms omitted by the estimate are nonzero");
    }
    Check {
        name: "exponential_decay",
        asserted,
        passed: pointwise && rate_ok,
        margin: if margin.is_finite() { margin } else { 0.0 },
        detail,
    }
}

/// Compute predicted constants and run every check.
pub fn analyze_run(
    grid: &Grid,
    params: &ModelParams,
    schedule: &TherapySchedule,
    run: &RunConfig,
    data: &RunData,
) -> Result<RunReport> {
    let samples = &data.samples;
    let first = samples.first().ok_or_else(|| Error::Malformed("empty series".into()))?;
    let lambda1 = grid.lambda1()?;
    let f_sup = f_sup_bound(params, schedule);
    let decay = validate_decay_condition(params, schedule, lambda1, f_sup);
    let absorbing = absorbing_constants_with(params, schedule, grid.measure(), lambda1, f_sup, first.e_hat());
    let predicted = Predicted {
        sigma_tilde: sigma_tilde(params),
        lambda1,
        f_sup,
        decay,
        beta: decay.holds.then_some(decay.beta),
        absorbing,
    };

    let e_series: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.e_dev)).collect();
    let phi_series: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.l2[0] * s.l2[0])).collect();
    let fit = |series: &[(f64, f64)]| default_window(series).and_then(|w| fit_decay_rate(series, w).ok());
    let fitted = Fitted { decay_rate_e: fit(&e_series), decay_rate_phi: fit(&phi_series) };

    let tau = run.tau_bound;
    let conforming = data.conforming;
    let clamp_note = if conforming { "" } else { "clamped run: not asserted" };
    let mut checks = vec![
        bound_check("max_principle_phi", conforming, data.violation(FieldId::Phi), tau, clamp_note),
        bound_check(
            "nutrient_bounds",
            conforming && data.monitor.sigma_upper.is_some(),
            data.violation(FieldId::Sigma),
            tau,
            if data.monitor.sigma_upper.is_some() { clamp_note } else { "hypotheses not met by the data" },
        ),
        bound_check(
            "psa_nonnegative",
            conforming && data.monitor.p_lower,
            data.violation(FieldId::P),
            tau,
            if data.monitor.p_lower { clamp_note } else { "hypotheses not met by the data" },
        ),
        absorbing_check(samples, &absorbing),
    ];

    let h1 = match check_h1_bound(samples, absorbing.t0) {
        Ok(h) => {
            checks.push(Check {
                name: "h1_bound",
                asserted: true,
                passed: h.passed,
                margin: h.c1,
                detail: format!("empirical C1 {:?} over {} windows from t1 = {:?}", h.c1, h.windowed_maxima.len(), h.t1),
            });
            Some(h)
        }
        Err(e) => {
            checks.push(Check { name: "h1_bound", asserted: false, passed: false, margin: 0.0, detail: e.to_string() });
            None
        }
    };

    checks.push(decay_check(samples, &predicted, &fitted));

    // Unit windows lying entirely inside the run and after both the
    // absorbing-set entry time and the last therapy switch.
    let settled: Vec<f64> = {
        let t_end = samples.last().map_or(0.0, |s| s.t);
        let count = ((t_end + 1e-9).floor() as usize).min(data.dphi_windows.len());
        let from = ((absorbing.t0.max(schedule.last_switch()) + 1.0).ceil() as usize).min(count);
        data.dphi_windows[from..count].to_vec()
    };
    let phi = check_phi_vanishes(samples, &settled, run.eps_conv, absorbing.kappa);
    let sup_dphi = settled.iter().copied().fold(0.0, f64::max);
    checks.push(Check {
        name: "time_derivative_windows",
        asserted: !settled.is_empty(),
        passed: phi.derivative_decays,
        margin: sup_dphi,
        detail: format!("sup over {} settled unit windows", settled.len()),
    });
    checks.push(Check {
        name: "phi_vanishes",
        asserted: false,
        passed: phi.verdict == PhiVerdict::ConvergedToZero,
        margin: run.eps_conv - phi.final_norm,
        detail: phi.verdict.name().to_string(),
    });

    Ok(RunReport {
        samples: samples.clone(),
        predicted,
        fitted,
        checks,
        violations: data.violations.clone(),
        h1,
        phi,
        meta: vec![("conforming".into(), conforming.to_string())],
    })
}

pub const REPORT_HEADER: &str = "kind,name,value,asserted,passed,detail";

fn clean(text: &str) -> String {
    text.replace([',', '\n'], ";")
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

/// Serialise a report as `kind,name,value,asserted,passed,detail` rows.
/// Non-finite values are written as empty cells.
pub fn report_to_csv(report: &RunReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let mut row = |kind: &str, name: &str, value: f64, flags: Option<(bool, bool)>, detail: &str| {
        let (a, p) = flags.map_or((String::new(), String::new()), |(a, p)| (a.to_string(), p.to_string()));
        let _ = writeln!(out, "{kind},{name},{},{a},{p},{}", num(value), clean(detail));
    };
    for (k, v) in &report.meta {
        row("meta", k, f64::NAN, None, v);
    }
    let p = &report.predicted;
    let ac = &p.absorbing;
    row("predicted", "sigma_tilde", p.sigma_tilde, None, "");
    row("predicted", "lambda1", p.lambda1, None, "");
    row("predicted", "f_sup", p.f_sup, None, "a priori bound over the invariant box");
    row("predicted", "decay_margin", p.decay.margin, None, if p.decay.holds { "condition holds" } else { "condition fails" });
    if let Some(beta) = p.beta {
        row("predicted", "beta_predicted", beta, None, "");
    }
    row("predicted", "kappa", ac.kappa, None, "");
    row("predicted", "kappa_decay", ac.kappa_decay, None, "");
    row("predicted", "C_bar", ac.c_bar, None, "");
    row("predicted", "C0", ac.c0, None, "");
    row("predicted", "t0", ac.t0, None, "");
    for (name, fit) in [("decay_rate_E", report.fitted.decay_rate_e), ("decay_rate_phi", report.fitted.decay_rate_phi)] {
        match fit {
            Some((rate, resid)) => row("fitted", name, rate, None, &format!("rms residual {resid:?}")),
            None => row("fitted", name, f64::NAN, None, "unavailable"),
        }
    }
    for v in &report.violations {
        row("violation", v.field.name(), v.magnitude, None, &format!("t {:?}", v.t));
    }
    for c in &report.checks {
        row("check", c.name, c.margin, Some((c.asserted, c.passed)), &c.detail);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kind: String,
    pub name: String,
    pub value: Option<f64>,
    pub asserted: Option<bool>,
    pub passed: Option<bool>,
    pub detail: String,
}

pub fn report_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(REPORT_HEADER) {
        return Err(Error::Malformed("unexpected report header".into()));
    }
    let flag = |s: &str| -> Result<Option<bool>> {
        match s {
            "" => Ok(None),
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            other => Err(Error::Malformed(format!("bad flag `{other}`"))),
        }
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.splitn(6, ',').collect();
            if cols.len() != 6 {
                return Err(Error::Malformed(format!("report row `{l}`")));
            }
            let value = match cols[2] {
                "" => None,
                v => Some(v.parse::<f64>().map_err(|_| Error::Malformed(format!("bad number `{v}`")))?),
            };
            Ok(ReportRow {
                kind: cols[0].to_string(),
                name: cols[1].to_string(),
                value,
                asserted: flag(cols[3])?,
                passed: flag(cols[4])?,
                detail: cols[5].to_string(),
            })
        })
        .collect()
}

/// Human-readable summary of the checks.
pub fn verdict_table(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<26} {:<10} {:<8} detail", "check", "asserted", "result");
    for c in &report.checks {
        let result = match (c.asserted, c.passed) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "ok",
            (false, false) => "-",
        };
        let _ = writeln!(out, "{:<26} {:<10} {:<8} {}", c.name, if c.asserted { "yes" } else { "no" }, result, c.detail);
    }
    let _ = writeln!(out, "overall: {}", if report.passed() { "PASS" } else { "FAIL" });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::fixtures::decay_params;

    #[test]
    fn beta_examples() {
        let mut p = decay_params();
        (p.gamma_c, p.alpha_c, p.mobility) = (p.gamma_h, p.alpha_h, 0.0);
        let sched = TherapySchedule::default();
        assert_eq!(predict_beta(&p, &sched, 10.0, 0.0).unwrap(), 0.5);
        assert_eq!(predict_beta(&p, &sched, 0.4, 0.0).unwrap(), 0.4);
        // Plug-in by hand: 9.3726 - 0.25 - 0.005 - 0.2 = 8.9176 > 0.5.
        let q = decay_params();
        assert_eq!(predict_beta(&q, &sched, 9.3726, 0.1).unwrap(), 0.5);
        let mut r = decay_params();
        r.lambda = 0.0;
        match predict_beta(&r, &sched, 9.3726, 0.1) {
            Err(Error::ConditionNotMet { margin }) => assert!((margin + 0.455).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_recovers_synthetic_rate() {
        let series: Vec<(f64, f64)> = (0..=100).map(|k| {
            let t = k as f64 * 0.1;
            (t, 3.0 * (-2.0 * t).exp())
        }).collect();
        let (rate, resid) = fit_decay_rate(&series, (0.0, 10.0)).unwrap();
        assert!((rate - 2.0).abs() < 1e-10);
        assert!(resid <= 1e-10);
        let flat: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.7)).collect();
        assert_eq!(fit_decay_rate(&flat, (0.0, 9.0)).unwrap().0, 0.0);
    }

    #[test]
    fn fit_errors() {
        let s = vec![(0.0, 1.0), (1.0, 1e-20), (2.0, 1e-21)];
        assert!(matches!(fit_decay_rate(&s, (0.0, 2.0)), Err(Error::SeriesUnderflow { .. })));
        assert!(matches!(fit_decay_rate(&s, (1.0, 1.0)), Err(Error::WindowTooShort)));
        assert!(matches!(fit_decay_rate(&s, (0.5, 0.9)), Err(Error::WindowTooShort)));
        assert_eq!(default_window(&s), None);
    }

    #[test]
    fn kappa_is_min_of_decay_kappa_and_poincare_term() {
        let p = decay_params();
        let s = TherapySchedule::default();
        for l1 in [0.01, 0.3, 1.0, 50.0] {
            let ac = absorbing_constants_with(&p, &s, 1.0, l1, 0.1, 1.0);
            assert_eq!(ac.kappa_decay, 1.0);
            assert_eq!(ac.kappa, ac.kappa_decay.min(2.0 * l1));
            assert!(ac.kappa <= ac.kappa_decay);
        }
    }

    #[test]
    fn c_bar_hand_value_and_entry_time() {
        let p = decay_params();
        let s = TherapySchedule::default();
        // sigma_tilde = 0.5: 2 * 2 * (0.2 + 0.25 + 0.5 + 0.08) = 4.12
        let ac = absorbing_constants_with(&p, &s, 2.0, 10.0, 0.1, 1e6);
        assert!((ac.c_bar - 4.12).abs() < 1e-12);
        assert!((1e6 * (-ac.kappa * ac.t0).exp() - ac.c_bar / ac.kappa).abs() < 1e-9);
        assert!((ac.c0 - 2.0 * ac.c_bar / ac.kappa).abs() < 1e-9);
        let small = absorbing_constants_with(&p, &s, 2.0, 10.0, 0.1, 1e-3);
        assert_eq!(small.t0, 0.0);
    }

    #[test]
    fn settles_accepts_rise_then_fall() {
        assert!(settles(&[1.0, 2.0, 3.0], 0.0));
        assert!(settles(&[3.0, 2.0, 2.0, 1.0], 0.0));
        assert!(settles(&[1.0, 3.0, 2.0, 2.01], 0.0));
        assert!(!settles(&[1.0, 3.0, 1.0, 2.0], 0.0));
        assert!(!settles(&[1.0, f64::NAN], 0.0));
    }

    #[test]
    fn report_csv_round_trip() {
        let p = decay_params();
        let sched = TherapySchedule::default();
        let grid = Grid::uniform_1d(15, 1.0).unwrap();
        let cfg = crate::config::load_config(crate::config::fixtures::VALID).unwrap();
        let state = State::steady(&grid, &p);
        let traj = crate::stepper::integrate(&grid, state, &cfg.run, &p, &sched).unwrap();
        let report = analyze_run(&grid, &p, &sched, &cfg.run, &RunData::from_trajectory(&traj)).unwrap();
        let text = report_to_csv(&report);
        let rows = report_from_csv(&text).unwrap();
        let beta = rows.iter().find(|r| r.name == "beta_predicted").unwrap();
        assert_eq!(beta.value, Some(0.5));
        let checks = rows.iter().filter(|r| r.kind == "check").count();
        assert_eq!(checks, report.checks.len());
        assert!(!text.contains("NaN") && !text.contains("inf"));
        assert!(verdict_table(&report).contains("max_principle_phi"));
    }

    #[test]
    fn from_series_reads_violations_off_columns() {
        let p = decay_params();
        let mk = |t: f64, min_phi: f64, max_sigma: f64| Sample {
            t,
            l2: [0.0; 3],
            h1: [0.0; 3],
            min: [min_phi, 0.0, 0.0],
            max: [0.5, max_sigma],
            e_dev: 0.0,
        };
        let data = RunData::from_series(
            vec![mk(0.0, 0.0, 0.5), mk(1.0, -1e-3, 0.7)],
            vec![],
            &p,
            &TherapySchedule::default(),
            true,
        )
        .unwrap();
        assert_eq!(data.monitor.sigma_upper, Some(0.5));
        assert!((data.violation(FieldId::Phi) - 1e-3).abs() < 1e-15);
        assert!((data.violation(FieldId::Sigma) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn phi_verdicts() {
        let s = |t: f64, l2: f64| Sample { t, l2: [l2, 0.0, 0.0], h1: [0.0; 3], min: [0.0; 3], max: [0.0; 2], e_dev: 0.0 };
        let zero = check_phi_vanishes(&[s(0.0, 0.0), s(10.0, 0.0)], &[0.0; 10], 1e-6, 1.0);
        assert_eq!(zero.verdict, PhiVerdict::ConvergedToZero);
        let mut w = vec![1.0, 0.5, 0.1];
        w.extend([1e-20; 7]);
        let elsewhere = check_phi_vanishes(&[s(0.0, 0.5), s(10.0, 0.9)], &w, 1e-6, 1.0);
        assert_eq!(elsewhere.verdict, PhiVerdict::ConvergedElsewhere);
        let short = check_phi_vanishes(&[s(0.0, 0.5), s(1.0, 0.9)], &[1.0], 1e-6, 1.0);
        assert_eq!(short.verdict, PhiVerdict::Undecided);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn beta_respects_min_structure(
                lambda1 in 0.1f64..100.0, f_sup in 0.0f64..3.0,
                gamma_h in 0.1f64..4.0, gamma_p in 0.1f64..4.0,
            ) {
                let mut p = decay_params();
                (p.gamma_h, p.gamma_p) = (gamma_h, gamma_p);
                if let Ok(beta) = predict_beta(&p, &TherapySchedule::default(), lambda1, f_sup) {
                    prop_assert!(beta <= gamma_h / 2.0 && beta <= gamma_p / 2.0 && beta >= 0.0);
                }
            }

            #[test]
            fn condition_is_monotone_in_f_sup(lambda1 in 0.1f64..20.0, f in 0.0f64..3.0, extra in 0.0f64..3.0) {
                let p = decay_params();
                let s = TherapySchedule::default();
                let lo = validate_decay_condition(&p, &s, lambda1, f);
                let hi = validate_decay_condition(&p, &s, lambda1, f + extra);
                prop_assert!(!hi.holds || lo.holds);
                prop_assert!(hi.margin <= lo.margin);
            }

            #[test]
            fn fit_is_exact_on_exponentials(a in 1e-3f64..1e3, rate in -1.0f64..3.0, dt in 0.01f64..0.15) {
                let series: Vec<(f64, f64)> = (0..40).map(|k| {
                    let t = k as f64 * dt;
                    (t, a * (-rate * t).exp())
                }).collect();
                let (fitted, resid) = fit_decay_rate(&series, (0.0, 39.0 * dt)).unwrap();
                prop_assert!((fitted - rate).abs() <= 1e-10 * rate.abs().max(1.0));
                prop_assert!(resid <= 1e-10);
            }
        }
    }
}
