//! IMEX-Euler time stepping with pointwise bound monitoring.
//!
//! Each step solves three decoupled SPD systems:
//!
//! ```text
//! (I - dt lambda Lap_D) phi'   = phi - dt 2 phi (1 - phi) f(phi, sigma, u)
//! ((1 + dt gamma_h) I - dt eta Lap_N) sigma' = sigma + dt (S_h + S_ch phi - s phi - gamma_ch sigma phi)
//! ((1 + dt gamma_p) I - dt D Lap_N)   p'     = p + dt (alpha_h + alpha_ch phi)
//! ```
//!
//! With `dt <= dt_max` every right-hand side stays in the invariant box and
//! the implicit operators are monotone, so the bounds `0 <= phi <= 1`,
//! `0 <= sigma <= sigma_tilde` and `p >= 0` carry over up to solver error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialCondition, ModelParams, RunConfig, TherapySchedule, TimePlan};
use crate::error::{Error, Result};
use crate::grid::{BcKind, Field, Grid};
use crate::linalg::SolveStats;
use crate::model::{f_sup_bound, nonlinearity_f, phi_on_neumann, sigma_on_dirichlet};

/// Name of the generator used for seeded initial data.
pub const RNG_NAME: &str = "ChaCha8Rng(seed_from_u64)";

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub phi: Field,
    pub sigma: Field,
    pub p: Field,
}

impl State {
    pub fn check(&self, grid: &Grid) -> Result<()> {
        for (field, bc) in [
            (&self.phi, BcKind::Dirichlet0),
            (&self.sigma, BcKind::Neumann0),
            (&self.p, BcKind::Neumann0),
        ] {
            if field.bc != bc {
                return Err(Error::BcMismatch);
            }
            grid.check_len(bc, field.values.len())?;
        }
        Ok(())
    }

    pub fn steady(grid: &Grid, params: &ModelParams) -> Self {
        State {
            t: 0.0,
            phi: Field::zeros(grid, BcKind::Dirichlet0),
            sigma: Field::constant(grid, BcKind::Neumann0, params.sigma_inf()),
            p: Field::constant(grid, BcKind::Neumann0, params.p_inf()),
        }
    }
}

/// Build the initial state selected in the run config.
pub fn initial_state(grid: &Grid, params: &ModelParams, initial: &InitialCondition) -> State {
    let d = BcKind::Dirichlet0;
    let n = BcKind::Neumann0;
    match *initial {
        InitialCondition::Constant { phi, sigma, p } => State {
            t: 0.0,
            phi: Field::constant(grid, d, phi),
            sigma: Field::constant(grid, n, sigma),
            p: Field::constant(grid, n, p),
        },
        InitialCondition::Bump { phi, sigma, p } => {
            let lengths: Vec<f64> = grid.axes().iter().map(|a| a.length).collect();
            State {
                t: 0.0,
                phi: Field::from_fn(grid, d, |x| {
                    phi * x.iter().zip(&lengths).map(|(xi, l)| (std::f64::consts::PI * xi / l).sin()).product::<f64>()
                }),
                sigma: Field::constant(grid, n, sigma),
                p: Field::constant(grid, n, p),
            }
        }
        InitialCondition::Random { seed, phi, sigma, p } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |len: usize, hi: f64| -> Vec<f64> { (0..len).map(|_| hi * rng.random::<f64>()).collect() };
            let phi_v = draw(grid.layout_len(d), phi);
            let sigma_v = draw(grid.layout_len(n), sigma);
            let p_v = draw(grid.layout_len(n), p);
            State {
                t: 0.0,
                phi: Field { bc: d, values: phi_v },
                sigma: Field { bc: n, values: sigma_v },
                p: Field { bc: n, values: p_v },
            }
        }
        InitialCondition::Steady => State::steady(grid, params),
    }
}

/// Invariant nutrient bound `max{S_h/gamma_h, S_c/gamma_c}`.
pub fn sigma_tilde(params: &ModelParams) -> f64 {
    (params.supply_h / params.gamma_h).max(params.supply_c / params.gamma_c)
}

/// Largest step for which the explicit reaction keeps the monitored bounds:
/// `1 / (2 f_sup + |gamma_ch| max(sigma_tilde, 1) + 1)`.
pub fn dt_max(params: &ModelParams, schedule: &TherapySchedule) -> f64 {
    1.0 / (2.0 * f_sup_bound(params, schedule) + params.gamma_ch().abs() * sigma_tilde(params).max(1.0) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldId {
    Phi,
    Sigma,
    P,
}

impl FieldId {
    pub fn name(self) -> &'static str {
        match self {
            FieldId::Phi => "phi",
            FieldId::Sigma => "sigma",
            FieldId::P => "p",
        }
    }
}

/// Which one-sided bounds are asserted for a run, decided from the initial
/// data and the therapy schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitor {
    pub sigma_lower: bool,
    pub sigma_upper: Option<f64>,
    pub p_lower: bool,
}

impl Monitor {
    pub fn for_initial(state: &State, params: &ModelParams, schedule: &TherapySchedule) -> Self {
        let s_ok = schedule.s_le_sc(params);
        let st = sigma_tilde(params);
        let sigma_lower = s_ok && state.sigma.min() >= 0.0;
        Monitor {
            sigma_lower,
            sigma_upper: (sigma_lower && state.sigma.max() <= st).then_some(st),
            p_lower: s_ok && state.p.min() >= 0.0,
        }
    }

    pub fn none() -> Self {
        Monitor { sigma_lower: false, sigma_upper: None, p_lower: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub field: FieldId,
    pub index: usize,
    pub t: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub dt: f64,
    /// Largest monitored violation per field (only entries with positive
    /// magnitude).
    pub violations: Vec<BoundViolation>,
    /// Solver statistics for the phi, sigma and p solves.
    pub solves: [SolveStats; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub tol: f64,
    pub clamp: bool,
    pub monitor: Monitor,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { tol: 1e-12, clamp: false, monitor: Monitor::none() }
    }
}

fn worst(field: FieldId, values: &[f64], lo: Option<f64>, hi: Option<f64>, t: f64) -> Option<BoundViolation> {
    let mut best: Option<BoundViolation> = None;
    for (index, &v) in values.iter().enumerate() {
        let below = lo.map_or(0.0, |l| l - v);
        let above = hi.map_or(0.0, |h| v - h);
        let magnitude = below.max(above);
        if magnitude > 0.0 && best.is_none_or(|b| magnitude > b.magnitude) {
            best = Some(BoundViolation { field, index, t, magnitude });
        }
    }
    best
}

pub(crate) fn violations(state: &State, monitor: &Monitor) -> Vec<BoundViolation> {
    let t = state.t;
    [
        worst(FieldId::Phi, &state.phi.values, Some(0.0), Some(1.0), t),
        worst(
            FieldId::Sigma,
            &state.sigma.values,
            monitor.sigma_lower.then_some(0.0),
            monitor.sigma_upper,
            t,
        ),
        worst(FieldId::P, &state.p.values, monitor.p_lower.then_some(0.0), None, t),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// Advance one IMEX-Euler step.
pub fn step(
    grid: &Grid,
    state: &State,
    dt: f64,
    params: &ModelParams,
    schedule: &TherapySchedule,
    opts: &StepOptions,
) -> Result<(State, StepDiagnostics)> {
    state.check(grid)?;
    let limit = dt_max(params, schedule);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, dt_max: limit });
    }
    let u = schedule.u_at(state.t);
    let s = schedule.s_at(state.t);

    let sigma_d = sigma_on_dirichlet(grid, &state.sigma.values);
    let rhs_phi: Vec<f64> = state
        .phi
        .values
        .iter()
        .zip(&sigma_d)
        .enumerate()
        .map(|(k, (&phi, &sig))| phi - dt * 2.0 * phi * (1.0 - phi) * nonlinearity_f(phi, sig, u.at(k), params))
        .collect();
    let (mut phi, st_phi) =
        grid.solve_shifted(BcKind::Dirichlet0, 1.0, dt * params.lambda, &rhs_phi, Some(&state.phi.values), opts.tol)?;

    let phi_n = phi_on_neumann(grid, &state.phi.values);
    let (gch, sch, ach) = (params.gamma_ch(), params.supply_ch(), params.alpha_ch());
    let rhs_sigma: Vec<f64> = state
        .sigma
        .values
        .iter()
        .zip(&phi_n)
        .enumerate()
        .map(|(k, (&sig, &ph))| sig + dt * (params.supply_h + sch * ph - s.at(k) * ph - gch * sig * ph))
        .collect();
    let (mut sigma, st_sigma) = grid.solve_shifted(
        BcKind::Neumann0,
        1.0 + dt * params.gamma_h,
        dt * params.eta,
        &rhs_sigma,
        Some(&state.sigma.values),
        opts.tol,
    )?;

    let rhs_p: Vec<f64> =
        state.p.values.iter().zip(&phi_n).map(|(&p, &ph)| p + dt * (params.alpha_h + ach * ph)).collect();
    let (mut p, st_p) = grid.solve_shifted(
        BcKind::Neumann0,
        1.0 + dt * params.gamma_p,
        dt * params.psa_diffusivity,
        &rhs_p,
        Some(&state.p.values),
        opts.tol,
    )?;

    if phi.iter().chain(&sigma).chain(&p).any(|v| !v.is_finite()) {
        return Err(Error::SolverDivergence { residual: f64::NAN });
    }

    let mut next = State {
        t: state.t + dt,
        phi: Field { bc: BcKind::Dirichlet0, values: std::mem::take(&mut phi) },
        sigma: Field { bc: BcKind::Neumann0, values: std::mem::take(&mut sigma) },
        p: Field { bc: BcKind::Neumann0, values: std::mem::take(&mut p) },
    };
    let violations = violations(&next, &opts.monitor);
    if opts.clamp {
        next.phi.values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        if opts.monitor.sigma_lower {
            let hi = opts.monitor.sigma_upper.unwrap_or(f64::INFINITY);
            next.sigma.values.iter_mut().for_each(|v| *v = v.clamp(0.0, hi));
        }
        if opts.monitor.p_lower {
            next.p.values.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Ok((next, StepDiagnostics { dt, violations, solves: [st_phi, st_sigma, st_p] }))
}

/// One row of the time-series output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub l2: [f64; 3],
    pub h1: [f64; 3],
    /// Minima of phi, sigma, p.
    pub min: [f64; 3],
    /// Maxima of phi and sigma.
    pub max: [f64; 2],
    /// `|phi|^2 + |sigma - sigma_inf|^2 + |p - p_inf|^2`.
    pub e_dev: f64,
}

pub const SERIES_HEADER: &str =
    "t,L2_phi,L2_sigma,L2_p,H1_phi,H1_sigma,H1_p,min_phi,max_phi,min_sigma,max_sigma,min_p,E_dev";

impl Sample {
    pub fn measure(grid: &Grid, state: &State, params: &ModelParams) -> Self {
        let fields = [&state.phi, &state.sigma, &state.p];
        let mut l2 = [0.0; 3];
        let mut h1 = [0.0; 3];
        let mut min = [0.0; 3];
        let mut max = [0.0; 2];
        for (i, f) in fields.iter().enumerate() {
            let l2sq = grid.inner(f.bc, &f.values, &f.values);
            l2[i] = l2sq.sqrt();
            h1[i] = (l2sq + grid.seminorm_h1_sq(f.bc, &f.values)).sqrt();
            min[i] = f.min();
            if i < 2 {
                max[i] = f.max();
            }
        }
        let dev = |f: &Field, c: f64| {
            let d: Vec<f64> = f.values.iter().map(|v| v - c).collect();
            grid.inner(f.bc, &d, &d)
        };
        let e_dev = l2[0] * l2[0] + dev(&state.sigma, params.sigma_inf()) + dev(&state.p, params.p_inf());
        Sample { t: state.t, l2, h1, min, max, e_dev }
    }

    /// `|phi|^2 + |sigma|^2 + |p|^2`.
    pub fn e_hat(&self) -> f64 {
        self.l2.iter().map(|v| v * v).sum()
    }

    /// Full H1 norm of the triple.
    pub fn h1_total(&self) -> f64 {
        self.h1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn values(&self) -> [f64; 13] {
        [
            self.t, self.l2[0], self.l2[1], self.l2[2], self.h1[0], self.h1[1], self.h1[2], self.min[0], self.max[0],
            self.min[1], self.max[1], self.min[2], self.e_dev,
        ]
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != 13 {
            return Err(Error::Malformed(format!("series row has {} columns, expected 13", v.len())));
        }
        Ok(Sample {
            t: v[0],
            l2: [v[1], v[2], v[3]],
            h1: [v[4], v[5], v[6]],
            min: [v[7], v[9], v[11]],
            max: [v[8], v[10]],
            e_dev: v[12],
        })
    }

    pub fn to_csv_row(&self) -> Result<String> {
        let vals = self.values();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("series"));
        }
        Ok(vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","))
    }
}

pub fn series_to_csv(samples: &[Sample]) -> Result<String> {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&s.to_csv_row()?);
        out.push('\n');
    }
    Ok(out)
}

pub fn series_from_csv(text: &str) -> Result<Vec<Sample>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SERIES_HEADER => {}
        other => return Err(Error::Malformed(format!("unexpected series header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let vals = l
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Malformed(format!("bad number `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            Sample::from_values(&vals)
        })
        .collect()
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// `sum |(phi^{n+1} - phi^n)/dt|^2 dt` over unit windows `[k, k+1)`.
    pub dphi_windows: Vec<f64>,
    /// Worst monitored violation per field over all steps.
    pub max_violation: Vec<BoundViolation>,
    pub monitor: Monitor,
    pub plan: TimePlan,
    pub final_state: State,
    pub conforming: bool,
    pub max_residual: f64,
    pub solver_iterations: usize,
}

impl Trajectory {
    pub fn violation(&self, field: FieldId) -> f64 {
        self.max_violation.iter().filter(|v| v.field == field).map(|v| v.magnitude).fold(0.0, f64::max)
    }
}

/// Integrate from `initial` to `run.t_end`, calling `observer` at every
/// output sample.
pub fn integrate_with<F>(
    grid: &Grid,
    initial: State,
    run: &RunConfig,
    params: &ModelParams,
    schedule: &TherapySchedule,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&Sample, &State) -> Result<()>,
{
    initial.check(grid)?;
    if initial.phi.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInitial("phi0 must lie in [0, 1]".into()));
    }
    if initial.sigma.values.iter().chain(&initial.p.values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInitial("non-finite sigma0 or p0".into()));
    }
    let limit = dt_max(params, schedule);
    let plan = run.time_plan(limit)?;
    if plan.steps > 0 && plan.dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt: plan.dt, dt_max: limit });
    }
    let monitor = Monitor::for_initial(&initial, params, schedule);
    let opts = StepOptions { tol: run.solver_tol, clamp: run.clamp, monitor };

    let mut worst: Vec<BoundViolation> = violations(&initial, &monitor);
    let mut samples = Vec::with_capacity(plan.steps / run.output_every + 1);
    let first = Sample::measure(grid, &initial, params);
    observer(&first, &initial)?;
    samples.push(first);

    let windows = (plan.steps as f64 * plan.dt).ceil().max(0.0) as usize;
    let mut dphi_windows = vec![0.0; windows];
    let mut state = initial;
    let mut max_residual: f64 = 0.0;
    let mut solver_iterations = 0;
    for n in 0..plan.steps {
        let t_n = n as f64 * plan.dt;
        state.t = t_n;
        let (mut next, diag) = step(grid, &state, plan.dt, params, schedule, &opts)?;
        next.t = (n + 1) as f64 * plan.dt;
        for s in &diag.solves {
            max_residual = max_residual.max(s.residual);
            solver_iterations += s.iterations;
        }
        for v in diag.violations {
            match worst.iter_mut().find(|w| w.field == v.field) {
                Some(w) if w.magnitude >= v.magnitude => {}
                Some(w) => *w = BoundViolation { t: next.t, ..v },
                None => worst.push(BoundViolation { t: next.t, ..v }),
            }
        }
        let diff: Vec<f64> =
            next.phi.values.iter().zip(&state.phi.values).map(|(a, b)| (a - b) / plan.dt).collect();
        let window = (t_n.floor() as usize).min(windows.saturating_sub(1));
        if let Some(slot) = dphi_windows.get_mut(window) {
            *slot += grid.inner(BcKind::Dirichlet0, &diff, &diff) * plan.dt;
        }
        state = next;
        if (n + 1) % run.output_every == 0 {
            let sample = Sample::measure(grid, &state, params);
            if sample.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("state"));
            }
            observer(&sample, &state)?;
            samples.push(sample);
        }
    }
    Ok(Trajectory {
        samples,
        dphi_windows,
        max_violation: worst,
        monitor,
        plan,
        final_state: state,
        conforming: !run.clamp,
        max_residual,
        solver_iterations,
    })
}

pub fn integrate(
    grid: &Grid,
    initial: State,
    run: &RunConfig,
    params: &ModelParams,
    schedule: &TherapySchedule,
) -> Result<Trajectory> {
    integrate_with(grid, initial, run, params, schedule, |_, _| Ok(()))
}
