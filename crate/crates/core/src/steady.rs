//! The stationary state `(0, sigma_inf, p_inf)` computed three independent
//! ways: closed form, a direct discrete solve of the Neumann Helmholtz
//! problems, and minimisation of the quadratic energy
//!
//! ```text
//! Gamma(u, v) = int eta/2 |grad u|^2 + gamma_h/2 u^2 - S_h u
//!             + int D/2 |grad v|^2 + gamma_p/2 v^2 - alpha_h v
//! ```

use crate::config::ModelParams;
use crate::error::{Error, Result};
use crate::grid::{BcKind, Field, Grid};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub phi_inf: Field,
    pub sigma_inf: Field,
    pub p_inf: Field,
    pub gamma_value: f64,
    /// Iterations used (0 for closed form).
    pub iterations: usize,
    pub converged: bool,
}

fn assemble(grid: &Grid, params: &ModelParams, sigma: Vec<f64>, p: Vec<f64>, iterations: usize) -> SteadyState {
    let sigma_inf = Field { bc: BcKind::Neumann0, values: sigma };
    let p_inf = Field { bc: BcKind::Neumann0, values: p };
    let gamma_value = gamma_functional(grid, &sigma_inf, &p_inf, params);
    SteadyState {
        phi_inf: Field::zeros(grid, BcKind::Dirichlet0),
        sigma_inf,
        p_inf,
        gamma_value,
        iterations,
        converged: true,
    }
}

/// Constant solution `sigma = S_h/gamma_h`, `p = alpha_h/gamma_p`, `phi = 0`.
pub fn steady_closed_form(grid: &Grid, params: &ModelParams) -> SteadyState {
    let n = grid.layout_len(BcKind::Neumann0);
    assemble(grid, params, vec![params.sigma_inf(); n], vec![params.p_inf(); n], 0)
}

/// Solve `(gamma_h - eta Lap_N) sigma = S_h` and `(gamma_p - D Lap_N) p = alpha_h`.
pub fn steady_solve_discrete(grid: &Grid, params: &ModelParams) -> Result<SteadyState> {
    let n = grid.layout_len(BcKind::Neumann0);
    let (sigma, s1) =
        grid.solve_shifted(BcKind::Neumann0, params.gamma_h, params.eta, &vec![params.supply_h; n], None, 1e-12)?;
    let (p, s2) = grid.solve_shifted(
        BcKind::Neumann0,
        params.gamma_p,
        params.psa_diffusivity,
        &vec![params.alpha_h; n],
        None,
        1e-12,
    )?;
    Ok(assemble(grid, params, sigma, p, s1.iterations + s2.iterations))
}

fn quadratic_part(grid: &Grid, u: &Field, diffusivity: f64, decay: f64, source: f64) -> f64 {
    let w = grid.weights(u.bc);
    let pointwise: f64 = w.iter().zip(&u.values).map(|(w, v)| w * (decay / 2.0 * v * v - source * v)).sum();
    pointwise + diffusivity / 2.0 * grid.seminorm_h1_sq(u.bc, &u.values)
}

/// Discrete quadrature of the energy functional.
pub fn gamma_functional(grid: &Grid, u: &Field, v: &Field, params: &ModelParams) -> f64 {
    quadratic_part(grid, u, params.eta, params.gamma_h, params.supply_h)
        + quadratic_part(grid, v, params.psa_diffusivity, params.gamma_p, params.alpha_h)
}

/// `source - (decay - diffusivity Lap_N) u` on the nutrient layout.
fn residual(grid: &Grid, u: &[f64], diffusivity: f64, decay: f64, source: f64) -> Vec<f64> {
    let mut au = vec![0.0; u.len()];
    grid.apply_shifted(BcKind::Neumann0, u, decay, -diffusivity, &mut au);
    au.iter().map(|a| source - a).collect()
}

/// Norm of the discrete Gateaux derivative, i.e. the weighted L2 norm of
/// the strong-form residual.
pub fn gateaux_norm(grid: &Grid, u: &[f64], diffusivity: f64, decay: f64, source: f64) -> f64 {
    let r = residual(grid, u, diffusivity, decay, source);
    grid.inner(BcKind::Neumann0, &r, &r).sqrt()
}

/// Linear CG on one quadratic block, from zero.
fn minimise_block(grid: &Grid, diffusivity: f64, decay: f64, source: f64, tol: f64) -> Result<(Vec<f64>, usize)> {
    let bc = BcKind::Neumann0;
    let n = grid.layout_len(bc);
    let w = grid.weights(bc);
    let winv_norm = |g: &[f64]| g.iter().zip(&w).map(|(g, w)| g * g / w).sum::<f64>().sqrt();
    // Hessian H = W (decay - diffusivity Lap); gradient g = H x - W source.
    let hess = |x: &[f64], out: &mut [f64]| {
        grid.apply_shifted(bc, x, decay, -diffusivity, out);
        for (o, wi) in out.iter_mut().zip(&w) {
            *o *= wi;
        }
    };
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = w.iter().map(|wi| wi * source).collect();
    if winv_norm(&r) <= tol {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    let mut hp = vec![0.0; n];
    let mut rr = linalg::dot(&r, &r);
    let max_iter = 10 * n + 100;
    for it in 1..=max_iter {
        hess(&p, &mut hp);
        let alpha = rr / linalg::dot(&p, &hp);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        if winv_norm(&r) <= tol {
            return Ok((x, it));
        }
        let rr_new = linalg::dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

/// Minimise the energy functional by conjugate gradients on its quadratic
/// form, stopping when the Gateaux-derivative norm of each block is at most
/// `tol`.
pub fn gamma_minimize(grid: &Grid, params: &ModelParams, tol: f64) -> Result<SteadyState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig("minimisation tolerance must be positive".into()));
    }
    let (sigma, i1) = minimise_block(grid, params.eta, params.gamma_h, params.supply_h, tol)?;
    let (p, i2) = minimise_block(grid, params.psa_diffusivity, params.gamma_p, params.alpha_h, tol)?;
    Ok(assemble(grid, params, sigma, p, i1 + i2))
}

/// Weighted L2 distance between two steady states over `(sigma, p)`.
pub fn distance(grid: &Grid, a: &SteadyState, b: &SteadyState) -> f64 {
    let diff = |x: &Field, y: &Field| {
        let d: Vec<f64> = x.values.iter().zip(&y.values).map(|(a, b)| a - b).collect();
        grid.inner(BcKind::Neumann0, &d, &d)
    };
    (diff(&a.sigma_inf, &b.sigma_inf) + diff(&a.p_inf, &b.p_inf)).sqrt()
}

#[derive(Debug, Clone)]
pub struct SteadyComparison {
    pub closed: SteadyState,
    pub discrete: SteadyState,
    pub minimized: SteadyState,
    pub closed_vs_discrete: f64,
    pub closed_vs_minimized: f64,
    pub discrete_vs_minimized: f64,
}

impl SteadyComparison {
    pub fn max_disagreement(&self) -> f64 {
        self.closed_vs_discrete.max(self.closed_vs_minimized).max(self.discrete_vs_minimized)
    }
}

pub fn compare_routes(grid: &Grid, params: &ModelParams, tol: f64) -> Result<SteadyComparison> {
    let closed = steady_closed_form(grid, params);
    let discrete = steady_solve_discrete(grid, params)?;
    let minimized = gamma_minimize(grid, params, tol)?;
    Ok(SteadyComparison {
        closed_vs_discrete: distance(grid, &closed, &discrete),
        closed_vs_minimized: distance(grid, &closed, &minimized),
        discrete_vs_minimized: distance(grid, &discrete, &minimized),
        closed,
        discrete,
        minimized,
    })
}
