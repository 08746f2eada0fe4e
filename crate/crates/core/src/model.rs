//! Pointwise nonlinearity and reaction terms of the tumor/nutrient/PSA system.

use std::f64::consts::PI;

use crate::config::{ModelParams, TherapySchedule};
use crate::error::Result;
use crate::grid::{BcKind, Grid};
use crate::stepper::State;

/// Tilting function
/// `m(sigma) = m_ref ((rho+A)/2 + (rho-A)/pi * atan((sigma - sigma_l)/sigma_r))`.
pub fn tilt_m(sigma: f64, params: &ModelParams) -> f64 {
    let (rho, a) = (params.proliferation, params.apoptosis);
    params.m_ref * ((rho + a) / 2.0 + (rho - a) / PI * ((sigma - params.sigma_l) / params.sigma_r).atan())
}

/// `f(phi, sigma, u) = M [1 - 2 phi - 3 (m(sigma) - m_ref u)]`.
pub fn nonlinearity_f(phi: f64, sigma: f64, u: f64, params: &ModelParams) -> f64 {
    params.mobility * (1.0 - 2.0 * phi - 3.0 * (tilt_m(sigma, params) - params.m_ref * u))
}

/// Certified bound on `sup |f|` over `phi in [0,1]`, the closed range of the
/// tilting function and `|u| <= u_sup`.
pub fn f_sup_bound(params: &ModelParams, schedule: &TherapySchedule) -> f64 {
    let (rho, a) = (params.proliferation, params.apoptosis);
    let m_lo = params.m_ref * rho.min(a);
    let m_hi = params.m_ref * rho.max(a);
    let drug = 3.0 * params.m_ref * schedule.u_sup();
    // 1 - 2 phi - 3 m + 3 m_ref u is monotone in each argument.
    let g_lo = 1.0 - 2.0 - 3.0 * m_hi - drug;
    let g_hi = 1.0 - 3.0 * m_lo + drug;
    params.mobility * g_lo.abs().max(g_hi.abs())
}

/// Non-diffusive right-hand sides, arranged so that each equation reads
/// `d/dt field = diffusion + reaction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionEval {
    pub r_phi: Vec<f64>,
    pub r_sigma: Vec<f64>,
    pub r_p: Vec<f64>,
}

/// Map each nutrient (all-node) index to the phase-field (interior) index at
/// the same point, or `None` on the boundary where `phi = 0`.
pub(crate) fn interior_index(grid: &Grid, k: usize) -> Option<usize> {
    let shape = grid.shape(BcKind::Neumann0);
    let nx = shape[0];
    let (i, j) = (k % nx, k / nx);
    let inner_x = i >= 1 && i <= nx - 2;
    match grid.dim() {
        1 => inner_x.then(|| i - 1),
        _ => {
            let ny = shape[1];
            (inner_x && j >= 1 && j <= ny - 2).then(|| (j - 1) * (nx - 2) + (i - 1))
        }
    }
}

/// `phi` sampled on the nutrient layout (zero on the boundary nodes).
pub(crate) fn phi_on_neumann(grid: &Grid, phi: &[f64]) -> Vec<f64> {
    (0..grid.layout_len(BcKind::Neumann0))
        .map(|k| interior_index(grid, k).map_or(0.0, |d| phi[d]))
        .collect()
}

/// `sigma` restricted to the phase-field (interior) nodes.
pub(crate) fn sigma_on_dirichlet(grid: &Grid, sigma: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.layout_len(BcKind::Dirichlet0)];
    for (k, s) in sigma.iter().enumerate() {
        if let Some(d) = interior_index(grid, k) {
            out[d] = *s;
        }
    }
    out
}

pub fn reactions(
    grid: &Grid,
    state: &State,
    params: &ModelParams,
    schedule: &TherapySchedule,
) -> Result<ReactionEval> {
    state.check(grid)?;
    let u = schedule.u_at(state.t);
    let s = schedule.s_at(state.t);
    let sigma_d = sigma_on_dirichlet(grid, &state.sigma.values);
    let r_phi = state
        .phi
        .values
        .iter()
        .zip(&sigma_d)
        .enumerate()
        .map(|(k, (&phi, &sig))| -2.0 * phi * (1.0 - phi) * nonlinearity_f(phi, sig, u.at(k), params))
        .collect();
    let phi_n = phi_on_neumann(grid, &state.phi.values);
    let (gch, sch, ach) = (params.gamma_ch(), params.supply_ch(), params.alpha_ch());
    let r_sigma = state
        .sigma
        .values
        .iter()
        .zip(&phi_n)
        .enumerate()
        .map(|(k, (&sig, &phi))| {
            -params.gamma_h * sig - gch * sig * phi + params.supply_h + sch * phi - s.at(k) * phi
        })
        .collect();
    let r_p = state
        .p
        .values
        .iter()
        .zip(&phi_n)
        .map(|(&p, &phi)| -params.gamma_p * p + params.alpha_h + ach * phi)
        .collect();
    Ok(ReactionEval { r_phi, r_sigma, r_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::fixtures::decay_params;
    use crate::config::Segment;
    use crate::grid::Field;
    use proptest::prelude::*;

    fn tilted() -> ModelParams {
        let mut p = decay_params();
        p.m_ref = 1.0;
        p.proliferation = 2.0;
        p.apoptosis = 1.0;
        p.sigma_l = 0.0;
        p.sigma_r = 1.0;
        p
    }

    #[test]
    fn tilt_values() {
        let p = tilted();
        assert!((tilt_m(p.sigma_l, &p) - 1.5).abs() < 1e-15);
        assert!((tilt_m(1.0, &p) - 1.75).abs() < 1e-15);
        assert!((tilt_m(1e300, &p) - 2.0).abs() < 1e-12);
        assert!((tilt_m(-1e300, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_values() {
        let mut p = tilted();
        // m(sigma_l) = 1.5, so u = 1.5 makes the tilt bracket vanish.
        assert!(nonlinearity_f(0.5, p.sigma_l, 1.5, &p).abs() < 1e-15);
        p.proliferation = 0.0;
        p.apoptosis = 0.0;
        p.mobility = 2.0;
        assert_eq!(nonlinearity_f(0.0, 0.3, 0.0, &p), 2.0);
        // m = 0.5 requires rho = A = 0.5 with m_ref = 1; m_ref u = 0.2.
        p.mobility = 1.0;
        p.proliferation = 0.5;
        p.apoptosis = 0.5;
        assert!((nonlinearity_f(1.0, 7.0, 0.2, &p) + 1.9).abs() < 1e-14);
    }

    #[test]
    fn f_sup_examples() {
        let mut p = tilted();
        p.mobility = 1.0;
        let none = TherapySchedule::default();
        assert_eq!(f_sup_bound(&p, &none), 7.0);
        p.mobility = 0.0;
        assert_eq!(f_sup_bound(&p, &none), 0.0);
        let mut q = tilted();
        q.mobility = 1.3;
        q.proliferation = 0.4;
        q.apoptosis = 0.4;
        let expected = 1.3 * (1.0 + 3.0 * 0.4);
        assert!((f_sup_bound(&q, &none) - expected).abs() < 1e-14);
        assert!((f_sup_bound(&decay_params(), &none) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn f_sup_matches_dense_sampling() {
        let mut p = tilted();
        p.mobility = 1.0;
        let mut sampled: f64 = 0.0;
        for i in 0..=200 {
            let phi = i as f64 / 200.0;
            for j in 0..=200 {
                let m = 1.0 + j as f64 / 200.0;
                sampled = sampled.max((1.0 - 2.0 * phi - 3.0 * m).abs());
            }
        }
        assert!((sampled - f_sup_bound(&p, &TherapySchedule::default())).abs() < 1e-12);
    }

    fn state_with(grid: &Grid, phi: f64, sigma: f64, p: f64) -> State {
        State {
            t: 0.0,
            phi: Field::constant(grid, BcKind::Dirichlet0, phi),
            sigma: Field::constant(grid, BcKind::Neumann0, sigma),
            p: Field::constant(grid, BcKind::Neumann0, p),
        }
    }

    #[test]
    fn reactions_special_states() {
        let g = Grid::uniform_2d(4, 1.0).unwrap();
        let p = tilted();
        let sched = TherapySchedule::constant(0.1, 0.2);
        let r = reactions(&g, &state_with(&g, 0.0, 0.3, 0.7), &p, &sched).unwrap();
        assert!(r.r_phi.iter().all(|v| *v == 0.0));
        for v in &r.r_sigma {
            assert!((v - (-p.gamma_h * 0.3 + p.supply_h)).abs() < 1e-15);
        }
        for v in &r.r_p {
            assert!((v - (-p.gamma_p * 0.7 + p.alpha_h)).abs() < 1e-15);
        }
        let r = reactions(&g, &state_with(&g, 1.0, 0.3, 0.7), &p, &sched).unwrap();
        assert!(r.r_phi.iter().all(|v| *v == 0.0));
        let r = reactions(&g, &state_with(&g, 0.0, p.sigma_inf(), p.p_inf()), &p, &sched).unwrap();
        assert!(r.r_phi.iter().chain(&r.r_sigma).chain(&r.r_p).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn reactions_shape_mismatch() {
        let g = Grid::uniform_1d(5, 1.0).unwrap();
        let mut st = state_with(&g, 0.2, 0.3, 0.1);
        st.sigma.values.pop();
        assert!(reactions(&g, &st, &tilted(), &TherapySchedule::default()).is_err());
    }

    #[test]
    fn phi_layout_mapping() {
        let g = Grid::uniform_2d(3, 1.0).unwrap();
        let phi: Vec<f64> = (0..9).map(|k| k as f64 + 1.0).collect();
        let on_n = phi_on_neumann(&g, &phi);
        assert_eq!(on_n.len(), 25);
        assert_eq!(on_n[6], 1.0);
        assert_eq!(on_n[18], 9.0);
        assert_eq!(on_n.iter().filter(|v| **v == 0.0).count(), 16);
        let back = sigma_on_dirichlet(&g, &on_n);
        assert_eq!(back, phi);
    }

    proptest! {
        #[test]
        fn f_bounded_by_sup(phi in 0.0f64..=1.0, sigma in -50.0f64..50.0, u in -0.7f64..=0.7,
                            m in 0.0f64..3.0, rho in -2.0f64..2.0, a in -2.0f64..2.0, mref in 0.1f64..2.0) {
            let mut p = tilted();
            p.mobility = m; p.proliferation = rho; p.apoptosis = a; p.m_ref = mref;
            let sched = TherapySchedule { u: vec![Segment::uniform(0.0, 0.7)], s: vec![] };
            prop_assert!(nonlinearity_f(phi, sigma, u, &p).abs() <= f_sup_bound(&p, &sched) * (1.0 + 1e-12));
        }

        #[test]
        fn gate_property(sigma in -5.0f64..5.0, u in -1.0f64..1.0) {
            let g = Grid::uniform_1d(4, 1.0).unwrap();
            let mut st = state_with(&g, 0.0, sigma, 0.0);
            st.phi.values = vec![0.0, 1.0, 1.0, 0.0];
            let r = reactions(&g, &st, &tilted(), &TherapySchedule::constant(u, 0.0)).unwrap();
            prop_assert!(r.r_phi.iter().all(|v| *v == 0.0));
        }

        #[test]
        fn tilt_monotone(s1 in -10.0f64..10.0, ds in 0.0f64..5.0, rho in -2.0f64..2.0, a in -2.0f64..2.0) {
            let mut p = tilted();
            p.proliferation = rho; p.apoptosis = a;
            let d = tilt_m(s1 + ds, &p) - tilt_m(s1, &p);
            prop_assert!(d * (rho - a).signum() >= -1e-15);
        }

        #[test]
        fn sigma_reaction_decouples(phi in 0.0f64..=1.0, sigma in 0.0f64..2.0) {
            let g = Grid::uniform_1d(3, 1.0).unwrap();
            let mut p = tilted();
            p.gamma_c = p.gamma_h;
            p.supply_c = p.supply_h;
            let mut st = state_with(&g, phi, sigma, 0.0);
            st.phi.values[1] = 1.0 - phi;
            let r = reactions(&g, &st, &p, &TherapySchedule::default()).unwrap();
            for v in &r.r_sigma {
                prop_assert!((v - (-p.gamma_h * sigma + p.supply_h)).abs() < 1e-14);
            }
        }
    }
}
