//! Uniform 1D/2D meshes, finite-difference Laplacians and discrete norms.
//!
//! Node layout per axis with `n` interior nodes and spacing `h = L/(n+1)`:
//!
//! * `Dirichlet0` fields store the `n` interior nodes `x_i = (i+1) h`; the
//!   boundary values are zero ghosts.
//! * `Neumann0` fields store all `n+2` nodes `x_i = i h` including the
//!   boundary; the zero-flux condition is imposed by mirror ghosts
//!   `u_{-1} = u_1`.
//!
//! Multi-dimensional fields are stored with the first axis fastest. Neumann
//! quadrature uses the dual-cell (trapezoid) weights, which makes the
//! Neumann Laplacian symmetric and summation-by-parts consistent.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{self, SolveStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    Dirichlet0,
    Neumann0,
}

impl BcKind {
    pub fn name(self) -> &'static str {
        match self {
            BcKind::Dirichlet0 => "dirichlet",
            BcKind::Neumann0 => "neumann",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub length: f64,
    pub h: f64,
}

impl Axis {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidConfig(format!("need at least 3 interior nodes per axis, got {n}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidConfig(format!("axis length must be positive, got {length}")));
        }
        Ok(Axis { n, length, h: length / (n as f64 + 1.0) })
    }

    fn len(&self, bc: BcKind) -> usize {
        match bc {
            BcKind::Dirichlet0 => self.n,
            BcKind::Neumann0 => self.n + 2,
        }
    }

    fn coord(&self, bc: BcKind, i: usize) -> f64 {
        match bc {
            BcKind::Dirichlet0 => (i + 1) as f64 * self.h,
            BcKind::Neumann0 => i as f64 * self.h,
        }
    }

    /// 1D quadrature weight of node `i`.
    fn weight(&self, bc: BcKind, i: usize) -> f64 {
        match bc {
            BcKind::Dirichlet0 => self.h,
            BcKind::Neumann0 if i == 0 || i == self.n + 1 => 0.5 * self.h,
            BcKind::Neumann0 => self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub bc: BcKind,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, bc: BcKind) -> Self {
        Field { bc, values: vec![0.0; grid.layout_len(bc)] }
    }

    pub fn constant(grid: &Grid, bc: BcKind, c: f64) -> Self {
        Field { bc, values: vec![c; grid.layout_len(bc)] }
    }

    /// Sample `f` at node coordinates.
    pub fn from_fn(grid: &Grid, bc: BcKind, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.layout_len(bc)).map(|k| f(&grid.coords(bc, k))).collect();
        Field { bc, values }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidConfig(format!("grid dimension must be 1 or 2, got {}", axes.len())));
        }
        Ok(Grid { axes })
    }

    pub fn uniform_1d(n: usize, length: f64) -> Result<Self> {
        Grid::new(vec![Axis::new(n, length)?])
    }

    pub fn uniform_2d(n: usize, length: f64) -> Result<Self> {
        Grid::new(vec![Axis::new(n, length)?, Axis::new(n, length)?])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self, bc: BcKind) -> Vec<usize> {
        self.axes.iter().map(|a| a.len(bc)).collect()
    }

    pub fn layout_len(&self, bc: BcKind) -> usize {
        self.axes.iter().map(|a| a.len(bc)).product()
    }

    /// Product of the spacings.
    pub fn cell_measure(&self) -> f64 {
        self.axes.iter().map(|a| a.h).product()
    }

    /// Measure of the domain.
    pub fn measure(&self) -> f64 {
        self.axes.iter().map(|a| a.length).product()
    }

    fn multi_index(&self, bc: BcKind, k: usize) -> [usize; 2] {
        let nx = self.axes[0].len(bc);
        [k % nx, k / nx]
    }

    pub fn coords(&self, bc: BcKind, k: usize) -> Vec<f64> {
        let idx = self.multi_index(bc, k);
        self.axes.iter().enumerate().map(|(a, axis)| axis.coord(bc, idx[a])).collect()
    }

    /// Quadrature weights (cell measure, halved on Neumann boundary faces).
    pub fn weights(&self, bc: BcKind) -> Vec<f64> {
        (0..self.layout_len(bc))
            .map(|k| {
                let idx = self.multi_index(bc, k);
                self.axes.iter().enumerate().map(|(a, axis)| axis.weight(bc, idx[a])).product()
            })
            .collect()
    }

    fn check(&self, field: &Field, bc: BcKind) -> Result<()> {
        if field.bc != bc {
            return Err(Error::BcMismatch);
        }
        self.check_len(bc, field.values.len())
    }

    pub(crate) fn check_len(&self, bc: BcKind, got: usize) -> Result<()> {
        let expected = self.layout_len(bc);
        if got != expected {
            return Err(Error::ShapeMismatch { expected, got });
        }
        Ok(())
    }

    /// `out = scale_id * u + scale_lap * Lap u` on raw values.
    pub(crate) fn apply_shifted(&self, bc: BcKind, u: &[f64], scale_id: f64, scale_lap: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(u) {
            *o = scale_id * v;
        }
        let mut stride = 1;
        for axis in &self.axes {
            let m = axis.len(bc);
            let c = scale_lap / (axis.h * axis.h);
            let block = stride * m;
            if stride == 1 {
                for (ub, ob) in u.chunks_exact(m).zip(out.chunks_exact_mut(m)) {
                    second_difference(ub, ob, c, bc);
                }
                stride = m;
                continue;
            }
            for (ub, ob) in u.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
                // Line `i` of the block couples to lines `i - 1` and `i + 1`;
                // a missing Dirichlet neighbour is zero and a Neumann ghost
                // mirrors the first interior line.
                for i in 0..m {
                    let left = match (i, bc) {
                        (0, BcKind::Dirichlet0) => None,
                        (0, BcKind::Neumann0) => Some(1),
                        _ => Some(i - 1),
                    };
                    let right = match (i + 1 == m, bc) {
                        (true, BcKind::Dirichlet0) => None,
                        (true, BcKind::Neumann0) => Some(m - 2),
                        _ => Some(i + 1),
                    };
                    let line = |j: usize| &ub[j * stride..(j + 1) * stride];
                    let centre = line(i);
                    let o = &mut ob[i * stride..(i + 1) * stride];
                    for (k, ok) in o.iter_mut().enumerate() {
                        *ok -= 2.0 * c * centre[k];
                    }
                    for j in [left, right].into_iter().flatten() {
                        for (ok, v) in o.iter_mut().zip(line(j)) {
                            *ok += c * v;
                        }
                    }
                }
            }
            stride *= m;
        }
    }

    fn laplacian(&self, field: &Field, bc: BcKind) -> Result<Field> {
        self.check(field, bc)?;
        let mut out = vec![0.0; field.values.len()];
        self.apply_shifted(bc, &field.values, 0.0, 1.0, &mut out);
        Ok(Field { bc, values: out })
    }

    /// Second-order Laplacian with zero Dirichlet ghosts.
    pub fn laplacian_dirichlet(&self, field: &Field) -> Result<Field> {
        self.laplacian(field, BcKind::Dirichlet0)
    }

    /// Second-order Laplacian with mirrored (zero-flux) ghosts.
    pub fn laplacian_neumann(&self, field: &Field) -> Result<Field> {
        self.laplacian(field, BcKind::Neumann0)
    }

    /// Weighted inner product matching the field's quadrature.
    pub fn inner(&self, bc: BcKind, a: &[f64], b: &[f64]) -> f64 {
        self.weights(bc).iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn norm_l2(&self, field: &Field) -> f64 {
        self.inner(field.bc, &field.values, &field.values).sqrt()
    }

    /// Forward-difference gradient seminorm. Dirichlet fields include the
    /// edges to the zero boundary; Neumann edges are weighted by the
    /// transverse dual-cell widths.
    pub fn seminorm_h1(&self, field: &Field) -> f64 {
        self.seminorm_h1_sq(field.bc, &field.values).sqrt()
    }

    pub(crate) fn seminorm_h1_sq(&self, bc: BcKind, u: &[f64]) -> f64 {
        let shape = self.shape(bc);
        let mut total = 0.0;
        for (a, axis) in self.axes.iter().enumerate() {
            let m = shape[a];
            let transverse: Vec<f64> = if self.dim() == 2 {
                let other = &self.axes[1 - a];
                (0..shape[1 - a]).map(|j| other.weight(bc, j)).collect()
            } else {
                vec![1.0]
            };
            let stride = if a == 0 { 1 } else { shape[0] };
            for (line, w) in transverse.iter().enumerate() {
                let start = if a == 0 { line * shape[0] } else { line };
                let at = |i: usize| u[start + i * stride];
                let mut sum = 0.0;
                match bc {
                    BcKind::Dirichlet0 => {
                        sum += at(0) * at(0) + at(m - 1) * at(m - 1);
                        for i in 0..m - 1 {
                            let d = at(i + 1) - at(i);
                            sum += d * d;
                        }
                    }
                    BcKind::Neumann0 => {
                        for i in 0..m - 1 {
                            let d = at(i + 1) - at(i);
                            sum += d * d;
                        }
                    }
                }
                total += w * sum / axis.h;
            }
        }
        total
    }

    /// Solve `(a I - b Lap) u = rhs` with `a >= 0`, `b >= 0` (the Neumann
    /// operator needs `a > 0`). 1D uses tridiagonal elimination, 2D uses
    /// Jacobi-preconditioned CG on the weight-symmetrised system with `guess`
    /// as the starting point.
    pub fn solve_shifted(
        &self,
        bc: BcKind,
        a: f64,
        b: f64,
        rhs: &[f64],
        guess: Option<&[f64]>,
        tol: f64,
    ) -> Result<(Vec<f64>, SolveStats)> {
        self.check_len(bc, rhs.len())?;
        let n = rhs.len();
        if self.dim() == 1 {
            let axis = &self.axes[0];
            let c = b / (axis.h * axis.h);
            let diag = vec![a + 2.0 * c; n];
            let mut lower = vec![-c; n];
            let mut upper = vec![-c; n];
            if bc == BcKind::Neumann0 {
                upper[0] = -2.0 * c;
                lower[n - 1] = -2.0 * c;
            }
            let mut x = linalg::solve_tridiagonal(&lower, &diag, &upper, rhs);
            let mut ax = vec![0.0; n];
            let mut residual_of = |x: &[f64]| {
                self.apply_shifted(bc, x, a, -b, &mut ax);
                ax.iter().zip(rhs).map(|(ri, bi)| bi - ri).collect::<Vec<f64>>()
            };
            // One step of iterative refinement.
            let r = residual_of(&x);
            let dx = linalg::solve_tridiagonal(&lower, &diag, &upper, &r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            let res = linalg::norm2(&residual_of(&x));
            let b_norm = linalg::norm2(rhs);
            let residual = if b_norm > 0.0 { res / b_norm } else { res };
            // Elimination is backward stable, so only a large backward error
            // (not a large residual on an ill-conditioned system) means breakdown.
            let backward = res / ((a + 4.0 * c) * linalg::norm2(&x) + b_norm).max(f64::MIN_POSITIVE);
            if !residual.is_finite() || (residual > tol.max(1e-10) && backward > 1e-13) {
                return Err(Error::SolverDivergence { residual });
            }
            Ok((x, SolveStats { iterations: 1, residual }))
        } else {
            let w = self.relative_weights(bc);
            let diag_entry = a + self.axes.iter().map(|ax| 2.0 * b / (ax.h * ax.h)).sum::<f64>();
            let diag: Vec<f64> = w.iter().map(|wi| wi * diag_entry).collect();
            let wrhs: Vec<f64> = w.iter().zip(rhs).map(|(wi, r)| wi * r).collect();
            let mut x = guess.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
            let apply = |u: &[f64], out: &mut [f64]| {
                self.apply_shifted(bc, u, a, -b, out);
                for (o, wi) in out.iter_mut().zip(&w) {
                    *o *= wi;
                }
            };
            let stats = linalg::pcg(apply, &diag, &wrhs, &mut x, tol, 20 * n + 100)?;
            Ok((x, stats))
        }
    }

    /// Weights normalised to 1 in the interior; used to symmetrise operators.
    fn relative_weights(&self, bc: BcKind) -> Vec<f64> {
        let cm = self.cell_measure();
        self.weights(bc).into_iter().map(|w| w / cm).collect()
    }

    /// Smallest eigenvalue of the discrete Dirichlet operator `-Lap`, by
    /// inverse power iteration with a Rayleigh-quotient stopping rule.
    pub fn lambda1(&self) -> Result<f64> {
        self.lambda1_with(1e-10, 1000)
    }

    pub fn lambda1_with(&self, rel_tol: f64, max_iter: usize) -> Result<f64> {
        let bc = BcKind::Dirichlet0;
        let n = self.layout_len(bc);
        let mut x = vec![1.0; n];
        let mut ax = vec![0.0; n];
        let mut theta_prev = f64::NAN;
        for _ in 0..max_iter {
            let nx = linalg::norm2(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            self.apply_shifted(bc, &x, 0.0, -1.0, &mut ax);
            let theta = linalg::dot(&x, &ax);
            if (theta - theta_prev).abs() <= rel_tol * theta.abs() {
                return Ok(theta);
            }
            theta_prev = theta;
            let (y, _) = self.solve_shifted(bc, 0.0, 1.0, &x, Some(&x), 1e-14)?;
            x = y;
        }
        Err(Error::NoConvergence { iterations: max_iter })
    }

    /// Plain-text snapshot: header `dim n... h... bc`, then one value per
    /// line in storage order.
    pub fn write_snapshot(&self, field: &Field) -> Result<String> {
        self.check_len(field.bc, field.values.len())?;
        let mut out = String::new();
        write!(out, "{}", self.dim()).unwrap();
        for axis in &self.axes {
            write!(out, " {}", axis.n).unwrap();
        }
        for axis in &self.axes {
            write!(out, " {:?}", axis.h).unwrap();
        }
        writeln!(out, " {}", field.bc.name()).unwrap();
        for v in &field.values {
            if !v.is_finite() {
                return Err(Error::NonFinite("snapshot"));
            }
            writeln!(out, "{v:?}").unwrap();
        }
        Ok(out)
    }

    /// Parse a snapshot, returning the grid (with lengths recovered from the
    /// spacing) and the field.
    pub fn read_snapshot(text: &str) -> Result<(Grid, Field)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Malformed("empty snapshot".into()))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let bad = || Error::Malformed(format!("bad snapshot header `{header}`"));
        let dim: usize = tokens.first().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        if !(1..=2).contains(&dim) || tokens.len() != 2 + 2 * dim {
            return Err(bad());
        }
        let mut axes = Vec::new();
        for a in 0..dim {
            let n: usize = tokens[1 + a].parse().map_err(|_| bad())?;
            let h: f64 = tokens[1 + dim + a].parse().map_err(|_| bad())?;
            let mut axis = Axis::new(n, h * (n as f64 + 1.0))?;
            axis.h = h;
            axes.push(axis);
        }
        let bc = match tokens[1 + 2 * dim] {
            "dirichlet" => BcKind::Dirichlet0,
            "neumann" => BcKind::Neumann0,
            _ => return Err(bad()),
        };
        let grid = Grid::new(axes)?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Malformed(format!("bad value `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        grid.check_len(bc, values.len())?;
        Ok((grid, Field { bc, values }))
    }
}

/// `out += c * D2 u` along one contiguous line.
fn second_difference(u: &[f64], out: &mut [f64], c: f64, bc: BcKind) {
    let m = u.len();
    for i in 1..m.saturating_sub(1) {
        out[i] += c * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
    }
    match bc {
        BcKind::Dirichlet0 if m == 1 => out[0] -= 2.0 * c * u[0],
        BcKind::Dirichlet0 => {
            out[0] += c * (u[1] - 2.0 * u[0]);
            out[m - 1] += c * (u[m - 2] - 2.0 * u[m - 1]);
        }
        BcKind::Neumann0 => {
            out[0] += 2.0 * c * (u[1] - u[0]);
            out[m - 1] += 2.0 * c * (u[m - 2] - u[m - 1]);
        }
    }
}
