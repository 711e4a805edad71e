//! Time stepping of the truncated equation
//!
//! ```text
//! du = (L u - b̄ u₊^{1+β} h_m(u)) dt + ξ u₊^{1+γ} h_m(u) dF
//! ```
//!
//! together with the comparison process `v`, which drops the reaction term
//! but is driven by the noise amplitude of `u`.
//!
//! The scheme is a monotone splitting: implicit Euler for the second-order
//! part (an M-matrix solve, so its inverse is entrywise nonnegative),
//! explicit upwind differences for `b·∇ + c`, the exact flow of the scalar
//! reaction ODE over one step, and an explicit Euler-Maruyama noise term.
//! Since the noise term of `v` is evaluated at `u`, it cancels in `v - u`
//! and the discrete comparison `u ≤ v` holds step by step.

mod linear;
mod record;
mod run;

use std::collections::VecDeque;

pub use linear::{solve_cyclic, CyclicScratch};
pub use record::{
    read_path_record, write_path_record, RecordFrame, RecordHeader, RecordWriter, RECORD_MAGIC, RECORD_VERSION,
};
pub use run::{
    default_schedule, run_global, run_global_capped, run_local, step_count, PathRecord, RunError, RunOptions, RunSignature, Snapshot, StopReason,
    StoppingInfo, TimeSample,
};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::noise::CorrelationKernel;
use crate::quadrature::gl24;

/// Periodic spatial grid `[0, L)^d` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub points: usize,
    pub period: f64,
}

impl Grid {
    pub fn new(dim: usize, points: usize, period: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if points < 4 || points % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs an even number of points per axis (at least 4), got {points}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
        }
        Ok(Self { dim, points, period })
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of node `idx` (row-major, first axis slowest).
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        if self.dim == 1 {
            vec![idx as f64 * h]
        } else {
            vec![(idx / self.points) as f64 * h, (idx % self.points) as f64 * h]
        }
    }
}

/// Nonnegative initial datum.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant(f64),
    /// Gaussian bump centred in the domain.
    Bump { amplitude: f64, width: f64 },
    /// Explicit nodal values in grid order.
    Field(Vec<f64>),
}

impl InitialCondition {
    pub fn materialize(&self, grid: &Grid) -> Result<Vec<f64>> {
        let values: Vec<f64> = match self {
            InitialCondition::Constant(c) => vec![*c; grid.len()],
            InitialCondition::Bump { amplitude, width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidParameter(format!("bump width must be positive, got {width}")));
                }
                let centre = 0.5 * grid.period;
                (0..grid.len())
                    .map(|i| {
                        let r2: f64 = grid.coords(i).iter().map(|x| (x - centre).powi(2)).sum();
                        amplitude * (-0.5 * r2 / (width * width)).exp()
                    })
                    .collect()
            }
            InitialCondition::Field(v) => {
                if v.len() != grid.len() {
                    return Err(Error::InvalidParameter(format!(
                        "initial field has {} values, grid has {}",
                        v.len(),
                        grid.len()
                    )));
                }
                v.clone()
            }
        };
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("initial datum must be finite and nonnegative".into()));
        }
        Ok(values)
    }
}

/// Exponents, horizon, initial datum, noise and coefficients of one model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub dim: usize,
    pub horizon: f64,
    pub u0: InitialCondition,
    pub kernel: CorrelationKernel,
    pub coeffs: CoefficientSet,
}

impl ModelSpec {
    pub fn check(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.gamma > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need beta > 0, gamma > 0, T > 0 (got {}, {}, {})",
                self.beta, self.gamma, self.horizon
            )));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!("kappa must lie in (0, 1], got {}", self.kappa)));
        }
        if self.kernel.dim() != self.dim || self.coeffs.dim != self.dim {
            return Err(Error::InvalidParameter("kernel, coefficients and model disagree on dimension".into()));
        }
        Ok(())
    }

    /// `γ < κ(1+β)/(d+2)`, recorded but not enforced.
    pub fn admissible(&self) -> bool {
        self.gamma * (self.dim as f64 + 2.0) < self.kappa * (1.0 + self.beta)
    }
}

/// Base cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, and the C¹ cubic
/// `1 - (3s² - 2s³)` with `s = z - 1` in between.
fn cutoff(z: f64) -> f64 {
    if z <= 1.0 {
        1.0
    } else if z >= 2.0 {
        0.0
    } else {
        let s = z - 1.0;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// `h_m(z) = h(|z| / m)`.
pub fn truncation(z: f64, m: f64) -> f64 {
    cutoff(z.abs() / m)
}

/// Caps for the stopping times `τ_m(S)` (dissipation budget) and `τ_m^R`
/// (sup-norm) of a run at truncation level `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub dissipation_cap: f64,
    pub sup_cap: f64,
    pub level: f64,
}

impl StoppingRule {
    pub fn new(dissipation_cap: f64, sup_cap: f64, level: f64) -> Result<Self> {
        if !(dissipation_cap > 0.0) {
            return Err(Error::InvalidParameter(format!("S must be positive, got {dissipation_cap}")));
        }
        if !(sup_cap >= 1.0) {
            return Err(Error::InvalidParameter(format!("R must be at least 1, got {sup_cap}")));
        }
        if !(level >= 1.0 && level.is_finite()) {
            return Err(Error::InvalidParameter(format!("truncation level must be ≥ 1, got {level}")));
        }
        if sup_cap.is_finite() && sup_cap >= level {
            return Err(Error::InvalidParameter(format!("R = {sup_cap} must be below the level m = {level}")));
        }
        Ok(Self {
            dissipation_cap,
            sup_cap,
            level,
        })
    }

    /// Level `m` with both caps disabled.
    pub fn uncapped(level: f64) -> Result<Self> {
        Self::new(f64::INFINITY, f64::INFINITY, level)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub hit_s: bool,
    pub hit_r: bool,
    pub exploded: bool,
}

const SUP_HISTORY: usize = 256;

/// Fields and bookkeeping at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: f64,
    pub step: u64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub level: f64,
    /// `∫_0^t ∫ b̄ u₊^{1+β} h_m(u) dx ds`, accumulated from the exact
    /// reaction decrements.
    pub budget: f64,
    /// Per-node accumulated reaction decrement (without the cell volume).
    pub budget_field: Vec<f64>,
    pub sup_history: VecDeque<f64>,
    pub flags: Flags,
}

impl SolverState {
    pub fn new(spec: &ModelSpec, grid: &Grid, level: f64) -> Result<Self> {
        let u = spec.u0.materialize(grid)?;
        let sup = u.iter().fold(0.0f64, |m, x| m.max(*x));
        Ok(Self {
            t: 0.0,
            step: 0,
            v: u.clone(),
            u,
            level,
            budget: 0.0,
            budget_field: vec![0.0; grid.len()],
            sup_history: VecDeque::from(vec![sup]),
            flags: Flags::default(),
        })
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x))
    }

    fn push_sup(&mut self, sup: f64) {
        if self.sup_history.len() == SUP_HISTORY {
            self.sup_history.pop_front();
        }
        self.sup_history.push_back(sup);
    }
}

/// Amount removed from `y` by the reaction flow `y' = -b̄ y^{1+β} h_m(y)`
/// over a time `dt`; zero for `y ≤ 0` or `y ≥ 2m`.
pub fn reaction_decrement(y: f64, b_bar: f64, beta: f64, m: f64, dt: f64) -> f64 {
    if y <= 0.0 || b_bar <= 0.0 || y >= 2.0 * m {
        return 0.0;
    }
    // Below the plateau edge: y(t) = y (1 + β b̄ y^β t)^{-1/β}.
    let plateau = |y: f64, t: f64| -> f64 {
        let x = beta * b_bar * y.powf(beta) * t;
        -y * (-x.ln_1p() / beta).exp_m1()
    };
    if y <= m {
        return plateau(y, dt);
    }
    // Time for the flow to descend from `y` to `z` through the blend.
    let rate = |z: f64| b_bar * z.powf(1.0 + beta) * truncation(z, m);
    let travel = |z: f64| gl24().integrate(|s| 1.0 / rate(s), z, y);
    let to_plateau = travel(m);
    if to_plateau <= dt {
        let rest = dt - to_plateau;
        return y - m + plateau(m, rest);
    }
    let (mut lo, mut hi) = (m, y);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if travel(mid) > dt {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    y - 0.5 * (lo + hi)
}

/// Coefficients sampled at the grid nodes for one time.
#[derive(Debug, Clone)]
struct NodalCoefficients {
    a11: Vec<f64>,
    a22: Vec<f64>,
    a12: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    c: Vec<f64>,
    b_bar: Vec<f64>,
    xi: Vec<f64>,
}

impl NodalCoefficients {
    fn sample(coeffs: &CoefficientSet, grid: &Grid, t: f64) -> Self {
        let n = grid.len();
        let mut out = Self {
            a11: Vec::with_capacity(n),
            a22: Vec::with_capacity(n),
            a12: Vec::with_capacity(n),
            b1: Vec::with_capacity(n),
            b2: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            b_bar: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
        };
        for idx in 0..n {
            let x = grid.coords(idx);
            let a = (coeffs.a)(t, &x);
            let b = (coeffs.b)(t, &x);
            out.a11.push(a[0][0]);
            if grid.dim == 2 {
                out.a22.push(a[1][1]);
                out.a12.push(0.5 * (a[0][1] + a[1][0]));
                out.b2.push(b[1]);
            }
            out.b1.push(b[0]);
            out.c.push((coeffs.c)(t, &x));
            out.b_bar.push((coeffs.b_bar)(t, &x));
            out.xi.push((coeffs.xi)(t, &x));
        }
        out
    }

    /// Bound on `dt` keeping the explicit part order preserving.
    fn step_bound(&self, h: f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.c.len() {
            let mut rate = self.c[i].abs() + self.b1[i].abs() / h;
            if !self.b2.is_empty() {
                rate += self.b2[i].abs() / h + 2.0 * self.a12[i].abs() / (h * h);
            }
            worst = worst.max(rate);
        }
        if worst == 0.0 {
            f64::INFINITY
        } else {
            0.5 / worst
        }
    }
}

/// One-step map for a fixed model, grid, truncation-independent data and
/// time step.
#[derive(Debug, Clone)]
pub struct Stepper {
    beta: f64,
    gamma: f64,
    grid: Grid,
    dt: f64,
    coeffs: CoefficientSet,
    nodal: NodalCoefficients,
    nodal_time: f64,
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    rhs_u: Vec<f64>,
    rhs_v: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    line: Vec<f64>,
    cyclic: CyclicScratch,
}

impl Stepper {
    pub fn new(spec: &ModelSpec, grid: Grid, dt: f64) -> Result<Self> {
        spec.check()?;
        if grid.dim != spec.dim {
            return Err(Error::InvalidParameter("grid and model disagree on dimension".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let nodal = NodalCoefficients::sample(&spec.coeffs, &grid, 0.5 * dt);
        let stepper = Self {
            beta: spec.beta,
            gamma: spec.gamma,
            grid,
            dt,
            coeffs: spec.coeffs.clone(),
            nodal,
            nodal_time: 0.5 * dt,
            scratch: Scratch::default(),
        };
        if grid.dim == 2 {
            for i in 0..grid.len() {
                let off = stepper.nodal.a12[i].abs();
                if stepper.nodal.a11[i] < off || stepper.nodal.a22[i] < off {
                    return Err(Error::InvalidParameter(
                        "two-dimensional scheme needs a diagonally dominant leading coefficient".into(),
                    ));
                }
            }
        }
        let bound = stepper.step_bound();
        if dt > bound {
            return Err(Error::StepSize { dt, bound });
        }
        Ok(stepper)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Monotonicity bound on the time step at the current coefficients.
    pub fn step_bound(&self) -> f64 {
        self.nodal.step_bound(self.grid.spacing())
    }

    /// Advances `state` by one step with the noise increment `noise`.
    pub fn step(&mut self, state: &mut SolverState, noise: &[f64]) -> Result<()> {
        let n = self.grid.len();
        assert_eq!(noise.len(), n, "noise increment has the wrong size");
        if self.coeffs.time_dependent {
            let mid = state.t + 0.5 * self.dt;
            if mid != self.nodal_time {
                self.nodal = NodalCoefficients::sample(&self.coeffs, &self.grid, mid);
                self.nodal_time = mid;
                let bound = self.step_bound();
                if self.dt > bound {
                    return Err(Error::StepSize { dt: self.dt, bound });
                }
            }
        }
        let m = state.level;
        let dt = self.dt;
        let cell = self.grid.cell_volume();
        let mut rhs_u = std::mem::take(&mut self.scratch.rhs_u);
        let mut rhs_v = std::mem::take(&mut self.scratch.rhs_v);
        rhs_u.resize(n, 0.0);
        rhs_v.resize(n, 0.0);
        self.explicit_linear(&state.u, &mut rhs_u);
        self.explicit_linear(&state.v, &mut rhs_v);
        let mut removed = 0.0;
        for i in 0..n {
            let u = state.u[i];
            let pos = u.max(0.0);
            let cut = truncation(u, m);
            let noise_term = if pos > 0.0 && cut > 0.0 {
                self.nodal.xi[i] * pos.powf(1.0 + self.gamma) * cut * noise[i]
            } else {
                0.0
            };
            let dec = reaction_decrement(u, self.nodal.b_bar[i], self.beta, m, dt);
            rhs_u[i] += noise_term - dec;
            rhs_v[i] += noise_term;
            state.budget_field[i] += dec;
            removed += dec;
        }
        self.implicit_solve(&mut rhs_u);
        self.implicit_solve(&mut rhs_v);
        state.u.copy_from_slice(&rhs_u);
        state.v.copy_from_slice(&rhs_v);
        self.scratch.rhs_u = rhs_u;
        self.scratch.rhs_v = rhs_v;
        state.budget += removed * cell;
        state.t = (state.step + 1) as f64 * dt;
        state.step += 1;
        if state.u.iter().chain(&state.v).any(|x| !x.is_finite()) {
            return Err(Error::Instability {
                t: state.t,
                step: state.step,
            });
        }
        let sup = state.sup();
        state.push_sup(sup);
        Ok(())
    }

    /// `out = w + dt (b·∇_upwind w + c w)` plus, in two dimensions, the
    /// explicit diagonal part of the mixed derivative.
    fn explicit_linear(&self, w: &[f64], out: &mut [f64]) {
        let n = self.grid.points;
        let h = self.grid.spacing();
        let dt = self.dt;
        let upwind = |b: f64, centre: f64, fwd: f64, back: f64| {
            if b >= 0.0 {
                b * (fwd - centre) / h
            } else {
                b * (centre - back) / h
            }
        };
        if self.grid.dim == 1 {
            for j in 0..n {
                let (back, fwd) = (w[(j + n - 1) % n], w[(j + 1) % n]);
                let drift = upwind(self.nodal.b1[j], w[j], fwd, back);
                out[j] = w[j] + dt * (drift + self.nodal.c[j] * w[j]);
            }
            return;
        }
        let at = |i: usize, j: usize| w[(i % n) * n + (j % n)];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let centre = w[idx];
                let d1 = upwind(self.nodal.b1[idx], centre, at(i + 1, j), at(i + n - 1, j));
                let d2 = upwind(self.nodal.b2[idx], centre, at(i, j + 1), at(i, j + n - 1));
                let a12 = self.nodal.a12[idx];
                // 2 a12 ∂₁∂₂ = |a12| (diagonal second difference) minus the
                // axis parts, which the implicit factors absorb.
                let mixed = if a12 > 0.0 {
                    a12 * (at(i + 1, j + 1) - 2.0 * centre + at(i + n - 1, j + n - 1)) / (h * h)
                } else if a12 < 0.0 {
                    -a12 * (at(i + 1, j + n - 1) - 2.0 * centre + at(i + n - 1, j + 1)) / (h * h)
                } else {
                    0.0
                };
                out[idx] = centre + dt * (d1 + d2 + self.nodal.c[idx] * centre + mixed);
            }
        }
    }

    /// Applies `(I - dt A)^{-1}` (one dimension) or
    /// `(I - dt A₂)^{-1} (I - dt A₁)^{-1}` (two dimensions) in place.
    fn implicit_solve(&mut self, w: &mut [f64]) {
        let n = self.grid.points;
        let h2 = self.grid.spacing().powi(2);
        let dt = self.dt;
        let s = &mut self.scratch;
        s.lower.resize(n, 0.0);
        s.diag.resize(n, 0.0);
        s.upper.resize(n, 0.0);
        s.line.resize(n, 0.0);
        if self.grid.dim == 1 {
            for j in 0..n {
                let r = dt * self.nodal.a11[j] / h2;
                s.lower[j] = -r;
                s.diag[j] = 1.0 + 2.0 * r;
                s.upper[j] = -r;
            }
            solve_cyclic(&s.lower, &s.diag, &s.upper, w, &mut s.cyclic);
            return;
        }
        // First axis: lines of fixed j with stride n.
        for j in 0..n {
            for i in 0..n {
                let idx = i * n + j;
                let r = dt * (self.nodal.a11[idx] - self.nodal.a12[idx].abs()) / h2;
                s.lower[i] = -r;
                s.diag[i] = 1.0 + 2.0 * r;
                s.upper[i] = -r;
                s.line[i] = w[idx];
            }
            solve_cyclic(&s.lower, &s.diag, &s.upper, &mut s.line, &mut s.cyclic);
            for i in 0..n {
                w[i * n + j] = s.line[i];
            }
        }
        // Second axis: contiguous rows.
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                let r = dt * (self.nodal.a22[idx] - self.nodal.a12[idx].abs()) / h2;
                s.lower[j] = -r;
                s.diag[j] = 1.0 + 2.0 * r;
                s.upper[j] = -r;
            }
            solve_cyclic(&s.lower, &s.diag, &s.upper, &mut w[i * n..(i + 1) * n], &mut s.cyclic);
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn truncation_profile() {
        assert_eq!(truncation(3.0, 5.0), 1.0);
        assert_eq!(truncation(12.0, 5.0), 0.0);
        assert!((truncation(7.5, 5.0) - 0.5).abs() < 1e-15);
        assert_eq!(truncation(-3.0, 5.0), 1.0);
        // One-sided derivatives vanish at both ends of the blend.
        let eps = 1e-7;
        assert!((truncation(5.0 + eps, 5.0) - 1.0).abs() < 1e-12);
        assert!(truncation(10.0 - eps, 5.0) < 1e-12);
        // Symmetry of the blend about its midpoint.
        for s in [0.1, 0.3, 0.45] {
            let a = truncation(5.0 + 5.0 * s, 5.0);
            let b = truncation(10.0 - 5.0 * s, 5.0);
            assert!((a + b - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reaction_decrement_matches_closed_form_and_ode() {
        let (bb, beta, dt) = (1.3f64, 2.0f64, 0.01f64);
        let y = 1.5f64;
        let exact = y - y / (1.0 + beta * bb * y * y * dt).sqrt();
        assert!((reaction_decrement(y, bb, beta, 10.0, dt) - exact).abs() < 1e-15);
        // Inside the blend, compare with a fine RK4 integration.
        let m = 2.0;
        for y0 in [2.5, 3.2, 3.9] {
            let f = |z: f64| -bb * z.powf(1.0 + beta) * truncation(z, m);
            let mut z = y0;
            let steps = 20_000;
            let h = 0.05 / steps as f64;
            for _ in 0..steps {
                let k1 = f(z);
                let k2 = f(z + 0.5 * h * k1);
                let k3 = f(z + 0.5 * h * k2);
                let k4 = f(z + h * k3);
                z += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
            let dec = reaction_decrement(y0, bb, beta, m, 0.05);
            assert!((y0 - dec - z).abs() < 1e-9, "y0={y0}: {} vs {z}", y0 - dec);
        }
        assert_eq!(reaction_decrement(4.0, bb, beta, 2.0, dt), 0.0);
        assert_eq!(reaction_decrement(-1.0, bb, beta, 2.0, dt), 0.0);
    }

    fn heat_spec(dim: usize, u0: Vec<f64>) -> ModelSpec {
        let coeffs = CoefficientSet::identity(dim)
            .without_dissipation()
            .with_noise_coefficient(std::sync::Arc::new(|_, _| 0.0));
        ModelSpec {
            beta: 2.0,
            gamma: 0.5,
            kappa: 0.4,
            dim,
            horizon: 1.0,
            u0: InitialCondition::Field(u0),
            kernel: CorrelationKernel::white(dim).unwrap(),
            coeffs,
        }
    }

    /// Discrete symbol of the implicit step on one axis.
    fn damping(k: usize, n: usize, h: f64, dt: f64) -> f64 {
        let s = (PI * k as f64 / n as f64).sin();
        1.0 / (1.0 + dt * 4.0 * s * s / (h * h))
    }

    #[test]
    fn noiseless_linear_run_matches_discrete_heat_oracle() {
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let (h, dt, steps) = (grid.spacing(), 1.0 / 256.0, 200);
        let modes = [(0usize, 2.0), (1, 1.0), (5, 0.3), (17, 0.1)];
        let field = |x: f64, factor: &dyn Fn(usize) -> f64| -> f64 {
            modes
                .iter()
                .map(|(k, c)| c * factor(*k) * (2.0 * PI * *k as f64 * x / grid.period).cos())
                .sum()
        };
        let u0: Vec<f64> = (0..64).map(|i| field(i as f64 * h, &|_| 1.0)).collect();
        let spec = heat_spec(1, u0);
        let mut stepper = Stepper::new(&spec, grid, dt).unwrap();
        let mut state = SolverState::new(&spec, &grid, 4.0).unwrap();
        let noise = vec![0.7; 64];
        for _ in 0..steps {
            stepper.step(&mut state, &noise).unwrap();
        }
        for i in 0..64 {
            let expect = field(i as f64 * h, &|k| damping(k, 64, h, dt).powi(steps));
            assert!((state.u[i] - expect).abs() < 1e-10, "{} vs {expect}", state.u[i]);
            assert_eq!(state.u[i], state.v[i]);
        }
        assert_eq!(state.budget, 0.0);
    }

    #[test]
    fn planar_heat_step_factorises_over_axes() {
        let grid = Grid::new(2, 16, 8.0).unwrap();
        let (h, dt, steps) = (grid.spacing(), 1.0 / 64.0, 40);
        let (k1, k2) = (2usize, 3usize);
        let w = 2.0 * PI / grid.period;
        let u0: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i);
                2.0 + (w * k1 as f64 * x[0]).cos() * (w * k2 as f64 * x[1]).sin()
            })
            .collect();
        let spec = heat_spec(2, u0.clone());
        let mut stepper = Stepper::new(&spec, grid, dt).unwrap();
        let mut state = SolverState::new(&spec, &grid, 4.0).unwrap();
        let noise = vec![0.0; grid.len()];
        for _ in 0..steps {
            stepper.step(&mut state, &noise).unwrap();
        }
        let factor = (damping(k1, 16, h, dt) * damping(k2, 16, h, dt)).powi(steps);
        for i in 0..grid.len() {
            let expect = 2.0 + (u0[i] - 2.0) * factor;
            assert!((state.u[i] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn comparison_holds_for_variable_planar_coefficients() {
        use crate::noise::NoiseGrid;
        let grid = Grid::new(2, 16, 8.0).unwrap();
        let spec = ModelSpec {
            beta: 2.0,
            gamma: 0.3,
            kappa: 0.5,
            dim: 2,
            horizon: 1.0,
            u0: InitialCondition::Bump {
                amplitude: 1.5,
                width: 1.0,
            },
            kernel: CorrelationKernel::ornstein_uhlenbeck(1.0, 2).unwrap(),
            coeffs: CoefficientSet::variable_demo(2, 8.0),
        };
        let dt = 1.0 / 128.0;
        let mut stepper = Stepper::new(&spec, grid, dt).unwrap();
        let mut state = SolverState::new(&spec, &grid, 4.0).unwrap();
        let noise = NoiseGrid::new(&spec.kernel, 16, 8.0, 4).unwrap();
        for step in 0..64 {
            let dw = noise.increment(step, dt);
            stepper.step(&mut state, &dw).unwrap();
            let gap = state.u.iter().zip(&state.v).fold(f64::NEG_INFINITY, |m, (u, v)| m.max(u - v));
            assert!(gap <= 1e-12, "step {step}: {gap}");
        }
        assert!(state.budget > 0.0);
    }

    #[test]
    fn step_bound_is_enforced() {
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let mut spec = heat_spec(1, vec![1.0; 64]);
        spec.coeffs.b = std::sync::Arc::new(|_, _| [2.0, 0.0]);
        // 0.5 / (|b| / h) = 0.0625
        assert!(Stepper::new(&spec, grid, 0.06).is_ok());
        match Stepper::new(&spec, grid, 0.07) {
            Err(Error::StepSize { bound, .. }) => assert!((bound - 0.0625).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_dominant_planar_diffusion_is_rejected() {
        let grid = Grid::new(2, 8, 8.0).unwrap();
        let mut spec = heat_spec(2, vec![1.0; 64]);
        spec.coeffs.a = std::sync::Arc::new(|_, _| [[1.0, 0.9], [0.9, 0.5]]);
        assert!(matches!(Stepper::new(&spec, grid, 0.01), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rejects_bad_stopping_rules() {
        assert!(StoppingRule::new(1.0, 5.0, 4.0).is_err());
        assert!(StoppingRule::new(0.0, 3.0, 4.0).is_err());
        assert!(StoppingRule::new(1.0, 0.5, 4.0).is_err());
        assert!(StoppingRule::new(1.0, 3.0, 4.0).is_ok());
        assert!(StoppingRule::uncapped(4.0).is_ok());
    }
}
