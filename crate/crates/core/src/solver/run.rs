//! Path drivers: a single truncation level with stopping times, and the
//! patched global path over an escalating schedule of levels.

use std::fmt;

use serde::Serialize;

use super::{Grid, ModelSpec, SolverState, Stepper, StoppingRule};
use crate::error::{Error, Result};
use crate::noise::NoiseGrid;

/// Output cadence of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record a time sample every this many steps (the initial and final
    /// levels are always recorded).
    pub series_every: u64,
    /// Keep a field snapshot every this many steps; 0 keeps none.
    pub snapshot_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            series_every: 1,
            snapshot_every: 0,
        }
    }
}

/// Running statistics at one time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSample {
    pub t: f64,
    pub step: u64,
    pub sup: f64,
    pub l1: f64,
    /// `‖u‖_{L_{1+β}}`.
    pub l_beta: f64,
    pub budget: f64,
    pub min_u: f64,
    /// `max_x (u - v)`; nonpositive when the comparison holds.
    pub comparison_gap: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub stats: TimeSample,
    pub field: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Reached the horizon without any cap firing.
    Horizon,
    DissipationCap,
    SupCap,
    /// The top level of the schedule was reached before the horizon.
    Explosion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingInfo {
    pub reason: StopReason,
    pub time: f64,
    pub step: u64,
    pub sup: f64,
}

/// Everything needed to decide whether two paths come from the same model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSignature {
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub dim: usize,
    pub points: usize,
    pub period: f64,
    pub dt: f64,
    pub horizon: f64,
    pub coefficients: String,
    pub kernel: String,
    pub outside_theorem: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub seed: u64,
    pub signature: RunSignature,
    pub grid: Grid,
    pub initial: Vec<f64>,
    pub initial_l1: f64,
    pub samples: Vec<TimeSample>,
    pub snapshots: Vec<Snapshot>,
    pub stopping: StoppingInfo,
    /// Truncation levels available to the run, in increasing order.
    pub schedule: Vec<f64>,
    pub final_level: f64,
    pub exploded: bool,
    /// Largest `u - v` seen over all steps and nodes.
    pub max_comparison_gap: f64,
    pub min_u: f64,
    /// Largest sup-norm over all steps, including unrecorded ones.
    pub max_sup: f64,
    pub budget: f64,
    /// Accumulated reaction decrement per node, for weighted budgets.
    pub budget_field: Vec<f64>,
}

/// A step error together with the path up to the failing step.
#[derive(Debug, Clone)]
pub struct RunError {
    pub error: Error,
    pub partial: Option<Box<PathRecord>>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        e.error
    }
}

/// Default escalation schedule `2, 4, …, 2¹⁰`.
pub fn default_schedule() -> Vec<f64> {
    (1..=10).map(|k| f64::from(1u32 << k)).collect()
}

/// Number of steps of size `dt` in `horizon`; the ratio must be an integer.
pub fn step_count(horizon: f64, dt: f64) -> Result<u64> {
    let steps = (horizon / dt).round();
    if steps < 1.0 || ((steps * dt) - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as u64)
}

struct Driver {
    beta: f64,
    cell: f64,
    opts: RunOptions,
    record: PathRecord,
}

impl Driver {
    fn new(
        spec: &ModelSpec,
        grid: Grid,
        dt: f64,
        seed: u64,
        opts: RunOptions,
        schedule: &[f64],
        state: &SolverState,
    ) -> Self {
        let cell = grid.cell_volume();
        let record = PathRecord {
            seed,
            signature: RunSignature {
                beta: spec.beta,
                gamma: spec.gamma,
                kappa: spec.kappa,
                dim: spec.dim,
                points: grid.points,
                period: grid.period,
                dt,
                horizon: spec.horizon,
                coefficients: spec.coeffs.name.clone(),
                kernel: spec.kernel.describe(),
                outside_theorem: spec.coeffs.outside_theorem(),
            },
            grid,
            initial: state.u.clone(),
            initial_l1: state.u.iter().map(|x| x.abs()).sum::<f64>() * cell,
            samples: Vec::new(),
            snapshots: Vec::new(),
            stopping: StoppingInfo {
                reason: StopReason::Horizon,
                time: 0.0,
                step: 0,
                sup: 0.0,
            },
            schedule: schedule.to_vec(),
            final_level: state.level,
            exploded: false,
            max_comparison_gap: f64::NEG_INFINITY,
            min_u: f64::INFINITY,
            max_sup: f64::NEG_INFINITY,
            budget: 0.0,
            budget_field: Vec::new(),
        };
        let mut driver = Self {
            beta: spec.beta,
            cell,
            opts: RunOptions {
                series_every: opts.series_every.max(1),
                ..opts
            },
            record,
        };
        driver.observe(state, true);
        driver
    }

    fn sample(&self, state: &SolverState) -> TimeSample {
        let p = 1.0 + self.beta;
        let (mut sup, mut min_u, mut l1, mut lp, mut gap) =
            (f64::NEG_INFINITY, f64::INFINITY, 0.0, 0.0, f64::NEG_INFINITY);
        for (u, v) in state.u.iter().zip(&state.v) {
            sup = sup.max(*u);
            min_u = min_u.min(*u);
            l1 += u.abs();
            lp += u.abs().powf(p);
            gap = gap.max(u - v);
        }
        TimeSample {
            t: state.t,
            step: state.step,
            sup,
            l1: l1 * self.cell,
            l_beta: (lp * self.cell).powf(1.0 / p),
            budget: state.budget,
            min_u,
            comparison_gap: gap,
            level: state.level,
        }
    }

    /// Updates running extremes and stores the sample and snapshot due at
    /// this step; `force` stores the sample regardless of cadence.
    fn observe(&mut self, state: &SolverState, force: bool) -> TimeSample {
        let s = self.sample(state);
        let r = &mut self.record;
        r.max_comparison_gap = r.max_comparison_gap.max(s.comparison_gap);
        r.min_u = r.min_u.min(s.min_u);
        r.max_sup = r.max_sup.max(s.sup);
        if force || state.step % self.opts.series_every == 0 {
            if r.samples.last().map(|last| last.step) != Some(s.step) {
                r.samples.push(s);
            }
        }
        if self.opts.snapshot_every > 0 && state.step % self.opts.snapshot_every == 0 {
            r.snapshots.push(Snapshot {
                stats: s,
                field: state.u.clone(),
            });
        }
        s
    }

    fn finish(mut self, state: &SolverState, reason: StopReason) -> PathRecord {
        let s = self.sample(state);
        if self.record.samples.last().map(|last| last.step) != Some(s.step) {
            self.record.samples.push(s);
        }
        self.record.stopping = StoppingInfo {
            reason,
            time: state.t,
            step: state.step,
            sup: s.sup,
        };
        self.record.final_level = state.level;
        self.record.exploded = reason == StopReason::Explosion;
        self.record.budget = state.budget;
        self.record.budget_field = state.budget_field.clone();
        self.record
    }

    fn fail(self, state: &SolverState, error: Error) -> RunError {
        let mut partial = self.finish(state, StopReason::Horizon);
        partial.stopping.reason = StopReason::Horizon;
        RunError {
            error,
            partial: Some(Box::new(partial)),
        }
    }
}

/// Runs the truncated equation at level `rule.level` from `spec.u0` until
/// the horizon, the dissipation cap or the sup-norm cap, whichever comes
/// first. Noise for step `k` is drawn from stream `k` of `seed`.
pub fn run_local(
    spec: &ModelSpec,
    rule: &StoppingRule,
    dt: f64,
    grid: Grid,
    seed: u64,
    opts: &RunOptions,
) -> std::result::Result<PathRecord, RunError> {
    let steps = step_count(spec.horizon, dt)?;
    let mut stepper = Stepper::new(spec, grid, dt)?;
    let noise = NoiseGrid::new(&spec.kernel, grid.points, grid.period, seed)?;
    let mut state = SolverState::new(spec, &grid, rule.level)?;
    let mut driver = Driver::new(spec, grid, dt, seed, *opts, &[rule.level], &state);
    let mut increment = vec![0.0; grid.len()];
    let check = |state: &mut SolverState, sup: f64| {
        if state.budget >= rule.dissipation_cap {
            state.flags.hit_s = true;
            Some(StopReason::DissipationCap)
        } else if sup >= rule.sup_cap {
            state.flags.hit_r = true;
            Some(StopReason::SupCap)
        } else {
            None
        }
    };
    if let Some(reason) = check(&mut state, driver.record.samples[0].sup) {
        return Ok(driver.finish(&state, reason));
    }
    while state.step < steps {
        noise.sample_increment(dt, &mut noise.rng(state.step), &mut increment);
        if let Err(e) = stepper.step(&mut state, &increment) {
            return Err(driver.fail(&state, e));
        }
        let s = driver.observe(&state, false);
        if let Some(reason) = check(&mut state, s.sup) {
            return Ok(driver.finish(&state, reason));
        }
    }
    Ok(driver.finish(&state, StopReason::Horizon))
}

/// Patched global path: runs at `schedule[0]` and, whenever the sup-norm
/// reaches `m - 1` for the current level `m`, continues in place at the
/// next level. Exhausting the schedule before the horizon sets the
/// explosion flag.
///
/// Since the truncated dynamics agree below level `m`, this is the same
/// path as running each level separately up to its own `τ^{m-1}`.
pub fn run_global(
    spec: &ModelSpec,
    dt: f64,
    grid: Grid,
    seed: u64,
    schedule: &[f64],
    opts: &RunOptions,
) -> std::result::Result<PathRecord, RunError> {
    run_global_capped(spec, dt, grid, seed, schedule, f64::INFINITY, opts)
}

/// [`run_global`] that also stops once the dissipation budget reaches
/// `dissipation_cap`.
pub fn run_global_capped(
    spec: &ModelSpec,
    dt: f64,
    grid: Grid,
    seed: u64,
    schedule: &[f64],
    dissipation_cap: f64,
    opts: &RunOptions,
) -> std::result::Result<PathRecord, RunError> {
    if !(dissipation_cap > 0.0) {
        return Err(Error::InvalidParameter(format!("dissipation cap must be positive, got {dissipation_cap}")).into());
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] < 2.0 {
        return Err(Error::InvalidParameter("level schedule must be strictly increasing and start at 2 or more".into()).into());
    }
    let steps = step_count(spec.horizon, dt)?;
    let mut stepper = Stepper::new(spec, grid, dt)?;
    let noise = NoiseGrid::new(&spec.kernel, grid.points, grid.period, seed)?;
    let mut state = SolverState::new(spec, &grid, schedule[0])?;
    let mut driver = Driver::new(spec, grid, dt, seed, *opts, schedule, &state);
    let mut increment = vec![0.0; grid.len()];
    let mut level = 0;
    // Escalates while sup ≥ m - 1; false once the schedule is exhausted.
    let escalate = |state: &mut SolverState, level: &mut usize, sup: f64| -> bool {
        while sup >= schedule[*level] - 1.0 {
            if *level + 1 == schedule.len() {
                state.flags.hit_r = true;
                state.flags.exploded = true;
                return false;
            }
            *level += 1;
            state.level = schedule[*level];
        }
        true
    };
    let initial_sup = driver.record.samples[0].sup;
    if !escalate(&mut state, &mut level, initial_sup) {
        return Ok(driver.finish(&state, StopReason::Explosion));
    }
    while state.step < steps {
        noise.sample_increment(dt, &mut noise.rng(state.step), &mut increment);
        if let Err(e) = stepper.step(&mut state, &increment) {
            return Err(driver.fail(&state, e));
        }
        let s = driver.observe(&state, false);
        if !escalate(&mut state, &mut level, s.sup) {
            return Ok(driver.finish(&state, StopReason::Explosion));
        }
        if state.budget >= dissipation_cap {
            state.flags.hit_s = true;
            return Ok(driver.finish(&state, StopReason::DissipationCap));
        }
    }
    Ok(driver.finish(&state, StopReason::Horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSet;
    use crate::noise::CorrelationKernel;
    use crate::solver::InitialCondition;

    fn spec(u0: InitialCondition, horizon: f64) -> ModelSpec {
        ModelSpec {
            beta: 8.0,
            gamma: 0.3,
            kappa: 0.49,
            dim: 1,
            horizon,
            u0,
            kernel: CorrelationKernel::white(1).unwrap(),
            coeffs: CoefficientSet::identity(1),
        }
    }

    #[test]
    fn zero_initial_datum_is_a_fixed_point() {
        let s = spec(InitialCondition::Constant(0.0), 0.0625);
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let r = run_global(&s, 1.0 / 1024.0, grid, 3, &default_schedule(), &RunOptions::default()).unwrap();
        assert!(!r.exploded);
        assert_eq!(r.final_level, 2.0);
        assert!(r.samples.iter().all(|x| x.sup == 0.0 && x.l1 == 0.0 && x.budget == 0.0));
    }

    #[test]
    fn uncapped_run_reaches_horizon() {
        let s = spec(InitialCondition::Constant(1.0), 0.0625);
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let rule = StoppingRule::uncapped(8.0).unwrap();
        let r = run_local(&s, &rule, 1.0 / 1024.0, grid, 1, &RunOptions::default()).unwrap();
        assert_eq!(r.stopping.reason, StopReason::Horizon);
        assert!((r.stopping.time - 0.0625).abs() < 1e-12);
        assert_eq!(r.samples.len(), 65);
        assert!(r.max_comparison_gap <= 1e-12);
    }

    #[test]
    fn small_sup_cap_fires_with_bounded_overshoot() {
        let mut s = spec(InitialCondition::Constant(1.0), 0.5);
        s.coeffs = s.coeffs.with_noise_coefficient(std::sync::Arc::new(|_, _| 4.0));
        s.coeffs.k = 4.0;
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let rule = StoppingRule::new(f64::INFINITY, 1.5, 4.0).unwrap();
        let dt = 1.0 / 1024.0;
        let r = run_local(&s, &rule, dt, grid, 11, &RunOptions::default()).unwrap();
        assert_eq!(r.stopping.reason, StopReason::SupCap);
        let before = r.samples[r.samples.len() - 2].sup;
        assert!(before < 1.5);
        assert!(r.stopping.sup >= 1.5);
        // One step moves a node by at most a few standard deviations of
        // ξ u^{1+γ} ΔF plus the drift, both small against R here.
        let sd = 4.0 * 1.5f64.powf(1.3) * (dt / grid.spacing()).sqrt();
        assert!(r.stopping.sup - 1.5 < 6.0 * sd, "overshoot {}", r.stopping.sup - 1.5);
    }

    #[test]
    fn dissipation_cap_fires() {
        let s = spec(InitialCondition::Constant(1.2), 0.25);
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let rule = StoppingRule::new(0.5, f64::INFINITY, 8.0).unwrap();
        let r = run_local(&s, &rule, 1.0 / 1024.0, grid, 2, &RunOptions::default()).unwrap();
        assert_eq!(r.stopping.reason, StopReason::DissipationCap);
        assert!(r.budget >= 0.5);
        assert!(r.samples.windows(2).all(|w| w[1].budget >= w[0].budget));
    }

    #[test]
    fn levels_agree_until_the_lower_cap() {
        let mut s = spec(InitialCondition::Constant(1.0), 0.5);
        s.coeffs = s.coeffs.with_noise_coefficient(std::sync::Arc::new(|_, _| 3.0));
        s.coeffs.k = 3.0;
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let opts = RunOptions {
            series_every: 1,
            snapshot_every: 1,
        };
        let a = run_local(&s, &StoppingRule::new(f64::INFINITY, 3.0, 4.0).unwrap(), 1.0 / 1024.0, grid, 5, &opts).unwrap();
        let b = run_local(&s, &StoppingRule::new(f64::INFINITY, 3.0, 8.0).unwrap(), 1.0 / 1024.0, grid, 5, &opts).unwrap();
        assert_eq!(a.stopping.step, b.stopping.step);
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.field, y.field);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let s = spec(InitialCondition::Bump { amplitude: 1.5, width: 1.0 }, 0.0625);
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let opts = RunOptions {
            series_every: 1,
            snapshot_every: 10,
        };
        let a = run_global(&s, 1.0 / 1024.0, grid, 9, &default_schedule(), &opts).unwrap();
        let b = run_global(&s, 1.0 / 1024.0, grid, 9, &default_schedule(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn horizon_must_be_a_multiple_of_dt() {
        let s = spec(InitialCondition::Constant(1.0), 0.0501);
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let err = run_global(&s, 1.0 / 1024.0, grid, 9, &default_schedule(), &RunOptions::default()).unwrap_err();
        assert!(matches!(err.error, Error::InvalidParameter(_)));
    }
}
