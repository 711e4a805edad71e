//! Ensemble reductions over path records: the dissipation budget check and
//! exceedance probabilities.

use serde::Serialize;

use super::stats::{mean_estimate, wilson_interval, Z95};
use crate::coefficients::{psi_weight, CoefficientSet, OUTSIDE_THEOREM};
use crate::error::{Error, Result};
use crate::solver::PathRecord;

/// Smallest ensemble accepted by [`blowup_stats`].
pub const MIN_BLOWUP_MEMBERS: usize = 50;

fn check_consistent(paths: &[PathRecord]) -> Result<()> {
    if let Some(first) = paths.first() {
        if let Some(other) = paths.iter().find(|p| p.signature != first.signature) {
            return Err(Error::MismatchedConfig(format!(
                "seed {} was run with {:?}, seed {} with {:?}",
                first.seed, first.signature, other.seed, other.signature
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetLine {
    /// Monte Carlo mean of the (weighted) budget.
    pub estimate: f64,
    pub standard_error: f64,
    /// Mean (weighted) initial mass.
    pub initial_mass: f64,
    /// `K e^{4KT}` times the initial mass.
    pub bound: f64,
    /// `bound + 3 SE - estimate`; nonnegative on a pass.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub members: usize,
    pub skipped: bool,
    pub banner: Option<String>,
    /// `K e^{4KT}`, read off the Itô-formula estimate for the weighted mass.
    pub constant: f64,
    pub plain: Option<BudgetLine>,
    /// Budget weighted by `ψ_k` centred in the domain, `k = L/4`.
    pub weighted: Option<BudgetLine>,
    pub psi_scale: f64,
    pub pass: bool,
}

fn budget_line(budgets: &[f64], masses: &[f64], constant: f64) -> BudgetLine {
    let b = mean_estimate(budgets);
    let m = mean_estimate(masses);
    let se = if b.standard_error.is_nan() { 0.0 } else { b.standard_error };
    let bound = constant * m.mean;
    let margin = bound + 3.0 * se - b.mean;
    BudgetLine {
        estimate: b.mean,
        standard_error: se,
        initial_mass: m.mean,
        bound,
        margin,
        pass: margin >= 0.0,
    }
}

/// Compares the Monte Carlo mean of `∫∫ b̄ u₊^{1+β} h_m` with
/// `K e^{4KT} E‖u₀‖_{L₁}` (plus three standard errors), both plainly and
/// with the `ψ_k` weight. Skipped, with a banner, for coefficient sets
/// outside the dissipative regime.
pub fn dissipation_check(paths: &[PathRecord], coeffs: &CoefficientSet, horizon: f64) -> Result<BudgetReport> {
    check_consistent(paths)?;
    let first = paths.first().ok_or(Error::EnsembleTooSmall { got: 0, needed: 1 })?;
    if first.signature.coefficients != coeffs.name {
        return Err(Error::MismatchedConfig(format!(
            "paths used coefficients `{}`, check was given `{}`",
            first.signature.coefficients, coeffs.name
        )));
    }
    let k = coeffs.k;
    let constant = k * (4.0 * k * horizon).exp();
    let grid = first.grid;
    let psi_scale = (grid.period / 4.0).max(1.0);
    if coeffs.outside_theorem() || first.signature.outside_theorem {
        return Ok(BudgetReport {
            members: paths.len(),
            skipped: true,
            banner: Some(OUTSIDE_THEOREM.to_string()),
            constant,
            plain: None,
            weighted: None,
            psi_scale,
            pass: true,
        });
    }
    let centre = 0.5 * grid.period;
    let cell = grid.cell_volume();
    let weights: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x: Vec<f64> = grid.coords(i).iter().map(|c| c - centre).collect();
            psi_weight(psi_scale, &x)
        })
        .collect();
    let weigh = |v: &[f64]| v.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>() * cell;
    let budgets: Vec<f64> = paths.iter().map(|p| p.budget).collect();
    let masses: Vec<f64> = paths.iter().map(|p| p.initial_l1).collect();
    let wbudgets: Vec<f64> = paths.iter().map(|p| weigh(&p.budget_field)).collect();
    let wmasses: Vec<f64> = paths.iter().map(|p| weigh(&p.initial)).collect();
    let plain = budget_line(&budgets, &masses, constant);
    let weighted = budget_line(&wbudgets, &wmasses, constant);
    Ok(BudgetReport {
        members: paths.len(),
        skipped: false,
        banner: None,
        constant,
        pass: plain.pass && weighted.pass,
        plain: Some(plain),
        weighted: Some(weighted),
        psi_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exceedance {
    pub threshold: f64,
    pub count: usize,
    pub probability: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: f64,
    /// `None` where `R ≥ m - 1`: the truncated path at that level was not
    /// followed past `m - 1`.
    pub cells: Vec<Option<Exceedance>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupStats {
    pub members: usize,
    pub thresholds: Vec<f64>,
    pub rows: Vec<LevelRow>,
    /// Largest probability over levels at each threshold.
    pub sup_over_levels: Vec<Exceedance>,
}

fn exceedance(threshold: f64, sups: &[f64]) -> Exceedance {
    let count = sups.iter().filter(|s| **s > threshold).count();
    let (wilson_low, wilson_high) = wilson_interval(count, sups.len(), Z95);
    Exceedance {
        threshold,
        count,
        probability: count as f64 / sups.len() as f64,
        wilson_low,
        wilson_high,
    }
}

/// Empirical `P(sup_{t ≤ T, x} u_m > R)` for each level `m` of the
/// schedule and each threshold `R`, from patched global paths.
///
/// Up to the first time its sup reaches `m - 1`, the truncated solution
/// at level `m` coincides with the patched path, so for `R < m - 1` the
/// event is read off the patched path's running maximum.
pub fn blowup_stats(paths: &[PathRecord], thresholds: &[f64]) -> Result<BlowupStats> {
    if paths.len() < MIN_BLOWUP_MEMBERS {
        return Err(Error::EnsembleTooSmall {
            got: paths.len(),
            needed: MIN_BLOWUP_MEMBERS,
        });
    }
    check_consistent(paths)?;
    let mut levels: Vec<f64> = paths.iter().flat_map(|p| p.schedule.iter().copied()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let sups: Vec<f64> = paths
        .iter()
        .map(|p| if p.exploded { f64::INFINITY } else { p.max_sup })
        .collect();
    let rows: Vec<LevelRow> = levels
        .iter()
        .map(|&level| LevelRow {
            level,
            cells: thresholds
                .iter()
                .map(|&r| (r < level - 1.0).then(|| exceedance(r, &sups)))
                .collect(),
        })
        .collect();
    let sup_over_levels = thresholds
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            rows.iter()
                .filter_map(|row| row.cells[j])
                .fold(None, |best: Option<Exceedance>, e| match best {
                    Some(b) if b.probability >= e.probability => Some(b),
                    _ => Some(e),
                })
                .unwrap_or_else(|| exceedance(r, &sups))
        })
        .collect();
    Ok(BlowupStats {
        members: paths.len(),
        thresholds,
        rows,
        sup_over_levels,
    })
}
