//! Admissibility arithmetic, discrete norms, budget checks, Hölder
//! estimates and ensemble statistics.

mod admissibility;
mod ensemble;
mod holder;
mod sobolev;
pub mod stats;

pub use admissibility::{
    admissibility, admissibility_exact, decimal_rational, holder_prediction, is_admissible, AdmissibilityWindow,
    HolderPrediction, Witness,
};
pub use ensemble::{
    blowup_stats, dissipation_check, BlowupStats, BudgetLine, BudgetReport, Exceedance, LevelRow, MIN_BLOWUP_MEMBERS,
};
pub use holder::{estimate_holder, estimate_holder_ensemble, Axis, FieldSeries, HolderEstimate, MIN_LAGS, MIN_SAMPLES};
pub use sobolev::{bessel_potential, lp_norm, sobolev_norm};
