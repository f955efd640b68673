//! Binomial GLM engine for randomized-trial covariate adjustment.
//!
//! Estimates treatment effects on aggregated two-arm trial data under
//! logit, probit, identity, log and cloglog links, derives marginal risk
//! differences by standardization and by inverse probability of treatment
//! weighting, and explores systematically how covariate adjustment moves
//! the treatment coefficient under canonical versus non-canonical links.

pub mod data;
pub mod effects;
pub mod explorer;
pub mod glm;
pub mod link;
pub mod normal;
pub mod output;
pub mod plot;

pub use data::{check_balance, parse_cell_csv, render_cell_csv, BalanceReport, Cell, CellTable};
pub use effects::{
    coefficient_risk_difference, iptw_risk_difference, standardized_risk_difference, EffectMethod,
    MarginalEffect, PropensityModel,
};
pub use explorer::{
    bland_altman, generate_grid, pattern_checks, run_grid, BAPoint, GridRecord, GridSpec,
    PatternReport,
};
pub use glm::{
    fit_glm, inverse_link, log_likelihood, null_preservation_check, score, score_general,
    FitResult, ModelSpec, ScoreVector,
};
pub use link::Link;
pub use output::ResultDocument;
pub use plot::render_bland_altman_svg;
