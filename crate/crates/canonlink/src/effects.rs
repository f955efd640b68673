//! Marginal risk-difference estimators derived from fitted models
//! (standardization with delta-method standard errors) and directly from
//! the data (inverse probability of treatment weighting).

use thiserror::Error;

use crate::data::CellTable;
use crate::glm::{FitResult, ModelSpec};
use crate::link::Link;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EffectsError {
    #[error("fit did not converge; marginal effects require a converged fit")]
    NotConverged,
    #[error("model spec does not match the fit it came from")]
    SpecMismatch,
    #[error("coefficient risk difference requires the identity link, got {0}")]
    LinkMismatch(Link),
    #[error("positivity violation: no individuals with x={x} in arm z={z}")]
    Positivity { x: u8, z: u8 },
}

/// How a marginal risk difference was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectMethod {
    /// The treatment coefficient of an identity-link model.
    Coefficient,
    /// G-computation: average predicted risk under z=1 minus under z=0.
    Standardization,
    /// Inverse probability of treatment weighting with normalized weights.
    Iptw,
}

impl EffectMethod {
    pub fn name(self) -> &'static str {
        match self {
            EffectMethod::Coefficient => "coefficient",
            EffectMethod::Standardization => "standardization",
            EffectMethod::Iptw => "iptw",
        }
    }
}

impl std::fmt::Display for EffectMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A marginal risk difference (experimental minus control, probability
/// units) with its standard error. `link` is `None` for IPTW, which does
/// not go through an outcome model.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEffect {
    pub estimate: f64,
    pub std_error: f64,
    pub method: EffectMethod,
    pub link: Option<Link>,
}

/// Saturated propensity model: the empirical probability of assignment to
/// the experimental arm within each covariate stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    levels: Vec<(u8, f64)>,
}

impl PropensityModel {
    /// Fits from cell totals. Every covariate level must appear in both
    /// arms, which also makes every probability strictly interior.
    pub fn fit(table: &CellTable) -> Result<Self, EffectsError> {
        let mut xs: Vec<u8> = table.cells().iter().map(|c| c.x()).collect();
        xs.sort_unstable();
        xs.dedup();
        let mut levels = Vec::with_capacity(xs.len());
        for x in xs {
            let mut trials = [0u64; 2];
            for cell in table.cells().iter().filter(|c| c.x() == x) {
                trials[cell.z() as usize] += cell.trials();
            }
            for z in [1u8, 0u8] {
                if trials[z as usize] == 0 {
                    return Err(EffectsError::Positivity { x, z });
                }
            }
            levels.push((x, trials[1] as f64 / (trials[0] + trials[1]) as f64));
        }
        Ok(PropensityModel { levels })
    }

    /// P(Z = 1 | X = x).
    pub fn probability(&self, x: u8) -> Option<f64> {
        self.levels.iter().find(|(l, _)| *l == x).map(|(_, p)| *p)
    }
}

/// Standardized (g-computation) risk difference: predict every individual
/// under both arms from the fitted model and average the difference, with
/// covariates held fixed. Standard error by the delta method through the
/// fit's covariance.
pub fn standardized_risk_difference(
    fit: &FitResult,
    spec: ModelSpec,
    table: &CellTable,
) -> Result<MarginalEffect, EffectsError> {
    if spec != fit.spec {
        return Err(EffectsError::SpecMismatch);
    }
    if !fit.converged {
        return Err(EffectsError::NotConverged);
    }
    let p = spec.coefficient_count();
    let n = table.total_trials() as f64;
    let link = spec.link;

    let mut estimate = 0.0;
    let mut gradient = vec![0.0; p];
    for cell in table.cells() {
        let weight = cell.trials() as f64;
        let x = cell.x() as f64;
        let row1 = spec.design_row(x, 1.0);
        let row0 = spec.design_row(x, 0.0);
        let eta1: f64 = fit.coefficients.iter().zip(&row1).map(|(b, r)| b * r).sum();
        let eta0: f64 = fit.coefficients.iter().zip(&row0).map(|(b, r)| b * r).sum();
        estimate += weight * (link.inverse_clamped(eta1) - link.inverse_clamped(eta0));
        let d1 = link.mu_eta(eta1);
        let d0 = link.mu_eta(eta0);
        for j in 0..p {
            gradient[j] += weight * (d1 * row1[j] - d0 * row0[j]);
        }
    }
    estimate /= n;
    for g in &mut gradient {
        *g /= n;
    }

    let mut variance = 0.0;
    for i in 0..p {
        for j in 0..p {
            variance += gradient[i] * fit.covariance_at(i, j) * gradient[j];
        }
    }
    Ok(MarginalEffect {
        estimate,
        std_error: variance.max(0.0).sqrt(),
        method: EffectMethod::Standardization,
        link: Some(link),
    })
}

/// The treatment coefficient of an identity-link fit, whose scale is
/// already the risk difference.
pub fn coefficient_risk_difference(
    fit: &FitResult,
    spec: ModelSpec,
) -> Result<MarginalEffect, EffectsError> {
    if spec.link != Link::Identity {
        return Err(EffectsError::LinkMismatch(spec.link));
    }
    if spec != fit.spec {
        return Err(EffectsError::SpecMismatch);
    }
    if !fit.converged {
        return Err(EffectsError::NotConverged);
    }
    Ok(MarginalEffect {
        estimate: fit.treatment_coefficient(),
        std_error: fit.treatment_std_error(),
        method: EffectMethod::Coefficient,
        link: Some(Link::Identity),
    })
}

/// IPTW risk difference with normalized (Hajek) weights: each arm's
/// weighted mean outcome under weights 1/e(x) (arm 1) or 1/(1-e(x))
/// (arm 0), where e is the saturated propensity model. The standard error
/// is the weighted-difference variance with normalized weights.
pub fn iptw_risk_difference(table: &CellTable) -> Result<MarginalEffect, EffectsError> {
    let propensity = PropensityModel::fit(table)?;

    let mut weighted_events = [0.0_f64; 2];
    let mut weighted_trials = [0.0_f64; 2];
    for cell in table.cells() {
        let e = propensity.probability(cell.x()).expect("level fitted");
        let w = if cell.z() == 1 {
            1.0 / e
        } else {
            1.0 / (1.0 - e)
        };
        weighted_events[cell.z() as usize] += w * cell.events() as f64;
        weighted_trials[cell.z() as usize] += w * cell.trials() as f64;
    }
    let mean1 = weighted_events[1] / weighted_trials[1];
    let mean0 = weighted_events[0] / weighted_trials[0];

    let mut variance = 0.0;
    for (z, mean) in [(1u8, mean1), (0u8, mean0)] {
        let mut numerator = 0.0;
        for cell in table.cells().iter().filter(|c| c.z() == z) {
            let e = propensity.probability(cell.x()).expect("level fitted");
            let w = if z == 1 { 1.0 / e } else { 1.0 / (1.0 - e) };
            let events = cell.events() as f64;
            let non_events = (cell.trials() - cell.events()) as f64;
            numerator += w * w * (events * (1.0 - mean) * (1.0 - mean) + non_events * mean * mean);
        }
        variance += numerator / (weighted_trials[z as usize] * weighted_trials[z as usize]);
    }

    Ok(MarginalEffect {
        estimate: mean1 - mean0,
        std_error: variance.sqrt(),
        method: EffectMethod::Iptw,
        link: None,
    })
}
