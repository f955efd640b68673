//! Binomial GLM estimation on aggregated cell data.
//!
//! Fits by iteratively reweighted least squares with expected-information
//! weights and a step-halving line search that keeps every fitted
//! probability inside `[MU_EPS, 1 - MU_EPS]`. Exposes the score vector
//! (canonical and generic-weight routes), the binomial log-likelihood,
//! and the null-preservation check for perfectly balanced tables.

// index loops mirror the matrix algebra on the fixed 3x3 arrays
#![allow(clippy::needless_range_loop)]

use thiserror::Error;

use crate::data::{check_balance, CellTable, IndividualRow};
use crate::link::{Link, MU_EPS};

/// Convergence requires the score infinity-norm at or below this value...
pub const SCORE_TOL: f64 = 1e-8;
/// ...and the coefficient-change infinity-norm at or below this one.
pub const COEF_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 20;
const PIVOT_TOL: f64 = 1e-12;

/// Unadjusted treatment coefficients within this magnitude count as null.
pub const NULL_UNADJUSTED_TOL: f64 = 1e-8;
/// Adjusted treatment coefficients within this magnitude preserve the null.
pub const NULL_ADJUSTED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GlmError {
    #[error("linear predictor is not finite ({0})")]
    NonFiniteEta(f64),
    #[error("coefficient count mismatch: spec needs {expected}, got {got}")]
    CoefficientCountMismatch { expected: usize, got: usize },
    #[error("design matrix is rank deficient (pivot {pivot:e} below tolerance)")]
    RankDeficient { pivot: f64 },
    #[error("null-preservation check not applicable: {reason}")]
    NotApplicable { reason: String },
}

/// Which binomial GLM to fit: a link plus the adjustment set. Unadjusted
/// models use predictors `{1, z}`; adjusted models use `{1, z, x}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub link: Link,
    pub adjusted: bool,
}

impl ModelSpec {
    pub fn coefficient_count(self) -> usize {
        if self.adjusted {
            3
        } else {
            2
        }
    }

    /// Design row for an individual or cell; only the first
    /// `coefficient_count()` entries are meaningful.
    pub(crate) fn design_row(self, x: f64, z: f64) -> [f64; 3] {
        [1.0, z, if self.adjusted { x } else { 0.0 }]
    }
}

/// Score vector (gradient of the log-likelihood) at a coefficient vector.
/// `mu_clamped` flags that some fitted probability fell outside
/// `(MU_EPS, 1 - MU_EPS)` and was clamped before use.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub components: Vec<f64>,
    pub mu_clamped: bool,
}

impl ScoreVector {
    pub fn inf_norm(&self) -> f64 {
        self.components.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Why a fit stopped without meeting both convergence criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// Iteration budget exhausted away from any boundary.
    MaxIterations,
    /// Fitted probabilities stuck at the working boundary; the maximum
    /// likelihood likely lies at infinity (separation) or outside (0, 1).
    Boundary,
}

/// A fitted binomial GLM.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    /// Intercept, treatment, and (when adjusted) covariate coefficient.
    pub coefficients: Vec<f64>,
    /// Inverse expected Fisher information at the final coefficients,
    /// row-major. Meaningful only when `converged`.
    pub covariance: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_score_norm: f64,
    pub log_likelihood: f64,
    pub warning: Option<FitWarning>,
}

impl FitResult {
    pub fn coefficient_count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn covariance_at(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.coefficient_count() + j]
    }

    /// Model-based standard errors from the covariance diagonal.
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficient_count())
            .map(|j| self.covariance_at(j, j).max(0.0).sqrt())
            .collect()
    }

    pub fn treatment_coefficient(&self) -> f64 {
        self.coefficients[1]
    }

    pub fn treatment_std_error(&self) -> f64 {
        self.covariance_at(1, 1).max(0.0).sqrt()
    }
}

/// Validating inverse link: rejects non-finite `eta` and clamps the probability
/// into `[MU_EPS, 1 - MU_EPS]`.
pub fn inverse_link(link: Link, eta: f64) -> Result<f64, GlmError> {
    if !eta.is_finite() {
        return Err(GlmError::NonFiniteEta(eta));
    }
    Ok(link.inverse_clamped(eta))
}

/// One aggregated observation: a design row, event total, and trial total.
#[derive(Debug, Clone, Copy)]
struct Obs {
    row: [f64; 3],
    events: f64,
    trials: f64,
}

fn observations(spec: ModelSpec, table: &CellTable) -> Vec<Obs> {
    table
        .cells()
        .iter()
        .map(|c| Obs {
            row: spec.design_row(c.x() as f64, c.z() as f64),
            events: c.events() as f64,
            trials: c.trials() as f64,
        })
        .collect()
}

fn observations_from_rows(spec: ModelSpec, rows: &[IndividualRow]) -> Vec<Obs> {
    rows.iter()
        .map(|r| Obs {
            row: spec.design_row(r.x as f64, r.z as f64),
            events: r.y as f64,
            trials: 1.0,
        })
        .collect()
}

fn dot(row: &[f64; 3], beta: &[f64]) -> f64 {
    beta.iter().zip(row.iter()).map(|(b, r)| b * r).sum()
}

fn check_coefficients(spec: ModelSpec, beta: &[f64]) -> Result<(), GlmError> {
    let expected = spec.coefficient_count();
    if beta.len() != expected {
        return Err(GlmError::CoefficientCountMismatch {
            expected,
            got: beta.len(),
        });
    }
    if let Some(&bad) = beta.iter().find(|b| !b.is_finite()) {
        return Err(GlmError::NonFiniteEta(bad));
    }
    Ok(())
}

fn score_obs(
    spec: ModelSpec,
    obs: &[Obs],
    beta: &[f64],
    force_general: bool,
) -> Result<ScoreVector, GlmError> {
    check_coefficients(spec, beta)?;
    let p = spec.coefficient_count();
    let mut components = vec![0.0; p];
    let mut mu_clamped = false;
    for o in obs {
        let eta = dot(&o.row, beta);
        if !eta.is_finite() {
            return Err(GlmError::NonFiniteEta(eta));
        }
        let raw = spec.link.inverse_raw(eta);
        if !(raw > MU_EPS && raw < 1.0 - MU_EPS) {
            mu_clamped = true;
        }
        let mu = raw.clamp(MU_EPS, 1.0 - MU_EPS);
        let resid = o.events - o.trials * mu;
        // For the canonical link the weight factor h'(eta)/(mu(1-mu)) is
        // identically 1 and the summand reduces to the residual itself.
        let factor = if spec.link.is_canonical() && !force_general {
            1.0
        } else {
            spec.link.mu_eta(eta) / (mu * (1.0 - mu))
        };
        for (c, r) in components.iter_mut().zip(o.row.iter()) {
            *c += r * resid * factor;
        }
    }
    Ok(ScoreVector {
        components,
        mu_clamped,
    })
}

/// Score vector at `coefficients`, using the canonical simplification for
/// the logit link and the generic weight factor otherwise.
pub fn score(
    spec: ModelSpec,
    table: &CellTable,
    coefficients: &[f64],
) -> Result<ScoreVector, GlmError> {
    score_obs(spec, &observations(spec, table), coefficients, false)
}

/// Score vector computed through the generic non-canonical weight factor
/// for every link, including logit. For the logit link this must agree
/// with [`score`] to machine precision.
pub fn score_general(
    spec: ModelSpec,
    table: &CellTable,
    coefficients: &[f64],
) -> Result<ScoreVector, GlmError> {
    score_obs(spec, &observations(spec, table), coefficients, true)
}

/// Binomial log-likelihood at `coefficients`, omitting the binomial
/// coefficient constant. Returns `-inf` when some fitted probability sits
/// at or beyond a boundary that the observed counts contradict.
pub fn log_likelihood(
    spec: ModelSpec,
    table: &CellTable,
    coefficients: &[f64],
) -> Result<f64, GlmError> {
    check_coefficients(spec, coefficients)?;
    let mut total = 0.0;
    for o in &observations(spec, table) {
        let eta = dot(&o.row, coefficients);
        if !eta.is_finite() {
            return Err(GlmError::NonFiniteEta(eta));
        }
        let mu = spec.link.inverse_raw(eta);
        if !(0.0..=1.0).contains(&mu) {
            return Ok(f64::NEG_INFINITY);
        }
        if mu == 0.0 {
            if o.events > 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            continue; // all-failure cell at mu = 0 contributes nothing
        }
        if mu == 1.0 {
            if o.events < o.trials {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        total += o.events * mu.ln() + (o.trials - o.events) * (1.0 - mu).ln();
    }
    Ok(total)
}

fn log_likelihood_at_mu(obs: &[Obs], mu: &[f64]) -> f64 {
    obs.iter()
        .zip(mu)
        .map(|(o, &m)| o.events * m.ln() + (o.trials - o.events) * (1.0 - m).ln())
        .sum()
}

/// Gauss-Jordan inverse of a symmetric positive-definite matrix of order
/// `p <= 3`, with partial pivoting. The pivot tolerance is relative to the
/// largest absolute entry.
fn invert_spd(a: &[[f64; 3]; 3], p: usize) -> Result<[[f64; 3]; 3], GlmError> {
    let scale = a
        .iter()
        .take(p)
        .flat_map(|r| r.iter().take(p))
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(GlmError::RankDeficient { pivot: 0.0 });
    }
    let tol = PIVOT_TOL * scale;

    // augmented [A | I]
    let mut m = [[0.0; 6]; 3];
    for i in 0..p {
        for j in 0..p {
            m[i][j] = a[i][j];
        }
        m[i][p + i] = 1.0;
    }
    for col in 0..p {
        let pivot_row = (col..p)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        let pivot = m[pivot_row][col];
        if pivot.abs() <= tol {
            return Err(GlmError::RankDeficient { pivot });
        }
        m.swap(col, pivot_row);
        for j in 0..2 * p {
            m[col][j] /= pivot;
        }
        for i in 0..p {
            if i != col {
                let f = m[i][col];
                if f != 0.0 {
                    for j in 0..2 * p {
                        m[i][j] -= f * m[col][j];
                    }
                }
            }
        }
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..p {
        for j in 0..p {
            inv[i][j] = m[i][p + j];
        }
    }
    Ok(inv)
}

/// Expected Fisher information at (`eta`, `mu`).
fn information(spec: ModelSpec, obs: &[Obs], eta: &[f64], mu: &[f64]) -> [[f64; 3]; 3] {
    let p = spec.coefficient_count();
    let mut info = [[0.0; 3]; 3];
    for ((o, &e), &m) in obs.iter().zip(eta).zip(mu) {
        let d = spec.link.mu_eta(e);
        let w = o.trials * d * d / (m * (1.0 - m));
        if !(w > 0.0 && w.is_finite()) {
            continue;
        }
        for i in 0..p {
            for j in 0..p {
                info[i][j] += w * o.row[i] * o.row[j];
            }
        }
    }
    info
}

/// One weighted-least-squares step: solves the normal equations for the
/// working response at (`eta`, `mu`).
fn wls_step(spec: ModelSpec, obs: &[Obs], eta: &[f64], mu: &[f64]) -> Result<Vec<f64>, GlmError> {
    let p = spec.coefficient_count();
    let mut xtwx = [[0.0; 3]; 3];
    let mut xtwz = [0.0; 3];
    for ((o, &e), &m) in obs.iter().zip(eta).zip(mu) {
        let d = spec.link.mu_eta(e);
        let w = o.trials * d * d / (m * (1.0 - m));
        if !(w > 0.0 && w.is_finite()) {
            continue;
        }
        let z = e + (o.events / o.trials - m) / d;
        if !z.is_finite() {
            continue;
        }
        for i in 0..p {
            for j in 0..p {
                xtwx[i][j] += w * o.row[i] * o.row[j];
            }
            xtwz[i] += w * o.row[i] * z;
        }
    }
    let inv = invert_spd(&xtwx, p)?;
    Ok((0..p)
        .map(|i| (0..p).map(|j| inv[i][j] * xtwz[j]).sum())
        .collect())
}

fn fit_obs(spec: ModelSpec, obs: &[Obs]) -> Result<FitResult, GlmError> {
    let p = spec.coefficient_count();
    let link = spec.link;

    let raw_mu = |beta: &[f64], o: &Obs| link.inverse_raw(dot(&o.row, beta));
    let feasible = |beta: &[f64]| {
        obs.iter().all(|o| {
            let m = raw_mu(beta, o);
            m.is_finite() && (MU_EPS..=1.0 - MU_EPS).contains(&m)
        })
    };
    let ll_at = |beta: &[f64]| {
        let mu: Vec<f64> = obs
            .iter()
            .map(|o| link.inverse_clamped(dot(&o.row, beta)))
            .collect();
        log_likelihood_at_mu(obs, &mu)
    };

    // Start from per-cell smoothed proportions mapped through the link,
    // then one WLS step. Fall back to a flat start at the pooled
    // proportion if that step leaves the feasible region.
    let mu0: Vec<f64> = obs
        .iter()
        .map(|o| (o.events + 0.5) / (o.trials + 1.0))
        .collect();
    let eta0: Vec<f64> = mu0.iter().map(|&m| link.forward(m)).collect();
    let mut beta = wls_step(spec, obs, &eta0, &mu0)?;
    if !feasible(&beta) {
        let events: f64 = obs.iter().map(|o| o.events).sum();
        let trials: f64 = obs.iter().map(|o| o.trials).sum();
        beta = vec![0.0; p];
        beta[0] = link.forward((events + 0.5) / (trials + 1.0));
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut final_score_norm = f64::INFINITY;
    let mut stuck_at_boundary = false;
    let mut current_ll = ll_at(&beta);
    'irls: for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let eta: Vec<f64> = obs.iter().map(|o| dot(&o.row, &beta)).collect();
        let mu: Vec<f64> = eta.iter().map(|&e| link.inverse_clamped(e)).collect();
        let proposal = wls_step(spec, obs, &eta, &mu)?;

        let mut step: Vec<f64> = proposal.iter().zip(&beta).map(|(p, b)| p - b).collect();
        let mut candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
        let mut halvings = 0;
        let halve = |step: &mut Vec<f64>, candidate: &mut Vec<f64>| {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
            *candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        };
        while !feasible(&candidate) {
            if halvings == MAX_HALVINGS {
                // even a vanishing step leaves the feasible region: the
                // maximum sits on or beyond the probability boundary;
                // keep the last feasible coefficients
                stuck_at_boundary = true;
                break 'irls;
            }
            halve(&mut step, &mut candidate);
            halvings += 1;
        }
        // keep the likelihood non-decreasing; the feasible region is
        // convex in the coefficients, so halving stays feasible
        let slack = 1e-10 * (1.0 + current_ll.abs());
        let mut candidate_ll = ll_at(&candidate);
        while candidate_ll < current_ll - slack && halvings < MAX_HALVINGS {
            halve(&mut step, &mut candidate);
            halvings += 1;
            candidate_ll = ll_at(&candidate);
        }

        let delta = candidate
            .iter()
            .zip(&beta)
            .fold(0.0_f64, |m, (c, b)| m.max((c - b).abs()));
        beta = candidate;
        current_ll = candidate_ll;
        final_score_norm = score_obs(spec, obs, &beta, false)?.inf_norm();
        if delta <= COEF_TOL && final_score_norm <= SCORE_TOL {
            converged = true;
            break;
        }
    }

    let eta: Vec<f64> = obs.iter().map(|o| dot(&o.row, &beta)).collect();
    let mu: Vec<f64> = eta.iter().map(|&e| link.inverse_clamped(e)).collect();
    if final_score_norm.is_infinite() {
        final_score_norm = score_obs(spec, obs, &beta, false)?.inf_norm();
    }
    let warning = if converged {
        None
    } else if stuck_at_boundary
        || mu
            .iter()
            .any(|&m| m <= MU_EPS * 100.0 || m >= 1.0 - MU_EPS * 100.0)
    {
        Some(FitWarning::Boundary)
    } else {
        Some(FitWarning::MaxIterations)
    };

    let covariance = match invert_spd(&information(spec, obs, &eta, &mu), p) {
        Ok(inv) => {
            let mut flat = vec![0.0; p * p];
            for i in 0..p {
                for j in 0..p {
                    flat[i * p + j] = inv[i][j];
                }
            }
            flat
        }
        Err(e) if converged => return Err(e),
        Err(_) => vec![0.0; p * p],
    };

    Ok(FitResult {
        spec,
        coefficients: beta,
        covariance,
        converged,
        iterations,
        final_score_norm,
        log_likelihood: log_likelihood_at_mu(obs, &mu),
        warning,
    })
}

/// Fits the model on aggregated cells by IRLS.
pub fn fit_glm(spec: ModelSpec, table: &CellTable) -> Result<FitResult, GlmError> {
    fit_obs(spec, &observations(spec, table))
}

/// Fits the model on individual-level rows. Exists to cross-check that the
/// aggregated and expanded representations give the same estimates.
pub fn fit_glm_rows(spec: ModelSpec, rows: &[IndividualRow]) -> Result<FitResult, GlmError> {
    fit_obs(spec, &observations_from_rows(spec, rows))
}

/// Checks the null-preservation property on a perfectly balanced table
/// whose unadjusted fit is null: returns whether the adjusted treatment
/// coefficient is also null (within [`NULL_ADJUSTED_TOL`]).
///
/// Tables that are unbalanced, or whose unadjusted treatment effect is not
/// null, make the check inapplicable; that is reported as
/// [`GlmError::NotApplicable`], distinct from `Ok(false)`.
pub fn null_preservation_check(link: Link, table: &CellTable) -> Result<bool, GlmError> {
    if !check_balance(table).balanced {
        return Err(GlmError::NotApplicable {
            reason: "covariate is not perfectly balanced across arms".into(),
        });
    }
    let unadjusted = fit_glm(
        ModelSpec {
            link,
            adjusted: false,
        },
        table,
    )?;
    if !unadjusted.converged {
        return Err(GlmError::NotApplicable {
            reason: "unadjusted fit did not converge".into(),
        });
    }
    let beta_star = unadjusted.treatment_coefficient();
    if beta_star.abs() > NULL_UNADJUSTED_TOL {
        return Err(GlmError::NotApplicable {
            reason: format!("unadjusted treatment coefficient {beta_star:e} is not null"),
        });
    }
    let adjusted = fit_glm(
        ModelSpec {
            link,
            adjusted: true,
        },
        table,
    )?;
    if !adjusted.converged {
        return Err(GlmError::NotApplicable {
            reason: "adjusted fit did not converge".into(),
        });
    }
    Ok(adjusted.treatment_coefficient().abs() <= NULL_ADJUSTED_TOL)
}
