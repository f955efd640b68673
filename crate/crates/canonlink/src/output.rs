//! Machine-readable output documents.
//!
//! All floating-point numbers are rendered with 17 significant digits,
//! which round-trips every f64 exactly: parsing an emitted document and
//! re-emitting it reproduces the bytes.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::effects::MarginalEffect;
use crate::glm::FitResult;

/// Formats with 17 significant digits (one leading digit plus 16 after the
/// decimal point), e.g. `-2.8341056538714573e-2`. Valid as a JSON number.
pub fn fmt17(v: f64) -> String {
    debug_assert!(v.is_finite(), "non-finite value in output: {v}");
    format!("{v:.16e}")
}

/// The JSON document emitted by the fit, margins and iptw commands.
/// Fit-level fields are absent for IPTW, which has no outcome model;
/// `effects` is absent for plain fits.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultDocument {
    #[serde(default)]
    pub link: Option<String>,
    #[serde(default)]
    pub adjusted: Option<bool>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub standard_errors: Option<Vec<f64>>,
    /// Row-major covariance matrix.
    #[serde(default)]
    pub covariance: Option<Vec<f64>>,
    #[serde(default)]
    pub effects: Option<Vec<EffectDocument>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EffectDocument {
    pub method: String,
    /// `null` for IPTW.
    pub link: Option<String>,
    pub estimate: f64,
    pub std_error: f64,
}

impl From<&MarginalEffect> for EffectDocument {
    fn from(effect: &MarginalEffect) -> Self {
        EffectDocument {
            method: effect.method.name().to_string(),
            link: effect.link.map(|l| l.name().to_string()),
            estimate: effect.estimate,
            std_error: effect.std_error,
        }
    }
}

impl ResultDocument {
    pub fn from_fit(fit: &FitResult) -> Self {
        ResultDocument {
            link: Some(fit.spec.link.name().to_string()),
            adjusted: Some(fit.spec.adjusted),
            converged: Some(fit.converged),
            iterations: Some(fit.iterations as u64),
            coefficients: Some(fit.coefficients.clone()),
            standard_errors: Some(fit.standard_errors()),
            covariance: Some(fit.covariance.clone()),
            effects: None,
        }
    }

    pub fn from_fit_with_effect(fit: &FitResult, effect: &MarginalEffect) -> Self {
        let mut doc = Self::from_fit(fit);
        doc.effects = Some(vec![EffectDocument::from(effect)]);
        doc
    }

    pub fn from_effect(effect: &MarginalEffect) -> Self {
        ResultDocument {
            link: None,
            adjusted: None,
            converged: None,
            iterations: None,
            coefficients: None,
            standard_errors: None,
            covariance: None,
            effects: Some(vec![EffectDocument::from(effect)]),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Serializes with a fixed key order and [`fmt17`] numbers, so equal
    /// documents produce identical bytes.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{");
        let mut first = true;
        let mut field = |out: &mut String, name: &str, value: String| {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "\"{name}\":{value}");
        };

        if let Some(link) = &self.link {
            field(&mut out, "link", format!("\"{link}\""));
        }
        if let Some(adjusted) = self.adjusted {
            field(&mut out, "adjusted", adjusted.to_string());
        }
        if let Some(converged) = self.converged {
            field(&mut out, "converged", converged.to_string());
        }
        if let Some(iterations) = self.iterations {
            field(&mut out, "iterations", iterations.to_string());
        }
        for (name, values) in [
            ("coefficients", &self.coefficients),
            ("standard_errors", &self.standard_errors),
            ("covariance", &self.covariance),
        ] {
            if let Some(values) = values {
                field(&mut out, name, float_array(values));
            }
        }
        if let Some(effects) = &self.effects {
            let items: Vec<String> = effects
                .iter()
                .map(|e| {
                    let link = match &e.link {
                        Some(l) => format!("\"{l}\""),
                        None => "null".to_string(),
                    };
                    format!(
                        "{{\"method\":\"{}\",\"link\":{},\"estimate\":{},\"std_error\":{}}}",
                        e.method,
                        link,
                        fmt17(e.estimate),
                        fmt17(e.std_error)
                    )
                })
                .collect();
            field(&mut out, "effects", format!("[{}]", items.join(",")));
        }
        out.push('}');
        out
    }
}

fn float_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt17(v)).collect();
    format!("[{}]", items.join(","))
}
