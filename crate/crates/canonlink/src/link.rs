//! Binomial link functions: forward map `g`, inverse map `h`, and the
//! derivative `h'` used by the score equations and the IRLS weights.

use std::fmt;
use std::str::FromStr;

use crate::normal::{norm_cdf, norm_pdf, norm_quantile};

/// Fitted probabilities are kept inside `[MU_EPS, 1 - MU_EPS]`.
pub const MU_EPS: f64 = 1e-10;

/// Link function of a binomial GLM. Only `Logit` is canonical for the
/// binomial family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Logit,
    Probit,
    Identity,
    Log,
    Cloglog,
}

impl Link {
    pub const ALL: [Link; 5] = [
        Link::Logit,
        Link::Probit,
        Link::Identity,
        Link::Log,
        Link::Cloglog,
    ];

    /// True when the link is the canonical one for the binomial family.
    pub fn is_canonical(self) -> bool {
        self == Link::Logit
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Cloglog => "cloglog",
        }
    }

    /// Inverse link `h(eta)` without clamping; may leave `(0, 1)` for the
    /// identity and log links.
    pub(crate) fn inverse_raw(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => norm_cdf(eta),
            Link::Identity => eta,
            Link::Log => eta.exp(),
            // 1 - exp(-exp(eta)), written with expm1 for small exp(eta)
            Link::Cloglog => -(-eta.exp()).exp_m1(),
        }
    }

    /// Inverse link clamped into `[MU_EPS, 1 - MU_EPS]`.
    pub(crate) fn inverse_clamped(self, eta: f64) -> f64 {
        self.inverse_raw(eta).clamp(MU_EPS, 1.0 - MU_EPS)
    }

    /// Derivative of the inverse link, `h'(eta)`. Strictly positive.
    pub fn mu_eta(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Link::Probit => norm_pdf(eta),
            Link::Identity => 1.0,
            Link::Log => eta.exp(),
            Link::Cloglog => (eta - eta.exp()).exp(),
        }
    }

    /// Forward link `g(mu)` for `mu` in `(0, 1)`.
    pub fn forward(self, mu: f64) -> f64 {
        match self {
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Probit => norm_quantile(mu),
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Cloglog => (-(-mu).ln_1p()).ln(),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error for unrecognized link names on the CLI and in serialized records.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown link `{0}`: expected logit|probit|identity|log|cloglog")]
pub struct UnknownLink(pub String);

impl FromStr for Link {
    type Err = UnknownLink;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "identity" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            "cloglog" => Ok(Link::Cloglog),
            other => Err(UnknownLink(other.to_string())),
        }
    }
}
