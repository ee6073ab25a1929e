//! Method tags such as `S+QM`, `I+XA+TR` or `I+XA+GKEI`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperprior::Hyperprior;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovarianceKind {
    Stationary,
    Cylindrical,
    Informative,
}

/// Where the anchor (and the belief location of weighted acquisitions) sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnchorPolicy {
    /// Fixed at the origin.
    Origin,
    /// The incumbent solution.
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcquisitionTag {
    Ei,
    Lcb,
    Gwei,
    Gkei,
}

/// Hyperprior over the informative ratio `r₀`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RatioPrior {
    Uniform,
    K1,
    K2,
    K3,
    Dirac,
}

impl RatioPrior {
    pub fn hyperprior(self) -> Hyperprior {
        match self {
            RatioPrior::Uniform => Hyperprior::Uniform { lo: 0.0, hi: 1.0 },
            RatioPrior::K1 => Hyperprior::Kumaraswamy { a: 1.467, b: 10.0 },
            RatioPrior::K2 => Hyperprior::Kumaraswamy { a: 2.253, b: 100.0 },
            RatioPrior::K3 => Hyperprior::Kumaraswamy { a: 3.164, b: 1000.0 },
            RatioPrior::Dirac => Hyperprior::Dirac(0.1),
        }
    }

    fn token(self) -> &'static str {
        match self {
            RatioPrior::Uniform => "U",
            RatioPrior::K1 => "K1",
            RatioPrior::K2 => "K2",
            RatioPrior::K3 => "K3",
            RatioPrior::Dirac => "D",
        }
    }
}

impl Default for RatioPrior {
    fn default() -> Self {
        RatioPrior::K3
    }
}

/// A resolved method: one component per axis of the method matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Method {
    pub covariance: CovarianceKind,
    /// Anchor of the informative covariance, or belief location of GWEI/GKEI.
    pub anchor: AnchorPolicy,
    /// Whether an anchor token was written explicitly.
    anchor_explicit: bool,
    pub quadratic_mean: bool,
    pub trust_region: bool,
    /// Fixed shaping distances and ratio.
    pub focused: bool,
    pub saas: bool,
    pub acquisition: AcquisitionTag,
    /// Ratio prior given in the tag, if any.
    pub ratio_prior: Option<RatioPrior>,
}

impl Method {
    /// Ratio prior from the tag, falling back to `default`.
    pub fn ratio_prior_or(&self, default: RatioPrior) -> RatioPrior {
        if self.focused {
            RatioPrior::Dirac
        } else {
            self.ratio_prior.unwrap_or(default)
        }
    }

    fn weighted(&self) -> bool {
        matches!(self.acquisition, AcquisitionTag::Gwei | AcquisitionTag::Gkei)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(tag: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("method `{tag}`: {msg}"));
        let mut tokens = tag.split('+').map(str::trim);
        let covariance = match tokens.next() {
            Some("S") => CovarianceKind::Stationary,
            Some("C") => CovarianceKind::Cylindrical,
            Some("I") => CovarianceKind::Informative,
            _ => return Err(bad("must start with S, C or I")),
        };
        let mut m = Method {
            covariance,
            anchor: AnchorPolicy::Origin,
            anchor_explicit: false,
            quadratic_mean: false,
            trust_region: false,
            focused: false,
            saas: false,
            acquisition: AcquisitionTag::Ei,
            ratio_prior: None,
        };
        let mut seen: Vec<&str> = Vec::new();
        for tok in tokens {
            if seen.contains(&tok) {
                return Err(bad(&format!("repeated component `{tok}`")));
            }
            seen.push(tok);
            match tok {
                "X0" | "XA" => {
                    if m.anchor_explicit {
                        return Err(bad("more than one anchor policy"));
                    }
                    m.anchor_explicit = true;
                    m.anchor = if tok == "X0" {
                        AnchorPolicy::Origin
                    } else {
                        AnchorPolicy::Adaptive
                    };
                }
                "TR" => m.trust_region = true,
                "QM" => m.quadratic_mean = true,
                "F" => m.focused = true,
                "SAAS" => m.saas = true,
                "GKEI" | "GWEI" | "LCB" => {
                    if m.acquisition != AcquisitionTag::Ei {
                        return Err(bad("more than one acquisition function"));
                    }
                    m.acquisition = match tok {
                        "GKEI" => AcquisitionTag::Gkei,
                        "GWEI" => AcquisitionTag::Gwei,
                        _ => AcquisitionTag::Lcb,
                    };
                }
                "U" | "K1" | "K2" | "K3" | "D" => {
                    if m.ratio_prior.is_some() {
                        return Err(bad("more than one ratio prior"));
                    }
                    m.ratio_prior = Some(match tok {
                        "U" => RatioPrior::Uniform,
                        "K1" => RatioPrior::K1,
                        "K2" => RatioPrior::K2,
                        "K3" => RatioPrior::K3,
                        _ => RatioPrior::Dirac,
                    });
                }
                other => return Err(bad(&format!("unknown component `{other}`"))),
            }
        }
        let informative = covariance == CovarianceKind::Informative;
        if informative && !m.anchor_explicit {
            return Err(bad("informative covariance needs an anchor policy (X0 or XA)"));
        }
        if m.anchor_explicit && !informative && !m.weighted() {
            return Err(bad("anchor policies apply to I or weighted acquisitions"));
        }
        if !informative && (m.focused || m.ratio_prior.is_some()) {
            return Err(bad("F and ratio priors apply to I only"));
        }
        if m.focused && m.ratio_prior.is_some() {
            return Err(bad("F fixes the ratio; no ratio prior allowed"));
        }
        if m.saas && covariance == CovarianceKind::Cylindrical {
            return Err(bad("SAAS needs per-dimension lengthscales"));
        }
        Ok(m)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = vec![match self.covariance {
            CovarianceKind::Stationary => "S",
            CovarianceKind::Cylindrical => "C",
            CovarianceKind::Informative => "I",
        }];
        if self.anchor_explicit {
            parts.push(match self.anchor {
                AnchorPolicy::Origin => "X0",
                AnchorPolicy::Adaptive => "XA",
            });
        }
        if self.focused {
            parts.push("F");
        }
        if self.trust_region {
            parts.push("TR");
        }
        if self.quadratic_mean {
            parts.push("QM");
        }
        if self.saas {
            parts.push("SAAS");
        }
        match self.acquisition {
            AcquisitionTag::Ei => {}
            AcquisitionTag::Lcb => parts.push("LCB"),
            AcquisitionTag::Gwei => parts.push("GWEI"),
            AcquisitionTag::Gkei => parts.push("GKEI"),
        }
        if let Some(r) = self.ratio_prior {
            parts.push(r.token());
        }
        f.write_str(&parts.join("+"))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}
