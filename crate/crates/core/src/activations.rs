//! Hidden-unit activation functions.
//!
//! TRec and TLin multiply a boolean selection by the linear response, so the
//! derivative with respect to the preactivation is just the selection. All
//! threshold comparisons are strict: at `a == θ` both value and derivative are 0.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// Truncated rectified: `(a > θ)·a`.
    TRec {
        theta: f64,
    },
    /// Thresholded linear: `(a² > θ²)·a`.
    TLin {
        theta: f64,
    },
    Relu,
    Sigmoid,
    /// `max(0, a)` on a unit that never carries a bias.
    ZeroBiasRelu,
}

impl Activation {
    pub fn trec(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Activation::TRec { theta })
    }

    pub fn tlin(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Activation::TLin { theta })
    }

    /// Parse a CLI / config name. `theta` is required to be absent for
    /// activations that have no threshold.
    pub fn from_name(name: &str, theta: Option<f64>) -> Result<Self> {
        match (name, theta) {
            ("trec", t) => Self::trec(t.unwrap_or(1.0)),
            ("tlin", t) => Self::tlin(t.unwrap_or(1.0)),
            ("relu" | "sigmoid" | "zrelu", Some(_)) => Err(Error::invalid(format!(
                "activation {name} takes no threshold"
            ))),
            ("relu", None) => Ok(Activation::Relu),
            ("sigmoid", None) => Ok(Activation::Sigmoid),
            ("zrelu", None) => Ok(Activation::ZeroBiasRelu),
            _ => Err(Error::invalid(format!("unknown activation {name:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::TRec { .. } => "trec",
            Activation::TLin { .. } => "tlin",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::ZeroBiasRelu => "zrelu",
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            Activation::TRec { theta } | Activation::TLin { theta } => Some(theta),
            _ => None,
        }
    }

    /// Units using these activations have no hidden or visible biases.
    pub fn is_zero_bias(&self) -> bool {
        matches!(
            self,
            Activation::TRec { .. } | Activation::TLin { .. } | Activation::ZeroBiasRelu
        )
    }

    #[inline]
    pub fn forward(&self, a: f64) -> f64 {
        match *self {
            Activation::TRec { theta } => {
                if a > theta {
                    a
                } else {
                    0.0
                }
            }
            Activation::TLin { theta } => {
                if a * a > theta * theta {
                    a
                } else {
                    0.0
                }
            }
            Activation::Relu | Activation::ZeroBiasRelu => a.max(0.0),
            Activation::Sigmoid => sigmoid(a),
        }
    }

    #[inline]
    pub fn backward(&self, a: f64) -> f64 {
        match *self {
            Activation::TRec { theta } => indicator(a > theta),
            Activation::TLin { theta } => indicator(a * a > theta * theta),
            Activation::Relu | Activation::ZeroBiasRelu => indicator(a > 0.0),
            Activation::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
        }
    }

    /// Second derivative; zero almost everywhere for the piecewise-linear kinds.
    #[inline]
    pub(crate) fn second(&self, a: f64) -> f64 {
        match *self {
            Activation::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            _ => 0.0,
        }
    }

    /// Whether a unit with this (bias-included) preactivation belongs to the
    /// active set.
    #[inline]
    pub fn is_active(&self, a: f64) -> bool {
        match self {
            Activation::TRec { .. } | Activation::TLin { .. } => self.forward(a) != 0.0,
            _ => a > 0.0,
        }
    }

    /// Binary tag used by the `ZAE1` model format.
    pub fn tag(&self) -> u8 {
        match self {
            Activation::TRec { .. } => 0,
            Activation::TLin { .. } => 1,
            Activation::Relu => 2,
            Activation::Sigmoid => 3,
            Activation::ZeroBiasRelu => 4,
        }
    }

    pub fn from_tag(tag: u8, theta: f64) -> Result<Self> {
        match tag {
            0 => Self::trec(theta),
            1 => Self::tlin(theta),
            2 => Ok(Activation::Relu),
            3 => Ok(Activation::Sigmoid),
            4 => Ok(Activation::ZeroBiasRelu),
            t => Err(Error::invalid(format!("unknown activation tag {t}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.theta() {
            Some(t) => write!(f, "{}(theta={t})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s, None)
    }
}

#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "threshold must be positive and finite, got {theta}"
        )))
    }
}
