use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Scalar activation functions.
///
/// `Relu` is the usual max(z, 0). `ReluReflected` is max(-z, 0); its
/// shallow NTK on [-1, 1] has exactly the sine basis of [`crate::spectral1d`]
/// as eigenfunctions, so it is the shallow default. Both use a zero
/// derivative at the kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    ReluReflected,
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::ReluReflected => (-z).max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::ReluReflected => {
                if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }

    pub fn is_piecewise_linear(self) -> bool {
        matches!(self, Activation::Relu | Activation::ReluReflected)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::ReluReflected => "relu_reflected",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    /// True when σ(-z) = -σ(z), which makes a bias-free deep network odd.
    pub fn is_odd(self) -> bool {
        matches!(self, Activation::Tanh)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "relu" => Ok(Activation::Relu),
            "relu_reflected" => Ok(Activation::ReluReflected),
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::arg(format!("unknown activation '{other}'"))),
        }
    }
}
