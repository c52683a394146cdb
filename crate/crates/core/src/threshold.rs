use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("rejector threshold has not been calibrated")]
pub struct Uncalibrated;

/// Rejection threshold: scores strictly above a calibrated value are
/// rejected, a disabled threshold never fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
pub enum Threshold<T> {
    #[default]
    Uncalibrated,
    Disabled,
    Value(T),
}

impl<T: Scalar> Threshold<T> {
    /// `score > threshold`; equality is accepted.
    pub fn exceeded_by(&self, score: T) -> Result<bool, Uncalibrated> {
        match *self {
            Self::Uncalibrated => Err(Uncalibrated),
            Self::Disabled => Ok(false),
            Self::Value(t) => Ok(score > t),
        }
    }

    /// The numeric value, with `+∞` standing in for a disabled threshold.
    pub fn as_value(&self) -> Option<T> {
        match *self {
            Self::Uncalibrated => None,
            Self::Disabled => Some(T::infinity()),
            Self::Value(t) => Some(t),
        }
    }

    pub fn from_value(v: T) -> Self {
        if v == T::infinity() {
            Self::Disabled
        } else {
            Self::Value(v)
        }
    }
}
