use std::fmt;
use std::str::FromStr;

use crate::error::EdlaError;

/// Pointwise activation with its derivative.
///
/// All three kinds are non-decreasing with non-negative derivative, which is
/// what keeps the EDLA sign constraints intact under training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Sigmoid,
    Relu,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(a),
            ActivationKind::Relu => a.max(0.0),
            ActivationKind::Identity => a,
        }
    }

    /// Derivative `g'(a)`. ReLU uses `g'(0) = 0`.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s)
            }
            ActivationKind::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ActivationKind::Sigmoid => 0,
            ActivationKind::Relu => 1,
            ActivationKind::Identity => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ActivationKind::Sigmoid),
            1 => Some(ActivationKind::Relu),
            2 => Some(ActivationKind::Identity),
            _ => None,
        }
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Relu => "relu",
            ActivationKind::Identity => "identity",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = EdlaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "relu" => Ok(ActivationKind::Relu),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(EdlaError::InvalidArgument(format!(
                "unknown activation '{other}'"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        for i in -200..=200 {
            let a = i as f64 * 0.25;
            let s = ActivationKind::Sigmoid;
            let (g, d) = (s.apply(a), s.derivative(a));
            assert!((0.0..=1.0).contains(&g));
            assert!((0.0..=0.25).contains(&d));
            let r = ActivationKind::Relu;
            assert!(r.apply(a) >= 0.0);
            assert!(r.derivative(a) == 0.0 || r.derivative(a) == 1.0);
            assert_eq!(ActivationKind::Identity.derivative(a), 1.0);
        }
        assert_eq!(ActivationKind::Sigmoid.apply(0.0), 0.5);
        assert_eq!(ActivationKind::Sigmoid.derivative(0.0), 0.25);
    }

    #[test]
    fn sigmoid_derivative_matches_finite_difference() {
        let s = ActivationKind::Sigmoid;
        for &a in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (s.apply(a + h) - s.apply(a - h)) / (2.0 * h);
            assert!((fd - s.derivative(a)).abs() < 1e-9);
        }
    }

    #[test]
    fn parse_round_trip() {
        for k in [ActivationKind::Sigmoid, ActivationKind::Relu, ActivationKind::Identity] {
            assert_eq!(k.to_string().parse::<ActivationKind>().unwrap(), k);
            assert_eq!(ActivationKind::from_code(k.code()), Some(k));
        }
        assert!("tanh".parse::<ActivationKind>().is_err());
    }
}
