//! A parameterized stand-in for the entangled-pair source.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{ComplexMatrix, ComplexVector, LinalgError};
use crate::strategy::VerificationStrategy;

/// White-noise visibility that puts the d = 3 pass probability at 0.9568.
pub const DEFAULT_VISIBILITY: f64 = 0.9352;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("all state coefficients are zero")]
    ZeroState,
    #[error("expected {expected} coefficients, got {actual}")]
    CoefficientCount { expected: usize, actual: usize },
    #[error("noise parameter {0} must lie in [0, 1]")]
    NoiseParameter(f64),
    #[error("unknown noise model `{0}`")]
    UnknownNoise(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Noise applied to the pure source state `|ψ_C>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseChannel {
    None,
    /// `v |ψ><ψ| + (1 - v) I / d²`.
    White { visibility: f64 },
    /// Off-diagonal entries in the product basis scaled by `1 - p`.
    Dephase { p: f64 },
}

impl NoiseChannel {
    fn parameter(&self) -> Option<f64> {
        match *self {
            NoiseChannel::None => None,
            NoiseChannel::White { visibility } => Some(visibility),
            NoiseChannel::Dephase { p } => Some(p),
        }
    }

    fn validate(&self) -> Result<(), DeviceError> {
        match self.parameter() {
            Some(x) if !(0.0..=1.0).contains(&x) => Err(DeviceError::NoiseParameter(x)),
            _ => Ok(()),
        }
    }

    /// Builds a channel from a kind name and parameter, as used in config files.
    pub fn from_kind(kind: &str, parameter: f64) -> Result<Self, DeviceError> {
        let channel = match kind {
            "none" => NoiseChannel::None,
            "white" => NoiseChannel::White {
                visibility: parameter,
            },
            "dephase" => NoiseChannel::Dephase { p: parameter },
            other => return Err(DeviceError::UnknownNoise(other.to_string())),
        };
        channel.validate()?;
        Ok(channel)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NoiseChannel::None => "none",
            NoiseChannel::White { .. } => "white",
            NoiseChannel::Dephase { .. } => "dephase",
        }
    }

    fn apply(&self, pure: &ComplexMatrix) -> ComplexMatrix {
        let n = pure.dim();
        match *self {
            NoiseChannel::None => pure.clone(),
            NoiseChannel::White { visibility } => pure
                .scale_real(visibility)
                .add(&ComplexMatrix::identity(n).scale_real((1.0 - visibility) / n as f64))
                .expect("same dimension"),
            NoiseChannel::Dephase { p } => {
                let mut out = pure.clone();
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            out[(i, j)] *= 1.0 - p;
                        }
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for NoiseChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter() {
            Some(x) => write!(f, "{}:{}", self.kind(), x),
            None => f.write_str(self.kind()),
        }
    }
}

impl FromStr for NoiseChannel {
    type Err = DeviceError;

    /// Parses `none`, `white:<v>` or `dephase:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once(':') {
            None if s == "none" => Ok(NoiseChannel::None),
            None => Err(DeviceError::UnknownNoise(s.to_string())),
            Some((kind, value)) => {
                let x: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| DeviceError::UnknownNoise(s.to_string()))?;
                Self::from_kind(kind.trim(), x)
            }
        }
    }
}

/// Source emitting i.i.d. copies of `rho`, built from `Σ_k C_k |kk>` and a noise channel.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    d: usize,
    coefficients: Vec<C64>,
    noise: NoiseChannel,
    rho: ComplexMatrix,
}

impl DeviceModel {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Normalized coefficients `C_k`.
    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    pub fn noise(&self) -> NoiseChannel {
        self.noise
    }

    /// Density matrix of every emitted copy.
    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    /// The noiseless state `Σ_k C_k |kk>`.
    pub fn pure_state(&self) -> ComplexVector {
        schmidt_state(self.d, &self.coefficients)
    }
}

fn schmidt_state(d: usize, coefficients: &[C64]) -> ComplexVector {
    let mut entries = vec![C64::new(0.0, 0.0); d * d];
    for (k, &c) in coefficients.iter().enumerate() {
        entries[k * d + k] = c;
    }
    ComplexVector::new(entries)
}

/// Balanced coefficients `1/√d`.
pub fn balanced_coefficients(d: usize) -> Vec<C64> {
    vec![C64::new(1.0 / (d as f64).sqrt(), 0.0); d]
}

pub fn build_device(d: usize, coefficients: &[C64], noise: NoiseChannel) -> Result<DeviceModel, DeviceError> {
    if coefficients.len() != d {
        return Err(DeviceError::CoefficientCount {
            expected: d,
            actual: coefficients.len(),
        });
    }
    noise.validate()?;
    let normalized = ComplexVector::normalized(coefficients.to_vec()).map_err(|e| match e {
        LinalgError::ZeroNorm => DeviceError::ZeroState,
        other => DeviceError::Linalg(other),
    })?;
    let coefficients = normalized.into_entries();
    let pure = schmidt_state(d, &coefficients).outer();
    Ok(DeviceModel {
        d,
        rho: noise.apply(&pure),
        coefficients,
        noise,
    })
}

/// `Tr(Ω ρ)`, clamped to `[0, 1]`.
pub fn pass_probability(device: &DeviceModel, strategy: &VerificationStrategy) -> Result<f64, DeviceError> {
    let t = strategy.omega().trace_product(device.rho())?;
    Ok(t.re.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fidelity_pure;
    use crate::mub::build_mub;
    use crate::strategy::build_strategy;

    fn qutrit() -> VerificationStrategy {
        build_strategy(build_mub(3).unwrap()).unwrap()
    }

    #[test]
    fn ideal_device_is_the_target() {
        let s = qutrit();
        let dev = build_device(3, &balanced_coefficients(3), NoiseChannel::None).unwrap();
        assert!(dev.rho().max_abs_diff(&s.target().outer()) < 1e-15);
        assert!((fidelity_pure(dev.rho(), s.target()).unwrap() - 1.0).abs() < 1e-12);
        assert!((pass_probability(&dev, &s).unwrap() - 1.0).abs() < 1e-12);
        assert!(dev.rho().is_density_matrix());
    }

    #[test]
    fn white_noise_reference_device() {
        let s = qutrit();
        let dev = build_device(
            3,
            &balanced_coefficients(3),
            NoiseChannel::White {
                visibility: DEFAULT_VISIBILITY,
            },
        )
        .unwrap();
        assert!(dev.rho().is_density_matrix());
        assert!((fidelity_pure(dev.rho(), s.target()).unwrap() - 0.9424).abs() < 1e-12);
        assert!((pass_probability(&dev, &s).unwrap() - 0.9568).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_passes_one_third() {
        let s = qutrit();
        let dev = build_device(3, &balanced_coefficients(3), NoiseChannel::White { visibility: 0.0 })
            .unwrap();
        assert!((pass_probability(&dev, &s).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn product_state_passes_half() {
        let s = qutrit();
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let dev = build_device(3, &[one, zero, zero], NoiseChannel::None).unwrap();
        // Brute force: average of Tr(M_i |00><00|) over the four settings.
        let rho = ComplexVector::basis(9, 0).outer();
        let brute: f64 = (0..4)
            .map(|i| s.pass_projector(i).trace_product(&rho).unwrap().re)
            .sum::<f64>()
            / 4.0;
        assert!((brute - 0.5).abs() < 1e-12);
        assert!((pass_probability(&dev, &s).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coefficients_are_normalized() {
        let dev = build_device(3, &[C64::new(2.0, 0.0); 3], NoiseChannel::None).unwrap();
        let norm: f64 = dev.coefficients().iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dephasing_scales_coherences() {
        let dev = build_device(3, &balanced_coefficients(3), NoiseChannel::Dephase { p: 0.25 }).unwrap();
        let rho = dev.rho();
        assert!((rho[(0, 0)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!((rho[(0, 4)].re - 0.75 / 3.0).abs() < 1e-15);
        assert!(rho.is_density_matrix());
    }

    #[test]
    fn errors() {
        let zero = C64::new(0.0, 0.0);
        assert_eq!(
            build_device(3, &[zero; 3], NoiseChannel::None).unwrap_err(),
            DeviceError::ZeroState
        );
        assert!(matches!(
            build_device(3, &[zero; 2], NoiseChannel::None),
            Err(DeviceError::CoefficientCount { .. })
        ));
        assert!(matches!(
            build_device(3, &balanced_coefficients(3), NoiseChannel::White { visibility: 1.5 }),
            Err(DeviceError::NoiseParameter(_))
        ));
        let s = qutrit();
        let qubit = build_device(2, &balanced_coefficients(2), NoiseChannel::None).unwrap();
        assert!(matches!(
            pass_probability(&qubit, &s),
            Err(DeviceError::Linalg(LinalgError::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn noise_parsing() {
        assert_eq!("none".parse::<NoiseChannel>().unwrap(), NoiseChannel::None);
        assert_eq!(
            "white:0.9352".parse::<NoiseChannel>().unwrap(),
            NoiseChannel::White { visibility: 0.9352 }
        );
        assert_eq!(
            "dephase:0.1".parse::<NoiseChannel>().unwrap(),
            NoiseChannel::Dephase { p: 0.1 }
        );
        assert!("pink:0.1".parse::<NoiseChannel>().is_err());
        assert!("white:2".parse::<NoiseChannel>().is_err());
        let n = NoiseChannel::White { visibility: 0.5 };
        assert_eq!(n.to_string().parse::<NoiseChannel>().unwrap(), n);
    }
}
