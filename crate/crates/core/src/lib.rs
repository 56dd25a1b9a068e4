//! Optimal verification of maximally entangled qudit states with mutually
//! unbiased bases.
//!
//! The crate covers the whole pipeline: building the conjugate-basis MUB
//! strategy `Ω`, simulating a noisy source copy by copy, turning pass
//! counts into Chernoff-bound confidences and infidelity bounds, and
//! fitting the `ε ∝ N^b` scaling of those bounds.

pub mod device;
pub mod experiment;
pub mod linalg;
pub mod mub;
pub mod sampler;
pub mod stats;
pub mod strategy;

pub use num_complex::Complex64 as C64;
