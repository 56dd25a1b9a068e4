//! The conjugate-basis MUB verification strategy and its sample-complexity constants.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermitian_eigen, tensor, ComplexMatrix, ComplexVector, LinalgError};
use crate::mub::{conjugate_vector, maximally_entangled_state, MubSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("domain error: {0}")]
    Domain(String),
}

/// `Ω = Σ_i p_i M_i` together with the pieces it was built from.
#[derive(Debug, Clone)]
pub struct VerificationStrategy {
    mubs: MubSet,
    pass_projectors: Vec<ComplexMatrix>,
    probabilities: Vec<f64>,
    omega: ComplexMatrix,
    spectrum: Vec<f64>,
    lambda2: f64,
    target: ComplexVector,
}

impl VerificationStrategy {
    pub fn d(&self) -> usize {
        self.mubs.d()
    }

    pub fn mubs(&self) -> &MubSet {
        &self.mubs
    }

    pub fn num_settings(&self) -> usize {
        self.pass_projectors.len()
    }

    /// `M_i`: Alice in basis `i`, Bob in its conjugate, outcomes equal.
    pub fn pass_projector(&self, setting: usize) -> &ComplexMatrix {
        &self.pass_projectors[setting]
    }

    /// `1 - M_i`.
    pub fn fail_projector(&self, setting: usize) -> ComplexMatrix {
        ComplexMatrix::identity(self.omega.dim())
            .sub(&self.pass_projectors[setting])
            .expect("projector has the strategy dimension")
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn omega(&self) -> &ComplexMatrix {
        &self.omega
    }

    /// Eigenvalues of `Ω`, descending.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Coefficient `1 - λ₂` in `Δε = (1 - λ₂) ε`.
    pub fn rejection_coefficient(&self) -> f64 {
        1.0 - self.lambda2
    }

    pub fn target(&self) -> &ComplexVector {
        &self.target
    }

    /// JSON-ready summary with a minimum-copies table over `deltas × epsilons`.
    pub fn export(&self, deltas: &[f64], epsilons: &[f64]) -> Result<StrategyExport, StrategyError> {
        let mut table = Vec::with_capacity(deltas.len() * epsilons.len());
        for &delta in deltas {
            for &epsilon in epsilons {
                table.push(MinCopiesEntry {
                    delta,
                    epsilon,
                    n: min_copies(epsilon, delta, self.lambda2)?,
                });
            }
        }
        Ok(StrategyExport {
            d: self.d(),
            bases: self.mubs.to_export(),
            lambda2: self.lambda2,
            delta_epsilon_coefficient: self.rejection_coefficient(),
            min_copies: table,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinCopiesEntry {
    pub delta: f64,
    pub epsilon: f64,
    pub n: u64,
}

/// Strategy document: basis vectors as `[re, im]` pairs, `bases[i][k][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyExport {
    pub d: usize,
    pub bases: Vec<Vec<Vec<[f64; 2]>>>,
    pub lambda2: f64,
    pub delta_epsilon_coefficient: f64,
    pub min_copies: Vec<MinCopiesEntry>,
}

/// Builds `M_i = Σ_k |φ_{k,i}><φ_{k,i}| ⊗ |φ*_{k,i}><φ*_{k,i}|` for every
/// basis and averages them with uniform weights `1/(d+1)`.
pub fn build_strategy(mubs: MubSet) -> Result<VerificationStrategy, StrategyError> {
    let d = mubs.d();
    let n_settings = mubs.bases().len();
    let weight = 1.0 / n_settings as f64;

    let mut pass_projectors = Vec::with_capacity(n_settings);
    let mut omega = ComplexMatrix::zeros(d * d);
    for basis in mubs.bases() {
        let mut m = ComplexMatrix::zeros(d * d);
        for phi in basis {
            let alice = phi.outer();
            let bob = conjugate_vector(phi).outer();
            m = m.add(&tensor(&alice, &bob))?;
        }
        omega = omega.add(&m.scale_real(weight))?;
        pass_projectors.push(m);
    }

    let eig = hermitian_eigen(&omega)?;
    let lambda2 = eig.eigenvalues.get(1).copied().unwrap_or(0.0);
    Ok(VerificationStrategy {
        target: maximally_entangled_state(d),
        probabilities: vec![weight; n_settings],
        spectrum: eig.eigenvalues,
        mubs,
        pass_projectors,
        omega,
        lambda2,
    })
}

fn check_open_unit(name: &str, x: f64) -> Result<(), StrategyError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(StrategyError::Domain(format!("{name} = {x} must lie in (0, 1)")))
    }
}

/// Single-test rejection probability `Δε = (1 - λ₂) ε`.
pub fn rejection_probability(epsilon: f64, lambda2: f64) -> f64 {
    (1.0 - lambda2) * epsilon
}

/// Largest pass probability of a state with infidelity `epsilon`: `1 - (1 - λ₂) ε`.
pub fn worst_case_pass_probability(epsilon: f64, lambda2: f64) -> f64 {
    1.0 - rejection_probability(epsilon, lambda2)
}

/// `ln(1/δ) / ((1 - λ₂) ε)` before rounding up.
pub fn min_copies_real(epsilon: f64, delta: f64, lambda2: f64) -> Result<f64, StrategyError> {
    check_open_unit("epsilon", epsilon)?;
    check_open_unit("delta", delta)?;
    if !(0.0..1.0).contains(&lambda2) {
        return Err(StrategyError::Domain(format!(
            "lambda2 = {lambda2} must lie in [0, 1)"
        )));
    }
    Ok((1.0 / delta).ln() / rejection_probability(epsilon, lambda2))
}

/// Number of copies needed to reach confidence `1 - δ` against infidelity
/// `ε`, rounded up and at least one.
pub fn min_copies(epsilon: f64, delta: f64, lambda2: f64) -> Result<u64, StrategyError> {
    let n = min_copies_real(epsilon, delta, lambda2)?;
    Ok((n.ceil() as u64).max(1))
}

/// `Tr(Ω σ)` for an arbitrary state `σ`.
pub fn pass_probability_of(strategy: &VerificationStrategy, sigma: &ComplexMatrix) -> Result<f64, StrategyError> {
    let t: C64 = strategy.omega.trace_product(sigma)?;
    Ok(t.re)
}
