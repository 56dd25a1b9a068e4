//! Complete sets of mutually unbiased bases and the maximally entangled target.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::ComplexVector;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MubError {
    #[error("unsupported dimension {0}: expected a prime between {MIN_DIM} and {MAX_DIM}")]
    UnsupportedDimension(usize),
}

/// The `d + 1` bases of a complete MUB set. `bases[i][k]` is `|φ_{k,i}>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MubSet {
    d: usize,
    bases: Vec<Vec<ComplexVector>>,
}

impl MubSet {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bases(&self) -> &[Vec<ComplexVector>] {
        &self.bases
    }

    pub fn basis(&self, setting: usize) -> &[ComplexVector] {
        &self.bases[setting]
    }

    /// Largest deviation of `<φ_k|φ_l>` from `δ_kl` within any single basis.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for basis in &self.bases {
            for (k, u) in basis.iter().enumerate() {
                for (l, w) in basis.iter().enumerate() {
                    let expected = if k == l { 1.0 } else { 0.0 };
                    let ip = u.inner(w).expect("basis vectors share dimension");
                    worst = worst.max((ip - C64::new(expected, 0.0)).norm());
                }
            }
        }
        worst
    }

    /// Largest deviation of `|<u|w>|^2` from `1/d` over vectors of different bases.
    pub fn unbiasedness_error(&self) -> f64 {
        let target = 1.0 / self.d as f64;
        let mut worst: f64 = 0.0;
        for (i, bi) in self.bases.iter().enumerate() {
            for bj in self.bases.iter().skip(i + 1) {
                for u in bi {
                    for w in bj {
                        let ip = u.inner(w).expect("basis vectors share dimension");
                        worst = worst.max((ip.norm_sqr() - target).abs());
                    }
                }
            }
        }
        worst
    }

    /// Serializable copy of the basis vectors as `[re, im]` pairs.
    pub fn to_export(&self) -> Vec<Vec<Vec<[f64; 2]>>> {
        self.bases
            .iter()
            .map(|basis| {
                basis
                    .iter()
                    .map(|v| v.entries().iter().map(|z| [z.re, z.im]).collect())
                    .collect()
            })
            .collect()
    }
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..n).take_while(|p| p * p <= n).all(|p| n % p != 0)
}

fn check_dimension(d: usize) -> Result<(), MubError> {
    if (MIN_DIM..=MAX_DIM).contains(&d) && is_prime(d) {
        Ok(())
    } else {
        Err(MubError::UnsupportedDimension(d))
    }
}

fn computational_basis(d: usize) -> Vec<ComplexVector> {
    (0..d).map(|k| ComplexVector::basis(d, k)).collect()
}

/// The four qutrit bases S1..S4 with `ω = e^{2πi/3}`, exactly as tabulated
/// in the reference construction.
fn qutrit_bases() -> Vec<Vec<ComplexVector>> {
    let one = C64::new(1.0, 0.0);
    let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
    let wc = w.conj();
    let s = 1.0 / 3f64.sqrt();
    let vec3 = |a: C64, b: C64, c: C64| ComplexVector::new(vec![a * s, b * s, c * s]);
    vec![
        computational_basis(3),
        vec![vec3(one, one, one), vec3(one, w, wc), vec3(one, wc, w)],
        vec![vec3(one, w, one), vec3(one, wc, wc), vec3(one, one, w)],
        vec![vec3(one, wc, one), vec3(one, one, wc), vec3(one, w, w)],
    ]
}

/// Quadratic-phase construction for prime `d`.
///
/// Basis `b + 1` (for `b = 0..d`) has vectors `|φ_{k,b}> ∝ Σ_j ω^{b j² + k j} |j>`
/// with `ω = e^{2πi/d}`. For `d = 2` the quadratic phase uses `i` in place of
/// `ω^{1/2}`, which gives the `{(1, ±1)}` and `{(1, ±i)}` bases. Vectors are
/// phase-fixed so their first amplitude is real-positive.
pub fn build_mub_generic(d: usize) -> Result<MubSet, MubError> {
    check_dimension(d)?;
    let norm = 1.0 / (d as f64).sqrt();
    let mut bases = vec![computational_basis(d)];
    for b in 0..d {
        let basis = (0..d)
            .map(|k| {
                let entries = (0..d)
                    .map(|j| {
                        let angle = if d == 2 {
                            // i^{b j^2} (-1)^{k j}
                            PI / 2.0 * ((b * j * j) % 4) as f64 + PI * ((k * j) % 2) as f64
                        } else {
                            2.0 * PI * ((b * j * j + k * j) % d) as f64 / d as f64
                        };
                        C64::from_polar(norm, angle)
                    })
                    .collect();
                ComplexVector::new(entries).phase_fixed()
            })
            .collect();
        bases.push(basis);
    }
    Ok(MubSet { d, bases })
}

/// Complete MUB set for a prime `d` in `2..=7`.
///
/// `d = 3` returns the tabulated qutrit bases verbatim; other dimensions use
/// [`build_mub_generic`].
pub fn build_mub(d: usize) -> Result<MubSet, MubError> {
    check_dimension(d)?;
    if d == 3 {
        return Ok(MubSet {
            d,
            bases: qutrit_bases(),
        });
    }
    build_mub_generic(d)
}

/// `(1/√d) Σ_j |jj>` as a vector of length `d²`.
pub fn maximally_entangled_state(d: usize) -> ComplexVector {
    let mut entries = vec![C64::new(0.0, 0.0); d * d];
    let amp = 1.0 / (d as f64).sqrt();
    for j in 0..d {
        entries[j * d + j] = C64::new(amp, 0.0);
    }
    ComplexVector::new(entries)
}

/// Entry-wise complex conjugate with respect to the computational basis.
pub fn conjugate_vector(v: &ComplexVector) -> ComplexVector {
    v.conj()
}
