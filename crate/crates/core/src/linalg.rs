//! Small dense complex linear algebra.
//!
//! Everything here is sized for bipartite qudit problems: at most a 49x49
//! matrix (two 7-level systems). Storage is dense and row-major.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Tolerance for the Hermitian symmetry check in [`hermitian_eigen`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as degenerate when ordering.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Entries with modulus below this are treated as zero for phase fixing.
const PHASE_ZERO_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is not Hermitian (max |A - A^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("Jacobi sweeps did not converge (off-diagonal norm {residual:e})")]
    NonConvergence { residual: f64 },
}

/// A dense complex column vector.
#[derive(Clone, PartialEq)]
pub struct ComplexVector {
    entries: Vec<C64>,
}

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Self {
        Self { entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: vec![C64::new(0.0, 0.0); dim],
        }
    }

    /// Computational basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.entries[index] = C64::new(1.0, 0.0);
        v
    }

    /// Builds a unit vector by rescaling `entries`.
    pub fn normalized(entries: Vec<C64>) -> Result<Self, LinalgError> {
        let v = Self::new(entries);
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(LinalgError::ZeroNorm);
        }
        Ok(v.scale(C64::new(1.0 / norm, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Checks the state-vector normalization invariant (`tol` on the squared norm).
    pub fn check_normalized(&self, tol: f64) -> Result<(), LinalgError> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() <= tol {
            Ok(())
        } else {
            Err(LinalgError::NotNormalized { norm_sqr: n })
        }
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &ComplexVector) -> Result<C64, LinalgError> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn conj(&self) -> ComplexVector {
        Self::new(self.entries.iter().map(|z| z.conj()).collect())
    }

    pub fn scale(&self, factor: C64) -> ComplexVector {
        Self::new(self.entries.iter().map(|z| z * factor).collect())
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &ComplexVector) -> ComplexVector {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.entries {
            out.extend(other.entries.iter().map(|b| a * b));
        }
        Self::new(out)
    }

    /// The projector `|v><v|`.
    pub fn outer(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.entries[i] * self.entries[j].conj();
            }
        }
        m
    }

    /// Multiplies by a global phase so that the first entry with modulus
    /// above 1e-12 becomes real and positive.
    pub fn phase_fixed(&self) -> ComplexVector {
        match self.entries.iter().find(|z| z.norm() > PHASE_ZERO_TOL) {
            Some(first) => {
                let phase = first.conj() / first.norm();
                self.scale(phase)
            }
            None => self.clone(),
        }
    }

    /// Max-norm distance to `other`.
    pub fn max_abs_diff(&self, other: &ComplexVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.entries[i]
    }
}

impl fmt::Debug for ComplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter()).finish()
    }
}

/// A dense square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &z) in diag.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a perfect square.
    pub fn from_row_major(entries: Vec<C64>) -> Result<Self, LinalgError> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            entries.extend(row.iter().map(|&x| C64::new(x, 0.0)));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn scale(&self, factor: C64) -> ComplexMatrix {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> ComplexMatrix {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        self.add(&other.scale_real(-1.0))
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        check_dim(self.dim, other.dim)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.entries[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        check_dim(self.dim, v.dim())?;
        let n = self.dim;
        let out = (0..n)
            .map(|i| (0..n).map(|j| self.entries[i * n + j] * v[j]).sum())
            .collect();
        Ok(ComplexVector::new(out))
    }

    /// `<v|A|v>`.
    pub fn expectation(&self, v: &ComplexVector) -> Result<C64, LinalgError> {
        v.inner(&self.apply(v)?)
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &ComplexMatrix) -> Result<C64, LinalgError> {
        check_dim(self.dim, other.dim)?;
        let n = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.entries[i * n + k] * other.entries[k * n + i];
            }
        }
        Ok(acc)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |A - A^dagger|` over entries.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `max |P^2 - P|` over entries.
    pub fn projector_deviation(&self) -> f64 {
        match self.matmul(self) {
            Ok(sq) => sq.max_abs_diff(self),
            Err(_) => f64::INFINITY,
        }
    }

    /// Hermitian, trace one and positive semidefinite (min eigenvalue >= -1e-10).
    pub fn is_density_matrix(&self) -> bool {
        if !self.is_hermitian(1e-12) || (self.trace() - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return false;
        }
        match hermitian_eigen(self) {
            Ok(eig) => eig.eigenvalues.last().is_none_or(|&l| l >= -1e-10),
            Err(_) => false,
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.entries[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.entries[i * self.dim + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<_> = self.entries.chunks(self.dim.max(1)).collect();
        f.debug_struct("ComplexMatrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<(), LinalgError> {
    if expected == actual {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, actual })
    }
}

/// Kronecker product: entry `(i*b.dim + k, j*b.dim + l)` is `a[i,j] * b[k,l]`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..na {
        for j in 0..na {
            let aij = a[(i, j)];
            for k in 0..nb {
                for l in 0..nb {
                    out.entries[(i * nb + k) * n + j * nb + l] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Spectrum of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<ComplexVector>,
}

impl EigenDecomposition {
    /// `Σ λ_k |v_k><v_k|`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let mut out = ComplexMatrix::zeros(n);
        for (lambda, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            out = out
                .add(&v.outer().scale_real(*lambda))
                .expect("eigenvectors share the matrix dimension");
        }
        out
    }
}

/// Full eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Eigenvectors are phase-fixed (first nonzero entry real-positive). Within a
/// group of eigenvalues equal to 1e-10 the vectors are ordered by the
/// `(re, im)` of their first nonzero entry, so output is deterministic for a
/// given input.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<EigenDecomposition, LinalgError> {
    let deviation = a.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let n = a.dim;
    // Symmetrize so rotations act on an exactly Hermitian matrix.
    let mut m = ComplexMatrix::zeros(n);
    for i in 0..n {
        m[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let z = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);

    let scale = m.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let target = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let off_norm = |m: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&m) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let residual = off_norm(&m);
        if residual > 1e3 * target {
            return Err(LinalgError::NonConvergence { residual });
        }
    }

    let mut pairs: Vec<(f64, ComplexVector)> = (0..n)
        .map(|k| {
            let col = ComplexVector::new((0..n).map(|i| v[(i, k)]).collect());
            (m[(k, k)].re, col.phase_fixed())
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    order_degenerate_groups(&mut pairs);

    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// One Jacobi rotation zeroing `m[p,q]`, accumulated into `v`.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // Phase rotation makes the pivot real, then a real Jacobi rotation.
    let phase = apq / g;
    let theta = (aqq - app) / (2.0 * g);
    let t = if theta.is_infinite() {
        0.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // U acting on columns (p, q):
    // [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
    let upp = C64::new(c, 0.0);
    let upq = C64::new(s, 0.0);
    let uqp = -phase.conj() * s;
    let uqq = phase.conj() * c;

    let n = m.dim;
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * upp + mkq * uqp;
        m[(k, q)] = mkp * upq + mkq * uqq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = upp.conj() * mpk + uqp.conj() * mqk;
        m[(q, k)] = upq.conj() * mpk + uqq.conj() * mqk;
    }
    m[(p, q)] = C64::new(0.0, 0.0);
    m[(q, p)] = C64::new(0.0, 0.0);
    m[(p, p)].im = 0.0;
    m[(q, q)].im = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * upp + vkq * uqp;
        v[(k, q)] = vkp * upq + vkq * uqq;
    }
}

fn first_nonzero(v: &ComplexVector) -> (usize, C64) {
    v.entries()
        .iter()
        .copied()
        .enumerate()
        .find(|(_, z)| z.norm() > PHASE_ZERO_TOL)
        .unwrap_or((usize::MAX, C64::new(0.0, 0.0)))
}

fn tie_break(a: &ComplexVector, b: &ComplexVector) -> Ordering {
    let (ia, za) = first_nonzero(a);
    let (ib, zb) = first_nonzero(b);
    za.re
        .total_cmp(&zb.re)
        .then(za.im.total_cmp(&zb.im))
        .then(ia.cmp(&ib))
}

fn order_degenerate_groups(pairs: &mut [(f64, ComplexVector)]) {
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && (pairs[end - 1].0 - pairs[end].0).abs() <= DEGENERACY_TOL {
            end += 1;
        }
        pairs[start..end].sort_by(|x, y| tie_break(&x.1, &y.1));
        start = end;
    }
}

/// Fidelity `<ψ|ρ|ψ>` of a density matrix with a pure state, clamped to `[0, 1]`.
pub fn fidelity_pure(rho: &ComplexMatrix, psi: &ComplexVector) -> Result<f64, LinalgError> {
    let f = rho.expectation(psi)?;
    Ok(f.re.clamp(0.0, 1.0))
}
