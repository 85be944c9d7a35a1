//! Complex-matrix domain types, MSE-matrix arithmetic, power accounting and
//! the whitening SVD shared by the perfect and robust designs.
//!
//! The MSE matrix of a linear transceiver `(F, G)` over channel `H` with
//! interference-plus-noise covariance `Ω` is
//!
//! ```text
//! E = G H F Fᴴ Hᴴ Gᴴ − G H F − Fᴴ Hᴴ Gᴴ + G Ω Gᴴ + I
//!   = (G H F − I)(G H F − I)ᴴ + G Ω Gᴴ
//! ```
//!
//! and the design problem minimizes `tr{W E}` subject to `tr{Φ F Fᴴ} ≤ P`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};

/// Dense complex matrix, row/column sizes carried by the storage.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative asymmetry above which a candidate Hermitian matrix is rejected
/// rather than symmetrized.
const HERMITIAN_REJECT_TOL: f64 = 1e-6;

/// Eigenvalue floor (relative to the largest eigenvalue) for positive definiteness.
pub const PD_RELATIVE_FLOOR: f64 = 1e-12;

/// Eigenvalue slack (relative to the largest eigenvalue) for positive semidefiniteness.
pub const PSD_RELATIVE_SLACK: f64 = 1e-10;

/// Singular values below this fraction of the largest one are clamped to zero.
pub const SINGULAR_VALUE_FLOOR: f64 = 1e-12;

/// Frobenius norm of a complex matrix.
pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_finite(m: &ComplexMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A Hermitian matrix. Construction symmetrizes `(A + Aᴴ)/2`, so the stored
/// matrix is exactly Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "HermitianMatrix::new",
                expected: "square".into(),
                actual: dims(m.nrows(), m.ncols()),
            });
        }
        check_finite(&m, "HermitianMatrix")?;
        let adj = m.adjoint();
        let scale = frobenius(&m);
        let asymmetry = if scale > 0.0 {
            frobenius(&(&m - &adj)) / scale
        } else {
            0.0
        };
        if asymmetry > HERMITIAN_REJECT_TOL {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(Self((m + adj).scale(0.5)))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let mut m = ComplexMatrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// `self + s·I`
    pub fn add_identity(&self, s: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] += Complex64::new(s, 0.0);
        }
        Self(m)
    }

    pub fn add(&self, other: &HermitianMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "HermitianMatrix::add",
                expected: dims(self.dim(), self.dim()),
                actual: dims(other.dim(), other.dim()),
            });
        }
        Ok(Self(&self.0 + &other.0))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// True when every eigenvalue is at least `−PSD_RELATIVE_SLACK·λ_max`.
    pub fn is_psd(&self) -> bool {
        let ev = self.eigenvalues();
        let max = ev.last().copied().unwrap_or(0.0).abs();
        ev.first().copied().unwrap_or(0.0) >= -PSD_RELATIVE_SLACK * max.max(f64::MIN_POSITIVE)
    }

    /// Applies `f` to the eigenvalues: `Q diag(f(λ)) Qᴴ`.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let eig = SymmetricEigen::new(self.0.clone());
        let q = &eig.eigenvectors;
        let mut scaled = q.clone();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            let fj = f(lambda);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fj);
        }
        Self::new(scaled * q.adjoint()).expect("spectral map of a Hermitian matrix is Hermitian")
    }

    fn pd_bounds(&self) -> (f64, f64) {
        let ev = self.eigenvalues();
        (
            ev.first().copied().unwrap_or(0.0),
            ev.last().copied().unwrap_or(0.0),
        )
    }
}

/// Inverse square root `A^{−1/2}` of a Hermitian positive definite matrix.
pub fn inverse_sqrt(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let (min_eig, max_eig) = a.pd_bounds();
    if !(max_eig > 0.0) || min_eig <= PD_RELATIVE_FLOOR * max_eig {
        return Err(Error::NotPositiveDefinite { min_eig, max_eig });
    }
    Ok(a.spectral_map(|l| 1.0 / l.sqrt()))
}

/// Principal square root of a positive semidefinite matrix. Eigenvalues
/// within the PSD slack below zero are treated as zero.
pub fn sqrt_psd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let (min_eig, max_eig) = a.pd_bounds();
    if min_eig < -PSD_RELATIVE_SLACK * max_eig.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite { min_eig });
    }
    Ok(a.spectral_map(|l| l.max(0.0).sqrt()))
}

/// Diagonal, non-negative stream weights `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        for (index, &value) in w.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The estimated system matrices `(Ĥ, Ω̂, Φ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedSystem {
    pub h_hat: ComplexMatrix,
    pub omega_hat: HermitianMatrix,
    pub phi_hat: HermitianMatrix,
}

impl EstimatedSystem {
    /// Validates dimensions (`n_r ≤ n_t`), `Ω̂ ⪰ 0` and `Φ̂ ≻ 0`.
    pub fn new(
        h_hat: ComplexMatrix,
        omega_hat: HermitianMatrix,
        phi_hat: HermitianMatrix,
    ) -> Result<Self> {
        check_finite(&h_hat, "h_hat")?;
        let (n_r, n_t) = h_hat.shape();
        if n_r == 0 || n_r > n_t {
            return Err(Error::DimensionMismatch {
                context: "EstimatedSystem: channel must have 0 < n_r <= n_t",
                expected: format!("n_r <= {n_t}"),
                actual: dims(n_r, n_t),
            });
        }
        if omega_hat.dim() != n_r {
            return Err(Error::DimensionMismatch {
                context: "EstimatedSystem: omega_hat",
                expected: dims(n_r, n_r),
                actual: dims(omega_hat.dim(), omega_hat.dim()),
            });
        }
        if phi_hat.dim() != n_t {
            return Err(Error::DimensionMismatch {
                context: "EstimatedSystem: phi_hat",
                expected: dims(n_t, n_t),
                actual: dims(phi_hat.dim(), phi_hat.dim()),
            });
        }
        if !omega_hat.is_psd() {
            return Err(Error::NotPositiveSemidefinite {
                min_eig: omega_hat.eigenvalues()[0],
            });
        }
        inverse_sqrt(&phi_hat)?;
        Ok(Self {
            h_hat,
            omega_hat,
            phi_hat,
        })
    }

    pub fn n_t(&self) -> usize {
        self.h_hat.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.h_hat.nrows()
    }
}

/// Precoder `F` (n_t × n_r) and equalizer `G` (n_r × n_r).
#[derive(Debug, Clone, PartialEq)]
pub struct Transceiver {
    pub f: ComplexMatrix,
    pub g: ComplexMatrix,
}

impl Transceiver {
    pub fn zeros(n_t: usize, n_r: usize) -> Self {
        Self {
            f: ComplexMatrix::zeros(n_t, n_r),
            g: ComplexMatrix::zeros(n_r, n_r),
        }
    }
}

/// Thin SVD `U·diag(γ)·Vᴴ` of the whitened channel, singular values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSVD {
    pub u: ComplexMatrix,
    pub gamma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl WhitenedSVD {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, &g) in self.gamma.iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|z| *z *= g);
        }
        us * self.v.adjoint()
    }
}

/// `E = (GHF − I)(GHF − I)ᴴ + GΩGᴴ`.
pub fn mse_matrix(
    h: &ComplexMatrix,
    omega: &HermitianMatrix,
    t: &Transceiver,
) -> Result<HermitianMatrix> {
    let (n_r, n_t) = h.shape();
    if omega.dim() != n_r {
        return Err(Error::DimensionMismatch {
            context: "mse_matrix: omega",
            expected: dims(n_r, n_r),
            actual: dims(omega.dim(), omega.dim()),
        });
    }
    if t.f.nrows() != n_t || t.g.ncols() != n_r || t.f.ncols() != t.g.nrows() {
        return Err(Error::DimensionMismatch {
            context: "mse_matrix: transceiver",
            expected: format!("F {n_t}xk, G kx{n_r}"),
            actual: format!(
                "F {}, G {}",
                dims(t.f.nrows(), t.f.ncols()),
                dims(t.g.nrows(), t.g.ncols())
            ),
        });
    }
    let k = t.g.nrows();
    let residual = &t.g * h * &t.f - ComplexMatrix::identity(k, k);
    let e = &residual * residual.adjoint() + &t.g * omega.as_matrix() * t.g.adjoint();
    HermitianMatrix::new(e)
}

/// `tr{W E} = Σ w_i E_ii`.
pub fn weighted_mse(w: &Weights, e: &HermitianMatrix) -> Result<f64> {
    if w.len() != e.dim() {
        return Err(Error::DimensionMismatch {
            context: "weighted_mse",
            expected: format!("{} weights", e.dim()),
            actual: format!("{} weights", w.len()),
        });
    }
    let m = e.as_matrix();
    Ok(w.as_slice()
        .iter()
        .enumerate()
        .map(|(i, wi)| {
            debug_assert!(m[(i, i)].im.abs() <= 1e-10 * (1.0 + m[(i, i)].re.abs()));
            wi * m[(i, i)].re
        })
        .sum())
}

/// `tr{Φ F Fᴴ}`.
pub fn power_usage(phi: &HermitianMatrix, f: &ComplexMatrix) -> Result<f64> {
    if phi.dim() != f.nrows() {
        return Err(Error::DimensionMismatch {
            context: "power_usage",
            expected: dims(f.nrows(), f.nrows()),
            actual: dims(phi.dim(), phi.dim()),
        });
    }
    let phi_f = phi.as_matrix() * f;
    Ok(phi_f
        .iter()
        .zip(f.iter())
        .map(|(a, b)| (a * b.conj()).re)
        .sum())
}

/// Thin SVD of `Ω^{−1/2}·H·Φ^{−1/2}`.
///
/// Each left singular vector is rotated so that its largest-magnitude entry
/// is real positive (the matching right vector gets the same phase), and
/// singular values below `SINGULAR_VALUE_FLOOR·γ₁` are clamped to zero.
pub fn whitened_svd(
    omega: &HermitianMatrix,
    h: &ComplexMatrix,
    phi: &HermitianMatrix,
) -> Result<WhitenedSVD> {
    let (n_r, n_t) = h.shape();
    if omega.dim() != n_r || phi.dim() != n_t || n_r > n_t {
        return Err(Error::DimensionMismatch {
            context: "whitened_svd",
            expected: format!("omega {n_r}x{n_r}, phi {n_t}x{n_t}, n_r <= n_t"),
            actual: format!("omega {}, phi {}", omega.dim(), phi.dim()),
        });
    }
    let whitened = inverse_sqrt(omega)?.as_matrix() * h * inverse_sqrt(phi)?.as_matrix();
    let svd = whitened.svd(true, true);
    let u_all = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");

    let mut order: Vec<usize> = (0..n_r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut u = ComplexMatrix::zeros(n_r, n_r);
    let mut v = ComplexMatrix::zeros(n_t, n_r);
    let mut gamma = Vec::with_capacity(n_r);
    for (dst, &src) in order.iter().enumerate() {
        let ucol = u_all.column(src);
        let pivot = ucol
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(Complex64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 {
            (pivot / pivot.norm()).conj()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n_r {
            u[(i, dst)] = ucol[i] * phase;
        }
        for i in 0..n_t {
            // v = v_tᴴ, so column `src` of v is the conjugated row `src` of v_t
            v[(i, dst)] = v_t[(src, i)].conj() * phase;
        }
        gamma.push(svd.singular_values[src]);
    }
    let top = gamma.first().copied().unwrap_or(0.0);
    for g in gamma.iter_mut() {
        if *g < SINGULAR_VALUE_FLOOR * top || top == 0.0 {
            *g = 0.0;
        }
    }
    Ok(WhitenedSVD { u, gamma, v })
}
