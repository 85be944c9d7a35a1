//! Least-favorable error matrices inside the uncertainty region.
//!
//! The covariance and shaping errors have closed forms (Cauchy–Schwarz
//! equality cases), and bounding their contribution is the same as inflating
//! the estimates: `Ω* = Ω̂ + ε_Ω·I`, `Φ* = Φ̂ + ε_Φ·I`.
//!
//! With the transceiver in its SVD structure, the channel error restricted to
//! `Δ_H = Ω*^{1/2}·Û·diag(δ̃)·V̂ᴴ·Φ*^{1/2}` turns the inner maximization into a
//! diagonal trust-region subproblem
//!
//! ```text
//! maximize Σ_i w_i·(a_i + X_i·δ̃_i)²   subject to Σ_i δ̃_i² ≤ ε̃²
//! ```
//!
//! with `X_i = λ_iσ_i`, `a_i = γ_iX_i − 1`. In terms of `b_i = w_iX_i²` and
//! `c_i = w_iX_i·a_i`, the maximizer is `δ̃_i = c_i/(ϑ − b_i)` where `ϑ > max b`
//! solves `Σ c_i²/(ϑ − b_i)² = ε̃²`. When the coefficient `c_j` of the largest
//! `b_j` vanishes and the remaining terms cannot exhaust the budget at
//! `ϑ = b_j`, the solution sits at `ϑ = b_j` and `δ̃_j` takes the leftover.

use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::model::{
    inverse_sqrt, sqrt_psd, ComplexMatrix, EstimatedSystem, HermitianMatrix, Weights, WhitenedSVD,
};
use crate::perfect::StreamAllocation;

/// Relative guard on `|ϑ − w_iλ_i²σ_i²|` before dividing.
const DIVISION_GUARD: f64 = 1e-14;

/// Frobenius-norm radii `(ε_H, ε_Ω, ε_Φ)` of the uncertainty region.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UncertaintyRadii {
    pub eps_h: f64,
    pub eps_omega: f64,
    pub eps_phi: f64,
}

impl UncertaintyRadii {
    pub fn new(eps_h: f64, eps_omega: f64, eps_phi: f64) -> Result<Self> {
        for (name, value) in [
            ("eps_h", eps_h),
            ("eps_omega", eps_omega),
            ("eps_phi", eps_phi),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        Ok(Self {
            eps_h,
            eps_omega,
            eps_phi,
        })
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Error matrices `(Δ_H, Δ_Ω, Δ_Φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseErrors {
    pub delta_h: ComplexMatrix,
    pub delta_omega: HermitianMatrix,
    pub delta_phi: HermitianMatrix,
}

/// Diagonal channel perturbation `δ̃` in whitened coordinates and its multiplier `ϑ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelErrorDiag {
    pub delta_tilde: Vec<f64>,
    pub vartheta: f64,
    /// True when the solution sits at `ϑ = max_i w_iλ_i²σ_i²`.
    pub boundary: bool,
}

/// `Δ*_Ω = ε_Ω·GᴴWG/‖GᴴWG‖`, or zero when `GᴴWG = 0`.
pub fn worst_cov_error(g: &ComplexMatrix, w: &Weights, eps_omega: f64) -> Result<HermitianMatrix> {
    let a = weighted_gram(g, w)?;
    let norm = a.frobenius_norm();
    if norm == 0.0 || eps_omega == 0.0 {
        return Ok(HermitianMatrix::zeros(g.ncols()));
    }
    Ok(a.scale(eps_omega / norm))
}

/// `Δ*_Φ = ε_Φ·FFᴴ/‖FFᴴ‖`, or zero when `F = 0`.
pub fn worst_shaping_error(f: &ComplexMatrix, eps_phi: f64) -> HermitianMatrix {
    let b = HermitianMatrix::new(f * f.adjoint()).expect("FFᴴ is Hermitian");
    let norm = b.frobenius_norm();
    if norm == 0.0 || eps_phi == 0.0 {
        return HermitianMatrix::zeros(f.nrows());
    }
    b.scale(eps_phi / norm)
}

/// `(Ω̂ + ε_Ω·I, Φ̂ + ε_Φ·I)`.
pub fn inflate(sys: &EstimatedSystem, r: &UncertaintyRadii) -> (HermitianMatrix, HermitianMatrix) {
    (
        sys.omega_hat.add_identity(r.eps_omega),
        sys.phi_hat.add_identity(r.eps_phi),
    )
}

/// `ε̃_H = ε_H/(‖Ω*^{1/2}‖·‖Φ*^{1/2}‖)`, using `‖A^{1/2}‖ = √tr{A}`.
pub fn effective_radius(
    eps_h: f64,
    omega_star: &HermitianMatrix,
    phi_star: &HermitianMatrix,
) -> Result<f64> {
    inverse_sqrt(omega_star)?;
    inverse_sqrt(phi_star)?;
    Ok(eps_h / (omega_star.trace().sqrt() * phi_star.trace().sqrt()))
}

/// Per-stream `(b_i, c_i) = (w_iX_i², w_iX_i(γ_iX_i − 1))` with `X_i = λ_iσ_i`.
pub fn stream_terms(alloc: &StreamAllocation, gamma: &[f64], w: &Weights) -> Vec<(f64, f64)> {
    (0..alloc.len())
        .map(|i| {
            let x = alloc.lambda[i] * alloc.sigma[i];
            (w[i] * x * x, w[i] * x * (gamma[i] * x - 1.0))
        })
        .collect()
}

/// Index of the largest `w_iλ_i²σ_i²`; ties go to the lowest index.
pub fn argmax_stream(alloc: &StreamAllocation, w: &Weights) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for i in 0..alloc.len() {
        let b = w[i] * (alloc.lambda[i] * alloc.sigma[i]).powi(2);
        if b > best_value {
            best = i;
            best_value = b;
        }
    }
    best
}

fn guarded_ratio(c: f64, b: f64, vartheta: f64, stream: usize) -> Result<f64> {
    if c == 0.0 {
        return Ok(0.0);
    }
    let gap = vartheta - b;
    if gap.abs() < DIVISION_GUARD * vartheta.abs() || gap == 0.0 {
        return Err(Error::DivisionNearZero {
            stream,
            vartheta,
            denominator_term: b,
        });
    }
    Ok(c / gap)
}

/// `δ̃_i = w_iλ_iσ_i(γ_iλ_iσ_i − 1)/(ϑ − w_iλ_i²σ_i²)`.
pub fn delta_tilde(
    alloc: &StreamAllocation,
    gamma: &[f64],
    w: &Weights,
    vartheta: f64,
) -> Result<Vec<f64>> {
    stream_terms(alloc, gamma, w)
        .into_iter()
        .enumerate()
        .map(|(i, (b, c))| {
            if vartheta.is_infinite() {
                Ok(0.0)
            } else {
                guarded_ratio(c, b, vartheta, i)
            }
        })
        .collect()
}

fn term_sum(terms: &[(f64, f64)], vartheta: f64, skip: Option<usize>) -> Result<f64> {
    let mut total = 0.0;
    for (i, &(b, c)) in terms.iter().enumerate() {
        if Some(i) == skip || vartheta.is_infinite() {
            continue;
        }
        let d = guarded_ratio(c, b, vartheta, i)?;
        total += d * d;
    }
    Ok(total)
}

/// `Σ_i w_i²λ_i²σ_i²(γ_iλ_iσ_i − 1)²/(ϑ − w_iλ_i²σ_i²)² − ε̃²`; strictly
/// decreasing in `ϑ` above `max_i w_iλ_i²σ_i²` unless every `c_i` vanishes.
pub fn vartheta_residual(
    alloc: &StreamAllocation,
    gamma: &[f64],
    w: &Weights,
    vartheta: f64,
    eps_tilde: f64,
) -> Result<f64> {
    Ok(term_sum(&stream_terms(alloc, gamma, w), vartheta, None)? - eps_tilde * eps_tilde)
}

/// The residual sum with stream `j` left out; `+∞` if a remaining term is singular.
pub fn rho(alloc: &StreamAllocation, gamma: &[f64], w: &Weights, vartheta: f64, j: usize) -> f64 {
    term_sum(&stream_terms(alloc, gamma, w), vartheta, Some(j)).unwrap_or(f64::INFINITY)
}

/// Solves the diagonal trust-region subproblem for `(δ̃, ϑ)`.
pub fn solve_channel_diag(
    alloc: &StreamAllocation,
    gamma: &[f64],
    w: &Weights,
    eps_tilde: f64,
) -> Result<ChannelErrorDiag> {
    let n = alloc.len();
    if eps_tilde == 0.0 {
        return Ok(ChannelErrorDiag {
            delta_tilde: vec![0.0; n],
            vartheta: f64::INFINITY,
            boundary: false,
        });
    }
    let terms = stream_terms(alloc, gamma, w);
    let j = argmax_stream(alloc, w);
    let (b_j, c_j) = terms[j];
    let eps2 = eps_tilde * eps_tilde;
    let c_scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.1.abs())).max(1.0);

    // Σc²/(ϑ − b_j)² ≤ ε̃² once ϑ − b_j ≥ ‖c‖/ε̃.
    let c_norm = terms.iter().map(|t| t.1 * t.1).sum::<f64>().sqrt();
    let residual = |v: f64| term_sum(&terms, v, None).map(|s| s - eps2);
    let mut lo = if b_j > 0.0 {
        b_j * (1.0 + 1e-12)
    } else {
        f64::MIN_POSITIVE
    };
    let mut hi = (b_j + c_norm / eps_tilde) * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    let r_lo = residual(lo)?;

    // Hard case: c_j = 0, or so small that the root is within round-off of b_j.
    if c_j.abs() <= 1e-14 * c_scale || r_lo < 0.0 {
        let rest = term_sum(&terms, b_j, Some(j)).unwrap_or(f64::INFINITY);
        if rest < eps2 {
            let mut delta_tilde = vec![0.0; n];
            for (i, &(b, c)) in terms.iter().enumerate() {
                if i != j {
                    delta_tilde[i] = guarded_ratio(c, b, b_j, i)?;
                }
            }
            let magnitude = (eps2 - rest).sqrt();
            delta_tilde[j] = if c_j > 0.0 { magnitude } else { -magnitude };
            return Ok(ChannelErrorDiag {
                delta_tilde,
                vartheta: b_j,
                boundary: true,
            });
        }
    }

    if r_lo < 0.0 || residual(hi)? > 0.0 {
        return Err(Error::RootBracketFailure { lo, hi });
    }
    let mut vartheta = hi;
    for _ in 0..400 {
        vartheta = 0.5 * (lo + hi);
        let r = residual(vartheta)?;
        if r.abs() <= 1e-10 * eps2 || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if r > 0.0 {
            lo = vartheta;
        } else {
            hi = vartheta;
        }
    }
    Ok(ChannelErrorDiag {
        delta_tilde: delta_tilde(alloc, gamma, w, vartheta)?,
        vartheta,
        boundary: false,
    })
}

/// Least-favorable channel error `Δ*_H = Ω*^{1/2}·Û·diag(δ̃)·V̂ᴴ·Φ*^{1/2}`.
///
/// `alloc` and `svd` must come from the inflated matrices `(Ω*, Φ*)`.
pub fn worst_channel_error(
    sys: &EstimatedSystem,
    r: &UncertaintyRadii,
    alloc: &StreamAllocation,
    svd: &WhitenedSVD,
    w: &Weights,
) -> Result<(ComplexMatrix, ChannelErrorDiag)> {
    let (omega_star, phi_star) = inflate(sys, r);
    let eps_tilde = effective_radius(r.eps_h, &omega_star, &phi_star)?;
    let diag = solve_channel_diag(alloc, &svd.gamma, w, eps_tilde)?;
    let mut u_delta = svd.u.clone();
    for (j, &d) in diag.delta_tilde.iter().enumerate() {
        u_delta.column_mut(j).iter_mut().for_each(|z| *z *= d);
    }
    let delta_h = sqrt_psd(&omega_star)?.as_matrix()
        * u_delta
        * svd.v.adjoint()
        * sqrt_psd(&phi_star)?.as_matrix();
    Ok((delta_h, diag))
}

fn weighted_gram(g: &ComplexMatrix, w: &Weights) -> Result<HermitianMatrix> {
    if g.nrows() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "GᴴWG",
            expected: format!("{} rows", w.len()),
            actual: dims(g.nrows(), g.ncols()),
        });
    }
    let mut wg = g.clone();
    for (i, &wi) in w.as_slice().iter().enumerate() {
        wg.row_mut(i).iter_mut().for_each(|z| *z *= wi);
    }
    HermitianMatrix::new(g.adjoint() * wg)
}

/// The matrices `A = GᴴWG`, `B = FFᴴ`, `C = FFᴴĤᴴGᴴWG − FWG` of the channel-error expansion.
pub struct ExpansionTerms {
    pub a: HermitianMatrix,
    pub b: HermitianMatrix,
    pub c: ComplexMatrix,
}

pub fn expansion_terms(
    h_hat: &ComplexMatrix,
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    w: &Weights,
) -> Result<ExpansionTerms> {
    let a = weighted_gram(g, w)?;
    let b = HermitianMatrix::new(f * f.adjoint())?;
    let mut wg = g.clone();
    for (i, &wi) in w.as_slice().iter().enumerate() {
        wg.row_mut(i).iter_mut().for_each(|z| *z *= wi);
    }
    let c = b.as_matrix() * h_hat.adjoint() * a.as_matrix() - f * wg;
    Ok(ExpansionTerms { a, b, c })
}

/// `tr{AΔBΔᴴ} + 2·Re tr{CΔ}`: the change in `tr{WE}` caused by channel error `Δ`.
pub fn objective_at_delta(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    c: &ComplexMatrix,
    delta_h: &ComplexMatrix,
) -> Result<f64> {
    let (n_r, n_t) = delta_h.shape();
    if a.dim() != n_r || b.dim() != n_t || c.shape() != (n_t, n_r) {
        return Err(Error::DimensionMismatch {
            context: "objective_at_delta",
            expected: format!("A {n_r}x{n_r}, B {n_t}x{n_t}, C {n_t}x{n_r}"),
            actual: format!(
                "A {}, B {}, C {}",
                dims(a.dim(), a.dim()),
                dims(b.dim(), b.dim()),
                dims(c.nrows(), c.ncols())
            ),
        });
    }
    let quad = (a.as_matrix() * delta_h * b.as_matrix() * delta_h.adjoint()).trace();
    let lin = (c * delta_h).trace();
    Ok(quad.re + 2.0 * lin.re)
}

/// Frobenius inner product `Re tr{Xᴴ Y}`.
pub fn real_inner(x: &ComplexMatrix, y: &ComplexMatrix) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}
