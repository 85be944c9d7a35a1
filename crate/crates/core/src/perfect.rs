//! Transceiver design when the system matrices are taken as exact.
//!
//! The optimum has the form `F = Φ^{−1/2} V Σ`, `G = Λ Uᴴ Ω^{−1/2}` with
//! `(U, Γ, V)` the whitened SVD. Per stream the equalizer gain is
//! `λ = σγ/(1 + σ²γ²)`, which leaves `Σ w_i/(1 + γ_i²σ_i²)` to minimize over
//! `Σ σ_i² ≤ P`. Its water-filling solution is
//! `σ_i² = max(0, (γ_i·√(w_i/μ) − 1)/γ_i²)` with `μ` set by bisection.
//!
//! Fed estimated matrices, the same design is the non-robust baseline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    inverse_sqrt, mse_matrix, weighted_mse, whitened_svd, ComplexMatrix, EstimatedSystem,
    HermitianMatrix, Transceiver, Weights, WhitenedSVD,
};

/// Lower end of the bisection range for the power multiplier.
pub const MU_FLOOR: f64 = 1e-12;

/// Relative tolerance on `Σ σ_i² = P` for the water-filling bisection.
const WATERFILL_TOL: f64 = 1e-9;

/// Transmit power budget `P > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget(f64);

impl PowerBudget {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidParameter {
                name: "power budget",
                value: p,
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Per-stream amplitudes `σ_i`, gains `λ_i` and the power multiplier `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamAllocation {
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
}

impl StreamAllocation {
    pub fn zeros(n: usize, mu: f64) -> Self {
        Self {
            sigma: vec![0.0; n],
            lambda: vec![0.0; n],
            mu,
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn power(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }
}

/// MMSE equalizer gain for one stream given its amplitude.
pub fn mmse_gain(sigma: f64, gamma: f64) -> f64 {
    sigma * gamma / (1.0 + sigma * sigma * gamma * gamma)
}

fn stream_power(gamma: f64, w: f64, mu: f64) -> f64 {
    if gamma <= 0.0 || w <= 0.0 {
        return 0.0;
    }
    ((gamma * (w / mu).sqrt() - 1.0) / (gamma * gamma)).max(0.0)
}

/// Water-filling allocation for whitened gains `gamma` under `Σ σ_i² ≤ P`.
pub fn waterfill(gamma: &[f64], w: &Weights, p: PowerBudget) -> Result<StreamAllocation> {
    if gamma.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "waterfill",
            expected: format!("{} weights", gamma.len()),
            actual: format!("{} weights", w.len()),
        });
    }
    let budget = p.get();
    let mu_max = gamma
        .iter()
        .zip(w.as_slice())
        .map(|(g, wi)| wi * g * g)
        .fold(0.0, f64::max);
    if !(mu_max > 0.0) {
        return Err(Error::NoActiveStreams);
    }
    let total = |mu: f64| -> f64 {
        gamma
            .iter()
            .zip(w.as_slice())
            .map(|(&g, &wi)| stream_power(g, wi, mu))
            .sum()
    };

    let mu = if total(MU_FLOOR) <= budget {
        // Constraint inactive even at the floor.
        MU_FLOOR
    } else {
        let (mut lo, mut hi) = (MU_FLOOR.ln(), mu_max.ln());
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..500 {
            mid = 0.5 * (lo + hi);
            let excess = total(mid.exp()) - budget;
            if excess.abs() <= WATERFILL_TOL * budget {
                break;
            }
            if excess > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid.exp()
    };

    let sigma: Vec<f64> = gamma
        .iter()
        .zip(w.as_slice())
        .map(|(&g, &wi)| stream_power(g, wi, mu).sqrt())
        .collect();
    let lambda = sigma
        .iter()
        .zip(gamma)
        .map(|(&s, &g)| mmse_gain(s, g))
        .collect();
    Ok(StreamAllocation { sigma, lambda, mu })
}

/// `F = Φ^{−1/2} V Σ` and `G = Λ Uᴴ Ω^{−1/2}`.
pub fn assemble_transceiver(
    omega_isqrt: &HermitianMatrix,
    phi_isqrt: &HermitianMatrix,
    svd: &WhitenedSVD,
    alloc: &StreamAllocation,
) -> Transceiver {
    let mut v_sigma = svd.v.clone();
    for (j, &s) in alloc.sigma.iter().enumerate() {
        v_sigma.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    let mut lambda_uh: ComplexMatrix = svd.u.adjoint();
    for (i, &l) in alloc.lambda.iter().enumerate() {
        lambda_uh
            .row_mut(i)
            .iter_mut()
            .for_each(|z| *z *= Complex64::new(l, 0.0));
    }
    Transceiver {
        f: phi_isqrt.as_matrix() * v_sigma,
        g: lambda_uh * omega_isqrt.as_matrix(),
    }
}

/// Optimal transceiver for a system whose matrices are treated as exact.
pub fn perfect_design(
    sys: &EstimatedSystem,
    w: &Weights,
    p: PowerBudget,
) -> Result<(Transceiver, StreamAllocation)> {
    if w.len() != sys.n_r() {
        return Err(Error::DimensionMismatch {
            context: "perfect_design: weights",
            expected: format!("{} weights", sys.n_r()),
            actual: format!("{} weights", w.len()),
        });
    }
    let omega_isqrt = inverse_sqrt(&sys.omega_hat)?;
    let phi_isqrt = inverse_sqrt(&sys.phi_hat)?;
    let svd = whitened_svd(&sys.omega_hat, &sys.h_hat, &sys.phi_hat)?;
    let alloc = waterfill(&svd.gamma, w, p)?;
    let t = assemble_transceiver(&omega_isqrt, &phi_isqrt, &svd, &alloc);
    Ok((t, alloc))
}

/// Nominal weighted MSE of a transceiver on the estimated system.
pub fn mse_of_design(sys: &EstimatedSystem, w: &Weights, t: &Transceiver) -> Result<f64> {
    weighted_mse(w, &mse_matrix(&sys.h_hat, &sys.omega_hat, t)?)
}

/// Closed-form per-stream objective `Σ w_i[(λ_iσ_iγ_i − 1)² + λ_i²]`.
pub fn scalar_mse(alloc: &StreamAllocation, gamma: &[f64], w: &Weights) -> f64 {
    (0..alloc.len())
        .map(|i| {
            let x = alloc.lambda[i] * alloc.sigma[i];
            w[i] * ((x * gamma[i] - 1.0).powi(2) + alloc.lambda[i].powi(2))
        })
        .sum()
}
