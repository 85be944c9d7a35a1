//! Robust transceiver optimization.
//!
//! The robust design keeps the SVD structure of the perfect-knowledge
//! solution on the inflated matrices `Ω* = Ω̂ + ε_Ω·I`, `Φ* = Φ̂ + ε_Φ·I`:
//!
//! ```text
//! F = Φ*^{−1/2}·V̂·Σ,    G = Λ·Ûᴴ·Ω*^{−1/2}
//! ```
//!
//! and the stream scalars solve
//!
//! ```text
//! minimize   Σ_i ϑ·w_i(σ_iλ_iγ_i − 1)²/(ϑ − w_iλ_i²σ_i²) + Σ_i w_iλ_i² + ϑ·ε̃²
//! subject to ϑ ≥ w_iλ_i²σ_i²,  Σ_i σ_i² ≤ P
//! ```
//!
//! Two nested loops run over the multipliers: the outer one moves `ϑ` along
//! `Δ_ϑ = ∂/∂ϑ` of the objective, the inner one moves `μ` along
//! `Δ_μ = Σσ_i² − P`. At fixed `(ϑ, μ)` each stream is solved exactly through
//! its quartic (see [`crate::quartic`]). Both loops take diminishing
//! subgradient steps until the subgradient changes sign, and bisect on its sign
//! from then on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inverse_sqrt, whitened_svd, EstimatedSystem, Transceiver, Weights};
use crate::perfect::{assemble_transceiver, mmse_gain, PowerBudget, StreamAllocation};
use crate::quartic::{stream_product_with_sign, LinearTermSign};
use crate::worstcase::{argmax_stream, effective_radius, inflate, stream_terms, UncertaintyRadii};

/// Smallest power multiplier the inner loop will use.
pub const MU_MIN: f64 = 1e-12;

/// Largest multiplier either loop will try before giving up on bracketing.
const MULTIPLIER_CAP: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Base step for the `ϑ` update, relative to the current `ϑ` per unit of `Δ_ϑ/ε̃²`.
    pub step_vartheta: f64,
    /// Base step for the `μ` update, relative to the current `μ` per unit of `Δ_μ/P`.
    pub step_mu: f64,
    /// Inner-loop tolerance on `|Σσ_i² − P|`, relative to `P`.
    pub power_tol: f64,
    /// Outer-loop tolerance on `|Δ_ϑ|`, relative to `max(ε̃², 1e-12)`.
    pub residual_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    #[serde(skip)]
    pub quartic_sign: LinearTermSign,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            step_vartheta: 0.5,
            step_mu: 0.5,
            power_tol: 1e-10,
            residual_tol: 1e-8,
            max_outer: 500,
            max_inner: 200,
            quartic_sign: LinearTermSign::Plus,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("step_vartheta", self.step_vartheta),
            ("step_mu", self.step_mu),
            ("power_tol", self.power_tol),
            ("residual_tol", self.residual_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Objective at each accepted outer iterate; non-increasing.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub converged: bool,
    pub final_vartheta: f64,
    pub final_mu: f64,
    /// `Δ_ϑ` at the returned iterate.
    pub final_subgradient: f64,
    /// `Σσ_i² − P` at the returned iterate.
    pub final_power_gap: f64,
    pub eps_tilde: f64,
    /// True when the outer loop stopped on a collapsed bracket rather than `|Δ_ϑ|`.
    pub stopped_on_bracket: bool,
}

#[derive(Debug, Clone)]
pub struct RobustDesign {
    pub transceiver: Transceiver,
    pub allocation: StreamAllocation,
    pub report: SolverReport,
    /// Whitened singular values of the inflated estimate.
    pub gamma: Vec<f64>,
}

impl RobustDesign {
    pub fn objective(&self) -> f64 {
        self.report
            .objective_trace
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.report.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterationsExceeded {
                iterations: self.report.outer_iters,
            })
        }
    }
}

fn max_stream_term(alloc: &StreamAllocation, w: &Weights) -> f64 {
    (0..alloc.len())
        .map(|i| w[i] * (alloc.lambda[i] * alloc.sigma[i]).powi(2))
        .fold(0.0, f64::max)
}

/// Value of the scalar robust objective. `vartheta = ∞` is the
/// perfect-knowledge limit (finite only when `eps_tilde = 0`).
pub fn scalar_objective(
    alloc: &StreamAllocation,
    gamma: &[f64],
    w: &Weights,
    vartheta: f64,
    eps_tilde: f64,
) -> Result<f64> {
    let max_term = max_stream_term(alloc, w);
    if vartheta < max_term * (1.0 - 1e-12) {
        return Err(Error::ConstraintViolated { vartheta, max_term });
    }
    let mut total = 0.0;
    for i in 0..alloc.len() {
        let x = alloc.lambda[i] * alloc.sigma[i];
        let a = x * gamma[i] - 1.0;
        let first = if vartheta.is_infinite() {
            w[i] * a * a
        } else {
            let num = vartheta * w[i] * a * a;
            let slack = vartheta - w[i] * x * x;
            if num == 0.0 {
                0.0
            } else if slack <= 0.0 {
                f64::INFINITY
            } else {
                num / slack
            }
        };
        total += first + w[i] * alloc.lambda[i] * alloc.lambda[i];
    }
    let radius_term = if eps_tilde == 0.0 {
        0.0
    } else {
        vartheta * eps_tilde * eps_tilde
    };
    Ok(total + radius_term)
}

/// `Δ_ϑ = ε̃² − Σ_i w_i²λ_i²σ_i²(λ_iσ_iγ_i − 1)²/(ϑ − w_iλ_i²σ_i²)²`, with stream
/// `j` dropped from the sum when `ϑ` sits on `w_jλ_j²σ_j²`.
pub fn subgradient_vartheta(
    alloc: &StreamAllocation,
    gamma: &[f64],
    w: &Weights,
    vartheta: f64,
    eps_tilde: f64,
    j: usize,
) -> Result<f64> {
    let eps2 = eps_tilde * eps_tilde;
    if vartheta.is_infinite() {
        return Ok(eps2);
    }
    let terms = stream_terms(alloc, gamma, w);
    let b_j = terms[j].0;
    if vartheta < b_j * (1.0 - 1e-12) {
        return Err(Error::ConstraintViolated {
            vartheta,
            max_term: b_j,
        });
    }
    let at_boundary = (vartheta - b_j).abs() <= 1e-14 * vartheta.abs();
    let mut sum = 0.0;
    for (i, &(b, c)) in terms.iter().enumerate() {
        if c == 0.0 || (at_boundary && i == j) {
            continue;
        }
        let gap = vartheta - b;
        if gap.abs() <= 1e-14 * vartheta.abs() {
            return Err(Error::DivisionNearZero {
                stream: i,
                vartheta,
                denominator_term: b,
            });
        }
        sum += (c / gap).powi(2);
    }
    Ok(eps2 - sum)
}

/// `Δ_μ = Σσ_i² − P`.
pub fn subgradient_mu(alloc: &StreamAllocation, p: PowerBudget) -> f64 {
    alloc.power() - p.get()
}

/// `λ_i = √(X_i·√(μ/w_i))`, `σ_i = √(X_i·√(w_i/μ))`; zero-weight streams get zeros.
pub fn reconstruct_scalars(x: &[f64], w: &Weights, mu: f64) -> Result<StreamAllocation> {
    if x.len() != w.len() {
        return Err(Error::InvalidStreamParameters(format!(
            "{} products for {} weights",
            x.len(),
            w.len()
        )));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidStreamParameters(format!("mu={mu}")));
    }
    let mut alloc = StreamAllocation::zeros(x.len(), mu);
    for (i, &xi) in x.iter().enumerate() {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::InvalidStreamParameters(format!("X_{i}={xi}")));
        }
        if w[i] == 0.0 || xi == 0.0 {
            continue;
        }
        alloc.lambda[i] = (xi * (mu / w[i]).sqrt()).sqrt();
        alloc.sigma[i] = (xi * (w[i] / mu).sqrt()).sqrt();
    }
    Ok(alloc)
}

/// Stream scalars at fixed `(ϑ, μ)`.
pub fn stream_allocation(
    gamma: &[f64],
    w: &Weights,
    vartheta: f64,
    mu: f64,
    sign: LinearTermSign,
) -> Result<StreamAllocation> {
    let x = gamma
        .iter()
        .enumerate()
        .map(|(i, &g)| stream_product_with_sign(w[i], g, vartheta, mu, sign))
        .collect::<Result<Vec<_>>>()?;
    reconstruct_scalars(&x, w, mu)
}

/// Moves a multiplier inside its sign bracket: a diminishing step while only
/// one side is known, sign bisection (in log scale) once both are.
fn next_multiplier(current: f64, proposal: f64, lo: Option<f64>, hi: Option<f64>) -> f64 {
    match (lo, hi) {
        (Some(l), Some(h)) => (l * h).sqrt(),
        (Some(l), None) => {
            if proposal > l && proposal.is_finite() {
                proposal.max(current * 1.5)
            } else {
                current * 4.0
            }
        }
        (None, Some(h)) => {
            if proposal > 0.0 && proposal < h {
                proposal.min(current / 1.5)
            } else {
                current / 4.0
            }
        }
        (None, None) => proposal,
    }
}

struct InnerSolution {
    alloc: StreamAllocation,
    iterations: usize,
    converged: bool,
}

/// Inner loop over `μ` at fixed `ϑ`.
fn solve_power_multiplier(
    gamma: &[f64],
    w: &Weights,
    p: PowerBudget,
    vartheta: f64,
    mu_start: f64,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let budget = p.get();
    let tol = opts.power_tol * budget;
    let mut mu = mu_start.max(MU_MIN);
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    let mut best: Option<(f64, StreamAllocation)> = None;
    for k in 1..=opts.max_inner {
        let alloc = stream_allocation(gamma, w, vartheta, mu, opts.quartic_sign)?;
        let gap = subgradient_mu(&alloc, p);
        if best.as_ref().is_none_or(|(g, _)| gap.abs() < g.abs()) {
            best = Some((gap, alloc.clone()));
        }
        if gap.abs() <= tol || (gap < 0.0 && mu <= MU_MIN) {
            return Ok(InnerSolution {
                alloc,
                iterations: k,
                converged: true,
            });
        }
        if gap > 0.0 {
            lo = Some(mu);
        } else {
            hi = Some(mu);
        }
        if let (Some(l), Some(h)) = (lo, hi) {
            if h - l <= 4.0 * f64::EPSILON * h {
                break;
            }
        }
        let proposal = mu * (1.0 + opts.step_mu * gap / budget / k as f64);
        mu = next_multiplier(mu, proposal, lo, hi).clamp(MU_MIN, MULTIPLIER_CAP);
    }
    let (gap, alloc) = best.expect("at least one inner iteration");
    Ok(InnerSolution {
        alloc,
        iterations: opts.max_inner,
        converged: gap.abs() <= tol,
    })
}

/// Robust transceiver for the uncertainty region `r` around `sys`.
///
/// A run that hits an iteration cap still returns its best iterate, with
/// `report.converged = false`.
pub fn robust_design(
    sys: &EstimatedSystem,
    r: &UncertaintyRadii,
    w: &Weights,
    p: PowerBudget,
    opts: &SolverOptions,
) -> Result<RobustDesign> {
    opts.validate()?;
    if w.len() != sys.n_r() {
        return Err(Error::DimensionMismatch {
            context: "robust_design: weights",
            expected: format!("{} weights", sys.n_r()),
            actual: format!("{} weights", w.len()),
        });
    }
    let (omega_star, phi_star) = inflate(sys, r);
    let omega_isqrt = inverse_sqrt(&omega_star)?;
    let phi_isqrt = inverse_sqrt(&phi_star)?;
    let svd = whitened_svd(&omega_star, &sys.h_hat, &phi_star)?;
    let eps_tilde = effective_radius(r.eps_h, &omega_star, &phi_star)?;
    let gamma = svd.gamma.clone();
    let n = gamma.len();
    let budget = p.get();

    let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0 && gamma[i] > 0.0).collect();
    if active.is_empty() {
        let alloc = StreamAllocation::zeros(n, MU_MIN);
        let objective = w.sum();
        return Ok(RobustDesign {
            transceiver: Transceiver::zeros(sys.n_t(), n),
            allocation: alloc,
            report: SolverReport {
                objective_trace: vec![objective],
                outer_iters: 0,
                inner_iters_total: 0,
                converged: true,
                final_vartheta: f64::INFINITY,
                final_mu: MU_MIN,
                final_subgradient: 0.0,
                final_power_gap: -budget,
                eps_tilde,
                stopped_on_bracket: false,
            },
            gamma,
        });
    }

    let finish = |alloc: StreamAllocation, report: SolverReport| RobustDesign {
        transceiver: assemble_transceiver(&omega_isqrt, &phi_isqrt, &svd, &alloc),
        allocation: alloc,
        report,
        gamma: gamma.clone(),
    };

    if eps_tilde == 0.0 {
        let inner = solve_power_multiplier(&gamma, w, p, f64::INFINITY, 1.0, opts)?;
        let objective = scalar_objective(&inner.alloc, &gamma, w, f64::INFINITY, 0.0)?;
        let report = SolverReport {
            objective_trace: vec![objective],
            outer_iters: 1,
            inner_iters_total: inner.iterations,
            converged: inner.converged,
            final_vartheta: f64::INFINITY,
            final_mu: inner.alloc.mu,
            final_subgradient: 0.0,
            final_power_gap: subgradient_mu(&inner.alloc, p),
            eps_tilde,
            stopped_on_bracket: false,
        };
        return Ok(finish(inner.alloc, report));
    }

    // Initial point: equal power over active streams, MMSE gains.
    let mut init = StreamAllocation::zeros(n, 1.0);
    let share = (budget / active.len() as f64).sqrt();
    for &i in &active {
        init.sigma[i] = share;
        init.lambda[i] = mmse_gain(share, gamma[i]);
    }
    let mut vartheta = 2.0 * max_stream_term(&init, w) + 1.0;
    let mut mu = 1.0;

    let eps2 = eps_tilde * eps_tilde;
    let residual_tol = opts.residual_tol * eps2.max(1e-12);
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    let mut trace = Vec::new();
    let mut inner_total = 0;
    // (vartheta, alloc, objective, subgradient, power-converged)
    let mut best: Option<(f64, StreamAllocation, f64, f64, bool)> = None;
    let mut converged = false;
    let mut stopped_on_bracket = false;
    let mut outer_iters = 0;

    for k in 1..=opts.max_outer {
        outer_iters = k;
        let inner = solve_power_multiplier(&gamma, w, p, vartheta, mu, opts)?;
        inner_total += inner.iterations;
        mu = inner.alloc.mu;
        let objective = scalar_objective(&inner.alloc, &gamma, w, vartheta, eps_tilde)?;
        let j = argmax_stream(&inner.alloc, w);
        let g = subgradient_vartheta(&inner.alloc, &gamma, w, vartheta, eps_tilde, j)?;

        // The inner tolerance perturbs the objective by about μ·|Σσ² − P|.
        let improves = objective.is_finite()
            && best.as_ref().is_none_or(|b| {
                objective <= b.2 + 1e-12 * b.2.abs() + 2.0 * mu * opts.power_tol * budget
            });
        if improves {
            trace.push(objective);
            best = Some((vartheta, inner.alloc.clone(), objective, g, inner.converged));
        }
        if g.abs() <= residual_tol {
            converged = improves && inner.converged;
            break;
        }
        if g < 0.0 {
            lo = Some(vartheta);
        } else {
            hi = Some(vartheta);
        }
        if let (Some(l), Some(h)) = (lo, hi) {
            if h - l <= 1e-13 * h {
                // Only the boundary edge case counts as a solution here.
                let on_boundary = vartheta - max_stream_term(&inner.alloc, w) <= 1e-10 * vartheta;
                converged = on_boundary && best.as_ref().is_some_and(|b| b.4);
                stopped_on_bracket = true;
                break;
            }
        }
        let proposal = vartheta * (1.0 - opts.step_vartheta * (g / eps2) / k as f64);
        vartheta = next_multiplier(vartheta, proposal, lo, hi).min(MULTIPLIER_CAP);
    }

    let (vartheta, alloc, _, g, _) = best.ok_or(Error::NonFinite("robust objective"))?;
    let report = SolverReport {
        objective_trace: trace,
        outer_iters,
        inner_iters_total: inner_total,
        converged,
        final_vartheta: vartheta,
        final_mu: alloc.mu,
        final_subgradient: g,
        final_power_gap: subgradient_mu(&alloc, p),
        eps_tilde,
        stopped_on_bracket,
    };
    Ok(finish(alloc, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::{c, random_complex, random_pd, rng};
    use crate::model::{power_usage, ComplexMatrix, HermitianMatrix};
    use crate::perfect::{mse_of_design, perfect_design};
    use rand::Rng;

    fn one(lambda: f64, sigma: f64) -> StreamAllocation {
        StreamAllocation {
            sigma: vec![sigma],
            lambda: vec![lambda],
            mu: 1.0,
        }
    }

    fn random_system(r: &mut impl Rng, n_r: usize, n_t: usize) -> EstimatedSystem {
        EstimatedSystem::new(
            random_complex(r, n_r, n_t),
            random_pd(r, n_r),
            random_pd(r, n_t),
        )
        .unwrap()
    }

    #[test]
    fn scalar_objective_examples() {
        let w = Weights::new(vec![0.5, 2.0]).unwrap();
        let zero = StreamAllocation::zeros(2, 1.0);
        let v = scalar_objective(&zero, &[1.0, 3.0], &w, 7.0, 0.0).unwrap();
        assert!((v - 2.5).abs() < 1e-15);

        let a = one(0.5, 1.0);
        let w1 = Weights::uniform(1);
        let v = scalar_objective(&a, &[1.0], &w1, 10.0, 0.1).unwrap();
        let expect = 10.0 * 0.25 / (10.0 - 0.25) + 0.25 + 0.1;
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.606_410_256_410_256_4).abs() < 1e-12);

        let lim = scalar_objective(&a, &[1.0], &w1, f64::INFINITY, 0.0).unwrap();
        assert!((lim - 0.5).abs() < 1e-15);
        let big = scalar_objective(&a, &[1.0], &w1, 1e12, 0.0).unwrap();
        assert!((big - lim).abs() < 1e-9);

        assert!(matches!(
            scalar_objective(&one(1.0, 2.0), &[1.0], &w1, 3.0, 0.1),
            Err(Error::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn subgradient_vartheta_examples() {
        let w = Weights::uniform(1);
        // ε̃ = 0 and γλσ = 1
        let g = subgradient_vartheta(&one(1.0, 2.0), &[0.5], &w, 9.0, 0.0, 0).unwrap();
        assert_eq!(g, 0.0);
        let g = subgradient_vartheta(&one(1.0, 2.0), &[1.0], &w, 6.0, 1.0, 0).unwrap();
        assert!(g.abs() < 1e-15);
        let g = subgradient_vartheta(&one(1.0, 2.0), &[1.0], &w, 1e9, 0.3, 0).unwrap();
        assert!((g - 0.09).abs() < 1e-12);
        // At the boundary the j-term drops out.
        let g = subgradient_vartheta(&one(1.0, 2.0), &[0.5], &w, 4.0, 0.3, 0).unwrap();
        assert!((g - 0.09).abs() < 1e-15);
    }

    #[test]
    fn subgradient_vartheta_matches_finite_difference() {
        let mut r = rng(55);
        for _ in 0..30 {
            let alloc = StreamAllocation {
                sigma: (0..2).map(|_| r.random_range(0.0..2.0)).collect(),
                lambda: (0..2).map(|_| r.random_range(0.0..2.0)).collect(),
                mu: 1.0,
            };
            let gamma: Vec<f64> = (0..2).map(|_| r.random_range(0.0..3.0)).collect();
            let w = Weights::new((0..2).map(|_| r.random_range(0.1..2.0)).collect()).unwrap();
            let eps = r.random_range(0.01..1.0);
            let v = 2.0 * max_stream_term(&alloc, &w) + 0.5;
            let h = 1e-6 * v;
            let fd = (scalar_objective(&alloc, &gamma, &w, v + h, eps).unwrap()
                - scalar_objective(&alloc, &gamma, &w, v - h, eps).unwrap())
                / (2.0 * h);
            let j = argmax_stream(&alloc, &w);
            let g = subgradient_vartheta(&alloc, &gamma, &w, v, eps, j).unwrap();
            assert!((fd - g).abs() <= 1e-6 * (1.0 + g.abs()), "fd {fd} vs {g}");
        }
    }

    #[test]
    fn subgradient_mu_examples() {
        let p = |v| PowerBudget::new(v).unwrap();
        let a = StreamAllocation {
            sigma: vec![1.0, 1.0],
            lambda: vec![0.0, 0.0],
            mu: 1.0,
        };
        assert_eq!(subgradient_mu(&a, p(2.0)), 0.0);
        assert_eq!(
            subgradient_mu(&StreamAllocation::zeros(2, 1.0), p(1.0)),
            -1.0
        );
        let a = StreamAllocation {
            sigma: vec![2.0, 0.0],
            lambda: vec![0.0, 0.0],
            mu: 1.0,
        };
        assert_eq!(subgradient_mu(&a, p(1.0)), 3.0);
    }

    #[test]
    fn reconstruct_scalars_examples() {
        let w = Weights::uniform(1);
        let a = reconstruct_scalars(&[1.0], &w, 1.0).unwrap();
        assert_eq!((a.lambda[0], a.sigma[0]), (1.0, 1.0));
        let a = reconstruct_scalars(&[0.0], &w, 1.0).unwrap();
        assert_eq!((a.lambda[0], a.sigma[0]), (0.0, 0.0));

        let mut r = rng(1);
        for _ in 0..100 {
            let x: f64 = r.random_range(0.0..5.0);
            let wi: f64 = r.random_range(0.01..5.0);
            let mu: f64 = r.random_range(1e-4..10.0);
            let a = reconstruct_scalars(&[x], &Weights::new(vec![wi]).unwrap(), mu).unwrap();
            assert!((a.lambda[0] * a.sigma[0] - x).abs() <= 1e-12 * x.max(1.0));
            let (lhs, rhs) = (wi * a.lambda[0].powi(2), mu * a.sigma[0].powi(2));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }
        assert!(reconstruct_scalars(&[-1.0], &w, 1.0).is_err());
        assert!(reconstruct_scalars(&[1.0], &w, 0.0).is_err());
        let zw = Weights::new(vec![0.0]).unwrap();
        assert_eq!(reconstruct_scalars(&[1.0], &zw, 1.0).unwrap().sigma[0], 0.0);
    }

    #[test]
    fn zero_radius_scalar_matches_perfect() {
        let sys = EstimatedSystem::new(
            ComplexMatrix::from_element(1, 1, c(1.0)),
            HermitianMatrix::identity(1),
            HermitianMatrix::identity(1),
        )
        .unwrap();
        let w = Weights::uniform(1);
        let p = PowerBudget::new(1.0).unwrap();
        let d = robust_design(
            &sys,
            &UncertaintyRadii::zero(),
            &w,
            p,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(d.report.converged);
        assert!((d.allocation.sigma[0] - 1.0).abs() < 1e-6);
        assert!((d.allocation.lambda[0] - 0.5).abs() < 1e-6);
        assert!((d.objective() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_weights_give_zero_design() {
        let mut r = rng(5);
        let sys = random_system(&mut r, 2, 2);
        let w = Weights::new(vec![0.0, 0.0]).unwrap();
        let radii = UncertaintyRadii::new(0.1, 0.1, 0.1).unwrap();
        let d = robust_design(
            &sys,
            &radii,
            &w,
            PowerBudget::new(2.0).unwrap(),
            &Default::default(),
        )
        .unwrap();
        assert!(d.transceiver.f.iter().all(|z| z.norm() == 0.0));
        assert!(d.transceiver.g.iter().all(|z| z.norm() == 0.0));
        assert_eq!(d.objective(), 0.0);
    }

    #[test]
    fn symmetric_streams_get_equal_scalars() {
        let sys = EstimatedSystem::new(
            ComplexMatrix::identity(2, 2).scale(1.3),
            HermitianMatrix::identity(2).scale(0.5),
            HermitianMatrix::identity(2),
        )
        .unwrap();
        let radii = UncertaintyRadii::new(0.4, 0.1, 0.2).unwrap();
        let d = robust_design(
            &sys,
            &radii,
            &Weights::uniform(2),
            PowerBudget::new(2.0).unwrap(),
            &Default::default(),
        )
        .unwrap();
        assert!(d.report.converged);
        assert!((d.allocation.sigma[0] - d.allocation.sigma[1]).abs() < 1e-8);
        assert!((d.allocation.lambda[0] - d.allocation.lambda[1]).abs() < 1e-8);
    }

    #[test]
    fn robust_design_invariants() {
        let mut r = rng(99);
        for _ in 0..20 {
            let sys = random_system(&mut r, 2, 3);
            let radii = UncertaintyRadii::new(
                r.random_range(0.01..0.8),
                r.random_range(0.0..0.5),
                r.random_range(0.0..0.5),
            )
            .unwrap();
            let w = Weights::new(vec![1.0, r.random_range(0.2..2.0)]).unwrap();
            let p = PowerBudget::new(2.0).unwrap();
            let d = robust_design(&sys, &radii, &w, p, &Default::default()).unwrap();
            assert!(d.report.converged, "{:?}", d.report);
            assert!(d
                .report
                .objective_trace
                .windows(2)
                .all(|v| v[1] <= v[0] + 1e-8));
            assert!(d.objective() >= 0.0);
            let (_, phi_star) = inflate(&sys, &radii);
            let used = power_usage(&phi_star, &d.transceiver.f).unwrap();
            assert!((used - d.allocation.power()).abs() < 1e-9);
            assert!(d.allocation.power() <= 2.0 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn outer_solution_is_global_over_vartheta() {
        // The returned ϑ beats a dense log-grid of ϑ values, each solved
        // exactly in μ by the inner loop.
        let mut r = rng(123);
        for _ in 0..10 {
            let sys = random_system(&mut r, 2, 2);
            let radii = UncertaintyRadii::new(0.5, 0.1, 0.1).unwrap();
            let w = Weights::uniform(2);
            let p = PowerBudget::new(2.0).unwrap();
            let opts = SolverOptions::default();
            let d = robust_design(&sys, &radii, &w, p, &opts).unwrap();
            let eps = d.report.eps_tilde;
            for k in -60..=60 {
                let v = d.report.final_vartheta * 10f64.powf(k as f64 / 20.0);
                let inner = solve_power_multiplier(&d.gamma, &w, p, v, 1.0, &opts).unwrap();
                let obj = scalar_objective(&inner.alloc, &d.gamma, &w, v, eps).unwrap();
                assert!(
                    d.objective() <= obj + 1e-9 * obj,
                    "theta {v}: {obj} < {}",
                    d.objective()
                );
            }
        }
    }

    #[test]
    fn objective_monotone_in_each_radius() {
        let mut r = rng(7);
        let sys = random_system(&mut r, 2, 2);
        let w = Weights::uniform(2);
        let p = PowerBudget::new(2.0).unwrap();
        let base = [0.2, 0.1, 0.1];
        for axis in 0..3 {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..8 {
                let mut e = base;
                e[axis] = 0.1 * k as f64;
                let radii = UncertaintyRadii::new(e[0], e[1], e[2]).unwrap();
                let d = robust_design(&sys, &radii, &w, p, &Default::default()).unwrap();
                assert!(d.objective() >= prev - 1e-9, "axis {axis}, step {k}");
                prev = d.objective();
            }
        }
    }

    #[test]
    fn zero_radius_matches_perfect_design() {
        let mut r = rng(17);
        for _ in 0..20 {
            let sys = random_system(&mut r, 2, 3);
            let w = Weights::new(vec![1.0, 0.6]).unwrap();
            let p = PowerBudget::new(2.0).unwrap();
            let (t, _) = perfect_design(&sys, &w, p).unwrap();
            let perfect = mse_of_design(&sys, &w, &t).unwrap();
            let d =
                robust_design(&sys, &UncertaintyRadii::zero(), &w, p, &Default::default()).unwrap();
            assert!((d.objective() - perfect).abs() <= 1e-6 * perfect);
            let nominal = mse_of_design(&sys, &w, &d.transceiver).unwrap();
            assert!((nominal - d.objective()).abs() <= 1e-9 * perfect);
        }
    }

    #[test]
    fn invalid_options_rejected() {
        let opts = SolverOptions {
            max_inner: 0,
            ..Default::default()
        };
        assert!(opts.validate().is_err());
        let opts = SolverOptions {
            power_tol: -1.0,
            ..Default::default()
        };
        assert!(opts.validate().is_err());
    }
}
