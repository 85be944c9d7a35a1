//! Self-checks run by `robust-mimo validate`.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::{
    derive_seed, power_for, radii_from_epsbar, random_system, run_sweep, write_csv,
    ExperimentConfig,
};
use crate::model::{power_usage, whitened_svd, Weights};
use crate::perfect::{mse_of_design, perfect_design, PowerBudget, StreamAllocation};
use crate::quartic::{solve_real_roots, DepressedQuartic};
use crate::solver::{robust_design, scalar_objective, RobustDesign, SolverOptions};
use crate::worstcase::{
    expansion_terms, inflate, objective_at_delta, worst_channel_error, UncertaintyRadii,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, limit: f64, what: &str) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= limit,
        detail: format!("{what} {worst:.3e} (limit {limit:.1e})"),
    }
}

/// Largest violation of first-order optimality of
/// `scalar_objective + μ(Σσ² − P)` over the stream scalars, by finite
/// differences at fixed `(ϑ, μ)`. Where a step leaves the feasible set
/// (`σ_i < 0`, or `w_iλ_i²σ_i² > ϑ`) only the one-sided derivative into the
/// feasible side is checked, and only for the wrong sign. The direction
/// `(λ_i·eᵗ, σ_i·e⁻ᵗ)`, which keeps `λ_iσ_i` fixed, is always feasible.
pub fn kkt_violation(d: &RobustDesign, w: &Weights) -> f64 {
    let a = &d.allocation;
    let (vartheta, eps, mu) = (d.report.final_vartheta, d.report.eps_tilde, a.mu);
    let lagrangian = |alloc: &StreamAllocation| {
        if alloc.sigma.iter().chain(&alloc.lambda).any(|v| *v < 0.0) {
            return f64::INFINITY;
        }
        scalar_objective(alloc, &d.gamma, w, vartheta, eps).unwrap_or(f64::INFINITY)
            + mu * alloc.sigma.iter().map(|s| s * s).sum::<f64>()
    };
    let base = lagrangian(a);
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        for which in 0..3 {
            let h = 1e-6 * a.lambda[i].max(a.sigma[i]).max(1.0);
            let at = |t: f64| {
                let mut p = a.clone();
                match which {
                    0 => p.lambda[i] += t,
                    1 => p.sigma[i] += t,
                    _ => {
                        p.lambda[i] *= t.exp();
                        p.sigma[i] *= (-t).exp();
                    }
                }
                lagrangian(&p)
            };
            let (up, down) = (at(h), at(-h));
            let violation = match (up.is_finite(), down.is_finite()) {
                (true, true) => ((up - down) / (2.0 * h)).abs(),
                (false, true) => ((base - down) / h).max(0.0),
                (true, false) => ((base - up) / h).max(0.0),
                (false, false) => f64::INFINITY,
            };
            worst = worst.max(violation);
        }
    }
    worst
}

#[rustfmt::skip]
fn companion_real_roots(q: &DepressedQuartic) -> Vec<f64> {
    let m = Matrix4::new(
        0.0, 0.0, 0.0, -q.a0 / q.a4,
        1.0, 0.0, 0.0, -q.a1 / q.a4,
        0.0, 1.0, 0.0, -q.a2 / q.a4,
        0.0, 0.0, 1.0, 0.0,
    );
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * z.re.abs().max(1.0))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn check_quartic() -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut residual, mut mismatch): (f64, f64) = (0.0, 0.0);
    for _ in 0..2000 {
        let roots: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let shift = roots.iter().sum::<f64>() / 4.0;
        let r: Vec<f64> = roots.iter().map(|x| x - shift).collect();
        let e2 = r[0] * r[1] + r[0] * r[2] + r[0] * r[3] + r[1] * r[2] + r[1] * r[3] + r[2] * r[3];
        let e3 = r[0] * r[1] * r[2] + r[0] * r[1] * r[3] + r[0] * r[2] * r[3] + r[1] * r[2] * r[3];
        let e4 = r[0] * r[1] * r[2] * r[3];
        let q = DepressedQuartic::new(1.0, e2, -e3, e4).expect("finite");
        let got = solve_real_roots(&q);
        for x in &got {
            residual = residual.max(q.eval(*x).abs() / q.residual_scale(*x));
        }
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        // Clustered roots are ill-conditioned for the eigenvalue oracle.
        if sorted.windows(2).all(|p| p[1] - p[0] > 1e-2) {
            let oracle = companion_real_roots(&q);
            if oracle.len() != got.len() {
                mismatch = f64::INFINITY;
            }
            for (a, b) in got.iter().zip(&oracle) {
                mismatch = mismatch.max((a - b).abs());
            }
        }
    }
    vec![
        outcome(
            "quartic root residuals",
            residual,
            1e-9,
            "max scaled residual",
        ),
        outcome(
            "quartic roots vs companion matrix",
            mismatch,
            1e-8,
            "max root gap",
        ),
    ]
}

fn check_zero_radius() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let sys = random_system(derive_seed(21, &[k]), 2, 2, 10.0).expect("valid");
        let w = Weights::uniform(2);
        let p = PowerBudget::new(power_for(2)).expect("positive");
        let (t, _) = perfect_design(&sys, &w, p).expect("solvable");
        let perfect = mse_of_design(&sys, &w, &t).expect("dims");
        let d = robust_design(
            &sys,
            &UncertaintyRadii::zero(),
            &w,
            p,
            &SolverOptions::default(),
        )
        .expect("solvable");
        worst = worst.max((d.objective() - perfect).abs() / perfect);
    }
    outcome(
        "zero radius matches non-robust design",
        worst,
        1e-5,
        "max relative gap",
    )
}

fn check_kkt_and_power() -> Vec<CheckOutcome> {
    let (mut kkt, mut power, mut nonconverged): (f64, f64, usize) = (0.0, 0.0, 0);
    for k in 0..20 {
        let sys = random_system(derive_seed(31, &[k]), 2, 2, 10.0).expect("valid");
        let r = radii_from_epsbar(if k % 2 == 0 { 0.05 } else { 0.15 }, &sys).expect("in range");
        let w = Weights::uniform(2);
        let p = PowerBudget::new(power_for(2)).expect("positive");
        let d = robust_design(&sys, &r, &w, p, &SolverOptions::default()).expect("solvable");
        if !d.report.converged {
            nonconverged += 1;
            continue;
        }
        kkt = kkt.max(kkt_violation(&d, &w));
        let (_, phi_star) = inflate(&sys, &r);
        let used = power_usage(&phi_star, &d.transceiver.f).expect("dims");
        power = power.max((used - d.allocation.power()).abs());
    }
    vec![
        outcome(
            "robust design converges",
            nonconverged as f64,
            0.0,
            "non-converged runs",
        ),
        outcome("robust design stationarity", kkt, 1e-5, "max gradient"),
        outcome(
            "robust design power accounting",
            power,
            1e-9,
            "max mismatch",
        ),
    ]
}

fn check_channel_error_maximality() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..10 {
        let sys = random_system(derive_seed(41, &[k]), 2, 2, 10.0).expect("valid");
        let r = radii_from_epsbar(0.1, &sys).expect("in range");
        let w = Weights::uniform(2);
        let p = PowerBudget::new(power_for(2)).expect("positive");
        let d = robust_design(&sys, &r, &w, p, &SolverOptions::default()).expect("solvable");
        let (omega_star, phi_star) = inflate(&sys, &r);
        let svd = whitened_svd(&omega_star, &sys.h_hat, &phi_star).expect("PD");
        let (delta, _) = worst_channel_error(&sys, &r, &d.allocation, &svd, &w).expect("solvable");
        let t = expansion_terms(&sys.h_hat, &d.transceiver.f, &d.transceiver.g, &w).expect("dims");
        let best = objective_at_delta(&t.a, &t.b, &t.c, &delta).expect("dims");
        let (os, ps) = (
            crate::model::sqrt_psd(&omega_star).expect("PSD"),
            crate::model::sqrt_psd(&phi_star).expect("PSD"),
        );
        for _ in 0..200 {
            let mut v: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = d.report.eps_tilde * rng.random::<f64>() / norm;
            v.iter_mut().for_each(|x| *x *= scale);
            let mut ud = svd.u.clone();
            for (j, &x) in v.iter().enumerate() {
                ud.column_mut(j).iter_mut().for_each(|z| *z *= x);
            }
            let cand = os.as_matrix() * ud * svd.v.adjoint() * ps.as_matrix();
            let val = objective_at_delta(&t.a, &t.b, &t.c, &cand).expect("dims");
            worst = worst.max(val - best);
        }
    }
    outcome(
        "worst channel error dominates structured draws",
        worst,
        1e-10,
        "max excess",
    )
}

fn check_sweep_determinism() -> CheckOutcome {
    let cfg = ExperimentConfig {
        snr_grid_db: vec![10.0],
        eps_bar_grid: vec![0.0, 0.1],
        trials: 6,
        samples_per_region: 100,
        ..Default::default()
    };
    let render = || {
        let mut buf = Vec::new();
        let out = run_sweep(&cfg).expect("sweep runs");
        write_csv(&out, &cfg, &mut buf).expect("in-memory write");
        buf
    };
    let same = render() == render();
    CheckOutcome {
        name: "sweep output is reproducible",
        passed: same,
        detail: if same {
            "identical bytes".into()
        } else {
            "outputs differ".into()
        },
    }
}

pub fn run_checks() -> Vec<CheckOutcome> {
    let mut out = check_quartic();
    out.push(check_zero_radius());
    out.extend(check_kkt_and_power());
    out.push(check_channel_error_maximality());
    out.push(check_sweep_determinism());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
