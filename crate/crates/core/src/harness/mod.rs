//! Monte-Carlo comparison of robust, non-robust and perfect-knowledge designs.

mod config;
mod sweep;

pub use config::ExperimentConfig;
pub use sweep::{
    run_sweep, run_trial, write_csv, Method, SweepOutput, SweepRecord, TrialOutcome, CSV_HEADER,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    frobenius, mse_matrix, weighted_mse, ComplexMatrix, EstimatedSystem, HermitianMatrix,
    Transceiver, Weights,
};
use crate::worstcase::{worst_cov_error, UncertaintyRadii, WorstCaseErrors};

/// Env var that overrides the sweep worker count (0 = rayon default).
pub const THREADS_ENV: &str = "ROBUST_MIMO_THREADS";

/// SplitMix64 finalizer folded over `parts`; used to derive independent
/// per-trial seeds from the run seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| {
        mix(acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15))
    })
}

fn complex_gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// Transmit power used with [`random_system`]: `P = n_r`.
pub fn power_for(n_r: usize) -> f64 {
    n_r as f64
}

/// Random estimated system: unit-variance `CN(0, 1)` entries in `Ĥ` and in the
/// square roots of `Ω̂` and `Φ̂`, with `Ω̂` rescaled to `tr{Ω̂} = n_r/snr`.
pub fn random_system(seed: u64, n_t: usize, n_r: usize, snr_db: f64) -> Result<EstimatedSystem> {
    if n_r == 0 || n_r > n_t {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= n_r <= n_t, got n_r={n_r}, n_t={n_t}"
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter {
            name: "snr_db",
            value: snr_db,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = complex_gaussian(&mut rng, n_r, n_t);
    let s = complex_gaussian(&mut rng, n_r, n_r);
    let t = complex_gaussian(&mut rng, n_t, n_t);
    let omega = HermitianMatrix::new(&s * s.adjoint())?;
    let phi = HermitianMatrix::new(&t * t.adjoint())?;
    let snr = 10f64.powf(snr_db / 10.0);
    let omega = omega.scale(n_r as f64 / snr / omega.trace());
    EstimatedSystem::new(h, omega, phi)
}

/// `ε_X = √ε̄·‖X̂‖` for each of the three estimates.
pub fn radii_from_epsbar(eps_bar: f64, sys: &EstimatedSystem) -> Result<UncertaintyRadii> {
    if !(0.0..=1.0).contains(&eps_bar) {
        return Err(Error::InvalidParameter {
            name: "eps_bar",
            value: eps_bar,
        });
    }
    let s = eps_bar.sqrt();
    UncertaintyRadii::new(
        s * frobenius(&sys.h_hat),
        s * sys.omega_hat.frobenius_norm(),
        s * sys.phi_hat.frobenius_norm(),
    )
}

/// Uniform draw from the complex Frobenius ball of the given radius.
pub fn sample_ball(rng: &mut impl Rng, rows: usize, cols: usize, radius: f64) -> ComplexMatrix {
    if radius == 0.0 {
        return ComplexMatrix::zeros(rows, cols);
    }
    let dir = complex_gaussian(rng, rows, cols);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / (2 * rows * cols) as f64);
    dir.scale(r / frobenius(&dir))
}

fn sample_hermitian_ball(rng: &mut impl Rng, n: usize, radius: f64) -> HermitianMatrix {
    if radius == 0.0 {
        return HermitianMatrix::zeros(n);
    }
    let a = complex_gaussian(rng, n, n);
    let h = HermitianMatrix::new((&a + a.adjoint()).scale(0.5)).expect("symmetrized");
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / (n * n) as f64);
    let norm = h.frobenius_norm();
    h.scale(r / norm)
}

fn psd_perturbation(rng: &mut impl Rng, base: &HermitianMatrix, radius: f64) -> HermitianMatrix {
    let mut d = sample_hermitian_ball(rng, base.dim(), radius);
    for _ in 0..64 {
        let sum = base.add(&d).expect("same dimension");
        if sum.eigenvalues()[0] >= -1e-10 {
            return d;
        }
        d = d.scale(0.5);
    }
    HermitianMatrix::zeros(base.dim())
}

/// One draw of `(Δ_H, Δ_Ω, Δ_Φ)` from the uncertainty region, with the
/// covariance errors shrunk toward zero until `Ω̂ + Δ_Ω` and `Φ̂ + Δ_Φ` are PSD.
pub fn sample_region(seed: u64, sys: &EstimatedSystem, r: &UncertaintyRadii) -> WorstCaseErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta_h = sample_ball(&mut rng, sys.n_r(), sys.n_t(), r.eps_h);
    let delta_omega = psd_perturbation(&mut rng, &sys.omega_hat, r.eps_omega);
    let delta_phi = psd_perturbation(&mut rng, &sys.phi_hat, r.eps_phi);
    WorstCaseErrors {
        delta_h,
        delta_omega,
        delta_phi,
    }
}

/// Largest `tr{W·E}` over `n_samples` channel errors drawn uniformly from the
/// `ε_H` ball, with the covariance error fixed at its exact maximizer
/// `Δ*_Ω(G)`. The samples come from one stream, so a larger `n_samples`
/// extends the smaller sample set.
pub fn empirical_worst_mse(
    sys: &EstimatedSystem,
    r: &UncertaintyRadii,
    w: &Weights,
    t: &Transceiver,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let delta_omega = worst_cov_error(&t.g, w, r.eps_omega)?;
    let omega = sys.omega_hat.add(&delta_omega)?;
    let nominal = weighted_mse(w, &mse_matrix(&sys.h_hat, &omega, t)?)?;
    if r.eps_h == 0.0 {
        return Ok(nominal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let h = &sys.h_hat + sample_ball(&mut rng, sys.n_r(), sys.n_t(), r.eps_h);
        worst = worst.max(weighted_mse(w, &mse_matrix(&h, &omega, t)?)?);
    }
    Ok(if n_samples == 0 { nominal } else { worst })
}
