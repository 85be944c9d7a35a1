use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, empirical_worst_mse, power_for, radii_from_epsbar, random_system,
    ExperimentConfig, THREADS_ENV,
};
use crate::error::{Error, Result};
use crate::model::Weights;
use crate::perfect::{mse_of_design, perfect_design, PowerBudget};
use crate::solver::{robust_design, SolverReport};

pub const CSV_HEADER: &str = "snr_db,eps_bar,method,trials,mean_worst_mse,std_worst_mse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Robust,
    NonRobust,
    Perfect,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Robust, Method::NonRobust, Method::Perfect];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Robust => "robust",
            Method::NonRobust => "non_robust",
            Method::Perfect => "perfect",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub snr_db: f64,
    pub eps_bar: f64,
    pub method: Method,
    pub trials: usize,
    pub mean_worst_mse: f64,
    pub std_worst_mse: f64,
}

/// Everything measured for one system realization in one sweep cell.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub robust_worst: f64,
    pub non_robust_worst: f64,
    pub perfect_mse: f64,
    pub robust_objective: f64,
    pub robust_report: SolverReport,
}

impl TrialOutcome {
    pub fn value(&self, m: Method) -> f64 {
        match m {
            Method::Robust => self.robust_worst,
            Method::NonRobust => self.non_robust_worst,
            Method::Perfect => self.perfect_mse,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    /// `(snr_db, eps_bar, failed trials)` for cells with failures.
    pub failures: Vec<(f64, f64, usize)>,
    pub nonconverged: usize,
}

/// One trial of one cell. The system realization and the channel-error
/// samples depend only on `(cfg.seed, trial)`, so every cell and every method
/// sees the same draws.
pub fn run_trial(
    cfg: &ExperimentConfig,
    snr_db: f64,
    eps_bar: f64,
    trial: usize,
) -> Result<TrialOutcome> {
    let sys = random_system(
        derive_seed(cfg.seed, &[trial as u64, 0]),
        cfg.n_t,
        cfg.n_r,
        snr_db,
    )?;
    let sample_seed = derive_seed(cfg.seed, &[trial as u64, 1]);
    let r = radii_from_epsbar(eps_bar, &sys)?;
    let w = Weights::uniform(cfg.n_r);
    let p = PowerBudget::new(power_for(cfg.n_r))?;

    let robust = robust_design(&sys, &r, &w, p, &cfg.solver_options)?;
    let (nominal, _) = perfect_design(&sys, &w, p)?;
    let n = cfg.samples_per_region;
    Ok(TrialOutcome {
        robust_worst: empirical_worst_mse(&sys, &r, &w, &robust.transceiver, n, sample_seed)?,
        non_robust_worst: empirical_worst_mse(&sys, &r, &w, &nominal, n, sample_seed)?,
        perfect_mse: mse_of_design(&sys, &w, &nominal)?,
        robust_objective: robust.objective(),
        robust_report: robust.report,
    })
}

/// Worker count from `ROBUST_MIMO_THREADS`; `0` or unset means rayon's default.
pub fn worker_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}={v} is not a count"))),
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs every `(snr, ε̄, trial)` in parallel and aggregates per cell. Output
/// does not depend on the worker count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let cells: Vec<(f64, f64)> = cfg
        .snr_grid_db
        .iter()
        .flat_map(|&s| cfg.eps_bar_grid.iter().map(move |&e| (s, e)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads()?)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let trials = cfg.trials;
    let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
        (0..cells.len() * trials)
            .into_par_iter()
            .map(|k| {
                let (snr, eps) = cells[k / trials];
                run_trial(cfg, snr, eps, k % trials)
            })
            .collect()
    });

    let mut records = Vec::with_capacity(cells.len() * 3);
    let mut failures = Vec::new();
    let mut nonconverged = 0;
    for (c, &(snr_db, eps_bar)) in cells.iter().enumerate() {
        let ok: Vec<&TrialOutcome> = outcomes[c * trials..(c + 1) * trials]
            .iter()
            .filter_map(|o| o.as_ref().ok())
            .collect();
        if ok.len() < trials {
            failures.push((snr_db, eps_bar, trials - ok.len()));
        }
        nonconverged += ok.iter().filter(|o| !o.robust_report.converged).count();
        for m in Method::ALL {
            let values: Vec<f64> = ok.iter().map(|o| o.value(m)).collect();
            let (mean, std) = mean_std(&values);
            records.push(SweepRecord {
                snr_db,
                eps_bar,
                method: m,
                trials: ok.len(),
                mean_worst_mse: mean,
                std_worst_mse: std,
            });
        }
    }
    Ok(SweepOutput {
        records,
        failures,
        nonconverged,
    })
}

fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes the sweep as CSV, preceded by `#` comment lines describing the run.
pub fn write_csv(out: &SweepOutput, cfg: &ExperimentConfig, mut wr: impl Write) -> io::Result<()> {
    writeln!(wr, "# robust-mimo {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(
        wr,
        "# config: {}",
        serde_json::to_string(cfg).expect("config serializes")
    )?;
    writeln!(
        wr,
        "# worst case: delta_omega at its closed-form maximizer, delta_h max over {} uniform ball samples, delta_phi only through the inflated power constraint",
        cfg.samples_per_region
    )?;
    writeln!(
        wr,
        "# perfect: nominal mse of the non-robust design on the estimated system"
    )?;
    for &(snr, eps, n) in &out.failures {
        writeln!(
            wr,
            "# failed trials: snr_db={},eps_bar={},count={n}",
            fmt_float(snr),
            fmt_float(eps)
        )?;
    }
    writeln!(wr, "# robust designs not converged: {}", out.nonconverged)?;
    writeln!(wr, "{CSV_HEADER}")?;
    for r in &out.records {
        writeln!(
            wr,
            "{},{},{},{},{},{}",
            fmt_float(r.snr_db),
            fmt_float(r.eps_bar),
            r.method,
            r.trials,
            fmt_float(r.mean_worst_mse),
            fmt_float(r.std_worst_mse)
        )?;
    }
    Ok(())
}
