//! JSON forms of systems and designs used by the CLI.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComplexMatrix, EstimatedSystem, HermitianMatrix, Weights};
use crate::perfect::StreamAllocation;
use crate::solver::{RobustDesign, SolverReport};
use crate::worstcase::UncertaintyRadii;

/// Row-major real and imaginary parts; `im` may be omitted for real matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: Some(rows(|z| z.im)),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.re.len();
        let m = self.re.first().map_or(0, Vec::len);
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == m);
        if n == 0 || m == 0 || !shape_ok(&self.re) || !self.im.as_ref().is_none_or(shape_ok) {
            return Err(Error::InvalidConfig("ragged or empty matrix".into()));
        }
        let out = DMatrix::from_fn(n, m, |i, j| {
            Complex64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        });
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entry"));
        }
        Ok(out)
    }
}

/// Input of `design --system`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub h_hat: MatrixJson,
    pub omega_hat: MatrixJson,
    pub phi_hat: MatrixJson,
    /// Explicit radii; when absent they come from `eps_bar`.
    #[serde(default)]
    pub radii: Option<UncertaintyRadii>,
    #[serde(default)]
    pub eps_bar: Option<f64>,
    /// Defaults to all ones.
    #[serde(default)]
    pub weights: Option<Weights>,
    /// Defaults to `n_r`.
    #[serde(default)]
    pub power: Option<f64>,
}

impl SystemFile {
    pub fn system(&self) -> Result<EstimatedSystem> {
        EstimatedSystem::new(
            self.h_hat.to_matrix()?,
            HermitianMatrix::new(self.omega_hat.to_matrix()?)?,
            HermitianMatrix::new(self.phi_hat.to_matrix()?)?,
        )
    }
}

/// Output of `design`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignJson {
    pub f: MatrixJson,
    pub g: MatrixJson,
    pub objective: f64,
    pub nominal_mse: f64,
    pub radii: UncertaintyRadii,
    pub gamma: Vec<f64>,
    pub allocation: StreamAllocation,
    pub report: SolverReport,
}

impl DesignJson {
    pub fn new(d: &RobustDesign, radii: UncertaintyRadii, nominal_mse: f64) -> Self {
        Self {
            f: MatrixJson::from_matrix(&d.transceiver.f),
            g: MatrixJson::from_matrix(&d.transceiver.g),
            objective: d.objective(),
            nominal_mse,
            radii,
            gamma: d.gamma.clone(),
            allocation: d.allocation.clone(),
            report: d.report.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_fn(2, 3, |i, j| Complex64::new(i as f64, -(j as f64)));
        let j = MatrixJson::from_matrix(&m);
        let text = serde_json::to_string(&j).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_matrix().unwrap(), m);
    }

    #[test]
    fn real_only_and_ragged() {
        let j: MatrixJson = serde_json::from_str(r#"{"re": [[1, 2], [3, 4]]}"#).unwrap();
        assert_eq!(j.to_matrix().unwrap()[(1, 0)], Complex64::new(3.0, 0.0));
        let bad: MatrixJson = serde_json::from_str(r#"{"re": [[1, 2], [3]]}"#).unwrap();
        assert!(bad.to_matrix().is_err());
    }

    #[test]
    fn system_file_parses() {
        let text = r#"{
            "h_hat": {"re": [[1.0]]},
            "omega_hat": {"re": [[1.0]]},
            "phi_hat": {"re": [[1.0]]},
            "eps_bar": 0.1
        }"#;
        let f: SystemFile = serde_json::from_str(text).unwrap();
        assert_eq!(f.system().unwrap().n_t(), 1);
        assert!(serde_json::from_str::<SystemFile>(r#"{"h_hat": {"re": [[1]]}, "x": 1}"#).is_err());
    }
}
