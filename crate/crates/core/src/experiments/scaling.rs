//! Power laws of the droplet derivatives in ε.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::stats::log_log_fit;
use crate::droplet::DropletModel;
use crate::error::{Error, Result};
use crate::fields::GridSpec;
use crate::geometry::BoundaryCurve;

/// Quantities fitted against ε: name, target slope, tolerance.
pub const SCALING_TARGETS: [(&str, f64, f64); 8] = [
    ("du_l2", -0.5, 0.2),
    ("d2u_l2", -1.5, 0.2),
    ("d3u_l2", -2.5, 0.3),
    ("d2u_du", -1.0, 0.3),
    ("du_l1", 0.0, 0.2),
    ("du_linf", -1.0, 0.2),
    ("a", -1.0, 0.2),
    ("sigma_l2", 0.5, 0.2),
];

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub name: String,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub r_squared: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub xi: f64,
    pub grid_hash: u64,
    pub rows: Vec<ScalingRow>,
    /// Largest stencil error estimate over the ladder.
    pub max_fd_error: f64,
    /// Largest `h/ε` near the droplet over the ladder.
    pub max_resolution_ratio: f64,
    pub warnings: Vec<String>,
}

impl ScalingReport {
    pub fn row(&self, name: &str) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// One line per (quantity, ε).
    pub fn write_values_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "name,eps,value")?;
        for r in &self.rows {
            for (e, v) in r.eps.iter().zip(&r.values) {
                writeln!(out, "{},{:e},{:e}", r.name, e, v)?;
            }
        }
        Ok(())
    }

    /// One line per quantity.
    pub fn write_slopes_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "name,slope,target,tolerance,r_squared,pass")?;
        for r in &self.rows {
            writeln!(out, "{},{:e},{:e},{:e},{:e},{}", r.name, r.slope, r.target, r.tolerance, r.r_squared, r.pass)?;
        }
        Ok(())
    }
}

/// Evaluates the derivative norms of the droplet at `xi` for every ε of the
/// ladder on one shared grid and fits their power laws.
pub fn scaling_suite(curve: &Arc<BoundaryCurve>, grid: &Arc<GridSpec>, xi: f64, eps_list: &[f64]) -> Result<ScalingReport> {
    if eps_list.len() < 3 {
        return Err(Error::InsufficientPoints(eps_list.len()));
    }
    let bound = curve.eps_upper_bound();
    let mut warnings: Vec<String> = eps_list
        .iter()
        .filter(|&&e| e > bound)
        .map(|e| format!("eps = {e} exceeds the admissible bound {bound:.6}"))
        .collect();
    let samples = eps_list
        .par_iter()
        .map(|&eps| {
            let model = DropletModel::without_bound_check(curve.clone(), grid.clone(), eps)?;
            let s = model.state(xi)?;
            let a = s.du.norm().powi(2);
            let values = [
                s.du.norm(),
                s.d2u.norm(),
                s.d3u.norm(),
                s.d2u.inner(&s.du)?.abs(),
                s.du.l1_norm(),
                s.du.linf_norm(),
                a,
                s.du.norm() / a,
            ];
            Ok((values, s.fd_error, model.resolution_ratio(xi)))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_fd_error = samples.iter().fold(0.0f64, |m, s| m.max(s.1));
    let max_resolution_ratio = samples.iter().fold(0.0f64, |m, s| m.max(s.2));
    if max_resolution_ratio > 0.5 {
        warnings.push(format!("grid spacing reaches {max_resolution_ratio:.3} eps near the droplet"));
    }
    let rows = SCALING_TARGETS
        .iter()
        .enumerate()
        .map(|(k, &(name, target, tolerance))| {
            let values: Vec<f64> = samples.iter().map(|s| s.0[k]).collect();
            let fit = log_log_fit(eps_list, &values)?;
            Ok(ScalingRow {
                name: name.to_string(),
                eps: eps_list.to_vec(),
                values,
                slope: fit.slope,
                r_squared: fit.r_squared,
                target,
                tolerance,
                pass: (fit.slope - target).abs() <= tolerance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingReport { xi, grid_hash: grid.hash(), rows, max_fd_error, max_resolution_ratio, warnings })
}
