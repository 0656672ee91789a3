//! Coercivity of the linearised operator away from the translation mode.

use serde::Serialize;

use crate::droplet::{reaction_derivative, DropletState};
use crate::error::{Error, Result};
use crate::fields::{constrained_eigenpairs, PencilSpec};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapEstimate {
    pub eps: f64,
    /// `min (Lv, v) / ‖v‖²_{H¹ε}` over mass-free `v ⟂ ∂ξu`.
    pub ratio: f64,
    /// `ratio / ε²`.
    pub nu0: f64,
    /// Next constrained eigenvalue, to judge separation.
    pub next_ratio: f64,
    pub iterations: usize,
    pub nodes: usize,
}

/// Lowest Rayleigh quotient of `Lv = −ε²Δv + f′(u)v` in the `H¹ε` metric,
/// over fields with zero mass and `(v, ∂ξu) = 0`.
pub fn spectral_gap(drop: &DropletState, tol: f64) -> Result<GapEstimate> {
    let grid = drop.u.grid();
    let eps = drop.eps;
    let eps2 = eps * eps;
    let w = grid.weights();
    let k = PencilSpec {
        scale: eps2,
        diag: w.iter().zip(drop.u.values()).map(|(a, &u)| a * reaction_derivative(u)).collect(),
    };
    let m = PencilSpec { scale: eps2, diag: w.to_vec() };
    let along: Vec<f64> = w.iter().zip(drop.du.values()).map(|(a, d)| a * d).collect();
    let pairs = constrained_eigenpairs(grid.stiffness(), &k, &m, &[along, w.to_vec()], 2, -0.05, tol)?;
    let ratio = pairs.values[0];
    if !ratio.is_finite() {
        return Err(Error::EigensolveFailure("non-finite Rayleigh quotient".into()));
    }
    Ok(GapEstimate {
        eps,
        ratio,
        nu0: ratio / eps2,
        next_ratio: pairs.values[1],
        iterations: pairs.iterations,
        nodes: grid.len(),
    })
}
