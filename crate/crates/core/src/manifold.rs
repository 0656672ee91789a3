//! Projection onto the droplet manifold and the reduced Itô equation for the
//! droplet position `dξ = b dt + (σ, dW)`.

use serde::Serialize;

use crate::droplet::{reaction, reaction_derivative, velocity_c, DropletModel, DropletState};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::noise::{CovarianceSpec, NoiseIncrement};

/// `w = u(ξ) + v` with `(v, ∂ξu) = 0`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub xi: f64,
    pub drop: DropletState,
    pub v: ScalarField,
    pub ortho_residual: f64,
    pub newton_iterations: usize,
}

/// Coefficients of the reduced equation at one decomposition.
#[derive(Clone, Debug)]
pub struct ReducedCoeffs {
    pub a: f64,
    pub b: f64,
    pub sigma: ScalarField,
    pub c_term: f64,
    pub lv_term: f64,
    pub n_term: f64,
    pub b_term: f64,
    pub qcross_term: f64,
    pub da_drift: f64,
    /// `(Qσ, σ)`, the quadratic variation rate of ξ.
    pub qsigma_sigma: f64,
}

/// Scalar summary of `ReducedCoeffs`, for ledgers.
#[derive(Clone, Debug, Serialize)]
pub struct CoeffSummary {
    pub a: f64,
    pub b: f64,
    pub c_term: f64,
    pub lv_term: f64,
    pub n_term: f64,
    pub b_term: f64,
    pub qcross_term: f64,
    pub da_drift: f64,
    pub qsigma_sigma: f64,
    pub sigma_norm: f64,
}

impl ReducedCoeffs {
    pub fn summary(&self) -> CoeffSummary {
        CoeffSummary {
            a: self.a,
            b: self.b,
            c_term: self.c_term,
            lv_term: self.lv_term,
            n_term: self.n_term,
            b_term: self.b_term,
            qcross_term: self.qcross_term,
            da_drift: self.da_drift,
            qsigma_sigma: self.qsigma_sigma,
            sigma_norm: self.sigma.norm(),
        }
    }
}

const GRID_SEARCH_POINTS: usize = 64;
const MAX_NEWTON: usize = 40;

/// Projects `w` onto the manifold. Newton on `g(ξ) = (w − u(ξ), ∂ξu(ξ))`,
/// whose derivative is `−A`; started from `hint` or from the best of 64
/// equispaced positions. `radius` bounds the admissible distance `‖w − u‖`.
pub fn project(
    model: &DropletModel,
    w: &ScalarField,
    hint: Option<f64>,
    radius: Option<f64>,
) -> Result<Decomposition> {
    if w.grid().hash() != model.grid().hash() {
        return Err(Error::GridMismatch);
    }
    if let Some(start) = hint {
        if let Ok(d) = newton(model, w, start) {
            return check_radius(d, radius);
        }
    }
    let start = grid_search(model, w, radius)?;
    let d = newton(model, w, start)?;
    check_radius(d, radius)
}

fn check_radius(d: Decomposition, radius: Option<f64>) -> Result<Decomposition> {
    if let Some(r) = radius {
        let dist = d.v.norm();
        if dist > r {
            return Err(Error::OutsideNeighborhood { distance: dist, radius: r });
        }
    }
    Ok(d)
}

fn grid_search(model: &DropletModel, w: &ScalarField, radius: Option<f64>) -> Result<f64> {
    let length = model.curve().length();
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..GRID_SEARCH_POINTS {
        let xi = length * k as f64 / GRID_SEARCH_POINTS as f64;
        let (_, u) = model.calibrate(xi)?;
        let dist = w.sub(&u)?.norm();
        if dist < best.0 {
            best = (dist, xi);
        }
    }
    if let Some(r) = radius {
        if best.0 > r {
            return Err(Error::OutsideNeighborhood { distance: best.0, radius: r });
        }
    }
    Ok(best.1)
}

fn newton(model: &DropletModel, w: &ScalarField, start: f64) -> Result<Decomposition> {
    let curve = model.curve();
    let max_step = 0.25;
    let mut xi = curve.wrap(start);
    for iteration in 1..=MAX_NEWTON {
        let drop = model.state(xi)?;
        let v = w.sub(&drop.u)?;
        let g = v.inner(&drop.du)?;
        let du_sq = drop.du.norm().powi(2);
        let a = du_sq - v.inner(&drop.d2u)?;
        let scale = v.norm() * drop.du.norm();
        if g.abs() <= 1e-10 * scale || g.abs() <= 1e-13 * du_sq {
            return Ok(Decomposition { xi, drop, v, ortho_residual: g, newton_iterations: iteration });
        }
        if !(a > 0.0) {
            return Err(Error::ProjectionDiverged(format!("A = {a:.3e} at xi = {xi:.6}")));
        }
        let step = (g / a).clamp(-max_step, max_step);
        if !step.is_finite() {
            return Err(Error::ProjectionDiverged("non-finite Newton step".into()));
        }
        xi = curve.wrap(xi + step);
        if step.abs() <= 1e-14 * curve.length() {
            let drop = model.state(xi)?;
            let v = w.sub(&drop.u)?;
            let g = v.inner(&drop.du)?;
            return Ok(Decomposition { xi, drop, v, ortho_residual: g, newton_iterations: iteration });
        }
    }
    Err(Error::ProjectionDiverged(format!("no convergence in {MAX_NEWTON} Newton steps")))
}

/// `A = ‖∂ξu‖² − (v, ∂ξ²u)`.
pub fn coeff_a(drop: &DropletState, v: &ScalarField) -> Result<f64> {
    let a = drop.du.norm().powi(2) - v.inner(&drop.d2u)?;
    if a > 0.0 && a.is_finite() {
        Ok(a)
    } else {
        Err(Error::SingularA(a))
    }
}

/// `σ = A⁻¹ ∂ξu`.
pub fn reduced_sigma(drop: &DropletState, v: &ScalarField) -> Result<ScalarField> {
    Ok(drop.du.scaled(1.0 / coeff_a(drop, v)?))
}

/// `ε²Δu − f(u) + mean f(u)`.
pub fn allen_cahn_operator(u: &ScalarField, eps: f64) -> ScalarField {
    let mut out = u.laplacian_neumann().scaled(eps * eps);
    let fu = u.map(reaction);
    let (mean, _) = fu.mean_mass();
    for (o, f) in out.values_mut().iter_mut().zip(fu.values()) {
        *o += mean - f;
    }
    out
}

/// `Lv = −ε²Δv + f′(u)v` and
/// `N = f(u+v) − f(u) − f′(u)v − mean(f(u+v) − f(u))`.
pub fn nonlinear_terms(u: &ScalarField, v: &ScalarField, eps: f64) -> Result<(ScalarField, ScalarField)> {
    if !u.same_grid(v) {
        return Err(Error::GridMismatch);
    }
    let mut lv = v.laplacian_neumann().scaled(-eps * eps);
    for ((l, &uu), &vv) in lv.values_mut().iter_mut().zip(u.values()).zip(v.values()) {
        *l += reaction_derivative(uu) * vv;
    }
    let diff: Vec<f64> = u.values().iter().zip(v.values()).map(|(&a, &b)| reaction(a + b) - reaction(a)).collect();
    let diff = ScalarField::from_values(u.grid(), diff)?;
    let (mean, _) = diff.mean_mass();
    let n: Vec<f64> = diff
        .values()
        .iter()
        .zip(u.values())
        .zip(v.values())
        .map(|((d, &a), &b)| d - reaction_derivative(a) * b - mean)
        .collect();
    Ok((lv, ScalarField::from_values(u.grid(), n)?))
}

/// All drift contributions at `(ξ, v)`.
pub fn reduced_drift(drop: &DropletState, v: &ScalarField, q: &CovarianceSpec, eps: f64) -> Result<ReducedCoeffs> {
    let a = coeff_a(drop, v)?;
    let sigma = drop.du.scaled(1.0 / a);
    let lu = allen_cahn_operator(&drop.u, eps);
    let (lv, n) = nonlinear_terms(&drop.u, v, eps)?;
    let c_term = lu.inner(&drop.du)? / a;
    let lv_term = -lv.inner(&drop.du)? / a;
    let n_term = -n.inner(&drop.du)? / a;
    let qss = q.q_form(&sigma, &sigma)?;
    let curv = 0.5 * v.inner(&drop.d3u)? - 1.5 * drop.d2u.inner(&drop.du)?;
    let b_term = curv * qss / a;
    let qcross_term = q.q_form(&sigma, &drop.d2u)? / a;
    Ok(ReducedCoeffs {
        a,
        b: c_term + lv_term + n_term + b_term + qcross_term,
        sigma,
        c_term,
        lv_term,
        n_term,
        b_term,
        qcross_term,
        da_drift: b_term + qcross_term,
        qsigma_sigma: qss,
    })
}

/// Euler–Maruyama: `ξ′ = ξ + b dt + (σ, ΔW)` modulo `L`.
pub fn step_reduced(model: &DropletModel, xi: f64, coeffs: &ReducedCoeffs, inc: &NoiseIncrement) -> Result<f64> {
    let noise = coeffs.sigma.inner(&inc.dw)?;
    let next = xi + coeffs.b * inc.dt + noise;
    if !next.is_finite() {
        return Err(Error::NonFinite("reduced step"));
    }
    Ok(model.curve().wrap(next))
}

/// On-manifold surrogate drift `ε²c + A⁻²(∂ξu, Q∂ξ²u)`.
pub fn asymptotic_drift(model: &DropletModel, drop: &DropletState, q: &CovarianceSpec) -> Result<f64> {
    let eps = model.eps();
    let a = drop.du.norm().powi(2);
    let noise = if q.is_silent() { 0.0 } else { q.q_form(&drop.du, &drop.d2u)? / (a * a) };
    Ok(eps * eps * velocity_c(model.curve(), drop.xi) + noise)
}

/// Residual of the leading-order state, `‖𝓛u − ε²c ∂ξu‖_∞`, and the drift
/// budget `residual · ‖∂ξu‖_{L¹} / A` it induces.
pub fn residual_budget(model: &DropletModel, drop: &DropletState) -> (f64, f64) {
    let eps = model.eps();
    let c = velocity_c(model.curve(), drop.xi);
    let mut r = allen_cahn_operator(&drop.u, eps);
    r.axpy(-eps * eps * c, &drop.du).expect("same grid");
    let residual = r.linf_norm();
    let a = drop.du.norm().powi(2);
    (residual, residual * drop.du.l1_norm() / a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{GridFocus, GridParams, GridSpec};
    use crate::geometry::{BoundaryCurve, ShapeSpec};
    use crate::noise::{build_covariance, NoiseParams};
    use std::sync::Arc;

    fn model(shape: ShapeSpec, xi: f64) -> DropletModel {
        let curve = Arc::new(BoundaryCurve::build(shape, 0.2, 512).unwrap());
        let theta = curve.theta_of_xi(xi);
        let focus = GridFocus { theta, theta_width: 0.35, theta_ratio: 6.0, q_width: 0.35, q_ratio: 6.0 };
        let grid = Arc::new(GridSpec::build(&curve, &GridParams::focused(256, 64, focus)).unwrap());
        DropletModel::new(curve, grid, 0.05).unwrap()
    }

    #[test]
    fn projection_of_a_droplet_returns_it() {
        let m = model(ShapeSpec::Disk, 3.0);
        let (_, u) = m.calibrate(3.0).unwrap();
        let d = project(&m, &u, None, None).unwrap();
        assert!(m.curve().periodic_diff(d.xi, 3.0).abs() < 1e-8 * m.curve().length());
        assert!(d.v.norm() < 1e-8);
    }

    #[test]
    fn orthogonal_perturbation_keeps_position() {
        let m = model(ShapeSpec::Disk, 3.0);
        let drop = m.state(3.0).unwrap();
        let q = build_covariance(m.grid(), &NoiseParams { n_modes: 3, decay: 2.0, amplitude: 1.0 }).unwrap();
        // Gram–Schmidt a noise mode against ∂ξu.
        let mut e = q.modes()[2].clone();
        let c = e.inner(&drop.du).unwrap() / drop.du.norm().powi(2);
        e.axpy(-c, &drop.du).unwrap();
        let mut w = drop.u.clone();
        w.axpy(1e-3, &e).unwrap();
        let d = project(&m, &w, Some(3.0), None).unwrap();
        assert!(m.curve().periodic_diff(d.xi, 3.0).abs() < 1e-7);
        assert!((d.v.norm() - 1e-3 * e.norm()).abs() < 1e-6 * e.norm());
        assert!(d.ortho_residual.abs() <= 1e-8 * d.v.norm() * drop.du.norm());
        assert!(d.v.mean_mass().1.abs() < 1e-8);
    }

    #[test]
    fn shifted_droplet_is_found() {
        let m = model(ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, 10.0);
        let h = 1e-3 * m.curve().length();
        let (_, u) = m.calibrate(10.0 + h).unwrap();
        let d = project(&m, &u, Some(10.0), None).unwrap();
        assert!((d.xi - 10.0 - h).abs() < h * h);
    }

    #[test]
    fn far_states_are_outside_the_neighbourhood() {
        let m = model(ShapeSpec::Disk, 0.0);
        let w = ScalarField::constant(m.grid(), 1.0 - std::f64::consts::PI / m.grid().area());
        assert!(matches!(project(&m, &w, None, Some(0.5)), Err(Error::OutsideNeighborhood { .. })));
    }

    #[test]
    fn drift_bookkeeping_and_silent_noise() {
        let m = model(ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, 10.0);
        let drop = m.state(10.0).unwrap();
        let q = build_covariance(m.grid(), &NoiseParams { n_modes: 6, decay: 2.0, amplitude: 0.1 }).unwrap();
        let v = drop.d2u.scaled(1e-4);
        let c = reduced_drift(&drop, &v, &q, m.eps()).unwrap();
        let sum = c.c_term + c.lv_term + c.n_term + c.b_term + c.qcross_term;
        assert_eq!(c.b, sum);
        assert_eq!(c.da_drift, c.b_term + c.qcross_term);
        let zero = ScalarField::zeros(m.grid());
        let silent = reduced_drift(&drop, &zero, &q.with_amplitude(0.0), m.eps()).unwrap();
        assert_eq!(silent.b, silent.c_term);
        assert!((silent.sigma.inner(&drop.du).unwrap() - 1.0).abs() < 1e-12);
        assert!((silent.a - drop.du.norm().powi(2)).abs() < 1e-12 * silent.a);
        // Drift points up the curvature gradient, like ε²c.
        let asym = asymptotic_drift(&m, &drop, &q.with_amplitude(0.0)).unwrap();
        assert_eq!(silent.b.signum(), asym.signum());
    }

    #[test]
    fn nonlinear_terms_match_the_cubic_expansion() {
        let m = model(ShapeSpec::Disk, 0.0);
        let (_, u) = m.calibrate(0.0).unwrap();
        let v = ScalarField::from_fn(m.grid(), |p| 0.1 * (0.3 * p[0]).sin() * (0.2 * p[1]).cos());
        let (lv, n) = nonlinear_terms(&u, &v, m.eps()).unwrap();
        let mut total = lv.clone();
        total.axpy(1.0, &n).unwrap();
        assert!(total.mean_mass().1.abs() < 1e-10 * v.norm());
        let diff = ScalarField::from_values(
            m.grid(),
            u.values().iter().zip(v.values()).map(|(&a, &b)| reaction(a + b) - reaction(a)).collect(),
        )
        .unwrap();
        let (mean, _) = diff.mean_mass();
        for ((x, a), b) in n.values().iter().zip(u.values()).zip(v.values()) {
            assert!((x + mean - (3.0 * a * b * b + b * b * b)).abs() < 1e-12);
        }
        let zero = ScalarField::zeros(m.grid());
        let (lv, n0) = nonlinear_terms(&u, &zero, m.eps()).unwrap();
        assert_eq!(lv.linf_norm() + n0.linf_norm(), 0.0);
    }
}
