//! Droplet states: a circular interface of width ε attached to the boundary,
//! with its radius calibrated so that `∫u = |Ω_δ| − π`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField};
use crate::geometry::{BoundaryCurve, InterfaceGeometry};

/// `f(u) = u³ − u`.
#[inline]
pub fn reaction(u: f64) -> f64 {
    u * u * u - u
}

/// `f′(u) = 3u² − 1`.
#[inline]
pub fn reaction_derivative(u: f64) -> f64 {
    3.0 * u * u - 1.0
}

/// Double-well potential `F(u) = (1 − u²)²/4`, with `F′ = f`.
#[inline]
pub fn potential(u: f64) -> f64 {
    let s = 1.0 - u * u;
    0.25 * s * s
}

/// The standing wave `U(R) = tanh(R/√2)` solving `Ü = f(U)`, `U(±∞) = ±1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeteroclinicProfile;

pub fn heteroclinic_profile() -> HeteroclinicProfile {
    HeteroclinicProfile
}

impl HeteroclinicProfile {
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        (r / SQRT_2).tanh()
    }

    #[inline]
    pub fn slope(&self, r: f64) -> f64 {
        let u = self.value(r);
        (1.0 - u * u) / SQRT_2
    }

    #[inline]
    pub fn second(&self, r: f64) -> f64 {
        let u = self.value(r);
        -u * (1.0 - u * u)
    }

    /// `∫ U̇² dR = 2√2/3`, the interfacial energy per unit length.
    pub fn surface_tension(&self) -> f64 {
        2.0 * SQRT_2 / 3.0
    }
}

/// Quintic smoothstep cutoff: 1 for `|r| ≤ h/2`, 0 for `|r| ≥ h`.
/// Returns the value and its derivative in `r`.
#[inline]
fn cutoff(r: f64, h: f64) -> (f64, f64) {
    let a = r.abs();
    let half = 0.5 * h;
    if a <= half {
        (1.0, 0.0)
    } else if a >= h {
        (0.0, 0.0)
    } else {
        let t = (a - half) / half;
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t) / half;
        (1.0 - s, -ds * r.signum())
    }
}

/// Builds droplet states for one `(Ω_δ, grid, ε)`.
#[derive(Clone, Debug)]
pub struct DropletModel {
    curve: Arc<BoundaryCurve>,
    grid: Arc<GridSpec>,
    eps: f64,
    h_cut: f64,
    h_xi: f64,
}

/// A droplet state and its first three ξ-derivatives.
#[derive(Clone, Debug)]
pub struct DropletState {
    pub xi: f64,
    pub eps: f64,
    pub rho: f64,
    pub h_cut: f64,
    pub h_xi: f64,
    pub interface: InterfaceGeometry,
    pub u: ScalarField,
    pub du: ScalarField,
    pub d2u: ScalarField,
    pub d3u: ScalarField,
    /// `‖du₄ − du₂‖ / ‖du₄‖` between the fourth- and second-order stencils.
    pub fd_error: f64,
}

/// The three ξ-derivatives with the stencil error estimate.
#[derive(Clone, Debug)]
pub struct XiDerivatives {
    pub du: ScalarField,
    pub d2u: ScalarField,
    pub d3u: ScalarField,
    pub fd_error: f64,
}

impl DropletModel {
    /// Checks `ε ≤ ½ C₁* δ²` before accepting `eps`.
    pub fn new(curve: Arc<BoundaryCurve>, grid: Arc<GridSpec>, eps: f64) -> Result<Self> {
        let bound = curve.eps_upper_bound();
        if eps > bound {
            return Err(Error::ParamOutOfRange(format!(
                "eps = {eps} exceeds the admissible bound {bound:.6}"
            )));
        }
        Self::without_bound_check(curve, grid, eps)
    }

    /// Accepts any `eps` in `(0, 1)`; used for scaling studies that
    /// deliberately step past the bound.
    pub fn without_bound_check(curve: Arc<BoundaryCurve>, grid: Arc<GridSpec>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::ParamOutOfRange(format!("eps must lie in (0, 1), got {eps}")));
        }
        let log = eps.ln();
        Ok(DropletModel { curve, grid, eps, h_cut: 2.0 * eps * log * log, h_xi: eps / 8.0 })
    }

    pub fn with_xi_step(mut self, h_xi: f64) -> Self {
        self.h_xi = h_xi;
        self
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn h_cut(&self) -> f64 {
        self.h_cut
    }

    pub fn h_xi(&self) -> f64 {
        self.h_xi
    }

    /// Ratio of the local node spacing near `z(ξ)` to ε.
    pub fn resolution_ratio(&self, xi: f64) -> f64 {
        let z = self.curve.boundary_frame(xi).point;
        self.grid.max_spacing_near(z, 1.1) / self.eps
    }

    /// `u` for a given radius, and `∂u/∂ρ`.
    fn profile_with_slope(&self, geom: &InterfaceGeometry) -> (Vec<f64>, Vec<f64>) {
        let (eps, h) = (self.eps, self.h_cut);
        let profile = HeteroclinicProfile;
        self.grid
            .points()
            .par_iter()
            .map(|&x| {
                let r = geom.signed_distance(x);
                if r >= h {
                    (1.0, 0.0)
                } else if r <= -h {
                    (-1.0, 0.0)
                } else {
                    let (chi, dchi) = cutoff(r, h);
                    let sign = if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 };
                    let u0 = profile.value(r / eps);
                    let u = chi * u0 + (1.0 - chi) * sign;
                    let du_dr = dchi * (u0 - sign) + chi * profile.slope(r / eps) / eps;
                    (u, -du_dr)
                }
            })
            .unzip()
    }

    /// Profile field for a fixed radius `rho`.
    pub fn profile(&self, xi: f64, rho: f64) -> ScalarField {
        let geom = InterfaceGeometry::new(&self.curve, xi, rho);
        let (u, _) = self.profile_with_slope(&geom);
        ScalarField::from_values(&self.grid, u).expect("profile has one value per node")
    }

    /// Radius with `∫u = |Ω_δ| − π`, and the resulting field.
    pub fn calibrate(&self, xi: f64) -> Result<(f64, ScalarField)> {
        self.calibrate_from(xi, 1.0)
    }

    /// Safeguarded Newton on the radius, started at `guess`. The mass is
    /// decreasing in ρ, so the sign of the defect tightens the bracket
    /// `[0.5, 1.5]` at every step.
    fn calibrate_from(&self, xi: f64, guess: f64) -> Result<(f64, ScalarField)> {
        let w = self.grid.weights();
        let target = self.grid.area() - PI;
        let tol = 1e-12 * self.grid.area();
        let (mut lo, mut hi) = (0.5, 1.5);
        let mut rho = guess.clamp(lo, hi);
        for _ in 0..50 {
            let geom = InterfaceGeometry::new(&self.curve, xi, rho);
            let (u, du) = self.profile_with_slope(&geom);
            let g = w.iter().zip(&u).map(|(w, u)| w * u).sum::<f64>() - target;
            if g.abs() <= tol {
                return Ok((rho, ScalarField::from_values(&self.grid, u)?));
            }
            let slope: f64 = w.iter().zip(&du).map(|(w, d)| w * d).sum();
            if g > 0.0 {
                lo = rho;
            } else {
                hi = rho;
            }
            if hi - lo < 1e-14 {
                break;
            }
            let newton = rho - g / slope;
            rho = if slope < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Err(Error::CalibrationFailure(format!(
            "no radius in [0.5, 1.5] gives the target mass at xi = {xi:.6} (last bracket [{lo:.6}, {hi:.6}])"
        )))
    }

    /// Finite-difference ξ-derivatives over `ξ ± j·h_ξ`, `j ≤ 2`, each state
    /// calibrated independently.
    pub fn xi_derivatives(&self, xi: f64) -> Result<XiDerivatives> {
        let h = self.h_xi;
        if !(h > 0.0 && 4.0 * h < 0.5 * self.curve.length()) {
            return Err(Error::StencilFailure(format!("step {h} is unusable")));
        }
        let (rho, u0) = self.calibrate(xi).map_err(|e| Error::StencilFailure(e.to_string()))?;
        let side = self.stencil_states(xi, rho)?;
        Ok(self.stencil(&side, &u0))
    }

    fn stencil_states(&self, xi: f64, rho: f64) -> Result<Vec<ScalarField>> {
        [-2.0, -1.0, 1.0, 2.0]
            .iter()
            .map(|&j| self.calibrate_from(xi + j * self.h_xi, rho).map(|(_, u)| u))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::StencilFailure(e.to_string()))
    }

    fn stencil(&self, side: &[ScalarField], u0: &ScalarField) -> XiDerivatives {
        let h = self.h_xi;
        let [m2, m1, p1, p2] = [side[0].values(), side[1].values(), side[2].values(), side[3].values()];
        let c = u0.values();
        let n = c.len();
        let (mut du, mut d2u, mut d3u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut err = 0.0;
        let mut scale = 0.0;
        let w = self.grid.weights();
        for k in 0..n {
            du[k] = (-p2[k] + 8.0 * p1[k] - 8.0 * m1[k] + m2[k]) / (12.0 * h);
            d2u[k] = (-p2[k] + 16.0 * p1[k] - 30.0 * c[k] + 16.0 * m1[k] - m2[k]) / (12.0 * h * h);
            d3u[k] = (p2[k] - 2.0 * p1[k] + 2.0 * m1[k] - m2[k]) / (2.0 * h * h * h);
            let low = (p1[k] - m1[k]) / (2.0 * h);
            err += w[k] * (du[k] - low).powi(2);
            scale += w[k] * du[k] * du[k];
        }
        let field = |v| ScalarField::from_values(&self.grid, v).expect("one value per node");
        XiDerivatives {
            du: field(du),
            d2u: field(d2u),
            d3u: field(d3u),
            fd_error: if scale > 0.0 { (err / scale).sqrt() } else { 0.0 },
        }
    }

    /// The calibrated droplet at `xi` with its ξ-derivatives.
    pub fn state(&self, xi: f64) -> Result<DropletState> {
        let xi = self.curve.wrap(xi);
        let (rho, u) = self.calibrate(xi)?;
        let h = self.h_xi;
        let side = self.stencil_states(xi, rho)?;
        let d = self.stencil(&side, &u);
        Ok(DropletState {
            xi,
            eps: self.eps,
            rho,
            h_cut: self.h_cut,
            h_xi: h,
            interface: InterfaceGeometry::new(&self.curve, xi, rho),
            u,
            du: d.du,
            d2u: d.d2u,
            d3u: d.d3u,
            fd_error: d.fd_error,
        })
    }
}

/// Convenience wrapper: builds the model (with the ε bound check) and the
/// state at `xi`.
pub fn build_droplet(
    curve: &Arc<BoundaryCurve>,
    grid: &Arc<GridSpec>,
    xi: f64,
    eps: f64,
) -> Result<DropletState> {
    DropletModel::new(curve.clone(), grid.clone(), eps)?.state(xi)
}

/// Leading-order droplet speed `c(ξ) = (4/3π)·K′(ξ)`, so that the droplet
/// moves with velocity `ε²c` up the curvature gradient of `∂Ω_δ`.
pub fn velocity_c(curve: &BoundaryCurve, xi: f64) -> f64 {
    let (_, dk) = curve.curvature_and_derivative(xi);
    4.0 / (3.0 * PI) * dk
}
