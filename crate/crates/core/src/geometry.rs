//! Rescaled star-shaped domains `Ω_δ = δ⁻¹Ω`, their boundary arclength
//! parameterisation and curvature, and the circular droplet interface.
//!
//! The boundary is a radial graph `r = R(θ)/δ`. Arclength `ξ(θ)` is carried as
//! a truncated Fourier series of the boundary speed, so `ξ ↦ θ` can be
//! inverted to machine precision by Newton's method and the boundary point is
//! a smooth function of `ξ`. Dense tables of `(θ, ξ, K, K′)` are kept for
//! export and for the discrete Gauss–Bonnet check.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the unscaled domain `Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    /// Unit disk.
    Disk,
    /// Axis-aligned ellipse with semi-axes `a` (along x) and `b`.
    Ellipse { a: f64, b: f64 },
    /// `R(θ) = r0 + Σ cos[n-1]·cos(nθ) + sin[n-1]·sin(nθ)`.
    RadialFourier {
        r0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl ShapeSpec {
    /// `[R, R′, R″, R‴]` of the unscaled boundary at polar angle `theta`.
    pub fn radial(&self, theta: f64) -> [f64; 4] {
        match self {
            ShapeSpec::Disk => [1.0, 0.0, 0.0, 0.0],
            ShapeSpec::Ellipse { a, b } => {
                let (s2, c2) = (2.0 * theta).sin_cos();
                let (s, c) = theta.sin_cos();
                let d = b * b * c * c + a * a * s * s;
                let k = a * a - b * b;
                let d1 = k * s2;
                let d2 = 2.0 * k * c2;
                let d3 = -4.0 * k * s2;
                let ab = a * b;
                let r = ab * d.powf(-0.5);
                let r1 = -0.5 * ab * d.powf(-1.5) * d1;
                let r2 = ab * (0.75 * d.powf(-2.5) * d1 * d1 - 0.5 * d.powf(-1.5) * d2);
                let r3 = ab
                    * (-1.875 * d.powf(-3.5) * d1 * d1 * d1 + 2.25 * d.powf(-2.5) * d1 * d2
                        - 0.5 * d.powf(-1.5) * d3);
                [r, r1, r2, r3]
            }
            ShapeSpec::RadialFourier { r0, cos, sin } => {
                let mut out = [*r0, 0.0, 0.0, 0.0];
                let modes = cos.len().max(sin.len());
                for n in 1..=modes {
                    let cn = cos.get(n - 1).copied().unwrap_or(0.0);
                    let dn = sin.get(n - 1).copied().unwrap_or(0.0);
                    let nf = n as f64;
                    let (s, c) = (nf * theta).sin_cos();
                    out[0] += cn * c + dn * s;
                    out[1] += nf * (-cn * s + dn * c);
                    out[2] -= nf * nf * (cn * c + dn * s);
                    out[3] += nf * nf * nf * (cn * s - dn * c);
                }
                out
            }
        }
    }

    /// Stable textual key used in grid hashes.
    pub fn key(&self) -> String {
        match self {
            ShapeSpec::Disk => "disk".to_string(),
            ShapeSpec::Ellipse { a, b } => format!("ellipse:{:e}:{:e}", a, b),
            ShapeSpec::RadialFourier { r0, cos, sin } => {
                format!("fourier:{:e}:{:?}:{:?}", r0, cos, sin)
            }
        }
    }
}

/// Curvature of the polar curve `r = R(θ)` and its θ-derivative.
fn polar_curvature(r: [f64; 4]) -> (f64, f64) {
    let [r0, r1, r2, r3] = r;
    let s = r0 * r0 + r1 * r1;
    let n = r0 * r0 + 2.0 * r1 * r1 - r0 * r2;
    let dn = 2.0 * r0 * r1 + 3.0 * r1 * r2 - r0 * r3;
    let ds = 2.0 * r0 * r1 + 2.0 * r1 * r2;
    let k = n / s.powf(1.5);
    let dk = dn / s.powf(1.5) - 1.5 * n * ds / s.powf(2.5);
    (k, dk)
}

/// Point, unit tangent `dz/dξ` and inward unit normal on the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFrame {
    pub point: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
}

/// Boundary `∂Ω_δ` of the rescaled domain, parameterised by arclength.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    shape: ShapeSpec,
    delta: f64,
    resolution: usize,
    mean_speed: f64,
    speed_cos: Vec<f64>,
    speed_sin: Vec<f64>,
    length: f64,
    area: f64,
    theta_table: Vec<f64>,
    xi_table: Vec<f64>,
    curvature_table: Vec<f64>,
    curvature_derivative_table: Vec<f64>,
}

impl BoundaryCurve {
    /// Tabulates `Ω_δ` for `shape` and rescale factor `delta` using
    /// `resolution` uniform samples in θ.
    pub fn build(shape: ShapeSpec, delta: f64, resolution: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::ParamOutOfRange(format!("delta must be positive, got {delta}")));
        }
        if resolution < 64 {
            return Err(Error::ResolutionTooLow(format!(
                "resolution {resolution} is below the minimum of 64"
            )));
        }
        if let ShapeSpec::Ellipse { a, b } = shape {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::NonStarShaped { theta: 0.0, radius: a.min(b) });
            }
        }
        // Positivity on a grid much denser than the table.
        let dense = 8 * resolution;
        for m in 0..dense {
            let theta = TAU * m as f64 / dense as f64;
            let r = shape.radial(theta)[0];
            if !(r > 0.0) {
                return Err(Error::NonStarShaped { theta, radius: r });
            }
        }

        let m = resolution;
        let dtheta = TAU / m as f64;
        let thetas: Vec<f64> = (0..m).map(|i| i as f64 * dtheta).collect();
        let radial: Vec<[f64; 4]> = thetas
            .iter()
            .map(|&t| shape.radial(t).map(|x| x / delta))
            .collect();
        let speed: Vec<f64> = radial.iter().map(|r| r[0].hypot(r[1])).collect();

        let mean_speed = speed.iter().sum::<f64>() / m as f64;
        let n_max = m / 2 - 1;
        let mut speed_cos = vec![0.0; n_max];
        let mut speed_sin = vec![0.0; n_max];
        for n in 1..=n_max {
            let (mut ac, mut as_) = (0.0, 0.0);
            for (i, &s) in speed.iter().enumerate() {
                let (sn, cs) = (n as f64 * thetas[i]).sin_cos();
                ac += s * cs;
                as_ += s * sn;
            }
            speed_cos[n - 1] = 2.0 * ac / m as f64;
            speed_sin[n - 1] = 2.0 * as_ / m as f64;
        }
        // The top quarter of the spectrum must already be negligible.
        let tail = speed_cos[3 * n_max / 4..]
            .iter()
            .chain(&speed_sin[3 * n_max / 4..])
            .fold(0.0f64, |acc, c| acc.max(c.abs()));
        if tail > 1e-9 * mean_speed {
            return Err(Error::ResolutionTooLow(format!(
                "arclength spectrum not resolved (tail coefficient {tail:.3e})"
            )));
        }
        let cutoff = 1e-17 * mean_speed;
        let keep = (0..n_max)
            .rev()
            .find(|&k| speed_cos[k].abs() > cutoff || speed_sin[k].abs() > cutoff)
            .map_or(0, |k| k + 1);
        speed_cos.truncate(keep);
        speed_sin.truncate(keep);

        let area = 0.5 * radial.iter().map(|r| r[0] * r[0]).sum::<f64>() * dtheta;

        let mut curve = BoundaryCurve {
            shape,
            delta,
            resolution,
            mean_speed,
            speed_cos,
            speed_sin,
            length: TAU * mean_speed,
            area,
            theta_table: thetas,
            xi_table: Vec::with_capacity(m),
            curvature_table: Vec::with_capacity(m),
            curvature_derivative_table: Vec::with_capacity(m),
        };
        for i in 0..m {
            let theta = curve.theta_table[i];
            let xi = curve.xi_of_theta(theta);
            let (k, dk_dtheta) = polar_curvature(radial[i]);
            curve.xi_table.push(xi);
            curve.curvature_table.push(k);
            curve.curvature_derivative_table.push(dk_dtheta / speed[i]);
        }

        let gauss_bonnet = curve
            .curvature_table
            .iter()
            .zip(&speed)
            .map(|(k, s)| k * s)
            .sum::<f64>()
            * dtheta;
        if ((gauss_bonnet - TAU) / TAU).abs() > 1e-6 {
            return Err(Error::ResolutionTooLow(format!(
                "discrete Gauss-Bonnet gives {gauss_bonnet:.9} instead of 2π"
            )));
        }
        Ok(curve)
    }

    pub fn shape(&self) -> &ShapeSpec {
        &self.shape
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `|∂Ω_δ|`.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// `|Ω_δ|`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// `|Ω|` of the unscaled domain.
    pub fn original_area(&self) -> f64 {
        self.area * self.delta * self.delta
    }

    pub fn theta_table(&self) -> &[f64] {
        &self.theta_table
    }

    pub fn xi_table(&self) -> &[f64] {
        &self.xi_table
    }

    pub fn curvature_table(&self) -> &[f64] {
        &self.curvature_table
    }

    pub fn curvature_derivative_table(&self) -> &[f64] {
        &self.curvature_derivative_table
    }

    /// Rescaled radial function `[R, R′, R″, R‴] / δ`.
    pub fn radial(&self, theta: f64) -> [f64; 4] {
        self.shape.radial(theta).map(|x| x / self.delta)
    }

    /// Wraps `xi` into `[0, L)`.
    pub fn wrap(&self, xi: f64) -> f64 {
        let w = xi.rem_euclid(self.length);
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    /// Signed periodic difference `a - b` in `(-L/2, L/2]`.
    pub fn periodic_diff(&self, a: f64, b: f64) -> f64 {
        let half = 0.5 * self.length;
        let d = (a - b).rem_euclid(self.length);
        if d > half {
            d - self.length
        } else {
            d
        }
    }

    /// Arclength from θ = 0, unwrapped (monotone in θ over ℝ).
    pub fn xi_of_theta(&self, theta: f64) -> f64 {
        let mut xi = self.mean_speed * theta;
        let (s1, c1) = theta.sin_cos();
        let (mut sn, mut cn) = (0.0, 1.0);
        for (k, (&a, &b)) in self.speed_cos.iter().zip(&self.speed_sin).enumerate() {
            // Angle-addition recurrence for sin(nθ), cos(nθ).
            let s_next = sn * c1 + cn * s1;
            let c_next = cn * c1 - sn * s1;
            sn = s_next;
            cn = c_next;
            let n = (k + 1) as f64;
            xi += (a * sn + b * (1.0 - cn)) / n;
        }
        xi
    }

    fn speed(&self, theta: f64) -> f64 {
        let r = self.radial(theta);
        r[0].hypot(r[1])
    }

    /// Polar angle of the boundary point at arclength `xi` (any real `xi`).
    pub fn theta_of_xi(&self, xi: f64) -> f64 {
        let target = self.wrap(xi);
        let mut theta = TAU * target / self.length;
        for _ in 0..50 {
            let step = (self.xi_of_theta(theta) - target) / self.speed(theta);
            theta -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        theta
    }

    /// `(K, K′)` of `∂Ω_δ` at arclength `xi`; `K′ = dK/dξ`.
    pub fn curvature_and_derivative(&self, xi: f64) -> (f64, f64) {
        let theta = self.theta_of_xi(xi);
        let r = self.radial(theta);
        let (k, dk) = polar_curvature(r);
        (k, dk / r[0].hypot(r[1]))
    }

    /// Boundary point with unit tangent (direction of increasing ξ) and
    /// inward unit normal.
    pub fn boundary_frame(&self, xi: f64) -> BoundaryFrame {
        self.frame_at_theta(self.theta_of_xi(xi))
    }

    pub(crate) fn frame_at_theta(&self, theta: f64) -> BoundaryFrame {
        let [r, r1, _, _] = self.radial(theta);
        let (s, c) = theta.sin_cos();
        let dz = [r1 * c - r * s, r1 * s + r * c];
        let speed = dz[0].hypot(dz[1]);
        let tangent = [dz[0] / speed, dz[1] / speed];
        BoundaryFrame {
            point: [r * c, r * s],
            tangent,
            normal: [-tangent[1], tangent[0]],
        }
    }

    /// Centred-difference estimate of `K′` from the curvature table, for
    /// cross-checking the analytic values.
    pub fn curvature_derivative_fd(&self) -> Vec<f64> {
        let m = self.resolution;
        let dtheta = TAU / m as f64;
        (0..m)
            .map(|i| {
                let kp = self.curvature_table[(i + 1) % m];
                let km = self.curvature_table[(i + m - 1) % m];
                (kp - km) / (2.0 * dtheta) / self.speed(self.theta_table[i])
            })
            .collect()
    }

    /// The constant `C₁*` of the upper bound on ε, for `f(u) = u³ − u`
    /// (`f′(1) = 2`, `∫_{-1}^{1} √F = 2/3`).
    pub fn c1_star(&self) -> f64 {
        let fprime_one = 2.0;
        let sqrt_f_integral = 2.0 / 3.0;
        8.0 * PI * fprime_one / (3.0 * 6f64.sqrt() * self.original_area() * sqrt_f_integral)
    }

    /// Largest admissible ε, `½ C₁* δ²`.
    pub fn eps_upper_bound(&self) -> f64 {
        0.5 * self.c1_star() * self.delta * self.delta
    }

    /// Arclength positions of the maxima of the curvature table.
    pub fn curvature_maxima(&self) -> Vec<f64> {
        let m = self.resolution;
        (0..m)
            .filter(|&i| {
                let k = self.curvature_table[i];
                k > self.curvature_table[(i + m - 1) % m] && k >= self.curvature_table[(i + 1) % m]
            })
            .map(|i| self.xi_table[i])
            .collect()
    }
}

/// The circular interface `Γ` of radius `rho` centred at `z(ξ)`.
#[derive(Clone, Copy, Debug)]
pub struct InterfaceGeometry {
    pub xi: f64,
    pub center: [f64; 2],
    pub tangent: [f64; 2],
    pub normal: [f64; 2],
    pub rho: f64,
}

impl InterfaceGeometry {
    pub fn new(curve: &BoundaryCurve, xi: f64, rho: f64) -> Self {
        let frame = curve.boundary_frame(xi);
        InterfaceGeometry {
            xi: curve.wrap(xi),
            center: frame.point,
            tangent: frame.tangent,
            normal: frame.normal,
            rho,
        }
    }

    /// `|x − z(ξ)| − ρ`: negative inside the droplet, positive outside.
    #[inline]
    pub fn signed_distance(&self, x: [f64; 2]) -> f64 {
        (x[0] - self.center[0]).hypot(x[1] - self.center[1]) - self.rho
    }
}
