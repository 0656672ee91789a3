//! Full equation against the reduced equation, driven by the same noise.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::droplet::DropletModel;
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::manifold::{asymptotic_drift, project, reduced_drift, Decomposition};
use crate::noise::CovarianceSpec;
use crate::spde::{step_count, SolverState, Stepper};

#[derive(Clone, Debug)]
pub struct CompareSpec {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between projections of the full state.
    pub stride: usize,
    /// Steps between refreshes of the reduced coefficients.
    pub refresh: usize,
    pub xi0: f64,
    /// Full-equation initial state; the droplet at `xi0` when absent.
    pub initial: Option<ScalarField>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub t: f64,
    pub xi_full: f64,
    pub xi_reduced: f64,
    pub xi_asymptotic: f64,
    pub v_norm: f64,
    pub v_h1eps: f64,
}

/// Change of the projected position over one stride, next to the noise
/// term of the reduced equation over the same steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StrideIncrement {
    pub dxi_full: f64,
    /// `Σ (σ, ΔW)` with σ from the projection at the start of the stride.
    pub sigma_dw: f64,
    /// `(Qσ, σ)·Δt` over the stride.
    pub expected_qv: f64,
    /// `b·Δt` with b from the projection at the start of the stride.
    pub drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub length: f64,
    pub rows: Vec<CompareRow>,
    pub increments: Vec<StrideIncrement>,
    /// `sup |ξ_full − ξ_reduced|` modulo the boundary length.
    pub sup_gap_reduced: f64,
    pub sup_gap_asymptotic: f64,
    pub sup_v: f64,
    pub sup_v_h1eps: f64,
    pub aborted: Option<String>,
}

impl CompareReport {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,xi_full,xi_reduced,xi_asymptotic,v_norm,v_h1eps")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.xi_full, r.xi_reduced, r.xi_asymptotic, r.v_norm, r.v_h1eps
            )?;
        }
        Ok(())
    }

    pub fn write_increments_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "dxi_full,sigma_dw,expected_qv,drift")?;
        for r in &self.increments {
            writeln!(out, "{:e},{:e},{:e},{:e}", r.dxi_full, r.sigma_dw, r.expected_qv, r.drift)?;
        }
        Ok(())
    }
}

/// Reduced coefficients on the manifold (`v = 0`) at one position.
struct OnManifold {
    b: f64,
    asymptotic: f64,
    sigma: ScalarField,
}

fn on_manifold(model: &DropletModel, noise: &CovarianceSpec, xi: f64) -> Result<OnManifold> {
    let drop = model.state(xi)?;
    let zero = ScalarField::zeros(model.grid());
    let c = reduced_drift(&drop, &zero, noise, model.eps())?;
    Ok(OnManifold { b: c.b, asymptotic: asymptotic_drift(model, &drop, noise)?, sigma: c.sigma })
}

/// Runs the full equation and two reduced equations (full drift on the
/// manifold, and its leading-order surrogate) with common increments.
pub fn compare_paths<R: Rng + ?Sized>(
    model: &DropletModel,
    noise: &CovarianceSpec,
    spec: &CompareSpec,
    rng: &mut R,
) -> Result<CompareReport> {
    if spec.stride == 0 || spec.refresh == 0 {
        return Err(Error::ParamOutOfRange("stride and refresh must be at least 1".into()));
    }
    let eps = model.eps();
    let curve = model.curve();
    let stepper = Stepper::new(model.grid(), eps, spec.dt)?;
    let w0 = match &spec.initial {
        Some(w) => w.clone(),
        None => model.calibrate(spec.xi0)?.1,
    };
    let mut state = SolverState::new(w0, eps);
    let mut full = project(model, &state.w, Some(spec.xi0), None)?;
    let (mut xi_red, mut xi_asym) = (full.xi, full.xi);
    let mut red = on_manifold(model, noise, xi_red)?;
    let mut asym = on_manifold(model, noise, xi_asym)?;

    let mut report = CompareReport {
        length: curve.length(),
        rows: Vec::new(),
        increments: Vec::new(),
        sup_gap_reduced: 0.0,
        sup_gap_asymptotic: 0.0,
        sup_v: 0.0,
        sup_v_h1eps: 0.0,
        aborted: None,
    };
    let record = |report: &mut CompareReport, t: f64, full: &Decomposition, xi_red: f64, xi_asym: f64| {
        let row = CompareRow {
            t,
            xi_full: full.xi,
            xi_reduced: xi_red,
            xi_asymptotic: xi_asym,
            v_norm: full.v.norm(),
            v_h1eps: full.v.h1eps_norm(eps),
        };
        report.sup_gap_reduced = report.sup_gap_reduced.max(curve.periodic_diff(full.xi, xi_red).abs());
        report.sup_gap_asymptotic = report.sup_gap_asymptotic.max(curve.periodic_diff(full.xi, xi_asym).abs());
        report.sup_v = report.sup_v.max(row.v_norm);
        report.sup_v_h1eps = report.sup_v_h1eps.max(row.v_h1eps);
        report.rows.push(row);
    };
    record(&mut report, 0.0, &full, xi_red, xi_asym);

    let (mut sigma_full, mut qv_rate, mut b_full) = stride_coefficients(&full, noise, eps)?;
    let mut sigma_dw = 0.0;
    let steps = step_count(spec.t_end, spec.dt);
    for n in 1..=steps {
        let inc = if noise.is_silent() { None } else { Some(noise.sample_increment(spec.dt, rng)) };
        if let Err(e) = stepper.step(&mut state, inc.as_ref()) {
            report.aborted = Some(e.to_string());
            break;
        }
        let (dw_red, dw_asym, dw_full) = match &inc {
            Some(inc) => (red.sigma.inner(&inc.dw)?, asym.sigma.inner(&inc.dw)?, sigma_full.inner(&inc.dw)?),
            None => (0.0, 0.0, 0.0),
        };
        sigma_dw += dw_full;
        xi_red = curve.wrap(xi_red + red.b * spec.dt + dw_red);
        xi_asym = curve.wrap(xi_asym + asym.asymptotic * spec.dt + dw_asym);
        if !(xi_red.is_finite() && xi_asym.is_finite()) {
            report.aborted = Some(Error::NonFinite("reduced path").to_string());
            break;
        }
        if n % spec.refresh == 0 {
            red = on_manifold(model, noise, xi_red)?;
            asym = on_manifold(model, noise, xi_asym)?;
        }
        if n % spec.stride == 0 {
            let next = match project(model, &state.w, Some(full.xi), None) {
                Ok(d) => d,
                Err(e) => {
                    report.aborted = Some(e.to_string());
                    break;
                }
            };
            let span = spec.stride as f64 * spec.dt;
            report.increments.push(StrideIncrement {
                dxi_full: curve.periodic_diff(next.xi, full.xi),
                sigma_dw,
                expected_qv: qv_rate * span,
                drift: b_full * span,
            });
            full = next;
            (sigma_full, qv_rate, b_full) = stride_coefficients(&full, noise, eps)?;
            sigma_dw = 0.0;
            record(&mut report, state.t, &full, xi_red, xi_asym);
        }
    }
    Ok(report)
}

fn stride_coefficients(full: &Decomposition, noise: &CovarianceSpec, eps: f64) -> Result<(ScalarField, f64, f64)> {
    let coeffs = reduced_drift(&full.drop, &full.v, noise, eps)?;
    Ok((coeffs.sigma, coeffs.qsigma_sigma, coeffs.b))
}
