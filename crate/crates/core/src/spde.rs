//! Full solver for `dw = [ε²Δw − f(w) + mean f(w)] dt + dW` with Neumann
//! boundary conditions.
//!
//! Semi-implicit step: diffusion implicit, reaction and noise explicit. In
//! weighted form the system is `(W + dt·ε²G) w′ = W[w + dt(−f(w) + mean f) + ΔW]`,
//! factored once. Summing the rows gives `Σ W w′ = Σ W w` exactly since
//! `G·1 = 0` and both the reaction correction and the noise have zero mass.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::droplet::{potential, reaction, DropletModel, DropletState};
use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField, SpdFactor};
use crate::manifold::project;
use crate::noise::{CovarianceSpec, NoiseIncrement};

/// `dt·max|f′(w)|` above which a step is refused.
pub const REACTION_BUDGET: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SolverState {
    pub w: ScalarField,
    pub t: f64,
    pub eps: f64,
    pub mass0: f64,
    pub steps: u64,
}

impl SolverState {
    pub fn new(w: ScalarField, eps: f64) -> Self {
        let (_, mass0) = w.mean_mass();
        SolverState { w, t: 0.0, eps, mass0, steps: 0 }
    }

    pub fn mass(&self) -> f64 {
        self.w.mean_mass().1
    }
}

/// Factored implicit operator for one `(grid, ε, dt)`.
pub struct Stepper {
    grid: Arc<GridSpec>,
    eps: f64,
    dt: f64,
    factor: SpdFactor,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper").field("eps", &self.eps).field("dt", &self.dt).finish()
    }
}

impl Stepper {
    pub fn new(grid: &Arc<GridSpec>, eps: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::ParamOutOfRange(format!("dt must be positive, got {dt}")));
        }
        let factor = SpdFactor::new(grid.stiffness(), dt * eps * eps, grid.weights())?;
        Ok(Stepper { grid: grid.clone(), eps, dt, factor })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Advances `state` by one step, adding `inc` if given.
    pub fn step(&self, state: &mut SolverState, inc: Option<&NoiseIncrement>) -> Result<()> {
        if let Some(inc) = inc {
            if !inc.dw.same_grid(&state.w) {
                return Err(Error::GridMismatch);
            }
            if (inc.dt - self.dt).abs() > 1e-12 * self.dt {
                return Err(Error::ParamOutOfRange(format!(
                    "increment dt {} differs from stepper dt {}",
                    inc.dt, self.dt
                )));
            }
        }
        let w = state.w.values();
        let stiff = w.iter().fold(0.0f64, |m, &x| m.max((3.0 * x * x - 1.0).abs())) * self.dt;
        if stiff > REACTION_BUDGET {
            return Err(Error::StepTooLarge(stiff));
        }
        let weights = self.grid.weights();
        let fw: Vec<f64> = w.iter().map(|&x| reaction(x)).collect();
        let mean_f = weights.iter().zip(&fw).map(|(a, b)| a * b).sum::<f64>() / self.grid.area();
        let mut rhs: Vec<f64> = w
            .iter()
            .zip(&fw)
            .zip(weights)
            .map(|((&x, &f), &wt)| wt * (x + self.dt * (mean_f - f)))
            .collect();
        if let Some(inc) = inc {
            for ((r, d), wt) in rhs.iter_mut().zip(inc.dw.values()).zip(weights) {
                *r += wt * d;
            }
        }
        self.factor.solve_in_place(&mut rhs);
        state.w.values_mut().copy_from_slice(&rhs);
        if !state.w.is_finite() {
            return Err(Error::NonFinite("SPDE step"));
        }
        state.t += self.dt;
        state.steps += 1;
        Ok(())
    }
}

/// One semi-implicit step of the full equation.
pub fn step_spde(stepper: &Stepper, state: &mut SolverState, inc: Option<&NoiseIncrement>) -> Result<()> {
    stepper.step(state, inc)
}

/// `∫ ε²|∇w|²/2 + F(w)`.
pub fn energy(w: &ScalarField, eps: f64) -> f64 {
    let bulk: f64 = w.grid().weights().iter().zip(w.values()).map(|(a, &x)| a * potential(x)).sum();
    0.5 * eps * eps * w.grad_norm_sq() + bulk
}

/// Time series row of a full-equation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub xi: f64,
    pub v_norm: f64,
    pub v_h1eps: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PathRecord {
    pub rows: Vec<PathRow>,
    pub checkpoints: Vec<(f64, ScalarField)>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl PathRecord {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,mass,energy,xi,v_norm,v_h1eps")?;
        for r in &self.rows {
            writeln!(out, "{:e},{:e},{:e},{:e},{:e},{:e}", r.t, r.mass, r.energy, r.xi, r.v_norm, r.v_h1eps)?;
        }
        Ok(())
    }
}

/// Settings of a single full-equation run.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub xi0: f64,
    pub initial: Option<ScalarField>,
    /// Keep a copy of `w` every this many recorded rows (0 disables).
    pub checkpoint_every: usize,
    /// Abort once `‖v‖` exceeds this.
    pub neighborhood: Option<f64>,
}

/// `u(ξ) + v` with `v` along `direction`, made mass-free and orthogonal to
/// `∂ξu`, scaled to `‖v‖ = norm`.
pub fn perturbed_state(drop: &DropletState, direction: &ScalarField, norm: f64) -> Result<ScalarField> {
    let mut v = direction.clone();
    let (mean, _) = v.mean_mass();
    for x in v.values_mut() {
        *x -= mean;
    }
    let du = &drop.du;
    v.axpy(-v.inner(du)? / du.norm().powi(2), du)?;
    let size = v.norm();
    if !(size > 0.0) {
        return Err(Error::ParamOutOfRange("perturbation direction is parallel to the droplet translation".into()));
    }
    let mut w = drop.u.clone();
    w.axpy(norm / size, &v)?;
    Ok(w)
}

/// Number of steps covering `[0, t_end]`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    (t_end / dt + 1e-9).floor() as usize
}

/// Runs the full equation from `spec.initial` (or the droplet at `xi0`),
/// recording every `stride` steps.
pub fn run<R: Rng + ?Sized>(
    model: &DropletModel,
    noise: &CovarianceSpec,
    spec: &RunSpec,
    rng: &mut R,
) -> Result<PathRecord> {
    if spec.stride == 0 {
        return Err(Error::ParamOutOfRange("stride must be at least 1".into()));
    }
    let eps = model.eps();
    let stepper = Stepper::new(model.grid(), eps, spec.dt)?;
    let w0 = match &spec.initial {
        Some(w) => w.clone(),
        None => model.calibrate(spec.xi0)?.1,
    };
    let mut state = SolverState::new(w0, eps);
    let mut record = PathRecord::default();
    let mut xi = spec.xi0;
    let steps = step_count(spec.t_end, spec.dt);
    let observe = |state: &SolverState, xi: &mut f64, record: &mut PathRecord| -> Result<bool> {
        let d = project(model, &state.w, Some(*xi), None)?;
        *xi = d.xi;
        let v_norm = d.v.norm();
        record.rows.push(PathRow {
            t: state.t,
            mass: state.mass(),
            energy: energy(&state.w, eps),
            xi: d.xi,
            v_norm,
            v_h1eps: d.v.h1eps_norm(eps),
        });
        if spec.checkpoint_every > 0 && (record.rows.len() - 1).is_multiple_of(spec.checkpoint_every) {
            record.checkpoints.push((state.t, state.w.clone()));
        }
        Ok(spec.neighborhood.is_some_and(|r| v_norm > r))
    };
    if let Err(e) = observe(&state, &mut xi, &mut record) {
        record.aborted = Some(e.to_string());
        return Ok(record);
    }
    for n in 1..=steps {
        let inc = if noise.is_silent() { None } else { Some(noise.sample_increment(spec.dt, rng)) };
        stepper.step(&mut state, inc.as_ref())?;
        if n % spec.stride == 0 {
            match observe(&state, &mut xi, &mut record) {
                Ok(false) => {}
                Ok(true) => {
                    record.aborted = Some(format!("left the neighbourhood at t = {}", state.t));
                    break;
                }
                Err(e) => {
                    record.aborted = Some(e.to_string());
                    break;
                }
            }
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridParams;
    use crate::geometry::{BoundaryCurve, ShapeSpec};
    use crate::noise::{build_covariance, NoiseParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<GridSpec> {
        let curve = BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap();
        Arc::new(GridSpec::build(&curve, &GridParams::uniform(64, 24)).unwrap())
    }

    #[test]
    fn constant_state_is_fixed() {
        let g = grid();
        let stepper = Stepper::new(&g, 0.05, 0.2).unwrap();
        let mut s = SolverState::new(ScalarField::constant(&g, 0.3), 0.05);
        for _ in 0..20 {
            stepper.step(&mut s, None).unwrap();
        }
        assert!(s.w.values().iter().all(|&x| (x - 0.3).abs() < 1e-13));
        assert_eq!(s.steps, 20);
    }

    #[test]
    fn noisy_steps_conserve_mass() {
        let g = grid();
        let q = build_covariance(&g, &NoiseParams { n_modes: 8, decay: 2.0, amplitude: 0.5 }).unwrap();
        let stepper = Stepper::new(&g, 0.05, 0.1).unwrap();
        let w0 = ScalarField::from_fn(&g, |p| (0.3 * p[0]).tanh());
        let mut s = SolverState::new(w0, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let inc = q.sample_increment(0.1, &mut rng);
            stepper.step(&mut s, Some(&inc)).unwrap();
        }
        assert!((s.mass() - s.mass0).abs() <= 1e-10 * g.area());
    }

    #[test]
    fn large_steps_are_refused() {
        let g = grid();
        let stepper = Stepper::new(&g, 0.05, 0.3).unwrap();
        let mut s = SolverState::new(ScalarField::constant(&g, 1.0), 0.05);
        assert!(matches!(stepper.step(&mut s, None), Err(Error::StepTooLarge(_))));
    }

    #[test]
    fn deterministic_energy_decreases() {
        let g = grid();
        let stepper = Stepper::new(&g, 0.3, 0.2).unwrap();
        let w0 = ScalarField::from_fn(&g, |p| (0.5 * p[0] + 0.2 * p[1]).sin() * 0.9);
        let mut s = SolverState::new(w0, 0.3);
        let mut e = energy(&s.w, 0.3);
        for _ in 0..100 {
            stepper.step(&mut s, None).unwrap();
            let next = energy(&s.w, 0.3);
            assert!(next <= e + 1e-8, "{next} > {e}");
            e = next;
        }
    }
}
