//! Monte Carlo estimate of the probability of leaving the neighbourhood of
//! the droplet manifold before a fixed horizon.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::seeds::derive_seed;
use super::stats::{quantile, wilson_interval};
use crate::droplet::DropletModel;
use crate::error::{Error, Result};
use crate::manifold::project;
use crate::noise::CovarianceSpec;
use crate::spde::{step_count, SolverState, Stepper};

/// Factor applied to the largest zero-noise excursion to obtain thresholds.
pub const THRESHOLD_FACTOR: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct ExitSpec {
    pub dt: f64,
    pub horizon: f64,
    /// Steps between neighbourhood checks.
    pub stride: usize,
    pub xi0: f64,
    /// Exit once `‖v‖` exceeds this.
    pub b_l2: f64,
    /// Exit once `‖∇v‖` exceeds this, when set.
    pub b_h1: Option<f64>,
    pub replicas: usize,
    pub base_seed: u64,
    /// Experiment id mixed into the replica seeds.
    pub experiment: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaOutcome {
    pub replica: usize,
    pub seed: u64,
    pub exit_time: Option<f64>,
    /// Error that ended the replica early; counted as an exit.
    pub failure: Option<String>,
    pub max_v: f64,
    pub max_grad_v: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitStats {
    pub horizon: f64,
    pub b_l2: f64,
    pub b_h1: Option<f64>,
    pub eta0: f64,
    pub replicas: usize,
    pub exits: usize,
    pub failed: usize,
    pub probability: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// 10%, 50% and 90% quantiles of the observed exit times.
    pub quantiles: [Option<f64>; 3],
    pub outcomes: Vec<ReplicaOutcome>,
}

impl ExitStats {
    /// Exit times binned into `bins` equal intervals of `[0, horizon]`.
    pub fn write_histogram_csv(&self, mut out: impl Write, bins: usize) -> Result<()> {
        let bins = bins.max(1);
        let width = self.horizon / bins as f64;
        let mut counts = vec![0usize; bins];
        for t in self.outcomes.iter().filter_map(|o| o.exit_time) {
            counts[((t / width) as usize).min(bins - 1)] += 1;
        }
        writeln!(out, "t_low,t_high,count")?;
        for (k, c) in counts.iter().enumerate() {
            writeln!(out, "{:e},{:e},{}", k as f64 * width, (k + 1) as f64 * width, c)?;
        }
        Ok(())
    }

    pub fn write_outcomes_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "replica,seed,exit_time,failure,max_v,max_grad_v")?;
        for o in &self.outcomes {
            let t = o.exit_time.map(|t| format!("{t:e}")).unwrap_or_default();
            let f = o.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, "{},{},{},{},{:e},{:e}", o.replica, o.seed, t, f, o.max_v, o.max_grad_v)?;
        }
        Ok(())
    }
}

/// Thresholds from a zero-noise run: `THRESHOLD_FACTOR` times the largest
/// `‖v‖` and `‖∇v‖` seen before the horizon.
pub fn fit_thresholds(model: &DropletModel, spec: &ExitSpec) -> Result<(f64, f64)> {
    let silent = ExitSpec { b_l2: f64::INFINITY, b_h1: None, replicas: 1, ..spec.clone() };
    let stepper = Stepper::new(model.grid(), model.eps(), spec.dt)?;
    let out = replica(model, None, &stepper, &silent, 0);
    if let Some(f) = out.failure {
        return Err(Error::ProjectionDiverged(format!("zero-noise reference run failed: {f}")));
    }
    Ok((THRESHOLD_FACTOR * out.max_v, THRESHOLD_FACTOR * out.max_grad_v))
}

/// Independent replicas of the full equation from the droplet at `xi0`.
/// Replicas run in parallel, each with its own derived seed, and are
/// reported in replica order.
pub fn exit_time_mc(model: &DropletModel, noise: &CovarianceSpec, spec: &ExitSpec) -> Result<ExitStats> {
    if spec.replicas == 0 || spec.stride == 0 {
        return Err(Error::ParamOutOfRange("replicas and stride must be at least 1".into()));
    }
    let stepper = Stepper::new(model.grid(), model.eps(), spec.dt)?;
    let noise = if noise.is_silent() { None } else { Some(noise) };
    let outcomes: Vec<ReplicaOutcome> =
        (0..spec.replicas).into_par_iter().map(|r| replica(model, noise, &stepper, spec, r)).collect();
    let exits = outcomes.iter().filter(|o| o.exit_time.is_some()).count();
    let failed = outcomes.iter().filter(|o| o.failure.is_some()).count();
    let times: Vec<f64> = outcomes.iter().filter_map(|o| o.exit_time).collect();
    let (wilson_low, wilson_high) = wilson_interval(exits, spec.replicas);
    Ok(ExitStats {
        horizon: spec.horizon,
        b_l2: spec.b_l2,
        b_h1: spec.b_h1,
        eta0: noise.map_or(0.0, |q| q.eta0()),
        replicas: spec.replicas,
        exits,
        failed,
        probability: exits as f64 / spec.replicas as f64,
        wilson_low,
        wilson_high,
        quantiles: [quantile(&times, 0.1), quantile(&times, 0.5), quantile(&times, 0.9)],
        outcomes,
    })
}

fn replica(
    model: &DropletModel,
    noise: Option<&CovarianceSpec>,
    stepper: &Stepper,
    spec: &ExitSpec,
    index: usize,
) -> ReplicaOutcome {
    let seed = derive_seed(spec.base_seed, &spec.experiment, index as u64);
    let mut out = ReplicaOutcome { replica: index, seed, exit_time: None, failure: None, max_v: 0.0, max_grad_v: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = match model.calibrate(spec.xi0) {
        Ok((_, u)) => SolverState::new(u, model.eps()),
        Err(e) => {
            out.failure = Some(e.to_string());
            out.exit_time = Some(0.0);
            return out;
        }
    };
    let mut xi = spec.xi0;
    for n in 1..=step_count(spec.horizon, spec.dt) {
        let inc = noise.map(|q| q.sample_increment(spec.dt, &mut rng));
        if let Err(e) = stepper.step(&mut state, inc.as_ref()) {
            out.failure = Some(e.to_string());
            out.exit_time = Some(state.t);
            return out;
        }
        if n % spec.stride != 0 {
            continue;
        }
        let d = match project(model, &state.w, Some(xi), None) {
            Ok(d) => d,
            Err(e) => {
                out.failure = Some(e.to_string());
                out.exit_time = Some(state.t);
                return out;
            }
        };
        xi = d.xi;
        let v = d.v.norm();
        let grad = d.v.grad_norm_sq().max(0.0).sqrt();
        out.max_v = out.max_v.max(v);
        out.max_grad_v = out.max_grad_v.max(grad);
        if v > spec.b_l2 || spec.b_h1.is_some_and(|b| grad > b) {
            out.exit_time = Some(state.t);
            return out;
        }
    }
    out
}
