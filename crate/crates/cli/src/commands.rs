use std::path::PathBuf;
use std::sync::Arc;

use dropsim_core::config::SimConfig;
use dropsim_core::droplet::{velocity_c, DropletModel, DropletState};
use dropsim_core::experiments::{
    compare_paths, derive_seed, exit_time_mc, fit_thresholds, scaling_suite, CompareSpec, ExitSpec, ExitStats,
};
use dropsim_core::fields::{write_csv, write_field, ScalarField};
use dropsim_core::geometry::BoundaryCurve;
use dropsim_core::manifold::residual_budget;
use dropsim_core::noise::{build_covariance, CovarianceSpec};
use dropsim_core::spde::{perturbed_state, run, RunSpec};
use dropsim_core::{Error, Result, VERSION};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::rundir::{Meta, RunDir};
use crate::{Cli, Command};

const HISTOGRAM_BINS: usize = 20;

/// Everything a subcommand needs: the effective config, the droplet model
/// and the droplet at `initial.xi0`.
struct Setup {
    config: SimConfig,
    curve: Arc<BoundaryCurve>,
    model: DropletModel,
    drop: DropletState,
    dir: RunDir,
}

pub fn dispatch(cli: &Cli) -> Result<PathBuf> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::ParamOutOfRange(format!("cannot start {n} workers: {e}")))?;
    }
    let setup = prepare(cli)?;
    match cli.command {
        Command::Simulate => simulate(&setup)?,
        Command::Compare => compare(&setup)?,
        Command::Scalings => scalings(&setup)?,
        Command::ExitTimes => exit_times(&setup)?,
        Command::DropletDump => droplet_dump(&setup)?,
    }
    Ok(setup.dir.path().to_path_buf())
}

fn prepare(cli: &Cli) -> Result<Setup> {
    let text = std::fs::read_to_string(&cli.config)?;
    // The subcommand and flags go last so that they win over the environment.
    let mut vars: Vec<(String, String)> = std::env::vars().collect();
    vars.push(("DROPSIM_EXPERIMENT__KIND".into(), format!("\"{}\"", cli.command.name())));
    if let Some(seed) = cli.seed {
        vars.push(("DROPSIM_SEEDS__BASE".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        vars.push(("DROPSIM_OUTPUT__DIR".into(), toml_string(&out.to_string_lossy())));
    }
    let config = SimConfig::parse_with_overrides(&text, vars)?;

    let curve = config.curve()?;
    let grid = config.grid_spec(&curve)?;
    let model = DropletModel::new(curve.clone(), grid.clone(), config.model.eps)?;
    let xi0 = curve.wrap(config.initial.xi0);
    let drop = model.state(xi0)?;
    let (residual, budget) = residual_budget(&model, &drop);

    let dir = RunDir::create(config.output.dir.as_ref())?;
    dir.write_config(&config)?;
    let meta = Meta {
        command: cli.command.name(),
        version: VERSION,
        grid_hash: format!("{:016x}", grid.hash()),
        grid_nodes: grid.len(),
        domain_area: grid.area(),
        eps: model.eps(),
        eps_bound: curve.eps_upper_bound(),
        xi0,
        rho: drop.rho,
        residual,
        residual_budget: budget,
        fd_error: drop.fd_error,
        resolution_ratio: model.resolution_ratio(xi0),
        warnings: config.warnings(),
    };
    dir.write_json("meta.json", &meta)?;
    Ok(Setup { config, curve, model, drop, dir })
}

fn toml_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn noise(setup: &Setup) -> Result<CovarianceSpec> {
    build_covariance(setup.model.grid(), &setup.config.noise_params())
}

/// Droplet at `xi0`, plus the configured perturbation along a noise mode.
fn initial_state(setup: &Setup, q: &CovarianceSpec) -> Result<Option<ScalarField>> {
    let init = &setup.config.initial;
    if init.perturbation == 0.0 {
        return Ok(None);
    }
    let mode = q.modes().get(init.perturbation_mode - 1).ok_or(Error::ModeCountExceedsGrid {
        requested: init.perturbation_mode,
        available: q.modes().len(),
    })?;
    perturbed_state(&setup.drop, mode, init.perturbation).map(Some)
}

fn simulate(setup: &Setup) -> Result<()> {
    let c = &setup.config;
    let q = noise(setup)?;
    let spec = RunSpec {
        dt: c.time.dt,
        t_end: c.time.t_end,
        stride: c.time.stride,
        xi0: setup.drop.xi,
        initial: initial_state(setup, &q)?,
        checkpoint_every: c.time.checkpoint_every,
        neighborhood: None,
    };
    let seed = derive_seed(c.seeds.base, "simulate", 0);
    setup.dir.write_seeds(c.seeds.base, &[("simulate".into(), 0, seed)])?;
    let record = run(&setup.model, &q, &spec, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let dir = &setup.dir;
    dir.write_with("path.csv", |out| record.write_csv(out))?;
    dir.write_with("noise.csv", |out| q.write_csv(out))?;
    for (k, (_, w)) in record.checkpoints.iter().enumerate() {
        dir.write_with(&format!("checkpoints/w_{k:05}.bin"), |out| write_field(out, w))?;
    }
    let (first, last) = (&record.rows[0], &record.rows[record.rows.len() - 1]);
    let summary = json!({
        "rows": record.rows.len(),
        "checkpoints": record.checkpoints.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
        "aborted": record.aborted,
        "t_final": last.t,
        "xi_final": last.xi,
        "v_norm_final": last.v_norm,
        "v_norm_max": record.rows.iter().map(|r| r.v_norm).fold(0.0, f64::max),
        "mass_drift": (last.mass - first.mass).abs(),
        "energy_initial": first.energy,
        "energy_final": last.energy,
        "noise": q.summary(),
    });
    dir.write_json("summary.json", &summary)
}

fn compare(setup: &Setup) -> Result<()> {
    let c = &setup.config;
    let q = noise(setup)?;
    let spec = CompareSpec {
        dt: c.time.dt,
        t_end: c.time.t_end,
        stride: c.time.stride,
        refresh: c.experiment.refresh,
        xi0: setup.drop.xi,
        initial: initial_state(setup, &q)?,
    };
    let seed = derive_seed(c.seeds.base, "compare", 0);
    setup.dir.write_seeds(c.seeds.base, &[("compare".into(), 0, seed)])?;
    let report = compare_paths(&setup.model, &q, &spec, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let dir = &setup.dir;
    dir.write_with("compare.csv", |out| report.write_csv(out))?;
    dir.write_with("increments.csv", |out| report.write_increments_csv(out))?;
    let last = report.rows.last();
    let summary = json!({
        "length": report.length,
        "rows": report.rows.len(),
        "aborted": report.aborted,
        "sup_gap_reduced": report.sup_gap_reduced,
        "sup_gap_asymptotic": report.sup_gap_asymptotic,
        "sup_v": report.sup_v,
        "sup_v_h1eps": report.sup_v_h1eps,
        "xi_final": last.map(|r| [r.xi_full, r.xi_reduced, r.xi_asymptotic]),
        "velocity_c": velocity_c(&setup.curve, setup.drop.xi),
        "noise": q.summary(),
    });
    dir.write_json("summary.json", &summary)
}

fn scalings(setup: &Setup) -> Result<()> {
    let c = &setup.config;
    setup.dir.write_seeds(c.seeds.base, &[])?;
    let report = scaling_suite(&setup.curve, setup.model.grid(), setup.drop.xi, &c.model.eps_ladder)?;
    let dir = &setup.dir;
    dir.write_with("scaling_values.csv", |out| report.write_values_csv(out))?;
    dir.write_with("scaling_slopes.csv", |out| report.write_slopes_csv(out))?;
    dir.write_json("scalings.json", &report)
}

fn exit_times(setup: &Setup) -> Result<()> {
    let c = &setup.config;
    let q = noise(setup)?;
    let ladder = if c.experiment.amplitude_ladder.is_empty() {
        vec![c.noise.amplitude]
    } else {
        c.experiment.amplitude_ladder.clone()
    };
    let mut spec = ExitSpec {
        dt: c.time.dt,
        horizon: c.time.t_end,
        stride: c.time.stride,
        xi0: setup.drop.xi,
        b_l2: 0.0,
        b_h1: None,
        replicas: c.experiment.replicas,
        base_seed: c.seeds.base,
        experiment: String::new(),
    };
    let (b_l2, b_h1) = fit_thresholds(&setup.model, &spec)?;
    spec.b_l2 = b_l2;
    spec.b_h1 = c.experiment.h1.then_some(b_h1);

    let dir = &setup.dir;
    let mut streams = Vec::new();
    let mut rungs = Vec::new();
    for (k, &amplitude) in ladder.iter().enumerate() {
        spec.experiment = format!("exit-times/{k}");
        let stats: ExitStats = exit_time_mc(&setup.model, &q.with_amplitude(amplitude), &spec)?;
        streams.extend(stats.outcomes.iter().map(|o| (spec.experiment.clone(), o.replica as u64, o.seed)));
        dir.write_json(&format!("exit_{k}.json"), &stats)?;
        dir.write_with(&format!("exit_{k}_outcomes.csv"), |out| stats.write_outcomes_csv(out))?;
        dir.write_with(&format!("exit_{k}_histogram.csv"), |out| stats.write_histogram_csv(out, HISTOGRAM_BINS))?;
        rungs.push(json!({
            "amplitude": amplitude,
            "eta0": stats.eta0,
            "exits": stats.exits,
            "failed": stats.failed,
            "replicas": stats.replicas,
            "probability": stats.probability,
            "wilson": [stats.wilson_low, stats.wilson_high],
            "quantiles": stats.quantiles,
        }));
    }
    dir.write_seeds(c.seeds.base, &streams)?;
    let summary = json!({
        "horizon": spec.horizon,
        "b_l2": spec.b_l2,
        "b_h1": spec.b_h1,
        "rungs": rungs,
    });
    dir.write_json("summary.json", &summary)
}

fn droplet_dump(setup: &Setup) -> Result<()> {
    let drop = &setup.drop;
    let dir = &setup.dir;
    dir.write_seeds(setup.config.seeds.base, &[])?;
    dir.write_with("u.bin", |out| write_field(out, &drop.u))?;
    dir.write_with("u.csv", |out| write_csv(out, &drop.u))?;
    dir.write_with("du.csv", |out| write_csv(out, &drop.du))?;
    let (_, mass) = drop.u.mean_mass();
    let summary = json!({
        "xi": drop.xi,
        "eps": drop.eps,
        "rho": drop.rho,
        "h_cut": drop.h_cut,
        "h_xi": drop.h_xi,
        "fd_error": drop.fd_error,
        "center": drop.interface.center,
        "normal": drop.interface.normal,
        "mass": mass,
        "target_mass": setup.model.grid().area() - std::f64::consts::PI,
        "a": drop.du.norm().powi(2),
        "velocity_c": velocity_c(&setup.curve, drop.xi),
    });
    dir.write_json("droplet.json", &summary)
}
