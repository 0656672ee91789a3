use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use dropsim_core::droplet::DropletModel;
use dropsim_core::fields::{GridFocus, GridParams, GridSpec};
use dropsim_core::geometry::{BoundaryCurve, ShapeSpec};
use dropsim_core::manifold::project;
use dropsim_core::noise::{build_covariance, NoiseParams};
use dropsim_core::spde::{SolverState, Stepper};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 0.05;
const XI: f64 = 1.0;

fn setup() -> (Arc<BoundaryCurve>, GridParams) {
    let curve = Arc::new(BoundaryCurve::build(ShapeSpec::Disk, 0.2, 512).unwrap());
    let focus = GridFocus {
        theta: curve.theta_of_xi(XI),
        theta_width: 0.35,
        theta_ratio: 6.0,
        q_width: 0.35,
        q_ratio: 6.0,
    };
    (curve, GridParams::focused(192, 48, focus))
}

fn kernels(c: &mut Criterion) {
    let (curve, params) = setup();
    c.bench_function("grid_build_192x48", |b| b.iter(|| GridSpec::build(&curve, black_box(&params)).unwrap()));

    let grid = Arc::new(GridSpec::build(&curve, &params).unwrap());
    let model = DropletModel::new(curve.clone(), grid.clone(), EPS).unwrap();
    c.bench_function("droplet_state", |b| b.iter(|| model.state(black_box(XI)).unwrap()));

    let q = build_covariance(&grid, &NoiseParams { n_modes: 16, decay: 2.0, amplitude: 0.05 }).unwrap();
    let stepper = Stepper::new(&grid, EPS, 0.05).unwrap();
    let (_, u) = model.calibrate(XI).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("spde_step", |b| {
        let mut state = SolverState::new(u.clone(), EPS);
        b.iter(|| {
            let inc = q.sample_increment(0.05, &mut rng);
            stepper.step(&mut state, Some(&inc)).unwrap();
        })
    });

    let drop = model.state(XI).unwrap();
    let mut w = drop.u.clone();
    w.axpy(1e-2, &q.modes()[3]).unwrap();
    c.bench_function("projection", |b| b.iter(|| project(&model, black_box(&w), Some(XI), None).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernels
}
criterion_main!(benches);
