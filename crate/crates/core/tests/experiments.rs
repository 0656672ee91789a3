use std::sync::Arc;

use dropsim_core::droplet::DropletModel;
use dropsim_core::experiments::{
    compare_paths, exit_time_mc, fit_thresholds, scaling_suite, spectral_gap, CompareSpec, ExitSpec,
};
use dropsim_core::fields::{GridFocus, GridParams, GridSpec, ScalarField};
use dropsim_core::geometry::{BoundaryCurve, ShapeSpec};
use dropsim_core::manifold::residual_budget;
use dropsim_core::noise::{build_covariance, NoiseParams};
use dropsim_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn focused(curve: &BoundaryCurve, xi: f64, n_theta: usize, n_q: usize) -> Arc<GridSpec> {
    let focus = GridFocus {
        theta: curve.theta_of_xi(xi),
        theta_width: 0.35,
        theta_ratio: 6.0,
        q_width: 0.35,
        q_ratio: 6.0,
    };
    Arc::new(GridSpec::build(curve, &GridParams::focused(n_theta, n_q, focus)).unwrap())
}

fn exit_model() -> DropletModel {
    let curve = Arc::new(BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap());
    let grid = focused(&curve, 1.0, 96, 32);
    DropletModel::new(curve, grid, 0.06).unwrap()
}

fn exit_spec(replicas: usize) -> ExitSpec {
    ExitSpec {
        dt: 0.05,
        horizon: 5.0,
        stride: 5,
        xi0: 1.0,
        b_l2: 0.0,
        b_h1: None,
        replicas,
        base_seed: 5,
        experiment: "exit-test".into(),
    }
}

#[test]
fn one_eps_is_not_enough_for_a_slope() {
    let curve = Arc::new(BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap());
    let grid = focused(&curve, 1.0, 96, 32);
    assert!(matches!(scaling_suite(&curve, &grid, 1.0, &[0.05]), Err(Error::InsufficientPoints(1))));
}

#[test]
fn scaling_slopes_agree_between_disk_and_ellipse() {
    let ladder = [0.03, 0.04, 0.05, 0.06];
    let run = |shape: ShapeSpec| {
        let curve = Arc::new(BoundaryCurve::build(shape, 0.2, 512).unwrap());
        let xi = 0.3 * curve.length();
        let grid = focused(&curve, xi, 384, 128);
        scaling_suite(&curve, &grid, xi, &ladder).unwrap()
    };
    let disk = run(ShapeSpec::Disk);
    let ellipse = run(ShapeSpec::Ellipse { a: 1.2, b: 1.0 });
    for row in &ellipse.rows {
        let other = disk.row(&row.name).unwrap();
        if row.name == "d2u_du" {
            // Vanishes identically on the disk, so there is no slope to compare.
            let disk_max = other.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let ellipse_min = row.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            assert!(disk_max < 1e-3 * ellipse_min, "disk (d2u, du) = {disk_max:e}");
            continue;
        }
        assert!(
            (row.slope - other.slope).abs() <= 0.05,
            "{}: ellipse {:.4} vs disk {:.4}",
            row.name,
            row.slope,
            other.slope
        );
    }
}

/// Lowest two eigenvalues of `K x = λ M x` on `{x : Cᵀx = 0}`, densely.
fn dense_constrained_pencil(k: &DMatrix<f64>, m: &DMatrix<f64>, c: &DMatrix<f64>) -> (f64, f64) {
    let n = k.nrows();
    // Null space of Cᵀ from the full SVD of C.
    let svd = c.clone().svd(true, false);
    let u = svd.u.unwrap();
    let z = if u.ncols() == n {
        u.columns(c.ncols(), n - c.ncols()).into_owned()
    } else {
        let full = DMatrix::<f64>::identity(n, n) - &u * u.transpose();
        full.svd(true, false).u.unwrap().columns(0, n - c.ncols()).into_owned()
    };
    let kr = z.transpose() * k * &z;
    let mr = z.transpose() * m * &z;
    let l = mr.cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let a = &li * kr * li.transpose();
    let mut values: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    (values[0], values[1])
}

#[test]
fn constant_state_gap_matches_a_dense_solve() {
    let curve = Arc::new(BoundaryCurve::build(ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, 0.2, 256).unwrap());
    let grid = Arc::new(GridSpec::build(&curve, &GridParams::uniform(12, 4)).unwrap());
    let eps = 0.5;
    let model = DropletModel::without_bound_check(curve, grid.clone(), eps).unwrap();
    let mut drop = model.state(1.0).unwrap();
    // With u = +1 the operator is -eps²Δ + 2, so every Rayleigh quotient
    // against -eps²Δ + 1 lies strictly between 1 and 2.
    let q = build_covariance(&grid, &NoiseParams { n_modes: 2, decay: 2.0, amplitude: 1.0 }).unwrap();
    drop.u = ScalarField::constant(&grid, 1.0);
    drop.du = q.modes()[0].clone();
    let gap = spectral_gap(&drop, 1e-10).unwrap();

    let n = grid.len();
    let w = grid.weights();
    let mut stiff = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in grid.stiffness().row(i) {
            stiff[(i, j)] += v;
        }
    }
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let k = &stiff * (eps * eps) + &diag * 2.0;
    let m = &stiff * (eps * eps) + &diag;
    let mut c = DMatrix::<f64>::zeros(n, 2);
    for i in 0..n {
        c[(i, 0)] = w[i] * drop.du.values()[i];
        c[(i, 1)] = w[i];
    }
    let (lowest, next) = dense_constrained_pencil(&k, &m, &c);
    assert!((gap.ratio - lowest).abs() < 1e-8, "{} vs dense {}", gap.ratio, lowest);
    assert!((gap.next_ratio - next).abs() < 1e-6, "{} vs dense {}", gap.next_ratio, next);
    assert!(gap.ratio > 1.0 && gap.ratio < 2.0);
}

#[test]
fn droplet_gap_is_positive() {
    let curve = Arc::new(BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap());
    let focus = GridFocus {
        theta: curve.theta_of_xi(1.0),
        theta_width: 0.25,
        theta_ratio: 60.0,
        q_width: 0.25,
        q_ratio: 60.0,
    };
    let grid = Arc::new(GridSpec::build(&curve, &GridParams::focused(512, 256, focus)).unwrap());
    let model = DropletModel::new(curve, grid, 0.05).unwrap();
    let gap = spectral_gap(&model.state(1.0).unwrap(), 1e-8).unwrap();
    assert!(gap.nu0 > 0.0, "nu0 = {}", gap.nu0);
    assert!(gap.next_ratio >= gap.ratio);
}

#[test]
fn vertex_droplet_is_stationary_without_noise() {
    let curve = Arc::new(BoundaryCurve::build(ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, 0.2, 512).unwrap());
    let xi0 = curve.curvature_maxima()[0];
    let grid = focused(&curve, xi0, 192, 48);
    let model = DropletModel::new(curve.clone(), grid.clone(), 0.05).unwrap();
    let silent = build_covariance(&grid, &NoiseParams { n_modes: 4, decay: 2.0, amplitude: 0.0 }).unwrap();
    let spec = CompareSpec { dt: 0.1, t_end: 100.0, stride: 50, refresh: 50, xi0, initial: None };
    let report = compare_paths(&model, &silent, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(report.aborted.is_none());
    let (_, budget) = residual_budget(&model, &model.state(xi0).unwrap());
    let allowed = budget * spec.t_end;
    for row in &report.rows {
        assert!(curve.periodic_diff(row.xi_full, xi0).abs() <= allowed, "full path moved to {}", row.xi_full);
        assert!(curve.periodic_diff(row.xi_reduced, xi0).abs() <= 1e-6);
        assert!(curve.periodic_diff(row.xi_asymptotic, xi0).abs() <= 1e-6);
    }
}

#[test]
fn silent_replicas_never_exit() {
    let model = exit_model();
    let mut spec = exit_spec(30);
    let (b_l2, _) = fit_thresholds(&model, &spec).unwrap();
    spec.b_l2 = b_l2;
    let q = build_covariance(model.grid(), &NoiseParams { n_modes: 8, decay: 2.0, amplitude: 0.0 }).unwrap();
    let stats = exit_time_mc(&model, &q, &spec).unwrap();
    assert_eq!(stats.exits, 0);
    assert_eq!(stats.failed, 0);
    assert!(stats.wilson_low < 1e-12 && stats.wilson_high < 0.12);
}

#[test]
fn exits_grow_with_the_noise() {
    let model = exit_model();
    let mut spec = exit_spec(30);
    let (b_l2, _) = fit_thresholds(&model, &spec).unwrap();
    spec.b_l2 = b_l2;
    let q = build_covariance(model.grid(), &NoiseParams { n_modes: 8, decay: 2.0, amplitude: 1.0 }).unwrap();
    let low = exit_time_mc(&model, &q.with_amplitude(0.75), &spec).unwrap();
    let huge = exit_time_mc(&model, &q.with_amplitude(6.0), &spec).unwrap();
    assert!(huge.probability >= 0.9, "huge noise: {} of {}", huge.exits, huge.replicas);
    assert!(huge.wilson_high >= low.wilson_low);
    assert!(huge.quantiles[1].unwrap() <= spec.horizon);
}
