//! Q-Wiener noise on a finite basis of mean-zero Neumann eigenmodes.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{constrained_eigenpairs, GridSpec, PencilSpec, ScalarField};

/// Noise parameters: `n_modes` modes with amplitudes `a_k = amplitude·k^{−decay}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub n_modes: usize,
    pub decay: f64,
    pub amplitude: f64,
}

/// `Q = Σ a_k² e_k ⊗ e_k` with orthonormal mean-zero `e_k`.
#[derive(Clone, Debug)]
pub struct CovarianceSpec {
    grid: Arc<GridSpec>,
    params: NoiseParams,
    amplitudes: Vec<f64>,
    eigenvalues: Vec<f64>,
    grad_sq: Vec<f64>,
    modes: Vec<ScalarField>,
}

/// One increment `ΔW = Σ a_k √dt g_k e_k` together with the draws `g_k`.
#[derive(Clone, Debug)]
pub struct NoiseIncrement {
    pub dw: ScalarField,
    pub dt: f64,
    pub draws: Vec<f64>,
}

/// Builds `Q` from the lowest non-constant eigenvectors of `−Δ` with
/// Neumann boundary conditions.
pub fn build_covariance(grid: &Arc<GridSpec>, params: &NoiseParams) -> Result<CovarianceSpec> {
    if params.n_modes == 0 {
        return Err(Error::ParamOutOfRange("noise needs at least one mode".into()));
    }
    if !(params.decay > 1.0) {
        return Err(Error::ParamOutOfRange(format!("noise decay must exceed 1, got {}", params.decay)));
    }
    if !(params.amplitude >= 0.0 && params.amplitude.is_finite()) {
        return Err(Error::ParamOutOfRange(format!(
            "noise amplitude must be non-negative, got {}",
            params.amplitude
        )));
    }
    let available = grid.len().saturating_sub(1);
    if params.n_modes > available / 2 {
        return Err(Error::ModeCountExceedsGrid { requested: params.n_modes, available: available / 2 });
    }
    let n = grid.len();
    let stiffness = PencilSpec { scale: 1.0, diag: vec![0.0; n] };
    let mass = PencilSpec { scale: 0.0, diag: grid.weights().to_vec() };
    // Shift below the first non-zero eigenvalue, whose scale is set by the domain diameter.
    let diameter = grid.points().iter().fold(0.0f64, |m, p| m.max(p[0].hypot(p[1])));
    let shift = -0.1 / (diameter * diameter);
    let pairs = constrained_eigenpairs(
        grid.stiffness(),
        &stiffness,
        &mass,
        &[grid.weights().to_vec()],
        params.n_modes,
        shift,
        1e-12,
    )?;
    let modes = pairs
        .vectors
        .into_iter()
        .map(|v| ScalarField::from_values(grid, v))
        .collect::<Result<Vec<_>>>()?;
    let grad_sq = modes.iter().map(|e| e.grad_norm_sq()).collect();
    Ok(CovarianceSpec {
        grid: grid.clone(),
        amplitudes: amplitude_law(params),
        params: params.clone(),
        eigenvalues: pairs.values,
        grad_sq,
        modes,
    })
}

fn amplitude_law(params: &NoiseParams) -> Vec<f64> {
    (1..=params.n_modes).map(|k| params.amplitude * (k as f64).powf(-params.decay)).collect()
}

impl CovarianceSpec {
    /// Same modes and decay with a new overall amplitude.
    pub fn with_amplitude(&self, amplitude: f64) -> CovarianceSpec {
        let params = NoiseParams { amplitude, ..self.params.clone() };
        CovarianceSpec { amplitudes: amplitude_law(&params), params, ..self.clone() }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn modes(&self) -> &[ScalarField] {
        &self.modes
    }

    /// Eigenvalues of `−Δ` for the modes.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `‖∇e_k‖²` for each mode.
    pub fn grad_norms_sq(&self) -> &[f64] {
        &self.grad_sq
    }

    /// `η₀ = Σ a_k²`.
    pub fn eta0(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    /// `η₁ = max a_k²`.
    pub fn eta1(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a * a))
    }

    /// `η₂ = Σ a_k² ‖∇e_k‖²`.
    pub fn eta2(&self) -> f64 {
        self.amplitudes.iter().zip(&self.grad_sq).map(|(a, g)| a * a * g).sum()
    }

    pub fn is_silent(&self) -> bool {
        self.amplitudes.iter().all(|&a| a == 0.0)
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> NoiseIncrement {
        let draws: Vec<f64> = self.modes.iter().map(|_| StandardNormal.sample(rng)).collect();
        let mut dw = ScalarField::zeros(&self.grid);
        let root = dt.sqrt();
        for ((a, g), e) in self.amplitudes.iter().zip(&draws).zip(&self.modes) {
            let c = a * root * g;
            if c != 0.0 {
                for (w, ev) in dw.values_mut().iter_mut().zip(e.values()) {
                    *w += c * ev;
                }
            }
        }
        NoiseIncrement { dw, dt, draws }
    }

    /// Coefficients `(f, e_k)`.
    pub fn project(&self, f: &ScalarField) -> Result<Vec<f64>> {
        self.modes.iter().map(|e| e.inner(f)).collect()
    }

    /// `Qf = Σ a_k² (f, e_k) e_k`.
    pub fn apply_q(&self, f: &ScalarField) -> Result<ScalarField> {
        let coef = self.project(f)?;
        let mut out = ScalarField::zeros(&self.grid);
        for ((a, c), e) in self.amplitudes.iter().zip(coef).zip(&self.modes) {
            out.axpy(a * a * c, e)?;
        }
        Ok(out)
    }

    /// `(Qf, g)` without forming `Qf`.
    pub fn q_form(&self, f: &ScalarField, g: &ScalarField) -> Result<f64> {
        let cf = self.project(f)?;
        let cg = self.project(g)?;
        Ok(self.amplitudes.iter().zip(cf).zip(cg).map(|((a, x), y)| a * a * x * y).sum())
    }

    /// CSV with columns `k,amplitude,eigenvalue,grad_norm_sq`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "k,amplitude,eigenvalue,grad_norm_sq")?;
        for (k, ((a, l), g)) in self.amplitudes.iter().zip(&self.eigenvalues).zip(&self.grad_sq).enumerate() {
            writeln!(out, "{},{:e},{:e},{:e}", k + 1, a, l, g)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "n_modes": self.params.n_modes,
            "decay": self.params.decay,
            "amplitude": self.params.amplitude,
            "eta0": self.eta0(),
            "eta1": self.eta1(),
            "eta2": self.eta2(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridParams;
    use crate::geometry::{BoundaryCurve, ShapeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<GridSpec> {
        let curve = BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap();
        Arc::new(GridSpec::build(&curve, &GridParams::uniform(64, 32)).unwrap())
    }

    fn params(n_modes: usize, amplitude: f64) -> NoiseParams {
        NoiseParams { n_modes, decay: 2.0, amplitude }
    }

    #[test]
    fn modes_are_orthonormal_mean_zero_neumann_modes() {
        let g = grid();
        let q = build_covariance(&g, &params(16, 1.0)).unwrap();
        for (j, a) in q.modes().iter().enumerate() {
            assert!(a.mean_mass().1.abs() <= 1e-10);
            for (k, b) in q.modes().iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((a.inner(b).unwrap() - expect).abs() <= 1e-8);
            }
        }
        // Lowest Neumann eigenvalue of a disk of radius 5: (j′₁₁ / 5)².
        let exact = (1.841_183_78f64 / 5.0).powi(2);
        assert!((q.eigenvalues()[0] - exact).abs() < 2e-3 * exact, "{}", q.eigenvalues()[0]);
        assert!((q.eigenvalues()[1] - q.eigenvalues()[0]).abs() < 1e-8);
        let partial: f64 = (1..=16).map(|k: i32| (k as f64).powi(-4)).sum();
        assert!((q.eta0() - partial).abs() < 1e-12);
        assert!((partial - 1.0823).abs() < 1e-4);
        assert!(q.eta1() <= q.eta0());
        assert!((q.grad_norms_sq()[0] - q.eigenvalues()[0]).abs() < 1e-10);
    }

    #[test]
    fn single_mode_and_silent_noise() {
        let g = grid();
        let q = build_covariance(&g, &params(1, 0.3)).unwrap();
        assert!((q.eta0() - 0.09).abs() < 1e-15 && (q.eta1() - 0.09).abs() < 1e-15);
        assert!((q.eta2() - 0.09 * q.grad_norms_sq()[0]).abs() < 1e-15);
        let silent = q.with_amplitude(0.0);
        assert_eq!(silent.eta0() + silent.eta1() + silent.eta2(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(silent.sample_increment(0.1, &mut rng).dw.linf_norm(), 0.0);
    }

    #[test]
    fn apply_q_on_modes() {
        let g = grid();
        let q = build_covariance(&g, &params(6, 1.0)).unwrap();
        let e3 = &q.modes()[2];
        let qe = q.apply_q(e3).unwrap();
        let mut diff = qe.clone();
        diff.axpy(-q.amplitudes()[2].powi(2), e3).unwrap();
        assert!(diff.norm() < 1e-12);
        let one = ScalarField::constant(&g, 1.0);
        assert!(q.apply_q(&one).unwrap().norm() < 1e-9);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let g = grid();
        assert!(matches!(build_covariance(&g, &params(0, 1.0)), Err(Error::ParamOutOfRange(_))));
        let p = NoiseParams { decay: 1.0, ..params(3, 1.0) };
        assert!(matches!(build_covariance(&g, &p), Err(Error::ParamOutOfRange(_))));
        assert!(matches!(
            build_covariance(&g, &params(g.len(), 1.0)),
            Err(Error::ModeCountExceedsGrid { .. })
        ));
    }
}
