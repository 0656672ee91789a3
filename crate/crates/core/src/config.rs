//! Run configuration: TOML text with named sections, environment
//! overrides and validation.
//!
//! ```toml
//! [domain]
//! delta = 0.2
//! shape = { kind = "ellipse", a = 1.2, b = 1.0 }
//!
//! [model]
//! eps = 0.05
//!
//! [grid]
//! n_theta = 256
//! n_q = 64
//!
//! [time]
//! dt = 0.1
//! t_end = 100.0
//! stride = 10
//! ```
//!
//! Any key can be overridden through `DROPSIM_<SECTION>__<KEY>`, for example
//! `DROPSIM_TIME__DT=0.05`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridFocus, GridParams, GridSpec};
use crate::geometry::{BoundaryCurve, ShapeSpec};
use crate::noise::NoiseParams;

pub const ENV_PREFIX: &str = "DROPSIM_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub domain: DomainConfig,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_shape")]
    pub shape: ShapeSpec,
    pub delta: f64,
    /// Samples of the boundary curve.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub eps: f64,
    /// ε values for the scaling suite.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps_ladder: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_theta: usize,
    pub n_q: usize,
    /// Node density gain near the droplet; 1 gives a uniform grid.
    #[serde(default = "one")]
    pub focus_ratio: f64,
    #[serde(default = "default_focus_width")]
    pub focus_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub stride: usize,
    /// Keep a checkpoint of `w` every this many recorded rows (0 disables).
    #[serde(default)]
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub n_modes: usize,
    pub decay: f64,
    pub amplitude: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { n_modes: 16, decay: 2.0, amplitude: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Arclength position of the initial droplet.
    #[serde(default)]
    pub xi0: f64,
    /// `‖v(0)‖` of the initial perturbation.
    #[serde(default)]
    pub perturbation: f64,
    /// Noise eigenmode (from 1) used as perturbation direction.
    #[serde(default = "one_usize")]
    pub perturbation_mode: usize,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { xi0: 0.0, perturbation: 0.0, perturbation_mode: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub base: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig { base: 1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Simulate,
    Compare,
    Scalings,
    ExitTimes,
    DropletDump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Noise amplitudes of the exit-time ladder; the configured amplitude
    /// alone when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub amplitude_ladder: Vec<f64>,
    /// Also exit on `‖∇v‖`.
    #[serde(default)]
    pub h1: bool,
    /// Steps between refreshes of the reduced coefficients.
    #[serde(default = "one_usize")]
    pub refresh: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Simulate,
            replicas: default_replicas(),
            amplitude_ladder: Vec::new(),
            h1: false,
            refresh: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "runs/latest".into() }
    }
}

fn default_shape() -> ShapeSpec {
    ShapeSpec::Disk
}

fn default_resolution() -> usize {
    1024
}

fn default_focus_width() -> f64 {
    0.35
}

fn default_replicas() -> usize {
    100
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

/// Parses and validates `text` without environment overrides.
pub fn parse_and_validate(text: &str) -> Result<SimConfig> {
    let config = SimConfig::parse(text)?;
    config.validate()?;
    Ok(config)
}

impl SimConfig {
    /// Parses TOML text. Errors carry the 1-based line and column.
    pub fn parse(text: &str) -> Result<SimConfig> {
        toml::from_str(text).map_err(|e| parse_error(text, &e))
    }

    /// Parses `text`, applies `DROPSIM_SECTION__KEY` overrides from `vars`
    /// and validates.
    pub fn parse_with_overrides(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<SimConfig> {
        // Parse once untouched so that errors in the file point into it.
        let base = SimConfig::parse(text)?;
        let overrides: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        if overrides.is_empty() {
            base.validate()?;
            return Ok(base);
        }
        let mut table: toml::Table = text.parse().map_err(|e| parse_error(text, &e))?;
        for (key, raw) in &overrides {
            apply_override(&mut table, key, raw)?;
        }
        let config: SimConfig = table.try_into().map_err(|e: toml::de::Error| Error::Parse {
            line: 0,
            column: 0,
            message: format!("after environment overrides: {}", e.message()),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams { n_modes: self.noise.n_modes, decay: self.noise.decay, amplitude: self.noise.amplitude }
    }

    pub fn curve(&self) -> Result<Arc<BoundaryCurve>> {
        Ok(Arc::new(BoundaryCurve::build(self.domain.shape.clone(), self.domain.delta, self.domain.resolution)?))
    }

    /// Grid parameters, focused on the initial droplet when
    /// `focus_ratio > 1`.
    pub fn grid_params(&self, curve: &BoundaryCurve) -> GridParams {
        let g = &self.grid;
        if g.focus_ratio > 1.0 {
            let focus = GridFocus {
                theta: curve.theta_of_xi(self.initial.xi0),
                theta_width: g.focus_width,
                theta_ratio: g.focus_ratio,
                q_width: g.focus_width,
                q_ratio: g.focus_ratio,
            };
            GridParams::focused(g.n_theta, g.n_q, focus)
        } else {
            GridParams::uniform(g.n_theta, g.n_q)
        }
    }

    pub fn grid_spec(&self, curve: &BoundaryCurve) -> Result<Arc<GridSpec>> {
        Ok(Arc::new(GridSpec::build(curve, &self.grid_params(curve))?))
    }

    /// Checks every hard constraint; the error names the first violated one
    /// and lists all of them.
    pub fn validate(&self) -> Result<()> {
        let mut violations: Vec<(&'static str, String)> = Vec::new();
        let mut check = |ok: bool, constraint: &'static str, message: String| {
            if !ok {
                violations.push((constraint, message));
            }
        };
        let d = &self.domain;
        check(d.delta > 0.0 && d.delta < 1.0, "delta", format!("delta must lie in (0, 1), got {}", d.delta));
        check(d.resolution >= 64, "resolution", format!("boundary resolution must be at least 64, got {}", d.resolution));
        let eps = self.model.eps;
        check(eps > 0.0 && eps < 1.0, "eps", format!("eps must lie in (0, 1), got {eps}"));
        if d.delta > 0.0 && d.delta < 1.0 {
            match BoundaryCurve::build(d.shape.clone(), d.delta, d.resolution.max(64)) {
                Ok(curve) => {
                    let bound = curve.eps_upper_bound();
                    check(
                        eps <= bound,
                        "upbound",
                        format!("eps = {eps} exceeds 1/2 C1* delta^2 = {bound:.6} (C1* = {:.6})", curve.c1_star()),
                    );
                }
                Err(e) => check(false, "shape", e.to_string()),
            }
        }
        for &e in &self.model.eps_ladder {
            check(e > 0.0 && e < 1.0, "eps_ladder", format!("ladder entry {e} is outside (0, 1)"));
        }
        let g = &self.grid;
        check(g.n_theta >= 8 && g.n_q >= 2, "grid", format!("grid {}x{} is too coarse", g.n_theta, g.n_q));
        check(
            g.focus_ratio >= 1.0 && g.focus_width > 0.0,
            "grid_focus",
            "focus_ratio must be at least 1 and focus_width positive".into(),
        );
        let t = &self.time;
        check(t.dt > 0.0 && t.dt.is_finite(), "dt", format!("dt must be positive, got {}", t.dt));
        check(t.t_end >= t.dt, "t_end", format!("t_end = {} is shorter than one step", t.t_end));
        check(t.stride >= 1, "stride", "stride must be at least 1".into());
        let n = &self.noise;
        check(n.n_modes >= 1, "noise_modes", "noise needs at least one mode".into());
        check(n.decay > 1.0, "noise_decay", format!("noise decay must exceed 1, got {}", n.decay));
        check(n.amplitude >= 0.0, "noise_amplitude", format!("amplitude must be non-negative, got {}", n.amplitude));
        for &a in &self.experiment.amplitude_ladder {
            check(a >= 0.0, "amplitude_ladder", format!("ladder amplitude {a} is negative"));
        }
        let i = &self.initial;
        check(i.perturbation >= 0.0, "perturbation", "perturbation norm must be non-negative".into());
        check(i.perturbation_mode >= 1, "perturbation_mode", "perturbation modes are numbered from 1".into());
        check(self.experiment.refresh >= 1, "refresh", "refresh must be at least 1".into());
        match self.experiment.kind {
            ExperimentKind::ExitTimes => check(
                self.experiment.replicas >= 30,
                "replicas",
                format!("exit-time estimates need at least 30 replicas, got {}", self.experiment.replicas),
            ),
            ExperimentKind::Scalings => check(
                self.model.eps_ladder.len() >= 3,
                "eps_ladder",
                format!("the scaling suite needs at least 3 eps values, got {}", self.model.eps_ladder.len()),
            ),
            _ => {}
        }
        match violations.first() {
            None => Ok(()),
            Some((constraint, _)) => Err(Error::Validation {
                constraint,
                message: violations.iter().map(|(c, m)| format!("{c}: {m}")).collect::<Vec<_>>().join("; "),
            }),
        }
    }

    /// Advisories that do not block a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let delta = self.domain.delta;
        let cube = delta.powi(3);
        if self.model.eps > cube {
            out.push(format!("eps = {} is not small against delta^3 = {cube:.4e}", self.model.eps));
        }
        if let Ok(curve) = BoundaryCurve::build(self.domain.shape.clone(), delta, self.domain.resolution.max(64)) {
            let bound = curve.eps_upper_bound();
            for &e in self.model.eps_ladder.iter().filter(|&&e| e > bound) {
                out.push(format!("ladder eps = {e} exceeds the admissible bound {bound:.6}"));
            }
        }
        out
    }
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => line_column(text, span.start),
        None => (0, 0),
    };
    Error::Parse { line, column, message: e.message().trim().to_string() }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// `DROPSIM_TIME__DT=0.05` sets `time.dt`. Values are read as TOML and fall
/// back to plain strings.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
    if path.len() < 2 || path.iter().any(|p| p.is_empty()) {
        return Err(Error::Parse { line: 0, column: 0, message: format!("cannot map {key} to a config key") });
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node.entry(part.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| Error::Parse {
            line: 0,
            column: 0,
            message: format!("{key}: `{part}` is not a section"),
        })?;
    }
    node.insert(path[path.len() - 1].clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[domain]
delta = 0.2

[model]
eps = 0.05

[grid]
n_theta = 64
n_q = 16

[time]
dt = 0.1
t_end = 1.0
"#;

    #[test]
    fn unit_disk_at_the_reference_point_is_valid() {
        let c = parse_and_validate(BASE).unwrap();
        assert_eq!(c.domain.shape, ShapeSpec::Disk);
        assert_eq!(c.time.stride, 1);
        assert!(c.warnings().iter().any(|w| w.contains("delta^3")));
    }

    #[test]
    fn bound_violation_names_upbound() {
        let text = BASE.replace("eps = 0.05", "eps = 0.08");
        match parse_and_validate(&text) {
            Err(Error::Validation { constraint, .. }) => assert_eq!(constraint, "upbound"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_dt_is_a_parse_error_naming_it() {
        let text = BASE.replace("dt = 0.1\n", "");
        match SimConfig::parse(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert!(message.contains("dt"), "{message}");
                assert!(line > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let text = BASE.replace("n_q = 16", "n_q = = 16");
        match SimConfig::parse(&text) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (10, 7)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialisation_round_trips() {
        let mut c = SimConfig::parse(BASE).unwrap();
        c.domain.shape = ShapeSpec::Ellipse { a: 1.2, b: 1.0 };
        c.model.eps_ladder = vec![0.02, 0.03, 0.04];
        c.experiment.amplitude_ladder = vec![0.4, 0.2];
        let back = SimConfig::parse(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn environment_overrides_apply() {
        let vars = vec![
            ("DROPSIM_TIME__DT".to_string(), "0.05".to_string()),
            ("DROPSIM_EXPERIMENT__KIND".to_string(), "compare".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let c = SimConfig::parse_with_overrides(BASE, vars).unwrap();
        assert_eq!(c.time.dt, 0.05);
        assert_eq!(c.experiment.kind, ExperimentKind::Compare);
        let bad = vec![("DROPSIM_MODEL__EPS".to_string(), "0.09".to_string())];
        assert!(matches!(SimConfig::parse_with_overrides(BASE, bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn exit_runs_need_thirty_replicas() {
        let text = format!("{BASE}\n[experiment]\nkind = \"exit-times\"\nreplicas = 10\n");
        match parse_and_validate(&text) {
            Err(Error::Validation { constraint, .. }) => assert_eq!(constraint, "replicas"),
            other => panic!("{other:?}"),
        }
    }
}
