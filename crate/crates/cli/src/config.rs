//! Run configuration: a TOML file with one section per module.
//!
//! ```toml
//! [protocol]
//! kind = "bell_odd"            # entangled_coherent | bell_odd | bell_even
//! engine = "analytic"          # analytic | effective_numeric | full_numeric
//! compare_engine = "full_numeric"
//! measure_basis = "bare"       # bare | dressed | none
//!
//! [params]
//! g_hz = 50e3                  # g/2π for both cavities; or g_a, g_b in rad/s
//! omega_over_g = 100
//!
//! [hilbert]
//! n_a = 8
//! n_b = 8
//!
//! [sweep]
//! workers = 4
//! [[sweep.axis]]
//! name = "omega_over_g"
//! values = [20, 50, 100]
//! ```
//!
//! Rates are in rad/s and times in seconds. Anything left out falls back to
//! the protocol defaults.

use std::f64::consts::TAU;
use std::path::Path;

use cavent::hilbert::{default_truncation, DEFAULT_LEAKAGE_TOLERANCE};
use cavent::protocols::{ecs_times, Engine, MeasureBasis, ProtocolKind, RunSettings};
use cavent::validation::ValidationOptions;
use cavent::{IntegratorOptions, NoiseParams, ProtocolParams, SystemDims};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_OMEGA_OVER_G: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    Bare,
    Dressed,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    pub compare_engine: Option<Engine>,
    #[serde(default)]
    pub measure_basis: Basis,
}

fn default_engine() -> Engine {
    Engine::EffectiveNumeric
}

/// Physical parameters. Every field is optional; see [`RunConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub g_a: Option<f64>,
    pub g_b: Option<f64>,
    /// `g/2π` in Hz for both cavities.
    pub g_hz: Option<f64>,
    pub g_a_hz: Option<f64>,
    pub g_b_hz: Option<f64>,
    pub omega_over_g: Option<f64>,
    pub omega_a: Option<f64>,
    pub omega_b: Option<f64>,
    pub delta_a: Option<f64>,
    pub delta_b: Option<f64>,
    pub big_delta: Option<f64>,
    pub t_a: Option<f64>,
    pub t_b: Option<f64>,
    /// Dimensionless `g_j t_j`.
    pub gt_a: Option<f64>,
    pub gt_b: Option<f64>,
    /// Target displacement magnitudes; set `t_j = 2|α_j|/g_j`.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

/// Names accepted as sweep axes.
pub const AXIS_NAMES: [&str; 20] = [
    "g_a", "g_b", "g_hz", "g_a_hz", "g_b_hz", "omega_over_g", "omega_a", "omega_b", "delta_a",
    "delta_b", "big_delta", "t_a", "t_b", "gt_a", "gt_b", "alpha", "beta", "n", "n_a", "n_b",
];

impl ParamsSection {
    fn slot(&mut self, name: &str) -> Option<&mut Option<f64>> {
        Some(match name {
            "g_a" => &mut self.g_a,
            "g_b" => &mut self.g_b,
            "g_hz" => &mut self.g_hz,
            "g_a_hz" => &mut self.g_a_hz,
            "g_b_hz" => &mut self.g_b_hz,
            "omega_over_g" => &mut self.omega_over_g,
            "omega_a" => &mut self.omega_a,
            "omega_b" => &mut self.omega_b,
            "delta_a" => &mut self.delta_a,
            "delta_b" => &mut self.delta_b,
            "big_delta" => &mut self.big_delta,
            "t_a" => &mut self.t_a,
            "t_b" => &mut self.t_b,
            "gt_a" => &mut self.gt_a,
            "gt_b" => &mut self.gt_b,
            "alpha" => &mut self.alpha,
            "beta" => &mut self.beta,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HilbertSection {
    pub n_a: Option<usize>,
    pub n_b: Option<usize>,
    /// Apply the default truncation rule even if levels are given.
    #[serde(default)]
    pub auto: bool,
    pub leakage_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kappa_a: Option<f64>,
    pub kappa_b: Option<f64>,
    pub gamma_atom: Option<f64>,
    /// Lifetimes in seconds, converted as `rate = 1/T`.
    pub cavity_lifetime: Option<f64>,
    pub atom_lifetime: Option<f64>,
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub steps: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub format: Option<Format>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
}

impl Axis {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(a), Some(b), Some(n)) if n >= 1 => Ok(if n == 1 {
                vec![a]
            } else {
                (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
            }),
            _ => Err(CliError::Config(format!(
                "sweep axis `{}`: give either a non-empty `values` list or `start`, `stop` and `count`",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub axis: Vec<Axis>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub initial_steps: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub leakage_alpha: Option<f64>,
    pub leakage_levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub hilbert: HilbertSection,
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub kind: ProtocolKind,
    pub params: ProtocolParams,
    pub settings: RunSettings,
    pub compare: Option<Engine>,
    pub basis: Basis,
    pub noise: Option<(NoiseParams, SystemDims, usize)>,
    /// Human-readable unit conversions applied while resolving.
    pub conversions: Vec<String>,
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn load_validate(path: Option<&Path>) -> Result<ValidationOptions, CliError> {
    let section = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let v: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
            match v.get("validate") {
                Some(t) => ValidateSection::deserialize(t.clone())
                    .map_err(|e| CliError::Config(format!("[validate]: {e}")))?,
                None => ValidateSection::default(),
            }
        }
        None => ValidateSection::default(),
    };
    let mut opts = ValidationOptions::default();
    if let Some(a) = section.leakage_alpha {
        opts.leakage_alpha = a;
        opts.leakage_levels = default_truncation(a);
    }
    if let Some(n) = section.leakage_levels {
        opts.leakage_levels = n;
    }
    Ok(opts)
}

fn field<T>(value: Option<T>, default: T) -> T {
    value.unwrap_or(default)
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        if self.sweep.axis.len() > 2 {
            return Err(CliError::Config(format!(
                "[sweep]: at most two axes are supported (got {})",
                self.sweep.axis.len()
            )));
        }
        for a in &self.sweep.axis {
            if !AXIS_NAMES.contains(&a.name.as_str()) {
                return Err(CliError::Config(format!(
                    "[sweep] axis `{}` is not a parameter; expected one of {}",
                    a.name,
                    AXIS_NAMES.join(", ")
                )));
            }
            a.points()?;
        }
        if self.sweep.workers == Some(0) {
            return Err(CliError::Config("[sweep] workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Copy with one parameter overridden, as done per sweep point.
    pub fn with_value(&self, name: &str, value: f64) -> Result<RunConfig, CliError> {
        let mut c = self.clone();
        let level = || -> Result<usize, CliError> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(CliError::Config(format!("sweep axis `{name}` needs positive integers (got {value})")))
            }
        };
        match name {
            "n" => {
                c.hilbert.n_a = Some(level()?);
                c.hilbert.n_b = Some(level()?);
                c.hilbert.auto = false;
            }
            "n_a" => c.hilbert.n_a = Some(level()?),
            "n_b" => c.hilbert.n_b = Some(level()?),
            _ => match c.params.slot(name) {
                Some(s) => *s = Some(value),
                None => return Err(CliError::Config(format!("unknown parameter `{name}`"))),
            },
        }
        Ok(c)
    }

    pub fn format(&self) -> Option<Format> {
        self.output.format
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let kind = self.protocol.kind;
        let p = &self.params;
        let mut conversions = Vec::new();
        let mut coupling = |rad: Option<f64>, hz: Option<f64>, label: &str| -> Result<f64, CliError> {
            match (rad, hz.or(p.g_hz)) {
                (Some(g), _) => Ok(g),
                (None, Some(f)) => {
                    let g = TAU * f;
                    conversions.push(format!("{label} = 2π × {f} Hz = {g} rad/s"));
                    Ok(g)
                }
                (None, None) => Err(CliError::Config(format!(
                    "[params]: `{label}` missing; give {label} (rad/s), {label}_hz or g_hz (Hz)"
                ))),
            }
        };
        let g_a = coupling(p.g_a, p.g_a_hz, "g_a")?;
        let g_b = coupling(p.g_b, p.g_b_hz, "g_b")?;
        if g_a <= 0.0 || g_b <= 0.0 {
            return Err(CliError::Config(format!("[params]: couplings must be positive (g_a = {g_a}, g_b = {g_b})")));
        }
        let ratio = field(p.omega_over_g, DEFAULT_OMEGA_OVER_G);
        let mut params = kind.default_params(g_a, g_b, ratio);
        params.omega_a = field(p.omega_a, params.omega_a);
        params.omega_b = field(p.omega_b, params.omega_b);
        let (da, db) = match kind {
            ProtocolKind::EntangledCoherent => (0.0, 0.0),
            ProtocolKind::BellOddParity => (2.0 * params.omega_a, 2.0 * params.omega_b),
            ProtocolKind::BellEvenParity => (2.0 * params.omega_a, -2.0 * params.omega_b),
        };
        params.delta_a = field(p.delta_a, da);
        params.delta_b = field(p.delta_b, db);
        params.big_delta = field(p.big_delta, 0.0);

        let (alpha, beta) = (p.alpha.unwrap_or(1.0), p.beta.or(p.alpha).unwrap_or(1.0));
        if kind == ProtocolKind::EntangledCoherent {
            (params.t_a, params.t_b) = ecs_times(&params, alpha, beta);
        }
        params.t_a = p.t_a.or(p.gt_a.map(|x| x / g_a)).unwrap_or(params.t_a);
        params.t_b = p.t_b.or(p.gt_b.map(|x| x / g_b)).unwrap_or(params.t_b);
        params.validate().map_err(|e| CliError::Config(format!("[params]: {e}")))?;

        let auto_levels = |amp: f64| default_truncation(amp);
        let (auto_a, auto_b) = match kind {
            ProtocolKind::EntangledCoherent => (
                auto_levels(0.5 * g_a * params.t_a),
                auto_levels(0.5 * g_b * params.t_b),
            ),
            _ => (auto_levels(0.0), auto_levels(0.0)),
        };
        let h = &self.hilbert;
        let (n_a, n_b) = if h.auto {
            (auto_a, auto_b)
        } else {
            (field(h.n_a, auto_a), field(h.n_b, auto_b))
        };
        let dims = SystemDims::new(n_a, n_b).map_err(|e| CliError::Config(format!("[hilbert]: {e}")))?;

        let defaults = IntegratorOptions::default();
        let i = &self.integrator;
        let settings = RunSettings {
            dims,
            engine: self.protocol.engine,
            integrator: IntegratorOptions {
                initial_steps: field(i.initial_steps, defaults.initial_steps),
                tolerance: field(i.tolerance, defaults.tolerance),
                max_steps: field(i.max_steps, defaults.max_steps),
            },
            leakage_tolerance: field(h.leakage_tolerance, DEFAULT_LEAKAGE_TOLERANCE),
        };

        let noise = match &self.noise {
            None => None,
            Some(n) => {
                if kind == ProtocolKind::EntangledCoherent {
                    return Err(CliError::Config("[noise]: noisy runs are available for the Bell protocols only".into()));
                }
                let from_life = |t: Option<f64>, what: &str| -> Result<Option<f64>, CliError> {
                    match t {
                        Some(t) if t > 0.0 => Ok(Some(1.0 / t)),
                        Some(t) => Err(CliError::Config(format!("[noise]: {what} must be positive (got {t})"))),
                        None => Ok(None),
                    }
                };
                let cav = from_life(n.cavity_lifetime, "cavity_lifetime")?;
                let atom = from_life(n.atom_lifetime, "atom_lifetime")?;
                let noise = NoiseParams {
                    kappa_a: n.kappa_a.or(cav).unwrap_or(0.0),
                    kappa_b: n.kappa_b.or(cav).unwrap_or(0.0),
                    gamma_atom: n.gamma_atom.or(atom).unwrap_or(0.0),
                }
                .validated()
                .map_err(|e| CliError::Config(format!("[noise]: {e}")))?;
                let levels = field(n.n, 3);
                let nd = SystemDims::new(levels, levels).map_err(|e| CliError::Config(format!("[noise]: {e}")))?;
                Some((noise, nd, n.steps.max(1)))
            }
        };

        Ok(Resolved {
            kind,
            params,
            settings,
            compare: self.protocol.compare_engine,
            basis: self.protocol.measure_basis,
            noise,
            conversions,
        })
    }
}

impl Resolved {
    pub fn measure_basis(&self) -> Option<MeasureBasis> {
        match self.basis {
            Basis::Bare => Some(MeasureBasis::Bare),
            Basis::Dressed => Some(MeasureBasis::Dressed),
            Basis::None => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const BELL: &str = r#"
[protocol]
kind = "bell_odd"
engine = "analytic"

[params]
g_hz = 50e3
"#;

    #[test]
    fn bell_defaults_and_hz_conversion() {
        let r = parse(BELL).unwrap().resolve().unwrap();
        let g = 2.0 * PI * 50e3;
        assert!((r.params.g_a - g).abs() < 1e-9);
        assert!((r.params.t_a - PI / (2.0 * g)).abs() < 1e-18);
        assert!((r.params.total_time() - 1.5e-5).abs() < 1e-12);
        assert_eq!(r.params.delta_b, 2.0 * r.params.omega_b);
        assert_eq!(r.params.omega_a, 100.0 * g);
        assert_eq!(r.conversions.len(), 2);
        assert_eq!(r.settings.dims, SystemDims::new(10, 10).unwrap());
    }

    #[test]
    fn ecs_times_from_alpha() {
        let text = r#"
[protocol]
kind = "entangled_coherent"
engine = "analytic"
[params]
g_hz = 50e3
alpha = 5
"#;
        let r = parse(text).unwrap().resolve().unwrap();
        let total = r.params.total_time();
        assert!(total > 6.3e-5 && total < 6.4e-5, "{total}");
        assert_eq!(r.settings.dims.n_a(), default_truncation(5.0));
        assert_eq!(r.params.delta_a, 0.0);
    }

    #[test]
    fn even_detuning_sign() {
        let text = BELL.replace("bell_odd", "bell_even");
        let r = parse(&text).unwrap().resolve().unwrap();
        assert_eq!(r.params.delta_b, -2.0 * r.params.omega_b);
        assert_eq!(r.params.delta_a, 2.0 * r.params.omega_a);
    }

    #[test]
    fn parse_errors_cite_location() {
        let bad = BELL.replace("g_hz = 50e3", "g_hz = \"fast\"");
        let msg = parse(&bad).unwrap_err().to_string();
        assert!(msg.contains("line") && msg.contains("g_hz"), "{msg}");

        let typo = BELL.replace("g_hz", "g_hzz");
        let msg = parse(&typo).unwrap_err().to_string();
        assert!(msg.contains("g_hzz"), "{msg}");
    }

    #[test]
    fn missing_coupling_is_config_error() {
        let text = "[protocol]\nkind = \"bell_odd\"\n";
        assert!(matches!(parse(text).unwrap().resolve(), Err(CliError::Config(_))));
    }

    #[test]
    fn sweep_axes_checked() {
        let text = format!("{BELL}\n[[sweep.axis]]\nname = \"warp\"\nvalues = [1]\n");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
        let text = format!("{BELL}\n[[sweep.axis]]\nname = \"t_b\"\nstart = 0\nstop = 1\ncount = 3\n");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.sweep.axis[0].points().unwrap(), vec![0.0, 0.5, 1.0]);
        let c = cfg.with_value("n", 4.0).unwrap();
        assert_eq!(c.resolve().unwrap().settings.dims, SystemDims::new(4, 4).unwrap());
        assert!(cfg.with_value("n", 2.5).is_err());
    }

    #[test]
    fn noise_from_lifetimes() {
        let text = format!("{BELL}\n[noise]\ncavity_lifetime = 0.1\natom_lifetime = 0.03\n");
        let r = parse(&text).unwrap().resolve().unwrap();
        let (noise, dims, _) = r.noise.unwrap();
        assert!((noise.kappa_a - 10.0).abs() < 1e-12);
        assert!((noise.gamma_atom - 1.0 / 0.03).abs() < 1e-9);
        assert_eq!(dims.n_a(), 3);
    }
}
