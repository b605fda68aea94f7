//! JSON run configuration.
//!
//! All frequencies, couplings, linewidths, κ's and detunings are given in
//! Hz (cycles per second) and converted to rad/s once, in
//! [`RunConfig::system`]. Times are in s, temperatures in K, microwave
//! power in dBm and pump power in W.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cavity::{CavityParams, DriveInputs, Numerics, System, UpdateMethod};
use crate::constants::hz_to_rad;
use crate::ensemble::{GridKind, InhomogeneousSpec, Lineshape};
use crate::error::{Error, Result};
use crate::model::AtomParams;
use crate::scenarios::{Axis, AxisScale, Output, SweepParam, SweepSpec};

/// Name and contents of the bundled reference calibration.
pub const REFERENCE_PRESET_NAME: &str = "reference.json";
pub const REFERENCE_PRESET: &str = include_str!("../presets/reference.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub cavities: CavitiesConfig,
    pub drive: DriveConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub scenarios: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Hz.
    pub f_mu: f64,
    /// Hz.
    pub f_opt: f64,
    #[serde(rename = "T1_spin")]
    pub t1_spin: f64,
    #[serde(rename = "T2_spin")]
    pub t2_spin: f64,
    #[serde(rename = "T2_opt")]
    pub t2_opt: f64,
    #[serde(rename = "T1_opt", default = "default_t1_opt")]
    pub t1_opt: f64,
    #[serde(default = "default_branching")]
    pub branching_31: f64,
    /// Single-ion couplings, Hz.
    pub g_mu: f64,
    pub g_s: f64,
    pub g_p: f64,
    /// K.
    pub temperature: f64,
    #[serde(default = "yes")]
    pub thermal_spin_bath: bool,
    pub n_eff: f64,
    pub inhomogeneous: InhomogeneousConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhomogeneousConfig {
    /// Hz.
    pub fwhm_opt: f64,
    /// Hz.
    pub fwhm_spin: f64,
    #[serde(default)]
    pub shape: Lineshape,
    /// Half-width of the truncation window, in FWHM.
    #[serde(default = "default_span")]
    pub span_opt: f64,
    #[serde(default = "default_span")]
    pub span_spin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitiesConfig {
    pub microwave: CavityConfig,
    pub optical: CavityConfig,
}

/// Energy decay rates of one mode, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappai: f64,
    #[serde(default)]
    pub delta_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub p_mw_dbm: f64,
    /// W.
    pub p_opt: f64,
    /// Hz.
    pub f_mw: f64,
    pub f_opt: f64,
    /// Operating detunings from the inhomogeneous line centers, Hz.
    #[serde(default)]
    pub delta_o: f64,
    #[serde(default)]
    pub delta_mu: f64,
    /// Reserved for solving the pump mode self-consistently. Only the fixed
    /// pump is implemented, so `true` is rejected.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pump_depletion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub n_opt: usize,
    pub n_spin: usize,
    pub grid: GridKind,
    /// Hz.
    pub cluster_width: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: UpdateMethod,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let spec = InhomogeneousSpec::default();
        let num = Numerics::default();
        NumericsConfig {
            n_opt: spec.n_opt,
            n_spin: spec.n_spin,
            grid: spec.kind,
            cluster_width: spec.cluster_width,
            damping: num.damping,
            tol: num.tol,
            max_iter: num.max_iter,
            method: num.method,
        }
    }
}

/// An axis without a name; the scenario fixes which parameter it varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: AxisScale,
}

impl AxisRange {
    pub fn axis(&self, name: SweepParam) -> Axis {
        Axis::new(name, self.start, self.stop, self.count, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep2dConfig {
    pub delta_o: AxisRange,
    pub delta_mu: AxisRange,
    pub outputs: Vec<Output>,
}

impl Default for Sweep2dConfig {
    fn default() -> Self {
        Sweep2dConfig {
            delta_o: AxisRange {
                start: -30e6,
                stop: 30e6,
                count: 41,
                scale: AxisScale::Linear,
            },
            delta_mu: AxisRange {
                start: -6e6,
                stop: 6e6,
                count: 41,
                scale: AxisScale::Linear,
            },
            outputs: vec![Output::Eta],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MwSweepConfig {
    pub p_mw_dbm: AxisRange,
    pub outputs: Vec<Output>,
}

impl Default for MwSweepConfig {
    fn default() -> Self {
        MwSweepConfig {
            p_mw_dbm: AxisRange {
                start: -60.0,
                stop: -10.0,
                count: 26,
                scale: AxisScale::Linear,
            },
            outputs: vec![Output::Eta, Output::KappaAbs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptSweepConfig {
    /// W.
    pub p_opt: AxisRange,
    pub outputs: Vec<Output>,
}

impl Default for OptSweepConfig {
    fn default() -> Self {
        OptSweepConfig {
            p_opt: AxisRange {
                start: 1e-3,
                stop: 12e-3,
                count: 12,
                scale: AxisScale::Linear,
            },
            outputs: vec![Output::Eta],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub p_mw_dbm: f64,
    /// K.
    pub cold_temperature: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            p_mw_dbm: -60.0,
            cold_temperature: 0.05,
        }
    }
}

/// Square display lattice of ion detunings for population maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationMapConfig {
    pub count: usize,
    /// Hz, both axes.
    pub half_width: f64,
}

impl Default for PopulationMapConfig {
    fn default() -> Self {
        PopulationMapConfig {
            count: 41,
            half_width: 150e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub sweep2d: Sweep2dConfig,
    pub mw_sweep: MwSweepConfig,
    pub opt_sweep: OptSweepConfig,
    pub predict: PredictConfig,
    pub population_map: PopulationMapConfig,
}

fn default_t1_opt() -> f64 {
    AtomParams::default().t1_opt
}

fn default_branching() -> f64 {
    AtomParams::default().branching_31
}

fn default_span() -> f64 {
    3.0
}

fn yes() -> bool {
    true
}

fn check(field: &str, ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message()))
    }
}

fn prefixed(prefix: &str, err: Error) -> Error {
    match err {
        Error::Config { field, message } => Error::Config {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

impl RunConfig {
    /// Parses JSON text, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        let config = Self::from_value_located(value, Some(text))?;
        config.validate()?;
        Ok(config)
    }

    fn from_value_located(value: Value, text: Option<&str>) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            let mut message = format!("at key `{path}`: {inner}");
            if let Some(hint) = unknown_key_hint(&inner) {
                message.push_str(&hint);
            }
            if let Some(line) = text.and_then(|t| locate_key(t, &path, &inner)) {
                message = format!("line {line}: {message}");
            }
            Error::Parse(message)
        })
    }

    /// Parses an already-parsed JSON tree, for overrides.
    pub fn from_value(value: Value) -> Result<Self> {
        let config = Self::from_value_located(value, None)?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every field in configuration units.
    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        for (name, g) in [("g_mu", p.g_mu), ("g_s", p.g_s), ("g_p", p.g_p)] {
            check(
                &format!("physics.{name}"),
                g.is_finite() && g >= 0.0,
                || format!("must be a non-negative coupling in Hz (got {g})"),
            )?;
        }
        check(
            "physics.n_eff",
            p.n_eff.is_finite() && p.n_eff >= 0.0,
            || format!("must be a non-negative ion number (got {})", p.n_eff),
        )?;
        for (name, cav) in [
            ("microwave", &self.cavities.microwave),
            ("optical", &self.cavities.optical),
        ] {
            for (field, k) in [
                ("kappa1", cav.kappa1),
                ("kappa2", cav.kappa2),
                ("kappai", cav.kappai),
            ] {
                check(
                    &format!("cavities.{name}.{field}"),
                    k.is_finite() && k >= 0.0,
                    || format!("must be >= 0 Hz (got {k})"),
                )?;
            }
            check(
                &format!("cavities.{name}.kappa1"),
                cav.kappa1 + cav.kappa2 + cav.kappai > 0.0,
                || "total loss kappa1 + kappa2 + kappai must be > 0 Hz".into(),
            )?;
            check(
                &format!("cavities.{name}.delta_c"),
                cav.delta_c.is_finite(),
                || format!("must be a finite detuning in Hz (got {})", cav.delta_c),
            )?;
        }
        let d = &self.drive;
        for (name, v) in [("delta_o", d.delta_o), ("delta_mu", d.delta_mu)] {
            check(&format!("drive.{name}"), v.is_finite(), || {
                format!("must be a finite detuning in Hz (got {v})")
            })?;
        }
        check("drive.pump_depletion", !d.pump_depletion, || {
            "must be false (only a fixed pump is implemented)".into()
        })?;
        let system = self.system_unchecked();
        system.atom.validate().map_err(|e| prefixed("physics", e))?;
        system.inhomogeneous.validate().map_err(|e| {
            let section = match &e {
                Error::Config { field, .. }
                    if field.starts_with("n_") || field == "cluster_width" =>
                {
                    "numerics"
                }
                _ => "physics.inhomogeneous",
            };
            prefixed(section, e)
        })?;
        system.drive.validate().map_err(|e| prefixed("drive", e))?;
        self.numerics()
            .validate()
            .map_err(|e| prefixed("numerics", e))?;
        let s = &self.scenarios;
        self.sweep2d_spec()
            .validate()
            .map_err(|e| prefixed("scenarios.sweep2d", e))?;
        self.mw_sweep_spec()
            .validate()
            .map_err(|e| prefixed("scenarios.mw_sweep", e))?;
        self.opt_sweep_spec()
            .validate()
            .map_err(|e| prefixed("scenarios.opt_sweep", e))?;
        check(
            "scenarios.predict.p_mw_dbm",
            s.predict.p_mw_dbm.is_finite(),
            || format!("must be a finite power in dBm (got {})", s.predict.p_mw_dbm),
        )?;
        check(
            "scenarios.population_map.count",
            s.population_map.count >= 2,
            || format!("must be at least 2 (got {})", s.population_map.count),
        )?;
        check(
            "scenarios.population_map.half_width",
            s.population_map.half_width > 0.0,
            || format!("must be > 0 Hz (got {})", s.population_map.half_width),
        )?;
        check(
            "scenarios.predict.cold_temperature",
            s.predict.cold_temperature >= 0.0,
            || format!("must be >= 0 K (got {})", s.predict.cold_temperature),
        )?;
        Ok(())
    }

    fn system_unchecked(&self) -> System {
        let p = &self.physics;
        let cavity = |c: &CavityConfig| CavityParams {
            kappa1: hz_to_rad(c.kappa1),
            kappa2: hz_to_rad(c.kappa2),
            kappai: hz_to_rad(c.kappai),
            delta_c: hz_to_rad(c.delta_c),
        };
        System {
            atom: AtomParams {
                f_mu: p.f_mu,
                f_opt: p.f_opt,
                t1_spin: p.t1_spin,
                t2_spin: p.t2_spin,
                t2_opt: p.t2_opt,
                t1_opt: p.t1_opt,
                branching_31: p.branching_31,
                g_mu: hz_to_rad(p.g_mu),
                g_s: hz_to_rad(p.g_s),
                g_p: hz_to_rad(p.g_p),
                temperature: p.temperature,
                thermal_spin_bath: p.thermal_spin_bath,
            },
            inhomogeneous: InhomogeneousSpec {
                fwhm_opt: p.inhomogeneous.fwhm_opt,
                fwhm_spin: p.inhomogeneous.fwhm_spin,
                shape: p.inhomogeneous.shape,
                n_opt: self.numerics.n_opt,
                n_spin: self.numerics.n_spin,
                span_opt: p.inhomogeneous.span_opt,
                span_spin: p.inhomogeneous.span_spin,
                kind: self.numerics.grid,
                cluster_width: self.numerics.cluster_width,
            },
            n_eff: p.n_eff,
            microwave: cavity(&self.cavities.microwave),
            optical: cavity(&self.cavities.optical),
            drive: DriveInputs {
                p_mw_dbm: self.drive.p_mw_dbm,
                p_opt: self.drive.p_opt,
                f_mw: self.drive.f_mw,
                f_opt: self.drive.f_opt,
                delta_o: hz_to_rad(self.drive.delta_o),
                delta_mu: hz_to_rad(self.drive.delta_mu),
            },
        }
    }

    /// The operating point in internal units (rad/s).
    pub fn system(&self) -> Result<System> {
        self.validate()?;
        Ok(self.system_unchecked())
    }

    pub fn numerics(&self) -> Numerics {
        Numerics {
            damping: self.numerics.damping,
            tol: self.numerics.tol,
            max_iter: self.numerics.max_iter,
            method: self.numerics.method,
        }
    }

    pub fn sweep2d_spec(&self) -> SweepSpec {
        let s = &self.scenarios.sweep2d;
        SweepSpec {
            axes: vec![
                s.delta_o.axis(SweepParam::DeltaO),
                s.delta_mu.axis(SweepParam::DeltaMu),
            ],
            outputs: s.outputs.clone(),
        }
    }

    pub fn mw_sweep_spec(&self) -> SweepSpec {
        let s = &self.scenarios.mw_sweep;
        SweepSpec {
            axes: vec![s.p_mw_dbm.axis(SweepParam::PMwDbm)],
            outputs: s.outputs.clone(),
        }
    }

    pub fn opt_sweep_spec(&self) -> SweepSpec {
        let s = &self.scenarios.opt_sweep;
        SweepSpec {
            axes: vec![s.p_opt.axis(SweepParam::POpt)],
            outputs: s.outputs.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Applies `key=value` overrides (dotted keys, JSON or bare string
    /// values) and re-validates.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = serde_json::to_value(self).expect("config serializes");
        for item in overrides {
            apply_override(&mut tree, item.as_ref())?;
        }
        Self::from_value(tree)
    }
}

/// Sets one dotted key in a JSON tree. Only existing sections can be
/// entered; the final key may be new, so that unknown keys are reported by
/// the schema with a suggestion.
pub fn apply_override(tree: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim();
    let value: Value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| {
            Error::Parse(format!(
                "override `{key}`: `{}` is not a section",
                parts[..i].join(".")
            ))
        })?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        if !map.contains_key(*part) {
            let known: Vec<&str> = map.keys().map(String::as_str).collect();
            let hint = nearest(part, &known)
                .map(|s| format!("; did you mean `{s}`?"))
                .unwrap_or_default();
            return Err(Error::Parse(format!(
                "override `{key}`: unknown section `{part}`{hint}"
            )));
        }
        node = map.get_mut(*part).expect("checked");
    }
    Ok(())
}

fn nearest<'a>(word: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::damerau_levenshtein(word, c), *c))
        .filter(|(d, c)| *d <= 3.max(c.len() / 3))
        .min()
        .map(|(_, c)| c)
}

/// Suggestion for serde's "unknown field `x`, expected one of `a`, `b`"
/// messages.
fn unknown_key_hint(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    let (field, tail) = rest.split_once('`')?;
    let expected: Vec<&str> = tail.split('`').skip(1).step_by(2).collect();
    nearest(field, &expected).map(|s| format!("; did you mean `{s}`?"))
}

/// Best-effort line number of the offending key in the source text.
fn locate_key(text: &str, path: &str, message: &str) -> Option<usize> {
    let key = message
        .strip_prefix("unknown field `")
        .and_then(|r| r.split_once('`'))
        .map(|(k, _)| k.to_string())
        .or_else(|| path.rsplit('.').next().map(str::to_string))?;
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

/// Loads a configuration file. A path that does not exist but names a
/// bundled preset (`reference.json` or `reference`) resolves to it.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(text) = preset(&path.to_string_lossy()) {
            return RunConfig::from_json(text);
        }
    }
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}

/// Bundled preset by file name, with or without the `.json` suffix.
pub fn preset(name: &str) -> Option<&'static str> {
    let base = Path::new(name).file_name()?.to_str()?;
    let stem = REFERENCE_PRESET_NAME.trim_end_matches(".json");
    (base == REFERENCE_PRESET_NAME || base == stem).then_some(REFERENCE_PRESET)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> RunConfig {
        RunConfig::from_json(REFERENCE_PRESET).unwrap()
    }

    #[test]
    fn preset_values() {
        let c = reference();
        assert_eq!(c.physics.t1_spin, 1e-3);
        assert_eq!(c.physics.temperature, 4.6);
        assert_eq!(c.physics.f_mu, 5.186e9);
        assert_eq!(c.physics.inhomogeneous.fwhm_opt, 340e6);
        assert_eq!(c.physics.inhomogeneous.fwhm_spin, 50e6);
        assert_eq!(c.cavities.microwave.kappa1, 75e3);
        assert_eq!(c.drive.f_opt, 195_113.30e9);
        let sys = c.system().unwrap();
        assert!((sys.atom.g_s - hz_to_rad(c.physics.g_s)).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_suggestion() {
        let text = REFERENCE_PRESET.replacen("\"kappa1\"", "\"kapa1\"", 1);
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("kapa1"), "{err}");
        assert!(err.contains("did you mean `kappa1`"), "{err}");
        assert!(err.contains("line "), "{err}");
    }

    #[test]
    fn negative_t2_names_field() {
        let c = reference().with_overrides(&["physics.T2_spin=-1e-6"]);
        let err = c.unwrap_err();
        match err {
            Error::Config { field, message } => {
                assert_eq!(field, "physics.T2_spin");
                assert!(message.contains(" s "), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn syntax_error_has_line() {
        let err = RunConfig::from_json("{\n  \"physics\": {,\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let c = reference()
            .with_overrides(&["drive.p_mw_dbm=-19.5", "numerics.method=picard"])
            .unwrap();
        assert_eq!(c.drive.p_mw_dbm, -19.5);
        assert_eq!(c.numerics.method, UpdateMethod::Picard);
        assert!(reference().with_overrides(&["numerics.n_opt=40"]).is_err());
        let err = reference()
            .with_overrides(&["cavities.microwave.kapa1=1"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("did you mean `kappa1`"), "{err}");
        let err = reference()
            .with_overrides(&["physcs.g_mu=1"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("did you mean `physics`"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = reference();
        assert_eq!(a.hash(), reference().hash());
        assert_eq!(a.hash().len(), 64);
        let b = a.with_overrides(&["drive.p_opt=0.012"]).unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn preset_resolves_by_name() {
        assert!(load_config("reference.json").is_ok());
        assert!(load_config("reference").is_ok());
        assert!(matches!(
            load_config("/nonexistent/other.json"),
            Err(Error::Io(_))
        ));
    }
}
