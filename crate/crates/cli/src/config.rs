//! JSON run configuration.
//!
//! Every block is optional and falls back to the reference walker. Unknown
//! keys are rejected. After parsing, all defaults are materialized so the
//! echoed effective config parses back to the same value.

use std::f64::consts::PI;
use std::fmt;

use memwalk::{
    choose_kappa, KernelSpec, ModelSpec, Observable, PilotForceSpec, SimConfig,
    SingularPotentialSpec, SmoothPotentialSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key path, empty when the document itself is malformed.
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.key.is_empty(), self.line) {
            (true, Some(l)) => write!(f, "line {l}: {}", self.message),
            (true, None) => write!(f, "{}", self.message),
            (false, Some(l)) => write!(f, "`{}` (line {l}): {}", self.key, self.message),
            (false, None) => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub dimension: usize,
    pub mass: f64,
    pub sigma: f64,
    pub x_min: f64,
    pub kernel: KernelBlock,
    pub smooth: SmoothBlock,
    pub singular: SingularBlock,
    pub pilot: PilotBlock,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            dimension: 2,
            mass: 1.0,
            sigma: 1.0,
            x_min: memwalk::models::DEFAULT_X_MIN,
            kernel: KernelBlock::default(),
            smooth: SmoothBlock::default(),
            singular: SingularBlock::default(),
            pilot: PilotBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelBlock {
    pub kind: String,
    pub k0: f64,
    pub delta: f64,
}

impl Default for KernelBlock {
    fn default() -> Self {
        KernelBlock {
            kind: "exponential".into(),
            k0: 1.0,
            delta: 1.0,
        }
    }
}

/// `harmonic`, or `polynomial` with `params = [coefficient, exponent]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothBlock {
    pub kind: String,
    pub params: Vec<f64>,
}

impl Default for SmoothBlock {
    fn default() -> Self {
        SmoothBlock {
            kind: "harmonic".into(),
            params: Vec::new(),
        }
    }
}

/// `none`, `coulomb-log` (uses `coulomb_alpha`), `riesz` with
/// `params = [strength, exponent]` or `lennard-jones` with
/// `params = [epsilon, sigma]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingularBlock {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coulomb_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
}

impl Default for SingularBlock {
    fn default() -> Self {
        SingularBlock {
            kind: "coulomb-log".into(),
            coulomb_alpha: Some(1.0),
            params: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotBlock {
    pub kind: String,
}

impl Default for PilotBlock {
    fn default() -> Self {
        PilotBlock {
            kind: "bessel-j1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub dt: f64,
    pub t_max: f64,
    pub burn_in: f64,
    pub x0: Vec<f64>,
    /// Defaults to zero.
    pub v0: Option<Vec<f64>>,
    /// Defaults to `x0`.
    pub initial_past: Option<Vec<f64>>,
    pub record_stride: usize,
    pub seed: u64,
    pub n_members: usize,
    pub guarded: bool,
}

impl Default for SimBlock {
    fn default() -> Self {
        SimBlock {
            dt: 1.0 / 64.0,
            t_max: memwalk::reference::DEFAULT_T_MAX,
            burn_in: memwalk::reference::DEFAULT_BURN_IN,
            x0: vec![2.0 * PI, 0.0],
            v0: None,
            initial_past: None,
            record_stride: 8,
            seed: 0,
            n_members: 1,
            guarded: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisBlock {
    pub bins: usize,
    pub split: f64,
    pub observable: String,
    pub metric: MetricBlock,
    pub mixing: MixingBlock,
    pub variational: VariationalBlock,
    pub control: ControlBlock,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            bins: memwalk::reference::DEFAULT_BINS,
            split: memwalk::reference::DEFAULT_SPLIT,
            observable: "radius".into(),
            metric: MetricBlock::default(),
            mixing: MixingBlock::default(),
            variational: VariationalBlock::default(),
            control: ControlBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricBlock {
    #[serde(rename = "N")]
    pub n_scale: f64,
    pub safety: f64,
    pub p2: f64,
    pub x_min: f64,
}

impl Default for MetricBlock {
    fn default() -> Self {
        MetricBlock {
            n_scale: 1.0,
            safety: 0.5,
            p2: 1.5,
            x_min: 1e-3,
        }
    }
}

/// Second ensemble for the mixing comparison; it shares everything with the
/// first except the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingBlock {
    pub compare_x0: Vec<f64>,
    /// `window`, `pointwise` or `envelope`.
    pub fit: String,
    pub r2_threshold: f64,
}

impl Default for MixingBlock {
    fn default() -> Self {
        MixingBlock {
            compare_x0: vec![1.0, 0.0],
            fit: "window".into(),
            r2_threshold: memwalk::ergodics::DEFAULT_R2_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationalBlock {
    pub rate_alpha: f64,
    pub xi_x: Vec<f64>,
    pub xi_v: Vec<f64>,
    pub t_end: f64,
}

impl Default for VariationalBlock {
    fn default() -> Self {
        VariationalBlock {
            rate_alpha: 1.0,
            xi_x: vec![1.0, 0.0],
            xi_v: vec![0.0, 0.0],
            t_end: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBlock {
    pub v0: Vec<f64>,
    pub t: f64,
    pub eps: f64,
    pub r_target: f64,
    pub h: f64,
}

impl Default for ControlBlock {
    fn default() -> Self {
        ControlBlock {
            v0: vec![0.0, 0.0],
            t: 4.0,
            eps: 0.25,
            r_target: 0.1,
            h: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub out_dir: String,
    /// Also write gnuplot scripts next to the CSV files.
    pub emit_plots: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            out_dir: "out".into(),
            emit_plots: false,
        }
    }
}

/// Line of the value for a dotted key, found by scanning for the quoted
/// names in order. Good enough for the error message of a config that
/// already parsed.
fn locate(text: &str, key: &str) -> Option<usize> {
    let mut pos = 0;
    for part in key.split('.') {
        let needle = format!("\"{part}\"");
        pos += text[pos..].find(&needle)? + needle.len();
    }
    Some(text[..pos].matches('\n').count() + 1)
}

fn range_error(text: &str, key: &str, message: String) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line: locate(text, key),
        message,
    }
}

/// Key path of a serde error message such as "unknown field `foo`".
fn offending_key(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("unknown field") || message.starts_with("missing field"))
        .unwrap_or("")
        .to_string()
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // serde_json appends " at line L column C"; keep only the cause
        let cause = message.split(" at line ").next().unwrap_or(&message).to_string();
        ConfigError {
            key: offending_key(&cause),
            line: Some(e.line()),
            message: cause,
        }
    })?;
    cfg.materialize();
    cfg.check(text)?;
    Ok(cfg)
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            model: ModelBlock::default(),
            sim: SimBlock::default(),
            analysis: AnalysisBlock::default(),
            output: OutputBlock::default(),
        };
        c.materialize();
        c
    }
}

impl RunConfig {
    /// Fills the defaults that depend on other fields.
    pub fn materialize(&mut self) {
        let d = self.sim.x0.len();
        if self.sim.v0.is_none() {
            self.sim.v0 = Some(vec![0.0; d]);
        }
        if self.sim.initial_past.is_none() {
            self.sim.initial_past = Some(self.sim.x0.clone());
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Range checks beyond what the types enforce; `text` is only used to
    /// report line numbers.
    pub fn check(&self, text: &str) -> Result<(), ConfigError> {
        let err = |key: &str, message: String| Err(range_error(text, key, message));
        let m = &self.model;
        let s = &self.sim;
        let a = &self.analysis;
        if m.dimension == 0 {
            return err("model.dimension", "must be >= 1".into());
        }
        if !(m.mass > 0.0 && m.mass.is_finite()) {
            return err("model.mass", format!("must be > 0, got {}", m.mass));
        }
        if !(m.sigma >= 0.0 && m.sigma.is_finite()) {
            return err("model.sigma", format!("must be >= 0, got {}", m.sigma));
        }
        if !(m.x_min > 0.0) {
            return err("model.x_min", format!("must be > 0, got {}", m.x_min));
        }
        if m.kernel.kind != "exponential" {
            return err(
                "model.kernel.kind",
                format!("unknown kernel kind '{}' (expected exponential)", m.kernel.kind),
            );
        }
        if !(m.kernel.k0 > 0.0 && m.kernel.k0.is_finite()) {
            return err("model.kernel.k0", format!("must be > 0, got {}", m.kernel.k0));
        }
        if !(m.kernel.delta > 0.0 && m.kernel.delta.is_finite()) {
            return err("model.kernel.delta", format!("must be > 0, got {}", m.kernel.delta));
        }
        match m.smooth.kind.as_str() {
            "harmonic" if m.smooth.params.is_empty() => {}
            "harmonic" => return err("model.smooth.params", "harmonic takes no params".into()),
            "polynomial" if m.smooth.params.len() == 2 => {}
            "polynomial" => {
                return err("model.smooth.params", "polynomial needs [coefficient, exponent]".into())
            }
            k => {
                return err(
                    "model.smooth.kind",
                    format!("unknown smooth kind '{k}' (expected harmonic or polynomial)"),
                )
            }
        }
        match m.singular.kind.as_str() {
            "none" => {}
            "coulomb-log" => match m.singular.coulomb_alpha {
                Some(v) if v > 0.0 && v.is_finite() => {}
                Some(v) => return err("model.singular.coulomb_alpha", format!("must be > 0, got {v}")),
                None => return err("model.singular.coulomb_alpha", "required for coulomb-log".into()),
            },
            "riesz" | "lennard-jones" if m.singular.params.len() == 2 => {}
            "riesz" | "lennard-jones" => {
                return err("model.singular.params", format!("{} needs two params", m.singular.kind))
            }
            k => {
                return err(
                    "model.singular.kind",
                    format!("unknown singular kind '{k}' (expected none, coulomb-log, riesz or lennard-jones)"),
                )
            }
        }
        if !matches!(m.pilot.kind.as_str(), "bessel-j1" | "zero") {
            return err(
                "model.pilot.kind",
                format!("unknown pilot kind '{}' (expected bessel-j1 or zero)", m.pilot.kind),
            );
        }
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return err("sim.dt", format!("must be > 0, got {}", s.dt));
        }
        if !(s.t_max > 0.0 && s.t_max.is_finite()) {
            return err("sim.t_max", format!("must be > 0, got {}", s.t_max));
        }
        if !(s.burn_in >= 0.0 && s.burn_in < s.t_max) {
            return err("sim.burn_in", format!("must lie in [0, t_max), got {}", s.burn_in));
        }
        let d = m.dimension;
        for (key, v) in [
            ("sim.x0", Some(&s.x0)),
            ("sim.v0", s.v0.as_ref()),
            ("sim.initial_past", s.initial_past.as_ref()),
            ("analysis.mixing.compare_x0", Some(&a.mixing.compare_x0)),
            ("analysis.variational.xi_x", Some(&a.variational.xi_x)),
            ("analysis.variational.xi_v", Some(&a.variational.xi_v)),
            ("analysis.control.v0", Some(&a.control.v0)),
        ] {
            if let Some(v) = v {
                if v.len() != d {
                    return err(key, format!("expected {d} components, got {}", v.len()));
                }
            }
        }
        if s.record_stride == 0 {
            return err("sim.record_stride", "must be >= 1".into());
        }
        if s.n_members == 0 {
            return err("sim.n_members", "must be >= 1".into());
        }
        if a.bins < 8 {
            return err("analysis.bins", format!("must be >= 8, got {}", a.bins));
        }
        if !(a.split > 0.0 && a.split < 1.0) {
            return err("analysis.split", format!("must lie in (0, 1), got {}", a.split));
        }
        if !matches!(a.observable.as_str(), "phi" | "psi") {
            if let Err(e) = Observable::parse(&a.observable) {
                return err("analysis.observable", e.to_string());
            }
        }
        if !(a.metric.n_scale > 0.0) {
            return err("analysis.metric.N", format!("must be > 0, got {}", a.metric.n_scale));
        }
        if !(a.metric.safety > 0.0 && a.metric.safety < 1.0) {
            return err("analysis.metric.safety", format!("must lie in (0, 1), got {}", a.metric.safety));
        }
        if !(a.metric.p2 > 1.0) {
            return err("analysis.metric.p2", format!("must be > 1, got {}", a.metric.p2));
        }
        if !(a.metric.x_min > 0.0) {
            return err("analysis.metric.x_min", format!("must be > 0, got {}", a.metric.x_min));
        }
        if fit_target(&a.mixing.fit).is_none() {
            return err(
                "analysis.mixing.fit",
                format!("unknown fit '{}' (expected window, pointwise or envelope)", a.mixing.fit),
            );
        }
        if !(a.mixing.r2_threshold > 0.0 && a.mixing.r2_threshold <= 1.0) {
            return err("analysis.mixing.r2_threshold", "must lie in (0, 1]".into());
        }
        if !(a.variational.rate_alpha > 0.0) {
            return err("analysis.variational.rate_alpha", "must be > 0".into());
        }
        if !(a.variational.t_end > 0.0) {
            return err("analysis.variational.t_end", "must be > 0".into());
        }
        let c = &a.control;
        if !(c.t > 1.0) {
            return err("analysis.control.t", format!("must be > 1, got {}", c.t));
        }
        if !(c.eps > 0.0 && c.eps < c.t / 4.0) {
            return err("analysis.control.eps", "must lie in (0, t/4)".into());
        }
        if !(c.r_target > 0.0) {
            return err("analysis.control.r_target", "must be > 0".into());
        }
        if !(c.h > 0.0 && c.h < c.t) {
            return err("analysis.control.h", "must lie in (0, t)".into());
        }
        Ok(())
    }

    pub fn model(&self) -> memwalk::Result<ModelSpec> {
        let m = &self.model;
        let kernel = KernelSpec::exponential(m.kernel.k0, m.kernel.delta)?;
        let smooth = match m.smooth.kind.as_str() {
            "polynomial" => SmoothPotentialSpec::polynomial(m.smooth.params[0], m.smooth.params[1])?,
            _ => SmoothPotentialSpec::harmonic(),
        };
        let singular = match m.singular.kind.as_str() {
            "coulomb-log" => SingularPotentialSpec::coulomb_log(m.singular.coulomb_alpha.unwrap_or(1.0))?,
            "riesz" => SingularPotentialSpec::riesz(m.singular.params[0], m.singular.params[1])?,
            "lennard-jones" => {
                SingularPotentialSpec::lennard_jones(m.singular.params[0], m.singular.params[1])?
            }
            _ => SingularPotentialSpec::none(),
        };
        let pilot = match m.pilot.kind.as_str() {
            "zero" => PilotForceSpec::zero(),
            _ => PilotForceSpec::bessel_j1(),
        };
        Ok(ModelSpec::new(m.dimension, m.mass, m.sigma, kernel, smooth, singular, pilot)?
            .with_x_min(m.x_min))
    }

    /// The configured observable; `phi` and `psi` take their constants from
    /// the metric block.
    pub fn observable(&self, model: &ModelSpec) -> memwalk::Result<Observable> {
        let m = &self.analysis.metric;
        match self.analysis.observable.as_str() {
            "phi" => Ok(Observable::Phi(choose_kappa(model, m.safety, m.p2)?)),
            "psi" => Ok(Observable::Psi(choose_kappa(model, m.safety, m.p2)?)),
            name => Observable::parse(name),
        }
    }

    pub fn sim(&self) -> memwalk::Result<SimConfig> {
        let s = &self.sim;
        let d = self.model.dimension;
        let c = SimConfig {
            model: self.model()?,
            dt: s.dt,
            t_max: s.t_max,
            burn_in: s.burn_in,
            x0: s.x0.clone(),
            v0: s.v0.clone().unwrap_or_else(|| vec![0.0; d]),
            initial_past: s.initial_past.clone().unwrap_or_else(|| s.x0.clone()),
            record_stride: s.record_stride,
            seed: s.seed,
            guarded: s.guarded,
            n_mem: None,
        };
        c.validate()?;
        Ok(c)
    }
}

pub fn fit_target(name: &str) -> Option<memwalk::FitTarget> {
    match name {
        "window" => Some(memwalk::FitTarget::Window),
        "pointwise" => Some(memwalk::FitTarget::Pointwise),
        "envelope" => Some(memwalk::FitTarget::Envelope),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_walker() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sim.seed, 0);
        assert_eq!(c.sim.dt, 1.0 / 64.0);
        assert_eq!(c.sim.initial_past.as_deref(), Some(&[2.0 * PI, 0.0][..]));
    }

    #[test]
    fn effective_config_round_trips() {
        let c = parse_config(r#"{"sim": {"seed": 7, "x0": [3.0, 0.5]}}"#).unwrap();
        let again = parse_config(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let e = parse_config("{\n  \"sim\": {\n    \"dtt\": 0.1\n  }\n}").unwrap_err();
        assert_eq!(e.key, "dtt");
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn range_error_names_key_and_line() {
        let e = parse_config("{\n  \"sim\": {\n    \"t_max\": 5,\n    \"dt\": -1\n  }\n}").unwrap_err();
        assert_eq!(e.key, "sim.dt");
        assert_eq!(e.line, Some(4));
        assert!(e.to_string().contains("sim.dt"));
    }

    #[test]
    fn type_mismatch_has_line() {
        let e = parse_config("{\n \"sim\": {\"seed\": \"zero\"}\n}").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("invalid type"));
    }

    #[test]
    fn dimension_mismatch() {
        let e = parse_config(r#"{"sim": {"v0": [0.0]}}"#).unwrap_err();
        assert_eq!(e.key, "sim.v0");
    }
}
