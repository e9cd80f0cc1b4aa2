//! Scenario documents.
//!
//! A scenario is a JSON object; unknown keys are rejected so typos surface
//! instead of silently falling back to defaults. See `scenarios/` for
//! worked examples and the README for the full field list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    DoubleIntegrator,
    Unicycle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalInput {
    /// Per-step inputs, either inline (`values`) or from a trajectory CSV
    /// (`path`, relative to the scenario file).
    Samples {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
    Constant {
        value: Vec<f64>,
    },
    SecurePlan,
    MinTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Clockwise,
    CounterClockwise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Zero,
    Nominal,
    Fraction { fraction: f64, direction: Direction },
    BangSwitch { switch_time: f64, first: Direction },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    #[default]
    None,
    RadialLaw {
        policy: PolicySpec,
    },
    Optimal,
    /// Unicycle heading-offset bump.
    Offset {
        start: f64,
        width: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    /// Extra random initial costates drawn from the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_miss: Option<f64>,
    /// Grid size of the secure planner (the planner works on a normalized
    /// time axis, so `dt` does not apply to it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Nominal magnitudes as fractions of `u_max`, each in (0, 1].
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: Model,
    /// `[px, py, vx, vy]` or, for the unicycle, `[px, py, theta]`.
    pub x0: Vec<f64>,
    #[serde(default, rename = "p_F", alias = "p_f", skip_serializing_if = "Option::is_none")]
    pub p_f: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    pub nominal_input: NominalInput,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => Err(bad(field, format!("must be positive and finite, got {x}"))),
        _ => Ok(()),
    }
}

impl ScenarioConfig {
    /// Parses and validates; errors carry the JSON path and, for syntax
    /// problems, the line and column.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let at = format!("line {} column {}", inner.line(), inner.column());
            if path.is_empty() || path == "." {
                CliError::Config(format!("{inner} ({at})"))
            } else {
                CliError::Config(format!("{path}: {inner} ({at})"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(&path.display().to_string(), e))?;
        let mut cfg = Self::from_json(&text)?;
        // Sample files are resolved against the scenario's own directory.
        if let NominalInput::Samples { path: Some(p), .. } = &mut cfg.nominal_input {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.x0.iter().any(|x| !x.is_finite()) {
            return Err(bad("x0", "entries must be finite"));
        }
        positive("horizon", self.horizon)?;
        positive("dt", self.dt)?;
        positive("u_max", self.u_max)?;
        positive("nu_max", self.nu_max)?;
        positive("omega_max", self.omega_max)?;
        if let Some(p) = self.p_f {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(bad("p_F", "entries must be finite"));
            }
        }
        let width = match self.model {
            Model::DoubleIntegrator => {
                if self.x0.len() != 4 {
                    return Err(bad("x0", format!("expected [px, py, vx, vy], got {} entries", self.x0.len())));
                }
                if self.u_max.is_none() {
                    return Err(bad("u_max", "required for model double_integrator"));
                }
                2
            }
            Model::Unicycle => {
                if self.x0.len() != 3 {
                    return Err(bad("x0", format!("expected [px, py, theta], got {} entries", self.x0.len())));
                }
                if self.nu_max.is_none() {
                    return Err(bad("nu_max", "required for model unicycle"));
                }
                if self.omega_max.is_none() {
                    return Err(bad("omega_max", "required for model unicycle"));
                }
                if matches!(self.nominal_input, NominalInput::SecurePlan | NominalInput::MinTime) {
                    return Err(bad("nominal_input.mode", "secure_plan and min_time need model double_integrator"));
                }
                if matches!(self.attack, AttackSpec::RadialLaw { .. } | AttackSpec::Optimal) {
                    return Err(bad("attack.mode", "the unicycle supports only none and offset"));
                }
                2
            }
        };
        if matches!(self.attack, AttackSpec::Offset { .. }) && self.model != Model::Unicycle {
            return Err(bad("attack.mode", "offset applies to model unicycle"));
        }
        match &self.nominal_input {
            NominalInput::Constant { value } => {
                if value.len() != width || value.iter().any(|x| !x.is_finite()) {
                    return Err(bad("nominal_input.value", format!("expected {width} finite entries")));
                }
            }
            NominalInput::Samples { values, path } => match (values, path) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(bad("nominal_input", "samples needs exactly one of `values` or `path`"));
                }
                (Some(v), None) => {
                    if v.is_empty() {
                        return Err(bad("nominal_input.values", "no samples"));
                    }
                    if let Some(i) = v.iter().position(|row| row.len() != width || row.iter().any(|x| !x.is_finite())) {
                        return Err(bad(&format!("nominal_input.values[{i}]"), format!("expected {width} finite entries")));
                    }
                }
                (None, Some(_)) => {}
            },
            NominalInput::SecurePlan | NominalInput::MinTime => {
                if self.p_f.is_none() {
                    return Err(bad("p_F", "required by this nominal_input mode"));
                }
            }
        }
        if matches!(self.nominal_input, NominalInput::MinTime) && self.horizon.is_none() {
            return Err(bad("horizon", "required by nominal_input min_time"));
        }
        if let AttackSpec::RadialLaw { policy: PolicySpec::Fraction { fraction, .. } } = &self.attack {
            if !(0.0..=1.0).contains(fraction) {
                return Err(bad("attack.policy.fraction", "must lie in [0, 1]"));
            }
        }
        if let AttackSpec::Offset { width, .. } = &self.attack {
            positive("attack.width", Some(*width))?;
        }
        if let Some(s) = &self.sweep {
            if s.ratios.is_empty() {
                return Err(bad("sweep.ratios", "empty"));
            }
            if let Some(r) = s.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                return Err(bad("sweep.ratios", format!("{r} outside (0, 1]")));
            }
        }
        let s = &self.solver;
        positive("solver.tol", s.tol)?;
        positive("solver.fd_eps", s.fd_eps)?;
        positive("solver.w_time", s.w_time)?;
        positive("solver.w_miss", s.w_miss)?;
        if let Some(e) = &s.eps_schedule {
            if e.is_empty() || e.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(bad("solver.eps_schedule", "needs at least one positive entry"));
            }
        }
        if s.max_newton == Some(0) {
            return Err(bad("solver.max_newton", "must be at least 1"));
        }
        if s.steps == Some(0) {
            return Err(bad("solver.steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn require_horizon(&self) -> Result<f64, CliError> {
        self.horizon.ok_or_else(|| bad("horizon", "required for this command"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": "double_integrator",
        "x0": [1, 0, 0, 0],
        "horizon": 2,
        "u_max": 1,
        "nominal_input": {"mode": "constant", "value": [0, 0.5]}
    }"#;

    #[test]
    fn accepts_minimal_document() {
        let c = ScenarioConfig::from_json(BASE).unwrap();
        assert!(matches!(c.attack, AttackSpec::None));
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn missing_bound_names_the_field() {
        let text = BASE.replace("\"u_max\": 1,", "");
        let e = ScenarioConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("u_max"), "{e}");
    }

    #[test]
    fn unknown_keys_report_their_location() {
        let text = BASE.replace("\"horizon\": 2", "\"horizon\": 2, \"horizn\": 3");
        let e = ScenarioConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("horizn") && e.contains("line"), "{e}");
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let text = BASE.replace("\"horizon\": 2", "\"horizon\": 2, \"dt\": 0");
        assert!(ScenarioConfig::from_json(&text).unwrap_err().to_string().starts_with("config error: dt"));
    }

    #[test]
    fn samples_need_exactly_one_source() {
        let text = BASE.replace(r#"{"mode": "constant", "value": [0, 0.5]}"#, r#"{"mode": "samples"}"#);
        assert!(ScenarioConfig::from_json(&text).is_err());
    }
}
