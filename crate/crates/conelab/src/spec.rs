//! Input documents: link specifications, `--set` overrides and scan grids.

use conelab_core::links::{LinkGeometry, WarpedProfile};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::CliError;

/// A link as written in input files:
/// `{"variant": "round_sphere", "dim": 2, "beta": 1.0}`,
/// `{"variant": "profile", "dim": 3, "psi": [...], "length": 3.14159}` or
/// `{"variant": "einstein", "dim": 3, "lambda": 6, "volume": 19.7, "shrinking_time": 0.25}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkSpec {
    RoundSphere {
        dim: usize,
        #[serde(default = "one")]
        beta: f64,
    },
    Profile {
        dim: usize,
        psi: Vec<f64>,
        length: f64,
        /// Metric coefficient of dx² when the samples are not in arclength.
        #[serde(default)]
        phi: Option<Vec<f64>>,
    },
    Einstein {
        dim: usize,
        lambda: f64,
        volume: f64,
        shrinking_time: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl LinkSpec {
    pub fn build(&self) -> Result<LinkGeometry, CliError> {
        let link = match self {
            LinkSpec::RoundSphere { dim, beta } => LinkGeometry::round_sphere(*dim, *beta)?,
            LinkSpec::Profile { dim, psi, length, phi: None } => {
                LinkGeometry::ProfileWarped(WarpedProfile::arclength(*dim, psi.clone(), *length)?)
            }
            LinkSpec::Profile { dim, psi, length, phi: Some(phi) } => {
                let grid = std::sync::Arc::new(conelab_core::numcore::RadialGrid::uniform(0.0, *length, psi.len())?);
                LinkGeometry::ProfileWarped(WarpedProfile::new(*dim, grid, psi.clone(), phi.clone())?)
            }
            LinkSpec::Einstein { dim, lambda, volume, shrinking_time } => {
                LinkGeometry::einstein(*dim, *lambda, *volume, *shrinking_time)?
            }
        };
        Ok(link)
    }
}

/// Round spheres are Einstein with λ = n(n−1)/β² and T = β²/(2(n−1));
/// returns the Einstein data that carries the closed-form μ.
pub fn einstein_equivalent(link: &LinkGeometry) -> Option<LinkGeometry> {
    match link {
        LinkGeometry::Einstein { .. } => Some(link.clone()),
        LinkGeometry::RoundSphere { dim, beta } => {
            let n = *dim as f64;
            LinkGeometry::einstein(*dim, n * (n - 1.0) / (beta * beta), link.volume(), beta * beta / (2.0 * (n - 1.0)))
                .ok()
        }
        LinkGeometry::ProfileWarped(_) => None,
    }
}

/// Deserialize a command's input, rejecting unknown fields.
pub fn parse<T: DeserializeOwned>(input: &Value) -> Result<T, CliError> {
    serde_json::from_value(input.clone()).map_err(|e| CliError::validation(format!("input: {e}")))
}

/// Commands whose input is a link alone accept the bare link spec.
pub fn wrap_bare_link(input: Value) -> Value {
    match &input {
        Value::Object(m) if m.contains_key("variant") => {
            let mut w = Map::new();
            w.insert("link".into(), input);
            Value::Object(w)
        }
        _ => input,
    }
}

/// Apply `key=value` overrides; dotted keys reach into nested objects and
/// values are parsed as JSON, falling back to a plain string.
pub fn apply_overrides(input: &mut Value, overrides: &[(String, String)]) -> Result<(), CliError> {
    for (key, raw) in overrides {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        set_path(input, key, value)?;
    }
    Ok(())
}

pub fn set_path(input: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = input;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::validation(format!("override {key}: {p} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = obj.entry(*p).or_insert_with(|| Value::Object(Map::new()));
    }
    Err(CliError::validation(format!("empty override key {key:?}")))
}

/// `{"param": "link.beta", "values": [...]}` or
/// `{"param": "link.beta", "start": 0.8, "stop": 2.0, "step": 0.1}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub param: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

impl GridSpec {
    /// Grid values in input order. Ranges include `stop` when it is hit to
    /// within 1e-9 steps, and each value is computed as start + k·step.
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::validation("grid values must be finite"));
                }
                Ok(v.clone())
            }
            (None, Some(a), Some(b), Some(h)) => {
                if !(a.is_finite() && b.is_finite() && h > 0.0 && h.is_finite()) {
                    return Err(CliError::validation("grid range needs finite start/stop and step > 0"));
                }
                if b < a {
                    return Ok(Vec::new());
                }
                let count = ((b - a) / h + 1e-9).floor() as usize + 1;
                Ok((0..count).map(|k| a + k as f64 * h).collect())
            }
            _ => Err(CliError::validation("grid needs either values or start/stop/step")),
        }
    }
}

/// Split a `grid` entry off the input document.
pub fn take_grid(input: &mut Value) -> Result<Option<GridSpec>, CliError> {
    match input.as_object_mut().and_then(|m| m.remove("grid")) {
        Some(g) => Ok(Some(parse(&g)?)),
        None => Ok(None),
    }
}
