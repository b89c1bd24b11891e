//! Scenario files: TOML schema, validation and conversion to a core
//! [`Scenario`].

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use convoy_core::convoy_graph::{ConvoyGraph, Edge};
use convoy_core::fleet_sim::{FleetState, Scenario, VirtualLeader};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Deserialize)]
#[serde(untagged)]
pub enum VehicleId {
    Number(i64),
    Name(String),
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleId::Number(n) => write!(f, "{n}"),
            VehicleId::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    id: VehicleId,
    q0: [f64; 2],
    v0: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: VehicleId,
    to: VehicleId,
    mu: f64,
    omega: f64,
    d: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    r: OneOrMany<f64>,
    t_f: f64,
    tau: f64,
    #[serde(rename = "T_total", alias = "t_total")]
    t_total: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeader {
    attach_to: OneOrMany<VehicleId>,
    d: [f64; 2],
    velocity: [f64; 2],
    boundary_y: f64,
    mu: Option<f64>,
    omega: Option<f64>,
    r: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    #[serde(default)]
    plot: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    vehicles: Vec<RawVehicle>,
    edges: Vec<RawEdge>,
    control: RawControl,
    virtual_leader: Option<RawLeader>,
    #[serde(default)]
    output: RawOutput,
}

/// Validated scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub ids: Vec<VehicleId>,
    pub scenario: Scenario,
    pub output_dir: Option<PathBuf>,
    pub plot: bool,
}

impl ScenarioConfig {
    pub fn edge_label(&self, k: usize) -> String {
        let e = &self.scenario.graph.edges()[k];
        format!("{}_{}", self.ids[e.tail], self.ids[e.head])
    }
}

fn finite(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if finite(field, v)? > 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn finite_pair(field: &str, v: [f64; 2]) -> Result<[f64; 2], ConfigError> {
    finite(&format!("{field}[0]"), v[0])?;
    finite(&format!("{field}[1]"), v[1])?;
    Ok(v)
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    parse(&text, &name).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse(text: &str, name: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from(name),
        message: e.to_string(),
    })?;
    validate(raw, name)
}

fn validate(raw: RawConfig, name: &str) -> Result<ScenarioConfig, ConfigError> {
    if raw.vehicles.is_empty() {
        return Err(invalid("vehicles", "at least one vehicle is required"));
    }
    let mut index = HashMap::new();
    let mut q = Vec::new();
    let mut v = Vec::new();
    for (i, veh) in raw.vehicles.iter().enumerate() {
        if index.insert(veh.id.clone(), i).is_some() {
            return Err(invalid(
                format!("vehicles[{i}].id"),
                format!("duplicate id {}", veh.id),
            ));
        }
        q.push(finite_pair(&format!("vehicles[{i}].q0"), veh.q0)?);
        v.push(finite_pair(&format!("vehicles[{i}].v0"), veh.v0)?);
    }
    let lookup = |field: String, id: &VehicleId| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| invalid(field, format!("unknown vehicle id {id}")))
    };

    let mut edges = Vec::new();
    for (k, e) in raw.edges.iter().enumerate() {
        let tail = lookup(format!("edges[{k}].from"), &e.from)?;
        let head = lookup(format!("edges[{k}].to"), &e.to)?;
        let mu = positive(&format!("edges[{k}].mu"), e.mu)?;
        let omega = positive(&format!("edges[{k}].omega"), e.omega)?;
        edges.push(Edge::new(
            tail,
            head,
            mu,
            omega,
            finite_pair(&format!("edges[{k}].d"), e.d)?,
        ));
    }
    let graph =
        ConvoyGraph::new(raw.vehicles.len(), edges).map_err(|e| invalid("edges", e.to_string()))?;

    let c = &raw.control;
    let r = match &c.r {
        OneOrMany::One(r) => vec![positive("control.r", *r)?; graph.edge_count()],
        OneOrMany::Many(list) => {
            if list.len() != graph.edge_count() {
                return Err(invalid(
                    "control.r",
                    format!(
                        "{} weights given for {} edges",
                        list.len(),
                        graph.edge_count()
                    ),
                ));
            }
            list.iter()
                .enumerate()
                .map(|(k, &r)| positive(&format!("control.r[{k}]"), r))
                .collect::<Result<_, _>>()?
        }
    };
    let t_f = positive("control.t_f", c.t_f)?;
    let tau = positive("control.tau", c.tau)?;
    let t_total = positive("control.T_total", c.t_total)?;
    if tau > t_f {
        return Err(invalid(
            "control.tau",
            format!("tau must not exceed t_f (tau = {tau}, t_f = {t_f})"),
        ));
    }
    if t_f > t_total {
        return Err(invalid(
            "control.t_f",
            format!("t_f must not exceed T_total (t_f = {t_f}, T_total = {t_total})"),
        ));
    }

    let virtual_leader = match &raw.virtual_leader {
        None => None,
        Some(l) => {
            let attach = match &l.attach_to {
                OneOrMany::One(id) => id.clone(),
                OneOrMany::Many(ids) if ids.len() == 1 => ids[0].clone(),
                OneOrMany::Many(ids) => {
                    return Err(invalid(
                        "virtual_leader.attach_to",
                        format!(
                            "the virtual leader must attach to exactly one vehicle, got {}",
                            ids.len()
                        ),
                    ))
                }
            };
            Some(VirtualLeader {
                attach_to: lookup("virtual_leader.attach_to".into(), &attach)?,
                offset: finite_pair("virtual_leader.d", l.d)?,
                velocity: finite_pair("virtual_leader.velocity", l.velocity)?,
                boundary: finite("virtual_leader.boundary_y", l.boundary_y)?,
                mu: positive("virtual_leader.mu", l.mu.unwrap_or(1.0))?,
                omega: positive("virtual_leader.omega", l.omega.unwrap_or(5.0))?,
                r: positive("virtual_leader.r", l.r.unwrap_or(1.0))?,
            })
        }
    };

    let initial = FleetState::new(q, v).map_err(|e| invalid("vehicles", e.to_string()))?;
    Ok(ScenarioConfig {
        name: name.to_string(),
        ids: raw.vehicles.into_iter().map(|v| v.id).collect(),
        scenario: Scenario {
            graph,
            initial,
            r,
            t_f,
            tau,
            t_total,
            virtual_leader,
        },
        output_dir: raw.output.directory,
        plot: raw.output.plot,
    })
}
