//! Run configuration: a JSON file describing the network, the harvests and
//! the solver to use.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use eflow_core::topology::{
    build_network, check_flow_conservation, is_conserved, DataLinkSpec, EnergyLinkSpec, FlowVector,
    HarvestProfile, Network, NetworkDescription,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Single,
    Multi,
    Joint,
    Pareto,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataLink {
    id: u32,
    src: usize,
    dst: usize,
    sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergyLink {
    id: u32,
    src: usize,
    dst: usize,
    alpha: Option<f64>,
}

/// Solver knobs; every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    /// Recall in fixed increments instead of solving the balance exactly.
    pub recall_step: Option<f64>,
    /// Flow-split cells per source for the Pareto sweep.
    pub grid: usize,
    /// Path-weight cells for the Pareto sweep.
    pub weight_grid: usize,
    pub max_points: u128,
    pub parallel: bool,
    pub seed: u64,
    /// Explicit joint starting points, each a list of path flows.
    pub joint_starts: Vec<Vec<f64>>,
    /// Additional joint starts drawn at random from `seed`.
    pub random_starts: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tol: None,
            max_iters: None,
            recall_step: None,
            grid: 20,
            weight_grid: 8,
            max_points: 1_000_000,
            parallel: false,
            seed: 0,
            joint_starts: Vec::new(),
            random_starts: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    /// Free-form notes on where the numbers come from; ignored by the solvers.
    #[serde(default)]
    #[allow(dead_code)]
    notes: serde_json::Value,
    nodes: usize,
    data_links: Vec<RawDataLink>,
    #[serde(default)]
    energy_links: Vec<RawEnergyLink>,
    supply: Option<Vec<f64>>,
    flows: Option<Vec<f64>>,
    harvests: Vec<Vec<f64>>,
    slots: Option<usize>,
    solver: SolverKind,
    #[serde(default)]
    options: RunOptions,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub description: NetworkDescription,
    pub network: Network,
    pub flows: Option<FlowVector>,
    pub harvest: HarvestProfile,
    pub solver: SolverKind,
    pub options: RunOptions,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut data_links = Vec::with_capacity(raw.data_links.len());
    for (k, l) in raw.data_links.iter().enumerate() {
        let sigma = l.sigma.ok_or_else(|| {
            invalid(
                format!("data_links[{k}]"),
                format!("data link {} has no sigma", l.id),
            )
        })?;
        data_links.push(DataLinkSpec {
            id: l.id,
            src: l.src,
            dst: l.dst,
            sigma,
        });
    }
    let mut energy_links = Vec::with_capacity(raw.energy_links.len());
    for (k, l) in raw.energy_links.iter().enumerate() {
        let alpha = l.alpha.ok_or_else(|| {
            invalid(
                format!("energy_links[{k}]"),
                format!("energy link {} has no alpha", l.id),
            )
        })?;
        energy_links.push(EnergyLinkSpec {
            id: l.id,
            src: l.src,
            dst: l.dst,
            alpha,
        });
    }
    let description = NetworkDescription {
        nodes: raw.nodes,
        data_links,
        energy_links,
        supply: raw.supply.clone(),
    };
    let network = build_network(&description).map_err(|e| invalid("network", e.to_string()))?;

    let flows = match &raw.flows {
        Some(t) => {
            let t = FlowVector::new(t.clone()).map_err(|e| invalid("flows", e.to_string()))?;
            if raw.supply.is_some() {
                let residual = check_flow_conservation(&network, &t)
                    .map_err(|e| invalid("flows", e.to_string()))?;
                if !is_conserved(&residual) {
                    return Err(invalid(
                        "flows",
                        format!("flows do not conserve supply; residual A*t - s = {residual:?}"),
                    ));
                }
            }
            Some(t)
        }
        None => None,
    };

    let harvest = HarvestProfile::new(raw.harvests.clone())
        .map_err(|e| invalid("harvests", e.to_string()))?;
    if harvest.node_count() != network.node_count() {
        return Err(invalid(
            "harvests",
            format!(
                "{} rows for {} nodes",
                harvest.node_count(),
                network.node_count()
            ),
        ));
    }
    if let Some(slots) = raw.slots {
        if slots != harvest.slots() {
            return Err(invalid(
                "slots",
                format!("{slots} slots but harvests have {}", harvest.slots()),
            ));
        }
    }

    match raw.solver {
        SolverKind::Single | SolverKind::Multi if flows.is_none() => {
            return Err(invalid("flows", "required by the single and multi solvers"));
        }
        SolverKind::Single if harvest.slots() != 1 => {
            return Err(invalid(
                "harvests",
                "the single solver takes exactly one slot",
            ));
        }
        SolverKind::Joint | SolverKind::Pareto => {
            if raw.supply.is_none() {
                return Err(invalid(
                    "supply",
                    "required by the joint and pareto solvers",
                ));
            }
            if harvest.slots() != 1 {
                return Err(invalid("harvests", "the joint problem is single-slot"));
            }
        }
        _ => {}
    }
    let o = &raw.options;
    if let Some(tol) = o.tol {
        if !(tol > 0.0) {
            return Err(invalid("options.tol", "must be positive"));
        }
    }
    if let Some(step) = o.recall_step {
        if !(step > 0.0) {
            return Err(invalid("options.recall_step", "must be positive"));
        }
    }

    Ok(RunConfig {
        description,
        network,
        flows,
        harvest,
        solver: raw.solver,
        options: raw.options,
    })
}
