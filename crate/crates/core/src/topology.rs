//! Data and energy topology of a network.
//!
//! Nodes are numbered `1..=N` in [`NetworkDescription`] (the on-disk
//! convention) and `0..N` everywhere else. Links are indexed by declaration
//! order; every per-link vector in the crate follows that order.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_math::min_power;

/// Tolerance under which a flow vector is considered to conserve flow.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataLinkSpec {
    pub id: u32,
    pub src: usize,
    pub dst: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLinkSpec {
    pub id: u32,
    pub src: usize,
    pub dst: usize,
    pub alpha: f64,
}

/// Unvalidated network description with 1-based node numbers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub nodes: usize,
    pub data_links: Vec<DataLinkSpec>,
    #[serde(default)]
    pub energy_links: Vec<EnergyLinkSpec>,
    /// Exogenous injection per node; destinations carry negative entries.
    /// Defaults to all zeros.
    #[serde(default)]
    pub supply: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataLink {
    pub id: u32,
    pub src: usize,
    pub dst: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLink {
    pub id: u32,
    pub src: usize,
    pub dst: usize,
    pub alpha: f64,
}

/// Validated, immutable network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_count: usize,
    data_links: Vec<DataLink>,
    energy_links: Vec<EnergyLink>,
    supply: Vec<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    f: DMatrix<f64>,
    out_data: Vec<Vec<usize>>,
    in_data: Vec<Vec<usize>>,
    out_energy: Vec<Vec<usize>>,
    in_energy: Vec<Vec<usize>>,
}

fn check_node(kind: &'static str, id: u32, node: usize, node_count: usize) -> Result<usize> {
    if node == 0 || node > node_count {
        return Err(Error::NodeIndexOutOfRange {
            kind,
            id,
            node,
            node_count,
        });
    }
    Ok(node - 1)
}

/// Validates a raw description and builds the incidence matrices.
pub fn build_network(desc: &NetworkDescription) -> Result<Network> {
    let n = desc.nodes;
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }

    let mut seen = HashSet::new();
    let mut data_links = Vec::with_capacity(desc.data_links.len());
    for spec in &desc.data_links {
        if !seen.insert(spec.id) {
            return Err(Error::DuplicateLinkId {
                kind: "data",
                id: spec.id,
            });
        }
        let src = check_node("data", spec.id, spec.src, n)?;
        let dst = check_node("data", spec.id, spec.dst, n)?;
        if src == dst {
            return Err(Error::SelfLoop {
                kind: "data",
                id: spec.id,
                node: spec.src,
            });
        }
        if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
            return Err(Error::BadSigma {
                id: spec.id,
                sigma: spec.sigma,
            });
        }
        data_links.push(DataLink {
            id: spec.id,
            src,
            dst,
            sigma: spec.sigma,
        });
    }

    let mut seen = HashSet::new();
    let mut energy_links = Vec::with_capacity(desc.energy_links.len());
    for spec in &desc.energy_links {
        if !seen.insert(spec.id) {
            return Err(Error::DuplicateLinkId {
                kind: "energy",
                id: spec.id,
            });
        }
        let src = check_node("energy", spec.id, spec.src, n)?;
        let dst = check_node("energy", spec.id, spec.dst, n)?;
        if src == dst {
            return Err(Error::SelfLoop {
                kind: "energy",
                id: spec.id,
                node: spec.src,
            });
        }
        if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
            return Err(Error::BadAlpha {
                id: spec.id,
                alpha: spec.alpha,
            });
        }
        energy_links.push(EnergyLink {
            id: spec.id,
            src,
            dst,
            alpha: spec.alpha,
        });
    }

    let supply = match &desc.supply {
        Some(s) if s.len() != n => {
            return Err(Error::DimensionMismatch {
                what: "supply",
                expected: n,
                got: s.len(),
            })
        }
        Some(s) => s.clone(),
        None => vec![0.0; n],
    };

    Ok(Network::from_parts(n, data_links, energy_links, supply))
}

impl Network {
    /// Assembles a network from already validated, 0-based parts.
    pub(crate) fn from_parts(
        node_count: usize,
        data_links: Vec<DataLink>,
        energy_links: Vec<EnergyLink>,
        supply: Vec<f64>,
    ) -> Network {
        let l = data_links.len();
        let q = energy_links.len();
        let mut a = DMatrix::zeros(node_count, l);
        let mut out_data = vec![Vec::new(); node_count];
        let mut in_data = vec![Vec::new(); node_count];
        for (k, link) in data_links.iter().enumerate() {
            a[(link.src, k)] = 1.0;
            a[(link.dst, k)] = -1.0;
            out_data[link.src].push(k);
            in_data[link.dst].push(k);
        }
        let mut b = DMatrix::zeros(node_count, q);
        let mut out_energy = vec![Vec::new(); node_count];
        let mut in_energy = vec![Vec::new(); node_count];
        for (k, link) in energy_links.iter().enumerate() {
            b[(link.src, k)] = 1.0;
            b[(link.dst, k)] = -link.alpha;
            out_energy[link.src].push(k);
            in_energy[link.dst].push(k);
        }
        let f = a.map(|v: f64| v.max(0.0));
        Network {
            node_count,
            data_links,
            energy_links,
            supply,
            a,
            b,
            f,
            out_data,
            in_data,
            out_energy,
            in_energy,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn data_links(&self) -> &[DataLink] {
        &self.data_links
    }

    pub fn energy_links(&self) -> &[EnergyLink] {
        &self.energy_links
    }

    pub fn supply(&self) -> &[f64] {
        &self.supply
    }

    /// Node-by-data-link incidence matrix (`+1` at the start node, `-1` at the end node).
    pub fn incidence_data(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Node-by-energy-link matrix (`+1` at the sender, `-alpha` at the receiver).
    pub fn incidence_energy(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Positive part of the data incidence matrix.
    pub fn outgoing_data_matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn out_data(&self, node: usize) -> &[usize] {
        &self.out_data[node]
    }

    pub fn in_data(&self, node: usize) -> &[usize] {
        &self.in_data[node]
    }

    pub fn out_energy(&self, node: usize) -> &[usize] {
        &self.out_energy[node]
    }

    pub fn in_energy(&self, node: usize) -> &[usize] {
        &self.in_energy[node]
    }

    /// Same topology with a different supply vector.
    pub fn with_supply(&self, supply: Vec<f64>) -> Result<Network> {
        if supply.len() != self.node_count {
            return Err(Error::DimensionMismatch {
                what: "supply",
                expected: self.node_count,
                got: supply.len(),
            });
        }
        Ok(Network {
            supply,
            ..self.clone()
        })
    }

    /// Same data topology and supply with every energy link removed.
    pub fn without_energy_links(&self) -> Network {
        Network::from_parts(
            self.node_count,
            self.data_links.clone(),
            Vec::new(),
            self.supply.clone(),
        )
    }

    /// Back to a raw description (1-based nodes).
    pub fn to_description(&self) -> NetworkDescription {
        NetworkDescription {
            nodes: self.node_count,
            data_links: self
                .data_links
                .iter()
                .map(|l| DataLinkSpec {
                    id: l.id,
                    src: l.src + 1,
                    dst: l.dst + 1,
                    sigma: l.sigma,
                })
                .collect(),
            energy_links: self
                .energy_links
                .iter()
                .map(|l| EnergyLinkSpec {
                    id: l.id,
                    src: l.src + 1,
                    dst: l.dst + 1,
                    alpha: l.alpha,
                })
                .collect(),
            supply: Some(self.supply.clone()),
        }
    }

    /// Per-node slack `E - F p - B y`. Negative entries are violations.
    pub fn energy_slack(
        &self,
        powers: &[f64],
        transfers: &[f64],
        energy: &[f64],
    ) -> Result<Vec<f64>> {
        expect_len("powers", self.data_links.len(), powers.len())?;
        expect_len("transfers", self.energy_links.len(), transfers.len())?;
        expect_len("energy", self.node_count, energy.len())?;
        let used = &self.f * DVector::from_column_slice(powers)
            + &self.b * DVector::from_column_slice(transfers);
        Ok(energy.iter().zip(used.iter()).map(|(e, u)| e - u).collect())
    }
}

pub(crate) fn expect_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Non-negative per-data-link flow rates.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector(Vec<f64>);

impl FlowVector {
    pub fn new(t: Vec<f64>) -> Result<FlowVector> {
        if let Some(&v) = t.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NegativeValue {
                what: "flow",
                value: v,
            });
        }
        Ok(FlowVector(t))
    }

    pub fn zeros(len: usize) -> FlowVector {
        FlowVector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for FlowVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Harvested energy per node and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestProfile {
    rows: Vec<Vec<f64>>,
    slots: usize,
}

impl HarvestProfile {
    /// `rows[n][i]` is the energy node `n` harvests in slot `i`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<HarvestProfile> {
        let slots = rows.first().map_or(0, Vec::len);
        if slots == 0 {
            return Err(Error::DimensionMismatch {
                what: "harvest slots",
                expected: 1,
                got: 0,
            });
        }
        for row in &rows {
            expect_len("harvest row", slots, row.len())?;
            if let Some(&v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::NegativeValue {
                    what: "harvest",
                    value: v,
                });
            }
        }
        Ok(HarvestProfile { rows, slots })
    }

    /// Single-slot profile.
    pub fn single(energy: &[f64]) -> Result<HarvestProfile> {
        HarvestProfile::new(energy.iter().map(|&e| vec![e]).collect())
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn get(&self, node: usize, slot: usize) -> f64 {
        self.rows[node][slot]
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.rows[node]
    }

    pub fn slot(&self, slot: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[slot]).collect()
    }
}

/// `A t - s`; the flows conserve when every entry is below [`CONSERVATION_TOL`].
pub fn check_flow_conservation(net: &Network, t: &FlowVector) -> Result<Vec<f64>> {
    expect_len("flows", net.data_links.len(), t.len())?;
    let at = net.incidence_data() * DVector::from_column_slice(t.as_slice());
    Ok(at.iter().zip(&net.supply).map(|(x, s)| x - s).collect())
}

pub fn is_conserved(residual: &[f64]) -> bool {
    residual.iter().all(|r| r.abs() < CONSERVATION_TOL)
}

/// Per-node energy below which the outgoing links cannot carry their flows.
pub fn min_feasible_energy(net: &Network, t: &FlowVector) -> Result<Vec<f64>> {
    expect_len("flows", net.data_links.len(), t.len())?;
    let mut floor = vec![0.0; net.node_count];
    for (k, link) in net.data_links.iter().enumerate() {
        floor[link.src] += min_power(link.sigma, t[k]);
    }
    Ok(floor)
}
