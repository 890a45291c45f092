//! Capacity assignment over several slots with fixed flows.
//!
//! Flows and channels stay fixed across slots while harvests vary. Without
//! energy links each node picks a sum-power schedule (the classical
//! single-link harvesting staircase over its energy above the floors) and
//! splits every slot's sum by water-filling. With energy links the horizon is
//! unrolled into one network replica per slot, joined by lossless storage
//! links, and solved as a single-slot problem.

use crate::error::{Error, Result};
use crate::power_math::LinkParams;
use crate::single_slot::{
    solve_node, solve_single_slot, total_delay, SingleSlotOptions, SweepRecord,
};
use crate::topology::{
    expect_len, min_feasible_energy, DataLink, EnergyLink, FlowVector, HarvestProfile, Network,
};

/// `E_ni` minus the floor powers of node `n`'s outgoing links, as `G[n][i]`.
pub fn reduced_arrivals(
    net: &Network,
    t: &FlowVector,
    harvest: &HarvestProfile,
) -> Result<Vec<Vec<f64>>> {
    expect_len("harvest rows", net.node_count(), harvest.node_count())?;
    let floors = min_feasible_energy(net, t)?;
    let mut g = Vec::with_capacity(net.node_count());
    for (n, floor) in floors.iter().enumerate() {
        let row: Vec<f64> = harvest.row(n).iter().map(|e| e - floor).collect();
        if let Some((slot, &value)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InfeasibleSlot {
                node: n,
                slot,
                value,
            });
        }
        g.push(row);
    }
    Ok(g)
}

/// Per-slot sum powers of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct SumPowerSchedule {
    pub levels: Vec<f64>,
}

impl SumPowerSchedule {
    /// Slots after which the level steps up.
    pub fn step_boundaries(&self) -> Vec<usize> {
        self.levels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(k, _)| k)
            .collect()
    }
}

/// Optimal spending of causally arriving energy `g` for any convex,
/// decreasing per-slot cost: repeatedly hold the level at the smallest
/// prefix average of what remains, ending each step where that average is
/// attained (the latest such slot on ties).
pub fn staircase_schedule(g: &[f64]) -> Result<SumPowerSchedule> {
    if let Some(&bad) = g.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::NegativeValue {
            what: "reduced arrival",
            value: bad,
        });
    }
    let mut levels = Vec::with_capacity(g.len());
    let mut start = 0;
    while start < g.len() {
        let mut sum = 0.0;
        let mut best = (f64::INFINITY, start);
        for (k, v) in g.iter().enumerate().skip(start) {
            sum += v;
            let avg = sum / (k - start + 1) as f64;
            if avg <= best.0 {
                best = (avg, k);
            }
        }
        levels.extend(std::iter::repeat_n(best.0, best.1 - start + 1));
        start = best.1 + 1;
    }
    Ok(SumPowerSchedule { levels })
}

fn node_params(net: &Network, t: &FlowVector, n: usize) -> Vec<LinkParams> {
    net.out_data(n)
        .iter()
        .map(|&k| LinkParams {
            sigma: net.data_links()[k].sigma,
            t: t[k],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSlotPowers {
    /// `powers[l][i]`: power of data link `l` in slot `i`.
    pub powers: Vec<Vec<f64>>,
    /// Sum-power schedule above the floors, per node.
    pub schedules: Vec<SumPowerSchedule>,
    pub objective: f64,
}

/// Multi-slot allocation when nodes can only store their own energy.
pub fn solve_multi_slot_no_transfer(
    net: &Network,
    t: &FlowVector,
    harvest: &HarvestProfile,
) -> Result<MultiSlotPowers> {
    expect_len("flows", net.data_links().len(), t.len())?;
    let g = reduced_arrivals(net, t, harvest)?;
    let slots = harvest.slots();
    let mut powers = vec![vec![0.0; slots]; net.data_links().len()];
    let mut schedules = Vec::with_capacity(net.node_count());
    let mut objective = 0.0;
    for (n, row) in g.iter().enumerate() {
        let schedule = staircase_schedule(row)?;
        let params = node_params(net, t, n);
        if params.iter().any(|lp| lp.t > 0.0) {
            let floor: f64 = params.iter().map(|lp| lp.min_power()).sum();
            for (i, &s) in schedule.levels.iter().enumerate() {
                if s <= 0.0 {
                    return Err(Error::InfeasibleSlot {
                        node: n,
                        slot: i,
                        value: s,
                    });
                }
                let alloc = solve_node(floor + s, &params)?;
                for (&k, p) in net.out_data(n).iter().zip(alloc.powers) {
                    powers[k][i] = p;
                }
            }
        }
        schedules.push(schedule);
    }
    for i in 0..slots {
        let p: Vec<f64> = powers.iter().map(|row| row[i]).collect();
        objective += total_delay(net, t, &p);
    }
    Ok(MultiSlotPowers {
        powers,
        schedules,
        objective,
    })
}

/// Where an energy link of the unrolled network came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyOrigin {
    /// Energy link index `link` of the original network, in slot `slot`.
    Link { link: usize, slot: usize },
    /// Battery carrying node `node`'s energy from `slot` into `slot + 1`.
    Storage { node: usize, slot: usize },
}

/// One network replica per slot, plus storage links between replicas.
#[derive(Debug, Clone)]
pub struct TimeExpandedNetwork {
    pub network: Network,
    pub slots: usize,
    pub base_nodes: usize,
    /// `(original data link index, slot)` for each expanded data link.
    pub data_origin: Vec<(usize, usize)>,
    pub energy_origin: Vec<EnergyOrigin>,
    base_data_ids: Vec<u32>,
    base_energy_ids: Vec<u32>,
}

impl TimeExpandedNetwork {
    /// Expanded index of `node` in `slot`.
    pub fn node(&self, node: usize, slot: usize) -> usize {
        slot * self.base_nodes + node
    }

    /// Original id of an expanded data link.
    pub fn original_data_id(&self, expanded: usize) -> u32 {
        self.base_data_ids[self.data_origin[expanded].0]
    }

    /// Original id of an expanded energy link; `None` for storage links.
    pub fn original_energy_id(&self, expanded: usize) -> Option<u32> {
        match self.energy_origin[expanded] {
            EnergyOrigin::Link { link, .. } => Some(self.base_energy_ids[link]),
            EnergyOrigin::Storage { .. } => None,
        }
    }
}

/// Unrolls `net` over `slots` slots. Expanded node `i * N + n` is node `n` in
/// slot `i`; links are ordered slot by slot, storage links last.
pub fn time_expand(net: &Network, slots: usize) -> Result<TimeExpandedNetwork> {
    if slots == 0 {
        return Err(Error::DimensionMismatch {
            what: "slots",
            expected: 1,
            got: 0,
        });
    }
    let n = net.node_count();
    let mut data = Vec::new();
    let mut data_origin = Vec::new();
    let mut energy = Vec::new();
    let mut energy_origin = Vec::new();
    for i in 0..slots {
        for (k, l) in net.data_links().iter().enumerate() {
            data.push(DataLink {
                id: data.len() as u32 + 1,
                src: i * n + l.src,
                dst: i * n + l.dst,
                sigma: l.sigma,
            });
            data_origin.push((k, i));
        }
    }
    for i in 0..slots {
        for (q, l) in net.energy_links().iter().enumerate() {
            energy.push(EnergyLink {
                id: energy.len() as u32 + 1,
                src: i * n + l.src,
                dst: i * n + l.dst,
                alpha: l.alpha,
            });
            energy_origin.push(EnergyOrigin::Link { link: q, slot: i });
        }
    }
    for i in 0..slots - 1 {
        for node in 0..n {
            energy.push(EnergyLink {
                id: energy.len() as u32 + 1,
                src: i * n + node,
                dst: (i + 1) * n + node,
                alpha: 1.0,
            });
            energy_origin.push(EnergyOrigin::Storage { node, slot: i });
        }
    }
    let supply = (0..slots)
        .flat_map(|_| net.supply().iter().copied())
        .collect();
    Ok(TimeExpandedNetwork {
        network: Network::from_parts(n * slots, data, energy, supply),
        slots,
        base_nodes: n,
        data_origin,
        energy_origin,
        base_data_ids: net.data_links().iter().map(|l| l.id).collect(),
        base_energy_ids: net.energy_links().iter().map(|l| l.id).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSlotSolution {
    /// `powers[l][i]`.
    pub powers: Vec<Vec<f64>>,
    /// `transfers[q][i]`.
    pub transfers: Vec<Vec<f64>>,
    /// `taps[q][i]`: meter of energy link `q` in slot `i`.
    pub taps: Vec<Vec<f64>>,
    /// `carryover[n][i]`: energy node `n` stores from slot `i` into `i + 1`.
    pub carryover: Vec<Vec<f64>>,
    /// `water_levels[n][i]`.
    pub water_levels: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sweeps of the expanded solve; water levels indexed by expanded node.
    pub trace: Vec<SweepRecord>,
}

/// Multi-slot allocation with energy links and storage, solved on the
/// time-expanded network. Infeasibility deficits name expanded nodes
/// (`slot * N + node`).
pub fn solve_multi_slot_with_transfer(
    net: &Network,
    t: &FlowVector,
    harvest: &HarvestProfile,
    options: &SingleSlotOptions,
) -> Result<MultiSlotSolution> {
    expect_len("flows", net.data_links().len(), t.len())?;
    expect_len("harvest rows", net.node_count(), harvest.node_count())?;
    let slots = harvest.slots();
    let expanded = time_expand(net, slots)?;
    let flows = FlowVector::new(
        (0..slots)
            .flat_map(|_| t.as_slice().iter().copied())
            .collect(),
    )?;
    let energy: Vec<f64> = (0..slots).flat_map(|i| harvest.slot(i)).collect();
    let mut opts = options.clone();
    if let Some(w) = &options.link_weights {
        expect_len("link weights", net.data_links().len(), w.len())?;
        opts.link_weights = Some((0..slots).flat_map(|_| w.iter().copied()).collect());
    }
    let sol = solve_single_slot(&expanded.network, &flows, &energy, &opts)?;

    let (l, q, n) = (
        net.data_links().len(),
        net.energy_links().len(),
        net.node_count(),
    );
    let mut powers = vec![vec![0.0; slots]; l];
    for (k, &(link, slot)) in expanded.data_origin.iter().enumerate() {
        powers[link][slot] = sol.powers[k];
    }
    let mut transfers = vec![vec![0.0; slots]; q];
    let mut taps = vec![vec![0.0; slots]; q];
    let mut carryover = vec![vec![0.0; slots.saturating_sub(1)]; n];
    for (k, origin) in expanded.energy_origin.iter().enumerate() {
        match *origin {
            EnergyOrigin::Link { link, slot } => {
                transfers[link][slot] = sol.transfers[k];
                taps[link][slot] = sol.meters.taps[k];
            }
            EnergyOrigin::Storage { node, slot } => carryover[node][slot] = sol.transfers[k],
        }
    }
    let water_levels = (0..n)
        .map(|node| {
            (0..slots)
                .map(|i| sol.water_levels[expanded.node(node, i)])
                .collect()
        })
        .collect();
    Ok(MultiSlotSolution {
        powers,
        transfers,
        taps,
        carryover,
        water_levels,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        trace: sol.trace,
    })
}
