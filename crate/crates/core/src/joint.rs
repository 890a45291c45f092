//! Joint routing and capacity assignment in a single slot.
//!
//! Flows are no longer fixed: supply injected at source nodes is routed over
//! explicit source-to-destination paths. Each iteration rebalances power
//! inside every node, shifts flow between paths of each source, and sweeps
//! the energy links once. All three moves are only kept when the total delay
//! does not grow. The objective is not jointly convex, so a fixed point is
//! certified against the necessary optimality conditions only.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle;
use crate::power_math::{capacity, delay_unchecked, dh_dp, LinkParams};
use crate::single_slot::{
    assemble_powers, node_links, solve_single_slot, transfer_residual, RecallMode,
    SingleSlotOptions, SlotState,
};
use crate::topology::{expect_len, FlowVector, Network};

/// A simple data path from a source to a destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub source: usize,
    pub destination: usize,
    /// Data link indices, head to tail.
    pub links: Vec<usize>,
}

/// All simple paths of every source, grouped by source in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    /// `(source, supply, indices into paths)`.
    pub sources: Vec<(usize, f64, Vec<usize>)>,
}

impl PathSet {
    /// Link flows `t_l = sum of flows on paths through l`.
    pub fn link_flows(&self, link_count: usize, path_flows: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; link_count];
        for (path, &x) in self.paths.iter().zip(path_flows) {
            for &l in &path.links {
                t[l] += x;
            }
        }
        t
    }

    /// Per-path delays `sum of h_l` over the path's links.
    pub fn path_delays(&self, link_delays: &[f64]) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| p.links.iter().map(|&l| link_delays[l]).sum())
            .collect()
    }
}

/// Enumerates every simple path from each node with positive supply to the
/// nodes with negative supply. Paths stop at the first destination reached.
pub fn enumerate_paths(net: &Network) -> Result<PathSet> {
    let n = net.node_count();
    // reject cycles (colour DFS)
    let mut colour = vec![0u8; n];
    fn visit(net: &Network, v: usize, colour: &mut [u8]) -> Result<()> {
        colour[v] = 1;
        for &k in net.out_data(v) {
            let w = net.data_links()[k].dst;
            match colour[w] {
                1 => return Err(Error::CycleDetected(w)),
                0 => visit(net, w, colour)?,
                _ => {}
            }
        }
        colour[v] = 2;
        Ok(())
    }
    for v in 0..n {
        if colour[v] == 0 {
            visit(net, v, &mut colour)?;
        }
    }

    let supply = net.supply();
    let mut paths = Vec::new();
    let mut sources = Vec::new();
    for src in (0..n).filter(|&v| supply[v] > 0.0) {
        let first = paths.len();
        let mut stack = vec![(src, Vec::new())];
        // depth first, visiting outgoing links in declaration order
        while let Some((v, links)) = stack.pop() {
            if v != src && supply[v] < 0.0 {
                paths.push(Path {
                    source: src,
                    destination: v,
                    links,
                });
                continue;
            }
            for &k in net.out_data(v).iter().rev() {
                let mut next = links.clone();
                next.push(k);
                stack.push((net.data_links()[k].dst, next));
            }
        }
        if paths.len() == first {
            return Err(Error::NoPathToDestination(src));
        }
        sources.push((src, supply[src], (first..paths.len()).collect()));
    }
    Ok(PathSet { paths, sources })
}

/// State of the joint iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct JointIterate {
    pub path_flows: Vec<f64>,
    pub flows: Vec<f64>,
    pub powers: Vec<f64>,
    pub transfers: Vec<f64>,
    pub step_p: f64,
    pub step_t: f64,
    pub iteration: usize,
    pub objective: f64,
}

fn link_delays(net: &Network, t: &[f64], p: &[f64]) -> Vec<f64> {
    net.data_links()
        .iter()
        .enumerate()
        .map(|(k, l)| delay_unchecked(p[k], l.sigma, t[k]))
        .collect()
}

fn objective(net: &Network, t: &[f64], p: &[f64]) -> f64 {
    link_delays(net, t, p).iter().sum()
}

/// `dh/dt = c / (c - t)^2` at fixed power; infinite without spare capacity.
fn delay_flow_slope(p: f64, sigma: f64, t: f64) -> f64 {
    let c = capacity(p, sigma);
    if c <= t {
        f64::INFINITY
    } else {
        c / ((c - t) * (c - t))
    }
}

/// `|dh/dp|`, zero for links without flow.
fn power_slope(p: f64, sigma: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    dh_dp(p, LinkParams { sigma, t }).map_or(f64::INFINITY, f64::abs)
}

fn budgets(net: &Network, energy: &[f64], y: &[f64]) -> Vec<f64> {
    let mut b = energy.to_vec();
    for (q, link) in net.energy_links().iter().enumerate() {
        b[link.src] -= y[q];
        b[link.dst] += link.alpha * y[q];
    }
    b
}

fn is_feasible(net: &Network, energy: &[f64], it: &JointIterate) -> bool {
    let slack = match net.energy_slack(&it.powers, &it.transfers, energy) {
        Ok(s) => s,
        Err(_) => return false,
    };
    let scale = 1.0 + energy.iter().fold(0.0_f64, |m, v| m.max(*v));
    slack.iter().all(|s| *s > -1e-9 * scale)
        && it.transfers.iter().all(|&y| y >= 0.0)
        && it.path_flows.iter().all(|&x| x >= 0.0)
        && net
            .data_links()
            .iter()
            .enumerate()
            .all(|(k, l)| it.flows[k] == 0.0 || capacity(it.powers[k], l.sigma) > it.flows[k])
}

/// Moves `step_p` of power, inside every node, from the flow link with the
/// smallest `|dh/dp|` to the one with the largest. Links without power are
/// left alone and donors keep half of their headroom above the floor. If the
/// total delay would grow the step is halved (down to `step_floor`) and
/// retried; on success it is doubled again up to `step_cap`.
pub fn energy_management_step(
    net: &Network,
    it: &JointIterate,
    step_floor: f64,
    step_cap: f64,
) -> JointIterate {
    let mut step = it.step_p;
    while step >= step_floor {
        let mut p = it.powers.clone();
        let mut moved = false;
        for n in 0..net.node_count() {
            let live: Vec<(usize, f64)> = net
                .out_data(n)
                .iter()
                .filter(|&&k| it.powers[k] > 0.0)
                .map(|&k| {
                    (
                        k,
                        power_slope(it.powers[k], net.data_links()[k].sigma, it.flows[k]),
                    )
                })
                .collect();
            if live.len() < 2 {
                continue;
            }
            let hi = live
                .iter()
                .copied()
                .fold(live[0], |a, b| if b.1 > a.1 { b } else { a });
            let lo = live
                .iter()
                .copied()
                .fold(live[0], |a, b| if b.1 < a.1 { b } else { a });
            if hi.1 - lo.1 <= 1e-12 * hi.1 {
                continue;
            }
            let floor = LinkParams {
                sigma: net.data_links()[lo.0].sigma,
                t: it.flows[lo.0],
            }
            .min_power();
            let room = if it.flows[lo.0] > 0.0 {
                0.5 * (it.powers[lo.0] - floor)
            } else {
                it.powers[lo.0]
            };
            let delta = step.min(room);
            if delta > 0.0 {
                p[lo.0] -= delta;
                p[hi.0] += delta;
                moved = true;
            }
        }
        if !moved {
            return JointIterate {
                step_p: step,
                ..it.clone()
            };
        }
        let f = objective(net, &it.flows, &p);
        if f <= it.objective {
            return JointIterate {
                powers: p,
                objective: f,
                step_p: (2.0 * step).min(step_cap),
                ..it.clone()
            };
        }
        step *= 0.5;
    }
    JointIterate {
        step_p: step_floor,
        ..it.clone()
    }
}

/// Shifts `step_t` of flow, for every source, from the used path with the
/// largest `sum dh/dt` to the powered path with the smallest. The move is cut
/// to half the spare capacity of the receiving path's links, and halved
/// (down to `step_floor`) while it would increase the total delay.
pub fn data_routing_step(
    net: &Network,
    paths: &PathSet,
    it: &JointIterate,
    step_floor: f64,
    step_cap: f64,
) -> JointIterate {
    let sigma = |k: usize| net.data_links()[k].sigma;
    let sums: Vec<f64> = paths
        .paths
        .iter()
        .map(|path| {
            if path.links.iter().any(|&k| it.powers[k] <= 0.0) {
                f64::INFINITY
            } else {
                path.links
                    .iter()
                    .map(|&k| delay_flow_slope(it.powers[k], sigma(k), it.flows[k]))
                    .sum()
            }
        })
        .collect();

    let mut step = it.step_t;
    while step >= step_floor {
        let mut x = it.path_flows.clone();
        for (_, _, members) in &paths.sources {
            let from = members
                .iter()
                .copied()
                .filter(|&i| it.path_flows[i] > 0.0)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if sums[b] >= sums[i] => Some(b),
                    _ => Some(i),
                });
            let to = members
                .iter()
                .copied()
                .filter(|&i| sums[i].is_finite())
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if sums[b] <= sums[i] => Some(b),
                    _ => Some(i),
                });
            let (Some(from), Some(to)) = (from, to) else {
                continue;
            };
            if from == to || sums[from] - sums[to] <= 1e-12 * sums[from] {
                continue;
            }
            let shared: Vec<usize> = paths.paths[from].links.clone();
            let headroom = paths.paths[to]
                .links
                .iter()
                .filter(|k| !shared.contains(k))
                .map(|&k| capacity(it.powers[k], sigma(k)) - it.flows[k])
                .fold(f64::INFINITY, f64::min);
            let delta = step.min(it.path_flows[from]).min(0.5 * headroom);
            if delta > 0.0 {
                x[from] -= delta;
                x[to] += delta;
            }
        }
        if x == it.path_flows {
            return JointIterate {
                step_t: step,
                ..it.clone()
            };
        }
        let t = paths.link_flows(net.data_links().len(), &x);
        let f = objective(net, &t, &it.powers);
        if f <= it.objective {
            return JointIterate {
                path_flows: x,
                flows: t,
                objective: f,
                step_t: (2.0 * step).min(step_cap),
                ..it.clone()
            };
        }
        step *= 0.5;
    }
    JointIterate {
        step_t: step_floor,
        ..it.clone()
    }
}

/// One round-robin sweep over the energy links with the pairwise balance of
/// the fixed-flow solver. Nodes touched by a transfer or recall are re-split
/// optimally; the meters are the transfers themselves.
pub fn energy_routing_step(
    net: &Network,
    energy: &[f64],
    it: &JointIterate,
) -> Result<JointIterate> {
    if net.energy_links().is_empty() {
        return Ok(it.clone());
    }
    let nodes = node_links(net, &it.flows, None);
    let mut state = SlotState::new(net, nodes, energy, &it.transfers)?;
    let mut touched = vec![false; net.node_count()];
    if !state.sweep(RecallMode::Exact, &mut touched)? {
        return Ok(it.clone());
    }
    let fresh = state.powers();
    let mut p = it.powers.clone();
    for n in (0..net.node_count()).filter(|&n| touched[n]) {
        for &k in net.out_data(n) {
            p[k] = fresh[k];
        }
    }
    let f = objective(net, &it.flows, &p);
    if f > it.objective {
        return Ok(it.clone());
    }
    Ok(JointIterate {
        powers: p,
        transfers: state.transfers().to_vec(),
        objective: f,
        ..it.clone()
    })
}

/// Violations of the necessary optimality conditions, all relative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// Spread of `|dh/dp|` over each node's powered links.
    pub power_equalization: f64,
    /// Excess of a used path's `sum dh/dt` over its source's best powered path.
    pub path_sum: f64,
    /// Energy-link balance: equality where energy flows, inequality elsewhere.
    pub energy_link: f64,
    /// Unspent energy at nodes that carry flow.
    pub slackness: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.power_equalization
            .max(self.path_sum)
            .max(self.energy_link)
            .max(self.slackness)
    }
}

/// Evaluates the three necessary conditions plus energy slackness.
pub fn check_kkt(
    net: &Network,
    paths: &PathSet,
    energy: &[f64],
    it: &JointIterate,
) -> KktResiduals {
    let sigma = |k: usize| net.data_links()[k].sigma;
    let mut r = KktResiduals::default();
    for n in 0..net.node_count() {
        let m: Vec<f64> = net
            .out_data(n)
            .iter()
            .filter(|&&k| it.powers[k] > 0.0)
            .map(|&k| power_slope(it.powers[k], sigma(k), it.flows[k]))
            .collect();
        if m.len() >= 2 {
            let hi = m.iter().copied().fold(0.0, f64::max);
            let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
            if hi > 0.0 {
                r.power_equalization = r.power_equalization.max((hi - lo) / hi);
            }
        }
    }
    for (_, supply, members) in &paths.sources {
        let sums: Vec<(usize, f64)> = members
            .iter()
            .filter(|&&i| paths.paths[i].links.iter().all(|&k| it.powers[k] > 0.0))
            .map(|&i| {
                let s: f64 = paths.paths[i]
                    .links
                    .iter()
                    .map(|&k| delay_flow_slope(it.powers[k], sigma(k), it.flows[k]))
                    .sum();
                (i, s)
            })
            .collect();
        let best = sums.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        for &(i, s) in &sums {
            if it.path_flows[i] > 1e-12 * supply {
                r.path_sum = r.path_sum.max((s - best) / s);
            }
        }
    }
    if let Ok(t) = FlowVector::new(it.flows.clone()) {
        r.energy_link = transfer_residual(net, &t, &it.powers, &it.transfers, 1e-9);
    }
    let b = budgets(net, energy, &it.transfers);
    for n in 0..net.node_count() {
        if net.out_data(n).iter().any(|&k| it.flows[k] > 0.0) {
            let spent: f64 = net.out_data(n).iter().map(|&k| it.powers[k]).sum();
            r.slackness = r.slackness.max((b[n] - spent).abs() / b[n].abs().max(1.0));
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOptions {
    /// Converged once every residual is below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial power step; defaults to 5% of the largest harvest.
    pub step_p: Option<f64>,
    /// Initial flow step; defaults to 5% of the largest supply.
    pub step_t: Option<f64>,
    pub step_floor: f64,
    /// Explicit starting path flows, in `PathSet` order.
    pub start_path_flows: Option<Vec<f64>>,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            tol: 1e-3,
            max_iters: 50_000,
            step_p: None,
            step_t: None,
            step_floor: 1e-9,
            start_path_flows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub iterate: JointIterate,
    pub paths: PathSet,
    pub kkt: KktResiduals,
    /// Objective at the start and after every iteration.
    pub trace: Vec<f64>,
    /// Path delays at the start and after every iteration.
    pub path_delay_trace: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Default start: each source's supply split evenly over its fewest-hop paths.
pub fn fewest_hop_start(paths: &PathSet) -> Vec<f64> {
    let mut x = vec![0.0; paths.paths.len()];
    for (_, supply, members) in &paths.sources {
        let hops = members
            .iter()
            .map(|&i| paths.paths[i].links.len())
            .min()
            .unwrap_or(0);
        let best: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| paths.paths[i].links.len() == hops)
            .collect();
        for &i in &best {
            x[i] = supply / best.len() as f64;
        }
    }
    x
}

/// Iterates power management, data routing and energy routing from a
/// feasible start until the optimality residuals fall below `tol`.
///
/// Powers at the start are each node's optimal split of its own harvest, or
/// of the budgets left by a strictly feasible transfer vector when some node
/// cannot carry its start flows alone.
pub fn solve_joint(net: &Network, energy: &[f64], options: &JointOptions) -> Result<JointSolution> {
    expect_len("energy", net.node_count(), energy.len())?;
    let paths = enumerate_paths(net)?;
    let x0 = match &options.start_path_flows {
        Some(x) => {
            expect_len("start path flows", paths.paths.len(), x.len())?;
            for (src, supply, members) in &paths.sources {
                let total: f64 = members.iter().map(|&i| x[i]).sum();
                if x.iter().any(|v| *v < 0.0) || (total - supply).abs() > 1e-9 * supply.max(1.0) {
                    return Err(Error::NoFeasibleStart(format!(
                        "start flows of source {src} sum to {total}, supply is {supply}"
                    )));
                }
            }
            x.clone()
        }
        None => fewest_hop_start(&paths),
    };
    let l = net.data_links().len();
    let t0 = FlowVector::new(paths.link_flows(l, &x0))?;

    let nodes = node_links(net, t0.as_slice(), None);
    let self_sufficient = nodes
        .iter()
        .zip(energy)
        .all(|(nl, &e)| !nl.has_flow() || e > nl.floor());
    let y0 = if self_sufficient {
        vec![0.0; net.energy_links().len()]
    } else {
        oracle::strictly_feasible_transfers(net, &t0, energy)?
            .ok_or_else(|| Error::NoFeasibleStart("start flows cannot be powered".into()))?
    };
    let b0 = budgets(net, energy, &y0);
    let mut levels = vec![0.0; net.node_count()];
    for (n, nl) in nodes.iter().enumerate() {
        levels[n] = nl
            .level_for_budget(b0[n])
            .map_err(|e| Error::NoFeasibleStart(e.to_string()))?;
    }
    let p0 = assemble_powers(net, &nodes, &levels);

    let max_e = energy.iter().fold(0.0_f64, |m, v| m.max(*v));
    let max_s = paths.sources.iter().map(|s| s.1).fold(0.0_f64, f64::max);
    let cap_p = options
        .step_p
        .unwrap_or(0.05 * max_e)
        .max(options.step_floor);
    let cap_t = options
        .step_t
        .unwrap_or(0.05 * max_s)
        .max(options.step_floor);
    let mut it = JointIterate {
        objective: objective(net, t0.as_slice(), &p0),
        path_flows: x0,
        flows: t0.as_slice().to_vec(),
        powers: p0,
        transfers: y0,
        step_p: cap_p,
        step_t: cap_t,
        iteration: 0,
    };
    let mut trace = vec![it.objective];
    let mut path_delay_trace = vec![paths.path_delays(&link_delays(net, &it.flows, &it.powers))];
    let mut kkt = check_kkt(net, &paths, energy, &it);
    let mut converged = kkt.max() < options.tol;
    while !converged && it.iteration < options.max_iters {
        let before = it.clone();
        it = energy_management_step(net, &it, options.step_floor, cap_p);
        it = data_routing_step(net, &paths, &it, options.step_floor, cap_t);
        it = energy_routing_step(net, energy, &it)?;
        it.iteration += 1;
        debug_assert!(is_feasible(net, energy, &it));
        trace.push(it.objective);
        path_delay_trace.push(paths.path_delays(&link_delays(net, &it.flows, &it.powers)));
        kkt = check_kkt(net, &paths, energy, &it);
        converged = kkt.max() < options.tol;
        let stalled = it.powers == before.powers
            && it.path_flows == before.path_flows
            && it.transfers == before.transfers
            && it.step_p <= options.step_floor
            && it.step_t <= options.step_floor;
        if stalled {
            break;
        }
    }
    Ok(JointSolution {
        iterate: it,
        paths,
        kkt,
        trace,
        path_delay_trace,
        converged,
    })
}

/// Indices of the points not weakly dominated by an earlier point, in order
/// of increasing first coordinate (ties broken lexicographically, then by
/// index). Exact duplicates keep only their first occurrence.
pub fn non_dominated(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let dominated = front
            .iter()
            .any(|&f| points[f].iter().zip(&points[i]).all(|(a, b)| a <= b));
        if !dominated {
            front.push(i);
        }
    }
    front
}

/// Simplex grid: every way to write `total` as an ordered sum of `parts`
/// non-negative integers, in lexicographic order.
pub(crate) fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub(crate) fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoOptions {
    /// Cells per source when splitting its supply over its paths.
    pub grid: usize,
    /// Cells of the path-weight simplex used to trade one path against another.
    pub weight_grid: usize,
    pub parallel: bool,
    pub max_points: u128,
    pub single_slot: SingleSlotOptions,
}

impl Default for ParetoOptions {
    fn default() -> Self {
        ParetoOptions {
            grid: 20,
            weight_grid: 8,
            parallel: false,
            max_points: 1_000_000,
            single_slot: SingleSlotOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub path_delays: Vec<f64>,
    pub path_flows: Vec<f64>,
    pub powers: Vec<f64>,
    pub transfers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFrontier {
    pub paths: PathSet,
    /// With the network's energy links.
    pub cooperative: Vec<ParetoPoint>,
    /// With every energy link removed.
    pub standalone: Vec<ParetoPoint>,
}

/// Maps the achievable path-delay region on a grid of flow splits.
///
/// For every split the fixed-flow problem is solved with path-weighted link
/// delays (link weight = sum of the weights of the paths through it) over a
/// grid of positive path weights; each solve is a point of the region. Infeasible
/// splits are skipped. Both frontiers are returned sorted by the first path delay.
pub fn pareto_sweep(
    net: &Network,
    energy: &[f64],
    options: &ParetoOptions,
) -> Result<ParetoFrontier> {
    expect_len("energy", net.node_count(), energy.len())?;
    let paths = enumerate_paths(net)?;
    let np = paths.paths.len();
    let grid = options.grid.max(1);
    let splits: Vec<Vec<Vec<usize>>> = paths
        .sources
        .iter()
        .map(|(_, _, m)| compositions(grid, m.len()))
        .collect();
    let weight_grid = if np > 1 { options.weight_grid } else { 0 };
    let weights = compositions(weight_grid, np);
    let count = splits
        .iter()
        .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
        .saturating_mul(weights.len() as u128)
        .saturating_mul(2);
    if count > options.max_points {
        return Err(Error::GridTooLarge {
            points: count,
            cap: options.max_points,
        });
    }

    // flatten the per-source split grids into path flow vectors
    let mut flow_grid: Vec<Vec<f64>> = vec![vec![0.0; np]];
    for ((_, supply, members), choices) in paths.sources.iter().zip(&splits) {
        let mut next = Vec::with_capacity(flow_grid.len() * choices.len());
        for base in &flow_grid {
            for c in choices {
                let mut x = base.clone();
                for (&i, &cells) in members.iter().zip(c) {
                    x[i] = supply * cells as f64 / grid as f64;
                }
                next.push(x);
            }
        }
        flow_grid = next;
    }
    let jobs: Vec<(usize, usize)> = (0..flow_grid.len())
        .flat_map(|f| (0..weights.len()).map(move |w| (f, w)))
        .collect();

    let standalone_net = net.without_energy_links();
    let frontier = |target: &Network| -> Vec<ParetoPoint> {
        let eval = |&(f, w): &(usize, usize)| -> Option<ParetoPoint> {
            let x = &flow_grid[f];
            let path_w: Vec<f64> = weights[w].iter().map(|&c| c as f64 + 0.5).collect();
            let mut link_w = vec![0.0; target.data_links().len()];
            for (path, &pw) in paths.paths.iter().zip(&path_w) {
                for &k in &path.links {
                    link_w[k] += pw;
                }
            }
            for v in link_w.iter_mut().filter(|v| **v == 0.0) {
                *v = 1.0;
            }
            let t = FlowVector::new(paths.link_flows(target.data_links().len(), x)).ok()?;
            let mut opts = options.single_slot.clone();
            opts.link_weights = Some(link_w);
            let sol = solve_single_slot(target, &t, energy, &opts).ok()?;
            let delays = link_delays(target, t.as_slice(), &sol.powers);
            Some(ParetoPoint {
                path_delays: paths.path_delays(&delays),
                path_flows: x.clone(),
                powers: sol.powers,
                transfers: sol.transfers,
            })
        };
        let points: Vec<ParetoPoint> = if options.parallel {
            jobs.par_iter().filter_map(eval).collect()
        } else {
            jobs.iter().filter_map(eval).collect()
        };
        let keys: Vec<Vec<f64>> = points.iter().map(|p| p.path_delays.clone()).collect();
        non_dominated(&keys)
            .into_iter()
            .map(|i| points[i].clone())
            .collect()
    };
    Ok(ParetoFrontier {
        cooperative: frontier(net),
        standalone: frontier(&standalone_net),
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_slot::solve_node;
    use crate::topology::{build_network, DataLinkSpec, EnergyLinkSpec, NetworkDescription};

    fn diamond(energy_links: bool) -> Network {
        let d = |id, src, dst| DataLinkSpec {
            id,
            src,
            dst,
            sigma: 0.1,
        };
        build_network(&NetworkDescription {
            nodes: 4,
            data_links: vec![d(1, 1, 2), d(2, 1, 3), d(3, 2, 4), d(4, 3, 4)],
            energy_links: if energy_links {
                vec![
                    EnergyLinkSpec {
                        id: 1,
                        src: 1,
                        dst: 2,
                        alpha: 0.8,
                    },
                    EnergyLinkSpec {
                        id: 2,
                        src: 1,
                        dst: 3,
                        alpha: 0.8,
                    },
                ]
            } else {
                vec![]
            },
            supply: Some(vec![2.0, 0.0, 0.0, -2.0]),
        })
        .unwrap()
    }

    fn iterate(net: &Network, paths: &PathSet, x: Vec<f64>, p: Vec<f64>) -> JointIterate {
        let t = paths.link_flows(net.data_links().len(), &x);
        JointIterate {
            objective: objective(net, &t, &p),
            path_flows: x,
            flows: t,
            powers: p,
            transfers: vec![0.0; net.energy_links().len()],
            step_p: 0.1,
            step_t: 0.05,
            iteration: 0,
        }
    }

    #[test]
    fn diamond_has_two_paths() {
        let paths = enumerate_paths(&diamond(true)).unwrap();
        assert_eq!(paths.paths.len(), 2);
        assert_eq!(paths.paths[0].links, vec![0, 2]);
        assert_eq!(paths.paths[1].links, vec![1, 3]);
    }

    #[test]
    fn topology_one_has_four_paths() {
        let d = |id, src, dst| DataLinkSpec {
            id,
            src,
            dst,
            sigma: 0.1,
        };
        let net = build_network(&NetworkDescription {
            nodes: 5,
            data_links: vec![
                d(1, 1, 2),
                d(2, 1, 3),
                d(3, 3, 4),
                d(4, 3, 2),
                d(5, 2, 5),
                d(6, 3, 5),
                d(7, 4, 5),
            ],
            energy_links: vec![],
            supply: Some(vec![3.0, 0.0, 0.0, 0.0, -3.0]),
        })
        .unwrap();
        let paths = enumerate_paths(&net).unwrap();
        let mut nodes: Vec<Vec<usize>> = paths
            .paths
            .iter()
            .map(|p| {
                let mut v = vec![1];
                v.extend(p.links.iter().map(|&k| net.data_links()[k].dst + 1));
                v
            })
            .collect();
        nodes.sort();
        assert_eq!(
            nodes,
            vec![
                vec![1, 2, 5],
                vec![1, 3, 2, 5],
                vec![1, 3, 4, 5],
                vec![1, 3, 5]
            ]
        );
    }

    #[test]
    fn cycles_and_dead_ends_are_rejected() {
        let d = |id, src, dst| DataLinkSpec {
            id,
            src,
            dst,
            sigma: 0.1,
        };
        let cyc = build_network(&NetworkDescription {
            nodes: 3,
            data_links: vec![d(1, 1, 2), d(2, 2, 1), d(3, 2, 3)],
            energy_links: vec![],
            supply: Some(vec![1.0, 0.0, -1.0]),
        })
        .unwrap();
        assert!(matches!(
            enumerate_paths(&cyc),
            Err(Error::CycleDetected(_))
        ));
        let dead = build_network(&NetworkDescription {
            nodes: 3,
            data_links: vec![d(1, 1, 2)],
            energy_links: vec![],
            supply: Some(vec![1.0, 0.0, -1.0]),
        })
        .unwrap();
        assert_eq!(enumerate_paths(&dead), Err(Error::NoPathToDestination(0)));
        let single = build_network(&NetworkDescription {
            nodes: 2,
            data_links: vec![d(1, 1, 2)],
            energy_links: vec![],
            supply: Some(vec![1.0, -1.0]),
        })
        .unwrap();
        assert_eq!(enumerate_paths(&single).unwrap().paths.len(), 1);
    }

    #[test]
    fn management_moves_toward_steeper_link() {
        let net = diamond(false);
        let paths = enumerate_paths(&net).unwrap();
        let it = iterate(&net, &paths, vec![1.5, 0.5], vec![3.0, 3.0, 3.0, 3.0]);
        let s0 = power_slope(3.0, 0.1, 1.5);
        let s1 = power_slope(3.0, 0.1, 0.5);
        assert!(s0 > s1);
        let next = energy_management_step(&net, &it, 1e-9, 0.1);
        assert!((next.powers[0] - 3.1).abs() < 1e-12);
        assert!((next.powers[1] - 2.9).abs() < 1e-12);
        assert!(next.objective < it.objective);

        // equalised node: no-op
        let node = solve_node(
            6.0,
            &[
                LinkParams { sigma: 0.1, t: 1.5 },
                LinkParams { sigma: 0.1, t: 0.5 },
            ],
        )
        .unwrap();
        let eq = iterate(
            &net,
            &paths,
            vec![1.5, 0.5],
            vec![node.powers[0], node.powers[1], 3.0, 3.0],
        );
        assert_eq!(
            energy_management_step(&net, &eq, 1e-9, 0.1).powers,
            eq.powers
        );
    }

    #[test]
    fn management_converges_to_node_split() {
        let net = diamond(false);
        let paths = enumerate_paths(&net).unwrap();
        let mut it = iterate(&net, &paths, vec![1.5, 0.5], vec![3.0, 3.0, 3.0, 3.0]);
        for _ in 0..2000 {
            it = energy_management_step(&net, &it, 1e-12, 0.1);
        }
        let node = solve_node(
            6.0,
            &[
                LinkParams { sigma: 0.1, t: 1.5 },
                LinkParams { sigma: 0.1, t: 0.5 },
            ],
        )
        .unwrap();
        assert!((it.powers[0] - node.powers[0]).abs() < 1e-4);
        assert!((it.powers[1] - node.powers[1]).abs() < 1e-4);
    }

    #[test]
    fn routing_moves_flow_to_cheaper_path() {
        let net = diamond(false);
        let paths = enumerate_paths(&net).unwrap();
        let sym = iterate(&net, &paths, vec![1.0, 1.0], vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            data_routing_step(&net, &paths, &sym, 1e-9, 0.05).path_flows,
            sym.path_flows
        );

        let skew = iterate(&net, &paths, vec![1.0, 1.0], vec![1.0, 1.0, 0.9, 1.5]);
        let next = data_routing_step(&net, &paths, &skew, 1e-9, 0.05);
        assert!((next.path_flows[0] - 0.95).abs() < 1e-12);
        assert!((next.path_flows[1] - 1.05).abs() < 1e-12);
        assert!(next.objective < skew.objective);
    }

    #[test]
    fn routing_matches_pairwise_balance() {
        let net = diamond(true);
        let paths = enumerate_paths(&net).unwrap();
        let e = [6.0, 1.0, 1.5, 0.0];
        let p0 = vec![3.0, 3.0, 1.0, 1.5];
        let it = iterate(&net, &paths, vec![1.0, 1.0], p0);
        let next = energy_routing_step(&net, &e, &it).unwrap();
        assert!(next.transfers[0] > 0.0);
        assert!(next.objective <= it.objective);
        // the first visit alone is the isolated pairwise solve
        let lp = |t| LinkParams { sigma: 0.1, t };
        let alone =
            crate::single_slot::pairwise_balance(0.8, 6.0, &[lp(1.0), lp(1.0)], 1.0, &[lp(1.0)])
                .unwrap();
        assert!((next.transfers[0] - alone.transfer).abs() < 1e-9);
    }

    #[test]
    fn zero_supply_is_trivial() {
        let d = |id, src, dst| DataLinkSpec {
            id,
            src,
            dst,
            sigma: 0.1,
        };
        let net = build_network(&NetworkDescription {
            nodes: 2,
            data_links: vec![d(1, 1, 2)],
            energy_links: vec![],
            supply: None,
        })
        .unwrap();
        let sol = solve_joint(&net, &[1.0, 0.0], &Default::default()).unwrap();
        assert_eq!(sol.iterate.objective, 0.0);
        assert_eq!(sol.iterate.powers, vec![0.0]);
        assert!(sol.converged);
    }

    #[test]
    fn symmetric_diamond_splits_evenly() {
        let net = diamond(true);
        let sol = solve_joint(&net, &[2.0, 1.0, 1.0, 0.0], &Default::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.iterate.path_flows[0] - 1.0).abs() < 1e-3);
        assert!(sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn diamond_converges_and_satisfies_conditions() {
        let net = diamond(true);
        let e = [2.0, 0.5, 1.5, 0.0];
        let sol = solve_joint(&net, &e, &Default::default()).unwrap();
        assert!(sol.converged, "{:?}", sol.kkt);
        assert!(sol.kkt.max() < 1e-3);
        assert!(sol.iterate.path_flows[1] > sol.iterate.path_flows[0]);
        assert!(sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn perturbed_power_breaks_equalization() {
        let net = diamond(false);
        let paths = enumerate_paths(&net).unwrap();
        let e = [2.0, 1.0, 1.0, 0.0];
        let sol = solve_joint(&net, &e, &Default::default()).unwrap();
        let mut it = sol.iterate.clone();
        it.powers[0] *= 1.1;
        assert!(check_kkt(&net, &paths, &e, &it).power_equalization > sol.kkt.power_equalization);
    }

    #[test]
    fn frontier_filter() {
        let pts = vec![
            vec![1.0, 5.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
            vec![2.0, 2.0],
            vec![5.0, 1.0],
        ];
        assert_eq!(non_dominated(&pts), vec![0, 1, 4]);
        assert_eq!(compositions(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(binomial(12, 2), 66);
    }

    #[test]
    fn single_path_frontier_is_one_point() {
        let d = |id, src, dst| DataLinkSpec {
            id,
            src,
            dst,
            sigma: 0.1,
        };
        let net = build_network(&NetworkDescription {
            nodes: 3,
            data_links: vec![d(1, 1, 2), d(2, 2, 3)],
            energy_links: vec![EnergyLinkSpec {
                id: 1,
                src: 1,
                dst: 2,
                alpha: 0.9,
            }],
            supply: Some(vec![1.0, 0.0, -1.0]),
        })
        .unwrap();
        let f = pareto_sweep(&net, &[5.0, 1.0, 0.0], &Default::default()).unwrap();
        assert_eq!(f.cooperative.len(), 1);
        assert_eq!(f.standalone.len(), 1);
        assert!(f.cooperative[0].path_delays[0] < f.standalone[0].path_delays[0]);
    }

    #[test]
    fn grid_cap_is_enforced() {
        let opts = ParetoOptions {
            grid: 1000,
            weight_grid: 1000,
            ..Default::default()
        };
        assert!(matches!(
            pareto_sweep(&diamond(true), &[2.0, 0.5, 1.5, 0.0], &opts),
            Err(Error::GridTooLarge { .. })
        ));
    }
}
