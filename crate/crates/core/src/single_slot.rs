//! Single-slot capacity assignment with fixed flows.
//!
//! Without energy links every node solves its own water-filling problem:
//! find the level `lambda` at which the delay-minimising link powers exactly
//! spend the node budget. Energy links are then opened one at a time in
//! round-robin order; each visit balances the two endpoint levels to
//! `lambda_i = alpha * lambda_j` by moving energy forward, or by recalling
//! previously sent energy (bounded by the link meter).

use crate::error::{Error, Result};
use crate::oracle;
use crate::power_math::{
    capacity, delay_unchecked, dh_dp, min_power, optimal_power, optimal_power_log_slope, LinkParams,
};
use crate::topology::{expect_len, FlowVector, Network};

/// Relative gap at which two water levels are treated as balanced.
const LEVEL_RTOL: f64 = 1e-12;
const ROOT_MAX_ITERS: usize = 200;

/// A node's outgoing links as seen by the water-filling search.
///
/// `weight` scales a link's delay in the objective; ordinary total-delay
/// minimisation uses `1.0` everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedLink {
    pub sigma: f64,
    pub t: f64,
    pub weight: f64,
}

impl From<LinkParams> for WeightedLink {
    fn from(lp: LinkParams) -> Self {
        WeightedLink {
            sigma: lp.sigma,
            t: lp.t,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NodeLinks {
    links: Vec<WeightedLink>,
}

impl NodeLinks {
    pub(crate) fn new(links: Vec<WeightedLink>) -> NodeLinks {
        NodeLinks { links }
    }

    pub(crate) fn has_flow(&self) -> bool {
        self.links.iter().any(|l| l.t > 0.0)
    }

    pub(crate) fn floor(&self) -> f64 {
        self.links.iter().map(|l| min_power(l.sigma, l.t)).sum()
    }

    pub(crate) fn powers(&self, lambda: f64) -> Vec<f64> {
        self.links
            .iter()
            .map(|l| optimal_power(lambda / l.weight, l.sigma, l.t))
            .collect()
    }

    /// Total power at `lambda` and its derivative in `ln lambda`.
    fn total(&self, lambda: f64) -> (f64, f64) {
        self.links.iter().fold((0.0, 0.0), |(s, d), l| {
            let lam = lambda / l.weight;
            (
                s + optimal_power(lam, l.sigma, l.t),
                d + optimal_power_log_slope(lam, l.sigma, l.t),
            )
        })
    }

    /// Water level that spends `budget` exactly. Zero for nodes without flow.
    pub(crate) fn level_for_budget(&self, budget: f64) -> Result<f64> {
        if !self.has_flow() {
            return Ok(0.0);
        }
        let floor = self.floor();
        if !(budget > floor) {
            return Err(Error::InfeasibleBudget {
                budget,
                required: floor,
                deficit: floor - budget,
            });
        }
        Ok(solve_decreasing(|lam| self.total(lam), budget))
    }
}

/// Root of `f(lambda) = target` for a map decreasing in `lambda`, searched in
/// `ln lambda` with Newton steps kept inside a bisection bracket.
fn solve_decreasing(f: impl Fn(f64) -> (f64, f64), target: f64) -> f64 {
    let g = |u: f64| {
        let (v, d) = f(u.exp());
        (v - target, d)
    };
    // bracket: g(lo) > 0 > g(hi)
    let mut u = 0.0;
    let (g0, _) = g(u);
    if g0 == 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi);
    let mut step = 1.0;
    if g0 > 0.0 {
        lo = u;
        loop {
            u += step;
            step *= 2.0;
            if g(u).0 <= 0.0 || u > 700.0 {
                hi = u;
                break;
            }
            lo = u;
        }
    } else {
        hi = u;
        loop {
            u -= step;
            step *= 2.0;
            if g(u).0 > 0.0 || u < -700.0 {
                lo = u;
                break;
            }
            hi = u;
        }
    }

    let mut u = 0.5 * (lo + hi);
    for _ in 0..ROOT_MAX_ITERS {
        let (gv, dv) = g(u);
        if gv == 0.0 {
            return u.exp();
        }
        if gv > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if gv.abs() <= 1e-14 * target.abs().max(1e-300) || hi - lo <= 1e-15 * (1.0 + u.abs()) {
            return u.exp();
        }
        let newton = u - gv / dv;
        u = if dv < 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    u.exp()
}

/// Power split of one node and its water level.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAllocation {
    pub powers: Vec<f64>,
    /// Common `-h'(p)` of the node's flow-carrying links; zero when none carries flow.
    pub lambda: f64,
}

/// Delay-minimising split of `budget` over a node's outgoing links.
pub fn solve_node(budget: f64, links: &[LinkParams]) -> Result<NodeAllocation> {
    let nl = NodeLinks::new(links.iter().copied().map(WeightedLink::from).collect());
    let lambda = nl.level_for_budget(budget)?;
    Ok(NodeAllocation {
        powers: nl.powers(lambda),
        lambda,
    })
}

/// Result of balancing one energy link.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseOutcome {
    /// Energy taken from the donor; the receiver gains `alpha * transfer`.
    pub transfer: f64,
    pub lambda_i: f64,
    pub lambda_j: f64,
    pub powers_i: Vec<f64>,
    pub powers_j: Vec<f64>,
}

/// Signed amount to move from `i` to `j` so that `lambda_i = alpha lambda_j`.
/// Negative values mean energy flows back from `j` to `i`.
pub(crate) fn balancing_transfer(
    alpha: f64,
    budget_i: f64,
    links_i: &NodeLinks,
    budget_j: f64,
    links_j: &NodeLinks,
) -> f64 {
    if !links_i.has_flow() {
        return budget_i;
    }
    if !links_j.has_flow() {
        return -budget_j / alpha;
    }
    let target = alpha * budget_i + budget_j;
    let lam_j = solve_decreasing(
        |lam| {
            let (si, di) = links_i.total(alpha * lam);
            let (sj, dj) = links_j.total(lam);
            (alpha * si + sj, alpha * di + dj)
        },
        target,
    );
    budget_i - links_i.total(alpha * lam_j).0
}

/// Moves energy over one energy link from node `i` to node `j` until the
/// levels satisfy `lambda_i = alpha lambda_j`.
pub fn pairwise_balance(
    alpha: f64,
    budget_i: f64,
    links_i: &[LinkParams],
    budget_j: f64,
    links_j: &[LinkParams],
) -> Result<PairwiseOutcome> {
    let ni = NodeLinks::new(links_i.iter().copied().map(WeightedLink::from).collect());
    let nj = NodeLinks::new(links_j.iter().copied().map(WeightedLink::from).collect());
    let lam_i = ni.level_for_budget(budget_i)?;
    let lam_j = nj.level_for_budget(budget_j)?;
    if !(lam_i < alpha * lam_j * (1.0 - LEVEL_RTOL)) || budget_i <= 0.0 {
        return Err(Error::NoBeneficialTransfer {
            donor: lam_i,
            scaled_receiver: alpha * lam_j,
        });
    }
    let transfer = balancing_transfer(alpha, budget_i, &ni, budget_j, &nj).clamp(0.0, budget_i);
    let new_i = budget_i - transfer;
    let new_j = budget_j + alpha * transfer;
    let lambda_i = ni.level_for_budget(new_i)?;
    let lambda_j = nj.level_for_budget(new_j)?;
    Ok(PairwiseOutcome {
        transfer,
        lambda_i,
        lambda_j,
        powers_i: ni.powers(lambda_i),
        powers_j: nj.powers(lambda_j),
    })
}

/// How previously sent energy is called back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecallMode {
    /// Solve the balance equation in reverse, clamped by the meter.
    Exact,
    /// Recall in fixed increments, re-solving both nodes after each one.
    Increment(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSlotOptions {
    /// Converged once a sweep moves no water level by more than this (relative).
    pub tol: f64,
    pub max_sweeps: usize,
    pub recall: RecallMode,
    /// Per-data-link delay weights; `None` means plain total delay.
    pub link_weights: Option<Vec<f64>>,
}

impl Default for SingleSlotOptions {
    fn default() -> Self {
        SingleSlotOptions {
            tol: 1e-9,
            max_sweeps: 20_000,
            recall: RecallMode::Exact,
            link_weights: None,
        }
    }
}

/// Cumulative net energy sent over each energy link.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeterState {
    pub taps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub objective: f64,
    pub max_level_change: f64,
    pub water_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSlotSolution {
    pub powers: Vec<f64>,
    pub transfers: Vec<f64>,
    /// Per-node water levels; zero for nodes without outgoing flow.
    pub water_levels: Vec<f64>,
    pub meters: MeterState,
    /// Weighted objective the solver minimised (total delay without weights).
    pub objective: f64,
    pub total_delay: f64,
    /// Full sweeps over the energy links.
    pub iterations: usize,
    pub converged: bool,
    /// Whether the start needed transfers to make every node feasible.
    pub lp_start: bool,
    /// Objective after initialisation followed by one entry per sweep.
    pub trace: Vec<SweepRecord>,
}

/// Energy path from `src` to `dst` whose inner nodes carry no flow. Such
/// relays have no use for energy, so moving energy along the path is one
/// pairwise exchange between its ends with the product efficiency.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Route {
    pub(crate) src: usize,
    pub(crate) dst: usize,
    /// `(energy link, energy on it per unit leaving src)`.
    links: Vec<(usize, f64)>,
    gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Move {
    Route(usize),
    /// Re-split between two routes leaving the same relay.
    Sibling(usize, usize),
}

/// Cap on enumerated routes; only dense meshes of relays get near it.
const MAX_ROUTES: usize = 1 << 16;

/// Routes in the order they are visited: by link sequence, so a network
/// without relays is swept link by link in declaration order, followed by
/// the sibling pairs of every relay.
fn energy_moves(net: &Network, nodes: &[NodeLinks]) -> Result<(Vec<Route>, Vec<Move>)> {
    let n = net.node_count();
    let flow: Vec<bool> = nodes.iter().map(|nl| nl.has_flow()).collect();
    // relays that can pass energy on to some node carrying flow
    let mut useful = vec![false; n];
    loop {
        let mut changed = false;
        for u in 0..n {
            if !flow[u]
                && !useful[u]
                && net.out_energy(u).iter().any(|&q| {
                    let v = net.energy_links()[q].dst;
                    flow[v] || useful[v]
                })
            {
                useful[u] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    struct Walk<'a> {
        net: &'a Network,
        flow: &'a [bool],
        useful: &'a [bool],
        routes: Vec<Route>,
    }
    impl Walk<'_> {
        fn go(
            &mut self,
            src: usize,
            u: usize,
            visited: &mut Vec<bool>,
            links: &mut Vec<(usize, f64)>,
            mult: f64,
        ) -> Result<()> {
            for &q in self.net.out_energy(u) {
                let link = self.net.energy_links()[q];
                let v = link.dst;
                if visited[v] {
                    continue;
                }
                links.push((q, mult));
                let gain = mult * link.alpha;
                // flow nodes end a route; relays holding energy they cannot pass on
                // end a recall-only route from a flow node
                if self.flow[v] || (self.flow[src] && !self.useful[v]) {
                    if self.routes.len() == MAX_ROUTES {
                        return Err(Error::GridTooLarge {
                            points: MAX_ROUTES as u128 + 1,
                            cap: MAX_ROUTES as u128,
                        });
                    }
                    self.routes.push(Route {
                        src,
                        dst: v,
                        links: links.clone(),
                        gain,
                    });
                }
                if !self.flow[v] && (self.useful[v] || self.flow[src]) {
                    visited[v] = true;
                    self.go(src, v, visited, links, gain)?;
                    visited[v] = false;
                }
                links.pop();
            }
            Ok(())
        }
    }
    let mut walk = Walk {
        net,
        flow: &flow,
        useful: &useful,
        routes: Vec::new(),
    };
    for src in (0..n).filter(|&u| flow[u] || useful[u]) {
        let mut visited = vec![false; n];
        visited[src] = true;
        walk.go(src, src, &mut visited, &mut Vec::new(), 1.0)?;
    }
    let mut routes = walk.routes;
    routes.sort_by(|a, b| a.links.iter().map(|l| l.0).cmp(b.links.iter().map(|l| l.0)));

    let mut moves: Vec<Move> = (0..routes.len()).map(Move::Route).collect();
    for a in 0..routes.len() {
        for b in a + 1..routes.len() {
            if !flow[routes[a].src] && routes[a].src == routes[b].src {
                moves.push(Move::Sibling(a, b));
            }
        }
    }
    Ok((routes, moves))
}

/// Node budgets, water levels and meters during a round-robin sweep.
pub(crate) struct SlotState<'a> {
    net: &'a Network,
    nodes: Vec<NodeLinks>,
    budgets: Vec<f64>,
    levels: Vec<f64>,
    y: Vec<f64>,
    routes: Vec<Route>,
    moves: Vec<Move>,
}

impl<'a> SlotState<'a> {
    /// State after sending `y` over the energy links from budgets `energy`.
    pub(crate) fn new(
        net: &'a Network,
        nodes: Vec<NodeLinks>,
        energy: &[f64],
        y: &[f64],
    ) -> Result<SlotState<'a>> {
        let (routes, moves) = energy_moves(net, &nodes)?;
        let mut state = SlotState {
            net,
            nodes,
            budgets: energy.to_vec(),
            levels: vec![0.0; net.node_count()],
            y: vec![0.0; net.energy_links().len()],
            routes,
            moves,
        };
        for (q, &amount) in y.iter().enumerate() {
            let link = net.energy_links()[q];
            state.budgets[link.src] -= amount;
            state.budgets[link.dst] += link.alpha * amount;
            state.y[q] = amount;
        }
        for n in 0..net.node_count() {
            state.resolve(n)?;
        }
        Ok(state)
    }

    pub(crate) fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub(crate) fn transfers(&self) -> &[f64] {
        &self.y
    }

    pub(crate) fn powers(&self) -> Vec<f64> {
        assemble_powers(self.net, &self.nodes, &self.levels)
    }

    fn resolve(&mut self, node: usize) -> Result<()> {
        self.levels[node] = self.nodes[node].level_for_budget(self.budgets[node])?;
        Ok(())
    }

    /// Largest amount that can be called back along route `r`.
    fn recallable(&self, r: usize) -> f64 {
        self.routes[r]
            .links
            .iter()
            .map(|&(q, m)| self.y[q] / m)
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    fn shift(&mut self, r: usize, amount: f64) {
        let route = &self.routes[r];
        self.budgets[route.src] -= amount;
        self.budgets[route.dst] += route.gain * amount;
        for &(q, m) in &route.links {
            self.y[q] = (self.y[q] + m * amount).max(0.0);
        }
    }

    /// One full round-robin pass. Marks the nodes whose budgets changed and
    /// returns whether anything moved.
    pub(crate) fn sweep(&mut self, recall: RecallMode, touched: &mut [bool]) -> Result<bool> {
        let mut moved = false;
        for k in 0..self.moves.len() {
            let ends = match self.moves[k] {
                Move::Route(r) => self
                    .visit_route(r, recall)?
                    .then(|| (self.routes[r].src, self.routes[r].dst)),
                Move::Sibling(a, b) => self
                    .visit_siblings(a, b)?
                    .then(|| (self.routes[a].dst, self.routes[b].dst)),
            };
            if let Some((i, j)) = ends {
                touched[i] = true;
                touched[j] = true;
                moved = true;
            }
        }
        Ok(moved)
    }

    fn visit_route(&mut self, r: usize, recall: RecallMode) -> Result<bool> {
        let Route {
            src: i,
            dst: j,
            gain,
            ..
        } = self.routes[r];
        let (from_flow, to_flow) = (self.nodes[i].has_flow(), self.nodes[j].has_flow());
        if !to_flow {
            // a flow node takes back what is stranded at a dead-end relay
            let amount = self.recallable(r).min(self.budgets[j] / gain);
            if !(amount > 0.0) {
                return Ok(false);
            }
            self.shift(r, -amount);
            self.resolve(i)?;
            return Ok(true);
        }
        if !from_flow {
            // relays pass everything on; siblings re-split it afterwards
            if !(self.budgets[i] > 0.0) {
                return Ok(false);
            }
            let amount = self.budgets[i];
            self.shift(r, amount);
            self.budgets[i] = 0.0;
            self.resolve(j)?;
            return Ok(true);
        }

        let (li, lj) = (self.levels[i], self.levels[j]);
        let send = li < gain * lj * (1.0 - LEVEL_RTOL) && self.budgets[i] > 0.0;
        let call_back = li > gain * lj * (1.0 + LEVEL_RTOL) && self.recallable(r) > 0.0;
        if !send && !call_back {
            return Ok(false);
        }
        match recall {
            RecallMode::Increment(eps) if call_back => {
                let mut moved = false;
                while self.levels[i] > gain * self.levels[j] * (1.0 + LEVEL_RTOL) {
                    let amount = eps.min(self.recallable(r));
                    let room = self.budgets[j] - self.nodes[j].floor();
                    if !(amount > 0.0) || gain * amount >= room {
                        break;
                    }
                    self.shift(r, -amount);
                    self.resolve(i)?;
                    self.resolve(j)?;
                    moved = true;
                }
                Ok(moved)
            }
            _ => {
                let (ni, nj) = (&self.nodes[i], &self.nodes[j]);
                let delta = balancing_transfer(gain, self.budgets[i], ni, self.budgets[j], nj)
                    .clamp(-self.recallable(r), self.budgets[i].max(0.0));
                if delta == 0.0 {
                    return Ok(false);
                }
                self.shift(r, delta);
                self.resolve(i)?;
                self.resolve(j)?;
                Ok(true)
            }
        }
    }

    /// Moves a relay's energy from route `a` to route `b` (or back) until
    /// the receivers' levels, scaled by the route gains, agree.
    fn visit_siblings(&mut self, a: usize, b: usize) -> Result<bool> {
        let (ra, rb) = (&self.routes[a], &self.routes[b]);
        let (ja, jb, ga, gb) = (ra.dst, rb.dst, ra.gain, rb.gain);
        if !self.nodes[ja].has_flow() || !self.nodes[jb].has_flow() {
            return Ok(false);
        }
        let delta = if ja == jb {
            // two paths to one receiver: use the better one only
            if ga < gb {
                self.recallable(a)
            } else if gb < ga {
                -self.recallable(b)
            } else {
                0.0
            }
        } else {
            let ratio = gb / ga;
            let (la, lb) = (self.levels[ja], self.levels[jb]);
            let forward = la < ratio * lb * (1.0 - LEVEL_RTOL) && self.recallable(a) > 0.0;
            let backward = la > ratio * lb * (1.0 + LEVEL_RTOL) && self.recallable(b) > 0.0;
            if !forward && !backward {
                return Ok(false);
            }
            let x = balancing_transfer(
                ratio,
                self.budgets[ja],
                &self.nodes[ja],
                self.budgets[jb],
                &self.nodes[jb],
            );
            (x / ga).clamp(-self.recallable(b), self.recallable(a))
        };
        if !(delta != 0.0) {
            return Ok(false);
        }
        self.shift(a, -delta);
        self.shift(b, delta);
        self.resolve(ja)?;
        self.resolve(jb)?;
        Ok(true)
    }
}

pub(crate) fn weighted_objective(
    net: &Network,
    t: &[f64],
    p: &[f64],
    weights: Option<&[f64]>,
) -> f64 {
    net.data_links()
        .iter()
        .enumerate()
        .map(|(k, l)| weights.map_or(1.0, |w| w[k]) * delay_unchecked(p[k], l.sigma, t[k]))
        .sum()
}

/// Total delay `sum_l t_l / (c_l - t_l)`.
pub fn total_delay(net: &Network, t: &FlowVector, p: &[f64]) -> f64 {
    weighted_objective(net, t.as_slice(), p, None)
}

pub(crate) fn node_links(net: &Network, t: &[f64], weights: Option<&[f64]>) -> Vec<NodeLinks> {
    (0..net.node_count())
        .map(|n| {
            NodeLinks::new(
                net.out_data(n)
                    .iter()
                    .map(|&k| WeightedLink {
                        sigma: net.data_links()[k].sigma,
                        t: t[k],
                        weight: weights.map_or(1.0, |w| w[k]),
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Iterative energy routing for one slot with fixed flows.
///
/// Starts from the no-transfer allocation when every node can carry its own
/// flows; otherwise from a strictly feasible transfer vector found by the
/// oracle's linear program. Runs round-robin sweeps over the energy links
/// until no water level moves. Hitting `max_sweeps` returns the last iterate
/// with `converged == false`.
pub fn solve_single_slot(
    net: &Network,
    t: &FlowVector,
    energy: &[f64],
    options: &SingleSlotOptions,
) -> Result<SingleSlotSolution> {
    expect_len("flows", net.data_links().len(), t.len())?;
    expect_len("energy", net.node_count(), energy.len())?;
    if let Some(w) = &options.link_weights {
        expect_len("link weights", net.data_links().len(), w.len())?;
        if let Some(&bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NegativeValue {
                what: "link weight",
                value: bad,
            });
        }
    }
    let weights = options.link_weights.as_deref();
    let nodes = node_links(net, t.as_slice(), weights);
    let q_count = net.energy_links().len();

    let self_sufficient = nodes
        .iter()
        .zip(energy)
        .all(|(nl, &e)| !nl.has_flow() || e > nl.floor());
    let (y0, lp_start) = if self_sufficient {
        (vec![0.0; q_count], false)
    } else {
        match oracle::strictly_feasible_transfers(net, t, energy)? {
            Some(y) => (y, true),
            None => {
                let report = oracle::feasibility_check(net, t, energy)?;
                let mut deficits = report.deficits;
                if deficits.is_empty() {
                    // feasible only on the boundary, where every delay is infinite
                    deficits = nodes
                        .iter()
                        .enumerate()
                        .filter(|(n, nl)| nl.has_flow() && energy[*n] <= nl.floor())
                        .map(|(n, nl)| (n, nl.floor() - energy[n]))
                        .collect();
                }
                return Err(Error::Infeasible { deficits });
            }
        }
    };

    let mut state = SlotState::new(net, nodes, energy, &y0)?;

    let objective_of = |s: &SlotState| weighted_objective(net, t.as_slice(), &s.powers(), weights);
    let mut trace = vec![SweepRecord {
        objective: objective_of(&state),
        max_level_change: 0.0,
        water_levels: state.levels().to_vec(),
    }];

    let mut converged = q_count == 0;
    let mut sweeps = 0;
    while !converged && sweeps < options.max_sweeps {
        sweeps += 1;
        let before = state.levels().to_vec();
        let moved = state.sweep(options.recall, &mut vec![false; net.node_count()])?;
        let change = before
            .iter()
            .zip(state.levels())
            .map(|(a, b)| {
                if *a == 0.0 && *b == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / a.abs().max(b.abs())
                }
            })
            .fold(0.0, f64::max);
        trace.push(SweepRecord {
            objective: objective_of(&state),
            max_level_change: change,
            water_levels: state.levels().to_vec(),
        });
        if !moved || change <= options.tol {
            converged = true;
        }
    }

    let powers = state.powers();
    let objective = weighted_objective(net, t.as_slice(), &powers, weights);
    let total = weighted_objective(net, t.as_slice(), &powers, None);
    Ok(SingleSlotSolution {
        powers,
        transfers: state.transfers().to_vec(),
        water_levels: state.levels().to_vec(),
        meters: MeterState {
            taps: state.transfers().to_vec(),
        },
        objective,
        total_delay: total,
        iterations: sweeps,
        converged,
        lp_start,
        trace,
    })
}

pub(crate) fn assemble_powers(net: &Network, nodes: &[NodeLinks], levels: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; net.data_links().len()];
    for (n, nl) in nodes.iter().enumerate() {
        for (&k, v) in net.out_data(n).iter().zip(nl.powers(levels[n])) {
            p[k] = v;
        }
    }
    p
}

/// `-h'(p)` for a link carrying flow, `None` otherwise or at/over capacity.
pub(crate) fn marginal(p: f64, sigma: f64, t: f64) -> Option<f64> {
    if t == 0.0 || capacity(p, sigma) <= t {
        return None;
    }
    dh_dp(p, LinkParams { sigma, t }).ok().map(|d| -d)
}

/// Largest relative spread of `-h'` among a node's flow-carrying links.
pub fn equal_marginal_residual(net: &Network, t: &FlowVector, p: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 0..net.node_count() {
        let m: Vec<f64> = net
            .out_data(n)
            .iter()
            .filter_map(|&k| marginal(p[k], net.data_links()[k].sigma, t[k]))
            .collect();
        if m.len() < 2 {
            continue;
        }
        let hi = m.iter().copied().fold(f64::MIN, f64::max);
        let lo = m.iter().copied().fold(f64::MAX, f64::min);
        worst = worst.max((hi - lo) / hi);
    }
    worst
}

/// Largest relative violation of `h'_l = alpha h'_m` over active energy links
/// (`y_q > active_floor`) and of `-h'_l >= alpha (-h'_m)` over all energy links,
/// comparing every flow-carrying link of the sender with every one of the receiver.
pub fn transfer_residual(
    net: &Network,
    t: &FlowVector,
    p: &[f64],
    y: &[f64],
    active_floor: f64,
) -> f64 {
    let marginals = |n: usize| -> Vec<f64> {
        net.out_data(n)
            .iter()
            .filter_map(|&k| marginal(p[k], net.data_links()[k].sigma, t[k]))
            .collect()
    };
    let mut worst: f64 = 0.0;
    for (q, link) in net.energy_links().iter().enumerate() {
        let (mi, mj) = (marginals(link.src), marginals(link.dst));
        for &a in &mi {
            for &b in &mj {
                let scaled = link.alpha * b;
                let r = if y[q] > active_floor {
                    (a - scaled).abs() / a
                } else {
                    ((scaled - a) / a).max(0.0)
                };
                worst = worst.max(r);
            }
        }
    }
    worst
}
