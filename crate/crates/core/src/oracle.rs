//! Slow, independent reference solvers for small instances.
//!
//! Nothing here shares numerical code with the main algorithms: delays and
//! their derivatives are re-derived locally, feasibility is a linear program,
//! the fixed-flow problem is solved by plain projected gradient, and the
//! joint problem by exhaustive grid search.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::joint::{binomial, compositions, enumerate_paths, non_dominated, PathSet};
use crate::topology::{expect_len, FlowVector, Network};

fn floor_power(sigma: f64, t: f64) -> f64 {
    sigma * ((2.0 * t).exp() - 1.0)
}

/// Delay and its first derivative in `p`, from `c = ln(1 + p/sigma) / 2`.
fn delay_and_slope(p: f64, sigma: f64, t: f64) -> (f64, f64) {
    let (h, dh, _) = delay_derivatives(p, sigma, t);
    (h, dh)
}

/// Delay of one link and its first two derivatives in `p`.
fn delay_derivatives(p: f64, sigma: f64, t: f64) -> (f64, f64, f64) {
    let c = 0.5 * (p / sigma).ln_1p();
    let gap = c - t;
    if gap <= 0.0 {
        return (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    }
    let dc = 0.5 / (sigma + p);
    let ddc = -2.0 * dc * dc;
    (
        t / gap,
        -t * dc / (gap * gap),
        t * (2.0 * dc * dc / gap - ddc) / (gap * gap),
    )
}

/// Per-link floor powers and the node totals `F * floor`.
fn floors(net: &Network, t: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let per_link: Vec<f64> = net
        .data_links()
        .iter()
        .zip(t)
        .map(|(l, &tl)| floor_power(l.sigma, tl))
        .collect();
    let mut per_node = vec![0.0; net.node_count()];
    for (l, &f) in net.data_links().iter().zip(&per_link) {
        per_node[l.src] += f;
    }
    (per_link, per_node)
}

fn check_inputs(net: &Network, t: &FlowVector, energy: &[f64]) -> Result<()> {
    expect_len("flows", net.data_links().len(), t.len())?;
    expect_len("energy", net.node_count(), energy.len())?;
    if let Some(&bad) = energy.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::NegativeValue {
            what: "energy",
            value: bad,
        });
    }
    Ok(())
}

fn lp_err(e: microlp::Error) -> Error {
    Error::Lp(e.to_string())
}

/// Outcome of the linear feasibility test.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Transfers of the returned point (feasible when `feasible`).
    pub transfers: Vec<f64>,
    /// Floor powers `sigma (e^{2t} - 1)` used as the power part of the point.
    pub powers: Vec<f64>,
    /// Nodes left short of energy at the least-deficit point, with the shortfall.
    pub deficits: Vec<(usize, f64)>,
}

/// Decides whether some `(p, y)` meets `F p + B y <= E`, `p >= floor`, `y >= 0`.
///
/// Powers can always sit on their floors, so this is a linear program in `y`
/// with one shortfall variable per node; the instance is feasible iff the
/// total shortfall can be driven to zero.
pub fn feasibility_check(
    net: &Network,
    t: &FlowVector,
    energy: &[f64],
) -> Result<FeasibilityReport> {
    check_inputs(net, t, energy)?;
    let (per_link, per_node) = floors(net, t.as_slice());
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let y: Vec<_> = net
        .energy_links()
        .iter()
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let u: Vec<_> = (0..net.node_count())
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    for n in 0..net.node_count() {
        let mut row = vec![(u[n], -1.0)];
        for &q in net.out_energy(n) {
            row.push((y[q], 1.0));
        }
        for &q in net.in_energy(n) {
            row.push((y[q], -net.energy_links()[q].alpha));
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, energy[n] - per_node[n]);
    }
    let solution = lp
        .solve()
        .map_err(lp_err)?
        .into_solution()
        .map_err(|e| Error::Lp(format!("{e:?}")))?;
    let scale = 1.0
        + energy
            .iter()
            .chain(&per_node)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
    let deficits: Vec<(usize, f64)> = u
        .iter()
        .enumerate()
        .map(|(n, &v)| (n, solution.var_value(v)))
        .filter(|&(_, d)| d > 1e-9 * scale)
        .collect();
    Ok(FeasibilityReport {
        feasible: deficits.is_empty(),
        transfers: y.iter().map(|&v| solution.var_value(v).max(0.0)).collect(),
        powers: per_link,
        deficits,
    })
}

/// Transfers leaving every node that carries flow strictly above its floor,
/// chosen to maximise the smallest such margin. `None` when no margin is
/// positive, i.e. the instance is infeasible or feasible only on its boundary.
pub fn strictly_feasible_transfers(
    net: &Network,
    t: &FlowVector,
    energy: &[f64],
) -> Result<Option<Vec<f64>>> {
    Ok(max_margin_point(net, t, energy)?.map(|(y, _)| y))
}

fn max_margin_point(
    net: &Network,
    t: &FlowVector,
    energy: &[f64],
) -> Result<Option<(Vec<f64>, f64)>> {
    check_inputs(net, t, energy)?;
    let (_, per_node) = floors(net, t.as_slice());
    let carries = |n: usize| net.out_data(n).iter().any(|&k| t[k] > 0.0);
    let cap = 1.0 + energy.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let y: Vec<_> = net
        .energy_links()
        .iter()
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let margin = lp.add_var(1.0, (-cap - per_node.iter().sum::<f64>(), cap));
    for n in 0..net.node_count() {
        let mut row = Vec::new();
        for &q in net.out_energy(n) {
            row.push((y[q], 1.0));
        }
        for &q in net.in_energy(n) {
            row.push((y[q], -net.energy_links()[q].alpha));
        }
        if carries(n) {
            row.push((margin, 1.0));
        } else if row.is_empty() {
            continue;
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, energy[n] - per_node[n]);
    }
    let solution = lp
        .solve()
        .map_err(lp_err)?
        .into_solution()
        .map_err(|e| Error::Lp(format!("{e:?}")))?;
    let m = solution.var_value(margin);
    if m > 1e-10 * cap {
        let ys = y.iter().map(|&v| solution.var_value(v).max(0.0)).collect();
        Ok(Some((ys, m)))
    } else {
        Ok(None)
    }
}

/// Reference optimum of a fixed-flow problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub powers: Vec<f64>,
    pub transfers: Vec<f64>,
    /// Flows of the allocation (echoed for fixed-flow solves).
    pub flows: Vec<f64>,
    pub iterations: usize,
    /// Final projected-gradient norm, or the grid cell width for grid search.
    pub residual: f64,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexOptions {
    /// Stop once the projected-gradient norm drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ConvexOptions {
    fn default() -> Self {
        ConvexOptions {
            tol: 1e-7,
            max_iters: 10_000,
        }
    }
}

/// Polyhedron `{x : g_i . x <= h_i}` with an exact Euclidean projection.
struct Polyhedron {
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    dim: usize,
}

impl Polyhedron {
    fn new(rows: Vec<(Vec<(usize, f64)>, f64)>, dim: usize) -> Polyhedron {
        Polyhedron { rows, dim }
    }

    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].0.iter().map(|&(k, v)| v * x[k]).sum()
    }

    /// Primal active-set projection of `z` in the norm `sum w_k x_k^2`,
    /// started from the feasible `x0`.
    ///
    /// A blocking row is never in the span of the working rows, so the working
    /// Gram matrix stays nonsingular and each solve is a Cholesky.
    fn project(&self, z: &[f64], x0: &[f64], w: &[f64]) -> Vec<f64> {
        let mut x = x0.to_vec();
        let mut work: Vec<usize> = Vec::new();
        let scale = 1.0 + z.iter().chain(x0).fold(0.0_f64, |m, v| m.max(v.abs()));
        for _ in 0..10 * (self.rows.len() + self.dim) + 10 {
            // minimiser on the working face: x* = z - W^-1 G_W^T mu
            let m = work.len();
            let mut dense = DMatrix::<f64>::zeros(m, self.dim);
            for (r, &i) in work.iter().enumerate() {
                for &(k, v) in &self.rows[i].0 {
                    dense[(r, k)] += v;
                }
            }
            let rhs =
                DVector::from_iterator(m, work.iter().map(|&i| self.dot(i, z) - self.rows[i].1));
            let mut scaled = dense.clone();
            for (k, &wk) in w.iter().enumerate() {
                scaled.column_mut(k).unscale_mut(wk);
            }
            let gram = &scaled * dense.transpose();
            let mu = match gram.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => match gram.lu().solve(&rhs) {
                    Some(mu) => mu,
                    None => break,
                },
            };
            let shift = scaled.transpose() * &mu;
            let target: Vec<f64> = (0..self.dim).map(|k| z[k] - shift[k]).collect();
            let d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
            let mut step = 1.0;
            let mut blocking = None;
            if d.iter().any(|v| v.abs() > 1e-14 * scale) {
                for i in 0..self.rows.len() {
                    if work.contains(&i) {
                        continue;
                    }
                    let gd: f64 = self.rows[i].0.iter().map(|&(k, v)| v * d[k]).sum();
                    if gd > 0.0 {
                        let room = (self.rows[i].1 - self.dot(i, &x)).max(0.0) / gd;
                        if room < step {
                            step = room;
                            blocking = Some(i);
                        }
                    }
                }
            }
            if let Some(i) = blocking {
                for (a, b) in x.iter_mut().zip(&d) {
                    *a += step * b;
                }
                work.push(i);
                continue;
            }
            // at the face minimiser: release the row with the most negative multiplier
            x = target;
            let most = mu.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            match (0..m).min_by(|&a, &b| mu[a].total_cmp(&mu[b])) {
                Some(r) if mu[r] < -1e-12 * (1.0 + most) => {
                    work.remove(r);
                }
                _ => return x,
            }
        }
        x
    }
}

/// Projected gradient on `(p, y)` for the fixed-flow problem.
///
/// The start is the linear program's max-margin point with each node's
/// leftover spread over its links. Links whose delay alone would exceed the
/// starting objective can never be optimal, which gives each power a lower
/// bound strictly inside the capacity region and keeps every iterate finite.
/// Gradient steps are projected in the metric of the delays' second
/// derivatives, so links sitting next to their floor power do not force a
/// vanishing step on everyone else. Steps are accepted only under an Armijo
/// test, so the objective never increases. The stopping test is the plain
/// Euclidean projected-gradient norm.
pub fn convex_solve(
    net: &Network,
    t: &FlowVector,
    energy: &[f64],
    options: ConvexOptions,
) -> Result<OracleResult> {
    let (y0, _) = max_margin_point(net, t, energy)?.ok_or(Error::NotFeasible)?;
    let links = net.data_links();
    let flow: Vec<usize> = (0..links.len()).filter(|&k| t[k] > 0.0).collect();
    let nq = net.energy_links().len();
    let nx = flow.len() + nq;
    let slot_of = |k: usize| flow.iter().position(|&f| f == k);

    // starting point
    let mut budget = energy.to_vec();
    for (q, link) in net.energy_links().iter().enumerate() {
        budget[link.src] -= y0[q];
        budget[link.dst] += link.alpha * y0[q];
    }
    let mut x = vec![0.0; nx];
    for n in 0..net.node_count() {
        let mine: Vec<usize> = net
            .out_data(n)
            .iter()
            .copied()
            .filter(|&k| t[k] > 0.0)
            .collect();
        if mine.is_empty() {
            continue;
        }
        let floor: f64 = mine
            .iter()
            .map(|&k| floor_power(links[k].sigma, t[k]))
            .sum();
        let share = (budget[n] - floor) / mine.len() as f64;
        for &k in &mine {
            x[slot_of(k).unwrap()] = floor_power(links[k].sigma, t[k]) + share;
        }
    }
    x[flow.len()..].copy_from_slice(&y0);

    let objective = |x: &[f64]| -> f64 {
        flow.iter()
            .enumerate()
            .map(|(i, &k)| delay_and_slope(x[i], links[k].sigma, t[k]).0)
            .sum()
    };
    let f0 = objective(&x);
    let mut rows = Vec::new();
    for n in 0..net.node_count() {
        let mut g = Vec::new();
        for &k in net.out_data(n) {
            if let Some(i) = slot_of(k) {
                g.push((i, 1.0));
            }
        }
        for &q in net.out_energy(n) {
            g.push((flow.len() + q, 1.0));
        }
        for &q in net.in_energy(n) {
            g.push((flow.len() + q, -net.energy_links()[q].alpha));
        }
        if !g.is_empty() {
            rows.push((g, energy[n]));
        }
    }
    for q in 0..nq {
        rows.push((vec![(flow.len() + q, -1.0)], 0.0));
    }
    for (i, &k) in flow.iter().enumerate() {
        let lb = floor_power(links[k].sigma, t[k] + t[k] / f0.max(f64::MIN_POSITIVE));
        rows.push((vec![(i, -1.0)], -lb.min(x[i])));
    }
    let poly = Polyhedron::new(rows, nx);

    let mut f = f0;
    let mut trace = vec![f0];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = nx == 0 || flow.is_empty();
    let unit_metric = vec![1.0; nx];
    while !converged && iterations < options.max_iters {
        let mut g = vec![0.0; nx];
        let mut w = vec![0.0; nx];
        for (i, &k) in flow.iter().enumerate() {
            let (_, dh, ddh) = delay_derivatives(x[i], links[k].sigma, t[k]);
            g[i] = dh;
            w[i] = ddh;
        }
        let z: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        let unit = poly.project(&z, &x, &unit_metric);
        residual = unit
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if residual < options.tol {
            converged = true;
            break;
        }
        iterations += 1;
        // transfers have no curvature of their own; give them the flattest power's
        let flat = w[..flow.len()].iter().fold(f64::INFINITY, |m, &v| m.min(v));
        for v in &mut w[flow.len()..] {
            *v = flat;
        }
        let z: Vec<f64> = (0..nx).map(|k| x[k] - g[k] / w[k]).collect();
        let target = poly.project(&z, &x, &w);
        let d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = false;
        while slope < 0.0 && step >= 1e-20 {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fc = objective(&cand);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                x = cand;
                f = fc;
                trace.push(f);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable decrease left
            break;
        }
    }

    let mut powers = vec![0.0; links.len()];
    for (i, &k) in flow.iter().enumerate() {
        powers[k] = x[i];
    }
    Ok(OracleResult {
        objective: f,
        powers,
        transfers: x[flow.len()..].to_vec(),
        flows: t.as_slice().to_vec(),
        iterations,
        residual: if residual.is_infinite() {
            0.0
        } else {
            residual
        },
        converged,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Cells per free dimension.
    pub resolution: usize,
    pub max_points: u128,
    pub parallel: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            resolution: 20,
            max_points: 20_000_000,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub path_flows: Vec<f64>,
    pub flows: Vec<f64>,
    pub powers: Vec<f64>,
    pub transfers: Vec<f64>,
    pub path_delays: Vec<f64>,
    pub total_delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub paths: PathSet,
    /// Non-dominated path-delay vectors, by increasing first path delay.
    pub frontier: Vec<GridPoint>,
    /// Smallest total delay on the grid.
    pub best: GridPoint,
    pub points: u128,
    pub feasible_points: usize,
}

/// Mixed-radix layout of the joint grid.
struct JointGrid<'a> {
    net: &'a Network,
    energy: &'a [f64],
    paths: PathSet,
    res: usize,
    flow_splits: Vec<Vec<Vec<usize>>>,
    y_max: Vec<f64>,
    /// Per node: outgoing links on some path, and the grid of slack shares.
    power_splits: Vec<(Vec<usize>, Vec<Vec<usize>>)>,
}

impl JointGrid<'_> {
    fn radices(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.flow_splits.iter().map(|c| c.len()).collect();
        r.extend(std::iter::repeat_n(self.res + 1, self.y_max.len()));
        r.extend(self.power_splits.iter().map(|(_, c)| c.len()));
        r
    }

    fn evaluate(&self, mut index: u128, radices: &[usize]) -> Option<GridPoint> {
        let mut digits = Vec::with_capacity(radices.len());
        for &r in radices {
            digits.push((index % r as u128) as usize);
            index /= r as u128;
        }
        let res = self.res as f64;
        let mut d = digits.into_iter();

        let mut path_flows = vec![0.0; self.paths.paths.len()];
        for ((_, supply, members), splits) in self.paths.sources.iter().zip(&self.flow_splits) {
            let c = &splits[d.next()?];
            for (&i, &cells) in members.iter().zip(c) {
                path_flows[i] = supply * cells as f64 / res;
            }
        }
        let links = self.net.data_links();
        let flows = self.paths.link_flows(links.len(), &path_flows);
        let transfers: Vec<f64> = self
            .y_max
            .iter()
            .map(|m| m * d.next().unwrap() as f64 / res)
            .collect();

        let mut budget = self.energy.to_vec();
        for (q, link) in self.net.energy_links().iter().enumerate() {
            budget[link.src] -= transfers[q];
            budget[link.dst] += link.alpha * transfers[q];
        }
        if budget.iter().any(|b| *b < -1e-12) {
            return None;
        }
        let mut powers = vec![0.0; links.len()];
        for (n, (mine, splits)) in self.power_splits.iter().enumerate() {
            let choice = d.next()?;
            let carrying = mine.iter().any(|&k| flows[k] > 0.0);
            if !carrying {
                if choice != 0 {
                    return None;
                }
                continue;
            }
            let floor: f64 = mine
                .iter()
                .map(|&k| floor_power(links[k].sigma, flows[k]))
                .sum();
            let slack = budget[n] - floor;
            if slack <= 0.0 {
                return None;
            }
            for (&k, &cells) in mine.iter().zip(&splits[choice]) {
                if flows[k] > 0.0 && cells == 0 {
                    return None;
                }
                powers[k] = floor_power(links[k].sigma, flows[k])
                    + slack * cells as f64 / splits[choice].iter().sum::<usize>() as f64;
            }
        }
        let delays: Vec<f64> = links
            .iter()
            .enumerate()
            .map(|(k, l)| {
                if flows[k] == 0.0 {
                    0.0
                } else {
                    delay_and_slope(powers[k], l.sigma, flows[k]).0
                }
            })
            .collect();
        if delays.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(GridPoint {
            path_delays: self.paths.path_delays(&delays),
            total_delay: delays.iter().sum(),
            path_flows,
            flows,
            powers,
            transfers,
        })
    }
}

/// Exhaustive search of the joint problem on a regular grid.
///
/// Free variables are each source's split of its supply over its paths, the
/// transfer on every energy link (from zero to what its sender can hold after
/// one hop), and at nodes with several path links the split of the energy
/// left above the floors. Conservation holds by construction; points that
/// break energy balance or capacity are dropped.
pub fn grid_search_joint(
    net: &Network,
    energy: &[f64],
    options: GridOptions,
) -> Result<GridSearchResult> {
    expect_len("energy", net.node_count(), energy.len())?;
    let paths = enumerate_paths(net)?;
    let res = options.resolution.max(1);
    let on_path: Vec<bool> = (0..net.data_links().len())
        .map(|k| paths.paths.iter().any(|p| p.links.contains(&k)))
        .collect();

    let flow_splits: Vec<Vec<Vec<usize>>> = paths
        .sources
        .iter()
        .map(|(_, _, m)| compositions(res, m.len()))
        .collect();
    let y_max: Vec<f64> = net
        .energy_links()
        .iter()
        .map(|l| {
            energy[l.src]
                + net
                    .in_energy(l.src)
                    .iter()
                    .map(|&q| net.energy_links()[q].alpha * energy[net.energy_links()[q].src])
                    .sum::<f64>()
        })
        .collect();
    let mut count: u128 = paths.sources.iter().fold(1u128, |acc, (_, _, m)| {
        acc.saturating_mul(binomial((res + m.len() - 1) as u128, (m.len() - 1) as u128))
    });
    count = count.saturating_mul((res as u128 + 1).saturating_pow(y_max.len() as u32));
    let mut sizes = Vec::new();
    for n in 0..net.node_count() {
        let k = net.out_data(n).iter().filter(|&&l| on_path[l]).count();
        if k > 1 {
            count = count.saturating_mul(binomial((res + k - 1) as u128, (k - 1) as u128));
        }
        sizes.push(k);
    }
    if count > options.max_points {
        return Err(Error::GridTooLarge {
            points: count,
            cap: options.max_points,
        });
    }
    let power_splits = (0..net.node_count())
        .map(|n| {
            let mine: Vec<usize> = net
                .out_data(n)
                .iter()
                .copied()
                .filter(|&l| on_path[l])
                .collect();
            let splits = if mine.len() > 1 {
                compositions(res, mine.len())
            } else {
                vec![vec![1; mine.len()]]
            };
            (mine, splits)
        })
        .collect();
    let grid = JointGrid {
        net,
        energy,
        paths,
        res,
        flow_splits,
        y_max,
        power_splits,
    };
    let radices = grid.radices();
    let total: u128 = radices.iter().map(|&r| r as u128).product();

    let keyed = |i: u128| {
        grid.evaluate(i, &radices)
            .map(|p| (i, p.path_delays, p.total_delay))
    };
    let found: Vec<(u128, Vec<f64>, f64)> = if options.parallel {
        (0..total as u64)
            .into_par_iter()
            .filter_map(|i| keyed(i as u128))
            .collect()
    } else {
        (0..total).filter_map(keyed).collect()
    };
    if found.is_empty() {
        return Err(Error::NotFeasible);
    }
    let best = found
        .iter()
        .fold(&found[0], |a, b| if b.2 < a.2 { b } else { a })
        .0;
    let keys: Vec<Vec<f64>> = found.iter().map(|f| f.1.clone()).collect();
    let frontier = non_dominated(&keys)
        .into_iter()
        .filter_map(|i| grid.evaluate(found[i].0, &radices))
        .collect();
    Ok(GridSearchResult {
        best: grid.evaluate(best, &radices).ok_or(Error::NotFeasible)?,
        frontier,
        points: total,
        feasible_points: found.len(),
        paths: grid.paths,
    })
}
