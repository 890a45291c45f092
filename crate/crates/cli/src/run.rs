//! Solver dispatch and artifact emission.
//!
//! Every run writes into one output directory:
//!
//! | file | columns |
//! |------|---------|
//! | `powers.csv` | `link_id,slot,power,capacity,flow,delay` |
//! | `transfers.csv` | `energy_link_id,slot,transfer,tap` |
//! | `carryover.csv` (multi) | `node_id,slot,stored` (energy kept from `slot` into `slot + 1`) |
//! | `paths.csv` (joint, pareto) | `path_id,source,destination,links,flow` |
//! | `trace.csv` | per iteration: objective and water levels or path delays |
//! | `kkt.csv` | `residual,value` |
//! | `frontier_cooperative.csv`, `frontier_standalone.csv` (pareto) | `point,delay_path<k>...,flow_path<k>...` |
//! | `joint_runs.csv`, `joint_traces.csv` (pareto) | one row per start / per start and iteration |
//! | `summary.txt` | human-readable report |
//!
//! Slots and ids are 1-based, as in the config. Numbers are written in
//! shortest round-trip form, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eflow_core::joint::{
    fewest_hop_start, pareto_sweep, solve_joint, JointOptions, JointSolution, ParetoOptions,
    ParetoPoint, PathSet,
};
use eflow_core::multi_slot::solve_multi_slot_with_transfer;
use eflow_core::power_math::{capacity, link_delay, LinkParams};
use eflow_core::single_slot::{
    equal_marginal_residual, solve_single_slot, transfer_residual, RecallMode, SingleSlotOptions,
    SweepRecord,
};
use eflow_core::topology::{check_flow_conservation, is_conserved, FlowVector, Network};
use eflow_core::Error;

use crate::config::{RunConfig, SolverKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Outcome of [`run`]; artifacts are already on disk.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub summary: String,
    /// Text meant for stderr (deficit report, convergence warning).
    pub diagnostics: Option<String>,
}

/// Active-link threshold for the transfer residual, relative to the largest harvest.
const ACTIVE_FLOOR: f64 = 1e-9;

const NOTE: &str = "note: tolerances are solver settings, not certificates of global optimality; \
joint solutions are certified only as stationary points of the joint problem, and frontier points \
only as Pareto points of the scalarised sweep.\n";

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_csv(
    dir: &Path,
    name: &str,
    header: &[String],
    rows: &[Vec<String>],
) -> anyhow::Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn single_options(cfg: &RunConfig) -> SingleSlotOptions {
    let mut o = SingleSlotOptions::default();
    if let Some(tol) = cfg.options.tol {
        o.tol = tol;
    }
    if let Some(m) = cfg.options.max_iters {
        o.max_sweeps = m;
    }
    if let Some(step) = cfg.options.recall_step {
        o.recall = RecallMode::Increment(step);
    }
    o
}

fn joint_options(cfg: &RunConfig, start: Option<Vec<f64>>) -> JointOptions {
    let mut o = JointOptions::default();
    if let Some(tol) = cfg.options.tol {
        o.tol = tol;
    }
    if let Some(m) = cfg.options.max_iters {
        o.max_iters = m;
    }
    o.start_path_flows = start;
    o
}

/// Runs the configured solver and writes its artifacts into `out`.
///
/// Infeasible instances yield exit code 2 with a deficit report; solver
/// errors that are not about feasibility are returned as `Err`.
pub fn run(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunReport> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let outcome = match cfg.solver {
        SolverKind::Single => run_single(cfg, out),
        SolverKind::Multi => run_multi(cfg, out),
        SolverKind::Joint => run_joint(cfg, out),
        SolverKind::Pareto => run_pareto(cfg, out),
    };
    match outcome {
        Ok(report) => {
            fs::write(out.join("summary.txt"), &report.summary)?;
            Ok(report)
        }
        Err(e) => match e
            .downcast_ref::<Error>()
            .and_then(|e| infeasibility_report(cfg, e))
        {
            Some(report) => {
                let summary = format!(
                    "solver: {}\nstatus: infeasible\n{report}",
                    solver_name(cfg.solver)
                );
                fs::write(out.join("summary.txt"), &summary)?;
                Ok(RunReport {
                    exit_code: EXIT_INFEASIBLE,
                    summary,
                    diagnostics: Some(report),
                })
            }
            None => Err(e),
        },
    }
}

fn solver_name(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Single => "single",
        SolverKind::Multi => "multi",
        SolverKind::Joint => "joint",
        SolverKind::Pareto => "pareto",
    }
}

fn node_id(n: usize) -> usize {
    n + 1
}

fn infeasibility_report(cfg: &RunConfig, e: &Error) -> Option<String> {
    let n = cfg.network.node_count();
    let mut s = String::new();
    match e {
        Error::Infeasible { deficits } => {
            s.push_str("deficits (energy a node is short of even with the best transfers):\n");
            for &(k, d) in deficits {
                if cfg.solver == SolverKind::Multi {
                    let _ = writeln!(s, "  node {} slot {}: {d}", node_id(k % n), k / n + 1);
                } else {
                    let _ = writeln!(s, "  node {}: {d}", node_id(k));
                }
            }
        }
        Error::InfeasibleSlot { node, slot, value } => {
            let _ = writeln!(
                s,
                "  node {} slot {}: reduced arrival {value}",
                node_id(*node),
                slot + 1
            );
        }
        Error::InfeasibleBudget {
            budget,
            required,
            deficit,
        } => {
            let _ = writeln!(
                s,
                "  budget {budget} below required {required} (deficit {deficit})"
            );
        }
        Error::NoFeasibleStart(why) => {
            let _ = writeln!(s, "  no feasible starting point: {why}");
        }
        _ => return None,
    }
    Some(s)
}

fn link_label(net: &Network, k: usize) -> String {
    let l = &net.data_links()[k];
    format!("link {} ({} -> {})", l.id, node_id(l.src), node_id(l.dst))
}

fn energy_label(net: &Network, q: usize) -> String {
    let l = &net.energy_links()[q];
    format!(
        "energy link {} ({} -> {})",
        l.id,
        node_id(l.src),
        node_id(l.dst)
    )
}

fn power_row(net: &Network, k: usize, slot: usize, p: f64, t: f64) -> anyhow::Result<Vec<String>> {
    let l = &net.data_links()[k];
    let delay = link_delay(p, LinkParams { sigma: l.sigma, t })?;
    Ok(vec![
        l.id.to_string(),
        (slot + 1).to_string(),
        num(p),
        num(capacity(p, l.sigma)),
        num(t),
        num(delay),
    ])
}

const POWER_HEADER: [&str; 6] = ["link_id", "slot", "power", "capacity", "flow", "delay"];
const TRANSFER_HEADER: [&str; 4] = ["energy_link_id", "slot", "transfer", "tap"];

fn level_trace(trace: &[SweepRecord], labels: &[String]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = strings(&["iteration", "objective", "max_level_change"]);
    header.extend(labels.iter().cloned());
    let rows = trace
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![i.to_string(), num(r.objective), num(r.max_level_change)];
            row.extend(r.water_levels.iter().map(|&v| num(v)));
            row
        })
        .collect();
    (header, rows)
}

fn kkt_rows(items: &[(&str, f64)]) -> Vec<Vec<String>> {
    items
        .iter()
        .map(|(k, v)| vec![k.to_string(), num(*v)])
        .collect()
}

fn status_line(converged: bool, iterations: usize, unit: &str) -> String {
    if converged {
        format!("status: converged after {iterations} {unit}\n")
    } else {
        format!("status: NOT converged, stopped after {iterations} {unit}\n")
    }
}

fn finish(summary: String, converged: bool) -> RunReport {
    RunReport {
        exit_code: if converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        },
        diagnostics: (!converged).then(|| "iteration limit reached before convergence".to_string()),
        summary,
    }
}

fn flows(cfg: &RunConfig) -> anyhow::Result<&FlowVector> {
    cfg.flows.as_ref().context("config has no flows")
}

fn run_single(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunReport> {
    let net = &cfg.network;
    let t = flows(cfg)?;
    let energy = cfg.harvest.slot(0);
    let sol = solve_single_slot(net, t, &energy, &single_options(cfg))?;

    let mut rows = Vec::new();
    for k in 0..net.data_links().len() {
        rows.push(power_row(net, k, 0, sol.powers[k], t[k])?);
    }
    write_csv(out, "powers.csv", &strings(&POWER_HEADER), &rows)?;
    let rows: Vec<_> = net
        .energy_links()
        .iter()
        .enumerate()
        .map(|(q, l)| {
            vec![
                l.id.to_string(),
                "1".into(),
                num(sol.transfers[q]),
                num(sol.meters.taps[q]),
            ]
        })
        .collect();
    write_csv(out, "transfers.csv", &strings(&TRANSFER_HEADER), &rows)?;
    let labels: Vec<String> = (0..net.node_count())
        .map(|n| format!("lambda_node{}", node_id(n)))
        .collect();
    let (header, rows) = level_trace(&sol.trace, &labels);
    write_csv(out, "trace.csv", &header, &rows)?;
    let floor = ACTIVE_FLOOR * energy.iter().fold(1.0_f64, |m, v| m.max(*v));
    let kkt = [
        (
            "equal_marginal",
            equal_marginal_residual(net, t, &sol.powers),
        ),
        (
            "energy_transfer",
            transfer_residual(net, t, &sol.powers, &sol.transfers, floor),
        ),
    ];
    write_csv(
        out,
        "kkt.csv",
        &strings(&["residual", "value"]),
        &kkt_rows(&kkt),
    )?;

    let mut s = String::from("solver: single\n");
    s.push_str(&status_line(sol.converged, sol.iterations, "sweeps"));
    if sol.lp_start {
        s.push_str("start: strictly feasible transfers from the linear program\n");
    }
    let _ = writeln!(s, "total delay: {:.6}", sol.total_delay);
    s.push_str("energy transfers y:\n");
    for (q, y) in sol.transfers.iter().enumerate() {
        let _ = writeln!(s, "  {}: {y:.4}", energy_label(net, q));
    }
    s.push_str("powers p:\n");
    for (k, p) in sol.powers.iter().enumerate() {
        let _ = writeln!(s, "  {}: {p:.4}", link_label(net, k));
    }
    s.push_str("water levels:\n");
    for (n, l) in sol.water_levels.iter().enumerate() {
        let _ = writeln!(s, "  node {}: {l:.6e}", node_id(n));
    }
    write_kkt_summary(&mut s, &kkt);
    s.push_str(NOTE);
    Ok(finish(s, sol.converged))
}

fn write_kkt_summary(s: &mut String, kkt: &[(&str, f64)]) {
    s.push_str("optimality residuals:\n");
    for (k, v) in kkt {
        let _ = writeln!(s, "  {k}: {v:.3e}");
    }
}

fn run_multi(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunReport> {
    let net = &cfg.network;
    let t = flows(cfg)?;
    let slots = cfg.harvest.slots();
    let sol = solve_multi_slot_with_transfer(net, t, &cfg.harvest, &single_options(cfg))?;

    let mut rows = Vec::new();
    for k in 0..net.data_links().len() {
        for i in 0..slots {
            rows.push(power_row(net, k, i, sol.powers[k][i], t[k])?);
        }
    }
    write_csv(out, "powers.csv", &strings(&POWER_HEADER), &rows)?;
    let mut rows = Vec::new();
    for (q, l) in net.energy_links().iter().enumerate() {
        for i in 0..slots {
            rows.push(vec![
                l.id.to_string(),
                (i + 1).to_string(),
                num(sol.transfers[q][i]),
                num(sol.taps[q][i]),
            ]);
        }
    }
    write_csv(out, "transfers.csv", &strings(&TRANSFER_HEADER), &rows)?;
    let mut rows = Vec::new();
    for (n, row) in sol.carryover.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            rows.push(vec![node_id(n).to_string(), (i + 1).to_string(), num(*v)]);
        }
    }
    write_csv(
        out,
        "carryover.csv",
        &strings(&["node_id", "slot", "stored"]),
        &rows,
    )?;
    let n = net.node_count();
    let labels: Vec<String> = (0..slots * n)
        .map(|k| format!("lambda_node{}_slot{}", node_id(k % n), k / n + 1))
        .collect();
    let (header, rows) = level_trace(&sol.trace, &labels);
    write_csv(out, "trace.csv", &header, &rows)?;

    // Residuals on the unrolled network, where storage is just another link.
    let expanded = eflow_core::multi_slot::time_expand(net, slots)?;
    let tx = FlowVector::new(
        (0..slots)
            .flat_map(|_| t.as_slice().iter().copied())
            .collect(),
    )?;
    let px: Vec<f64> = expanded
        .data_origin
        .iter()
        .map(|&(k, i)| sol.powers[k][i])
        .collect();
    let yx: Vec<f64> = expanded
        .energy_origin
        .iter()
        .map(|o| match *o {
            eflow_core::multi_slot::EnergyOrigin::Link { link, slot } => sol.transfers[link][slot],
            eflow_core::multi_slot::EnergyOrigin::Storage { node, slot } => {
                sol.carryover[node][slot]
            }
        })
        .collect();
    let max_e = (0..slots)
        .flat_map(|i| cfg.harvest.slot(i))
        .fold(1.0_f64, f64::max);
    let kkt = [
        (
            "equal_marginal",
            equal_marginal_residual(&expanded.network, &tx, &px),
        ),
        (
            "energy_transfer",
            transfer_residual(&expanded.network, &tx, &px, &yx, ACTIVE_FLOOR * max_e),
        ),
    ];
    write_csv(
        out,
        "kkt.csv",
        &strings(&["residual", "value"]),
        &kkt_rows(&kkt),
    )?;

    let mut s = String::from("solver: multi\n");
    s.push_str(&status_line(sol.converged, sol.iterations, "sweeps"));
    let _ = writeln!(s, "total delay over {slots} slots: {:.6}", sol.objective);
    s.push_str("energy transfers y (per slot):\n");
    for (q, row) in sol.transfers.iter().enumerate() {
        let _ = writeln!(s, "  {}: {}", energy_label(net, q), fmt_row(row));
    }
    s.push_str("stored energy (carried into the next slot):\n");
    for (n, row) in sol.carryover.iter().enumerate() {
        let _ = writeln!(s, "  node {}: {}", node_id(n), fmt_row(row));
    }
    s.push_str("powers p (per slot):\n");
    for (k, row) in sol.powers.iter().enumerate() {
        let _ = writeln!(s, "  {}: {}", link_label(net, k), fmt_row(row));
    }
    write_kkt_summary(&mut s, &kkt);
    s.push_str(NOTE);
    Ok(finish(s, sol.converged))
}

fn fmt_row(row: &[f64]) -> String {
    row.iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_paths(out: &Path, net: &Network, paths: &PathSet, flows: &[f64]) -> anyhow::Result<()> {
    let rows: Vec<_> = paths
        .paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let links: Vec<String> = p
                .links
                .iter()
                .map(|&k| net.data_links()[k].id.to_string())
                .collect();
            vec![
                (i + 1).to_string(),
                node_id(p.source).to_string(),
                node_id(p.destination).to_string(),
                links.join(" "),
                num(flows[i]),
            ]
        })
        .collect();
    write_csv(
        out,
        "paths.csv",
        &strings(&["path_id", "source", "destination", "links", "flow"]),
        &rows,
    )
}

/// Writes the per-link artifacts of one joint solution and returns its summary body.
fn write_joint(out: &Path, net: &Network, sol: &JointSolution) -> anyhow::Result<String> {
    let it = &sol.iterate;
    let mut rows = Vec::new();
    for k in 0..net.data_links().len() {
        rows.push(power_row(net, k, 0, it.powers[k], it.flows[k])?);
    }
    write_csv(out, "powers.csv", &strings(&POWER_HEADER), &rows)?;
    let rows: Vec<_> = net
        .energy_links()
        .iter()
        .enumerate()
        .map(|(q, l)| {
            vec![
                l.id.to_string(),
                "1".into(),
                num(it.transfers[q]),
                num(it.transfers[q]),
            ]
        })
        .collect();
    write_csv(out, "transfers.csv", &strings(&TRANSFER_HEADER), &rows)?;
    write_paths(out, net, &sol.paths, &it.path_flows)?;
    let k = sol.paths.paths.len();
    let mut header = strings(&["iteration", "objective"]);
    header.extend((1..=k).map(|i| format!("delay_path{i}")));
    let rows: Vec<_> = sol
        .trace
        .iter()
        .zip(&sol.path_delay_trace)
        .enumerate()
        .map(|(i, (obj, d))| {
            let mut row = vec![i.to_string(), num(*obj)];
            row.extend(d.iter().map(|&v| num(v)));
            row
        })
        .collect();
    write_csv(out, "trace.csv", &header, &rows)?;
    let kkt = joint_kkt(sol);
    write_csv(
        out,
        "kkt.csv",
        &strings(&["residual", "value"]),
        &kkt_rows(&kkt),
    )?;

    let mut s = status_line(sol.converged, it.iteration, "iterations");
    let _ = writeln!(s, "total delay: {:.6}", it.objective);
    s.push_str("path flows:\n");
    for (i, p) in sol.paths.paths.iter().enumerate() {
        let ids: Vec<String> = p
            .links
            .iter()
            .map(|&k| net.data_links()[k].id.to_string())
            .collect();
        let _ = writeln!(
            s,
            "  path {} [{}]: {:.4}",
            i + 1,
            ids.join(" "),
            it.path_flows[i]
        );
    }
    s.push_str("energy transfers y:\n");
    for (q, y) in it.transfers.iter().enumerate() {
        let _ = writeln!(s, "  {}: {y:.4}", energy_label(net, q));
    }
    s.push_str("powers p:\n");
    for (k, p) in it.powers.iter().enumerate() {
        let _ = writeln!(s, "  {}: {p:.4}", link_label(net, k));
    }
    write_kkt_summary(&mut s, &kkt);
    Ok(s)
}

fn joint_kkt(sol: &JointSolution) -> [(&'static str, f64); 4] {
    [
        ("power_equalization", sol.kkt.power_equalization),
        ("path_sum", sol.kkt.path_sum),
        ("energy_link", sol.kkt.energy_link),
        ("slackness", sol.kkt.slackness),
    ]
}

fn run_joint(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunReport> {
    let net = &cfg.network;
    let energy = cfg.harvest.slot(0);
    let start = cfg.options.joint_starts.first().cloned();
    let sol = solve_joint(net, &energy, &joint_options(cfg, start))?;
    let mut s = String::from("solver: joint\n");
    s.push_str(&write_joint(out, net, &sol)?);
    s.push_str(NOTE);
    Ok(finish(s, sol.converged))
}

const MAX_REJECTED_STARTS: usize = 1000;

/// Path flows drawn uniformly from each source's simplex of splits.
fn random_start(paths: &PathSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; paths.paths.len()];
    for (_, supply, members) in &paths.sources {
        // Normalised exponentials are uniform on the simplex.
        let draws: Vec<f64> = members
            .iter()
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let total: f64 = draws.iter().sum();
        let mut assigned = 0.0;
        for (j, (&i, d)) in members.iter().zip(&draws).enumerate() {
            x[i] = if j + 1 == members.len() {
                supply - assigned
            } else {
                supply * d / total
            };
            assigned += x[i];
        }
    }
    x
}

fn frontier_rows(points: &[ParetoPoint], k: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["point".to_string()];
    header.extend((1..=k).map(|i| format!("delay_path{i}")));
    header.extend((1..=k).map(|i| format!("flow_path{i}")));
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(p.path_delays.iter().map(|&v| num(v)));
            row.extend(p.path_flows.iter().map(|&v| num(v)));
            row
        })
        .collect();
    (header, rows)
}

fn run_pareto(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunReport> {
    let net = &cfg.network;
    let energy = cfg.harvest.slot(0);
    let o = &cfg.options;
    let popts = ParetoOptions {
        grid: o.grid,
        weight_grid: o.weight_grid,
        parallel: o.parallel,
        max_points: o.max_points,
        single_slot: single_options(cfg),
    };
    let frontier = pareto_sweep(net, &energy, &popts)?;
    let k = frontier.paths.paths.len();
    let (header, rows) = frontier_rows(&frontier.cooperative, k);
    write_csv(out, "frontier_cooperative.csv", &header, &rows)?;
    let (header, rows) = frontier_rows(&frontier.standalone, k);
    write_csv(out, "frontier_standalone.csv", &header, &rows)?;

    // Joint runs: the default start, then explicit starts, then seeded random ones.
    let mut starts: Vec<Option<Vec<f64>>> = vec![None];
    starts.extend(o.joint_starts.iter().cloned().map(Some));
    let mut runs = Vec::with_capacity(starts.len() + o.random_starts);
    for start in starts {
        let x0 = start
            .clone()
            .unwrap_or_else(|| fewest_hop_start(&frontier.paths));
        runs.push((x0, solve_joint(net, &energy, &joint_options(cfg, start))?));
    }
    // Random splits that some node cannot power are redrawn.
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut rejected = 0;
    for _ in 0..o.random_starts {
        loop {
            let x0 = random_start(&frontier.paths, &mut rng);
            match solve_joint(net, &energy, &joint_options(cfg, Some(x0.clone()))) {
                Ok(sol) => {
                    runs.push((x0, sol));
                    break;
                }
                Err(Error::NoFeasibleStart(_)) if rejected < MAX_REJECTED_STARTS => rejected += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    let mut header = strings(&["run", "converged", "iterations", "objective", "kkt_max"]);
    header.extend((1..=k).map(|i| format!("start_flow_path{i}")));
    header.extend((1..=k).map(|i| format!("flow_path{i}")));
    header.extend((1..=k).map(|i| format!("delay_path{i}")));
    let mut rows = Vec::new();
    let mut trace_rows = Vec::new();
    for (r, (start, sol)) in runs.iter().enumerate() {
        let mut row = vec![
            (r + 1).to_string(),
            sol.converged.to_string(),
            sol.iterate.iteration.to_string(),
            num(sol.iterate.objective),
            num(sol.kkt.max()),
        ];
        row.extend(start.iter().map(|&v| num(v)));
        row.extend(sol.iterate.path_flows.iter().map(|&v| num(v)));
        row.extend(
            sol.path_delay_trace
                .last()
                .into_iter()
                .flatten()
                .map(|&v| num(v)),
        );
        rows.push(row);
        for (i, (obj, d)) in sol.trace.iter().zip(&sol.path_delay_trace).enumerate() {
            let mut row = vec![(r + 1).to_string(), i.to_string(), num(*obj)];
            row.extend(d.iter().map(|&v| num(v)));
            trace_rows.push(row);
        }
    }
    write_csv(out, "joint_runs.csv", &header, &rows)?;
    let mut header = strings(&["run", "iteration", "objective"]);
    header.extend((1..=k).map(|i| format!("delay_path{i}")));
    write_csv(out, "joint_traces.csv", &header, &trace_rows)?;

    let mut s = String::from("solver: pareto\n");
    let _ = writeln!(
        s,
        "frontier: {} points with energy links, {} without (grid {}, weight grid {})",
        frontier.cooperative.len(),
        frontier.standalone.len(),
        o.grid,
        o.weight_grid
    );
    let _ = writeln!(
        s,
        "joint runs: {} ({rejected} infeasible random starts redrawn)",
        runs.len()
    );
    for (r, (_, sol)) in runs.iter().enumerate() {
        let _ = writeln!(
            s,
            "  run {}: {} after {} iterations, total delay {:.6}, path flows {}",
            r + 1,
            if sol.converged {
                "converged"
            } else {
                "NOT converged"
            },
            sol.iterate.iteration,
            sol.iterate.objective,
            fmt_row(&sol.iterate.path_flows)
        );
    }
    s.push_str("first run in detail:\n");
    s.push_str(&write_joint(out, net, &runs[0].1)?);
    s.push_str(NOTE);
    Ok(finish(s, runs.iter().all(|r| r.1.converged)))
}

fn read_csv(dir: &Path, name: &str) -> anyhow::Result<Vec<BTreeMap<String, String>>> {
    let path = dir.join(name);
    let mut r =
        csv::Reader::from_path(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(
            header
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(row: &BTreeMap<String, String>, key: &str) -> anyhow::Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let v = row
        .get(key)
        .with_context(|| format!("missing column {key}"))?;
    v.parse()
        .with_context(|| format!("bad value {v:?} in column {key}"))
}

/// Re-reads `powers.csv`, `transfers.csv` and `carryover.csv` from `dir` and
/// checks them against the config: non-negative powers and transfers,
/// consistent capacities, capacity above flow, flow conservation and the
/// per-slot energy balance. Returns every violation found.
pub fn verify_outputs(cfg: &RunConfig, dir: &Path) -> anyhow::Result<Vec<String>> {
    let net = &cfg.network;
    let slots = cfg.harvest.slots();
    let (l, q, n) = (
        net.data_links().len(),
        net.energy_links().len(),
        net.node_count(),
    );
    let data_index: BTreeMap<u32, usize> = net
        .data_links()
        .iter()
        .enumerate()
        .map(|(k, d)| (d.id, k))
        .collect();
    let energy_index: BTreeMap<u32, usize> = net
        .energy_links()
        .iter()
        .enumerate()
        .map(|(k, e)| (e.id, k))
        .collect();
    let scale = 1.0
        + (0..slots)
            .flat_map(|i| cfg.harvest.slot(i))
            .fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let mut bad = Vec::new();

    let mut p = vec![vec![f64::NAN; slots]; l];
    let mut t = vec![vec![f64::NAN; slots]; l];
    for row in read_csv(dir, "powers.csv")? {
        let id: u32 = field(&row, "link_id")?;
        let slot: usize = field(&row, "slot")?;
        let Some(&k) = data_index.get(&id) else {
            bad.push(format!("powers.csv: unknown link {id}"));
            continue;
        };
        if slot == 0 || slot > slots {
            bad.push(format!(
                "powers.csv: link {id} has slot {slot} out of range"
            ));
            continue;
        }
        let (power, cap, flow): (f64, f64, f64) = (
            field(&row, "power")?,
            field(&row, "capacity")?,
            field(&row, "flow")?,
        );
        let sigma = net.data_links()[k].sigma;
        if power < 0.0 {
            bad.push(format!("link {id} slot {slot}: negative power {power}"));
        }
        if (cap - capacity(power, sigma)).abs() > 1e-9 * (1.0 + cap.abs()) {
            bad.push(format!(
                "link {id} slot {slot}: capacity {cap} does not match power {power}"
            ));
        }
        if flow > 0.0 && cap <= flow {
            bad.push(format!(
                "link {id} slot {slot}: flow {flow} not below capacity {cap}"
            ));
        }
        p[k][slot - 1] = power;
        t[k][slot - 1] = flow;
    }
    if p.iter().flatten().any(|v| v.is_nan()) {
        bad.push("powers.csv: missing link/slot rows".into());
        return Ok(bad);
    }

    let mut y = vec![vec![0.0; slots]; q];
    for row in read_csv(dir, "transfers.csv")? {
        let id: u32 = field(&row, "energy_link_id")?;
        let slot: usize = field(&row, "slot")?;
        let Some(&k) = energy_index.get(&id) else {
            bad.push(format!("transfers.csv: unknown energy link {id}"));
            continue;
        };
        if slot == 0 || slot > slots {
            bad.push(format!(
                "transfers.csv: energy link {id} has slot {slot} out of range"
            ));
            continue;
        }
        let (v, tap): (f64, f64) = (field(&row, "transfer")?, field(&row, "tap")?);
        if v < 0.0 {
            bad.push(format!(
                "energy link {id} slot {slot}: negative transfer {v}"
            ));
        }
        if tap + tol < v {
            bad.push(format!(
                "energy link {id} slot {slot}: tap {tap} below transfer {v}"
            ));
        }
        y[k][slot - 1] = v;
    }

    let mut carry = vec![vec![0.0; slots]; n];
    let carry_path = dir.join("carryover.csv");
    if carry_path.exists() {
        for row in read_csv(dir, "carryover.csv")? {
            let id: usize = field(&row, "node_id")?;
            let slot: usize = field(&row, "slot")?;
            if id == 0 || id > n || slot == 0 || slot >= slots {
                bad.push(format!("carryover.csv: bad node/slot {id}/{slot}"));
                continue;
            }
            let v: f64 = field(&row, "stored")?;
            if v < 0.0 {
                bad.push(format!("node {id} slot {slot}: negative storage {v}"));
            }
            carry[id - 1][slot - 1] = v;
        }
    }

    for i in 0..slots {
        let ti: Vec<f64> = t.iter().map(|r| r[i]).collect();
        if cfg.description.supply.is_some() {
            let residual = check_flow_conservation(net, &FlowVector::new(ti.clone())?)?;
            if !is_conserved(&residual) {
                bad.push(format!(
                    "slot {}: flows do not conserve supply, residual {residual:?}",
                    i + 1
                ));
            }
        }
        if let (Some(expected), SolverKind::Single | SolverKind::Multi) = (&cfg.flows, cfg.solver) {
            if ti
                .iter()
                .zip(expected.as_slice())
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
            {
                bad.push(format!("slot {}: flows differ from the config", i + 1));
            }
        }
        for node in 0..n {
            let mut spent: f64 = net.out_data(node).iter().map(|&k| p[k][i]).sum();
            spent += net.out_energy(node).iter().map(|&k| y[k][i]).sum::<f64>();
            spent += carry[node][i];
            let mut income = cfg.harvest.get(node, i);
            income += net
                .in_energy(node)
                .iter()
                .map(|&k| net.energy_links()[k].alpha * y[k][i])
                .sum::<f64>();
            if i > 0 {
                income += carry[node][i - 1];
            }
            if spent > income + tol {
                bad.push(format!(
                    "node {} slot {}: spends {spent} but has {income}",
                    node_id(node),
                    i + 1
                ));
            }
        }
    }
    if bad.is_empty() && slots == 0 {
        bail!("config has no slots");
    }
    Ok(bad)
}
