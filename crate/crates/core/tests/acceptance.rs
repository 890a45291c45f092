//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::Instant;

use eflow_core::joint::{pareto_sweep, solve_joint, JointOptions, ParetoOptions, ParetoPoint};
use eflow_core::multi_slot::{solve_multi_slot_with_transfer, staircase_schedule};
use eflow_core::oracle::{convex_solve, ConvexOptions};
use eflow_core::power_math::{
    dh_dp, dp_dsigma, dp_dt, lambert_w0, link_delay, p_of_lambda, LinkParams, WaterLevel,
};
use eflow_core::single_slot::{
    equal_marginal_residual, solve_single_slot, transfer_residual, SingleSlotSolution,
};
use eflow_core::topology::{FlowVector, HarvestProfile, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn single_kkt(net: &Network, t: &FlowVector, e: &[f64], sol: &SingleSlotSolution) -> f64 {
    let floor = 1e-9 * e.iter().fold(1.0_f64, |m, v| m.max(*v));
    equal_marginal_residual(net, t, &sol.powers).max(transfer_residual(
        net,
        t,
        &sol.powers,
        &sol.transfers,
        floor,
    ))
}

fn topology2_reproduction() -> Outcome {
    let (net, t, e) = common::topology2();
    let start = Instant::now();
    let sol = solve_single_slot(&net, &t, &e, &Default::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let dy = max_abs_diff(&sol.transfers, &[11.92, 0.0, 9.66, 16.29, 0.0]);
    let dp = max_abs_diff(&sol.powers, &[3.07, 20.96, 5.33, 3.53, 23.15]);
    outcome(
        sol.converged && dy <= 0.02 && dp <= 0.02 && elapsed < 1.0,
        format!("max |dy| = {dy:.4}, max |dp| = {dp:.4} (tol 0.02), {elapsed:.4} s (limit 1 s)"),
    )
}

fn topology1_reproduction() -> Outcome {
    let (net, t, rows) = common::topology1();
    let harvest = HarvestProfile::new(rows).unwrap();
    let start = Instant::now();
    let sol = solve_multi_slot_with_transfer(&net, &t, &harvest, &Default::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let want_y = [[0.0, 3.75], [3.93, 9.52], [2.35, 9.81]];
    let want_p = [
        [7.5, 7.5],
        [3.13, 3.13],
        [0.62, 1.0],
        [0.13, 0.22],
        [9.17, 11.0],
        [0.45, 0.74],
        [0.48, 0.73],
    ];
    let dy = want_y
        .iter()
        .zip(&sol.transfers)
        .map(|(w, g)| max_abs_diff(w, g))
        .fold(0.0, f64::max);
    let dp = want_p
        .iter()
        .zip(&sol.powers)
        .map(|(w, g)| max_abs_diff(w, g))
        .fold(0.0, f64::max);
    let sums: Vec<f64> = (0..2)
        .map(|i| sol.powers[0][i] + sol.powers[1][i])
        .collect();
    let dsum = max_abs_diff(&sums, &[10.625, 10.625]);
    let lp = |k: usize| LinkParams {
        sigma: 0.1,
        t: t[k],
    };
    let ratio = dh_dp(sol.powers[1][1], lp(1)).unwrap() / dh_dp(sol.powers[2][1], lp(2)).unwrap();
    let pass = sol.converged
        && dy <= 0.05
        && dp <= 0.05
        && dsum <= 1e-3
        && (ratio - 0.6).abs() <= 1e-2
        && elapsed < 5.0;
    outcome(
        pass,
        format!(
            "max |dy| = {dy:.3}, max |dp| = {dp:.3} (tol 0.05); node-1 sums ({:.4}, {:.4}) vs 10.625 (tol 1e-3); \
             h'_2/h'_3 in slot 2 = {ratio:.4} vs 0.6 (tol 1e-2); objective {:.4}; {elapsed:.3} s (limit 5 s)",
            sums[0], sums[1], sol.objective
        ),
    )
}

/// Best schedule on a grid of `unit`-sized quanta for the separable cost `f`,
/// spending everything by the last slot.
fn brute_force_schedule(g: &[u32], f: &dyn Fn(f64) -> f64, unit: f64) -> Vec<u32> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        g: &[u32],
        i: usize,
        banked: u32,
        f: &dyn Fn(f64) -> f64,
        unit: f64,
        cur: &mut Vec<u32>,
        best: &mut (f64, Vec<u32>),
        cost: f64,
    ) {
        let avail = banked + g[i];
        if i + 1 == g.len() {
            let total = cost + f(avail as f64 * unit);
            if total < best.0 {
                cur.push(avail);
                *best = (total, cur.clone());
                cur.pop();
            }
            return;
        }
        for s in 0..=avail {
            cur.push(s);
            recurse(
                g,
                i + 1,
                avail - s,
                f,
                unit,
                cur,
                best,
                cost + f(s as f64 * unit),
            );
            cur.pop();
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    recurse(g, 0, 0, f, unit, &mut Vec::new(), &mut best, 0.0);
    best.1
}

fn staircase_correctness() -> Outcome {
    let exact = staircase_schedule(&[15.0, 6.25]).unwrap().levels == vec![10.625, 10.625];
    let unit = 1e-3;
    // per-slot delay of a link spending `s` above its floor, and a decreasing quadratic
    let delay = |s: f64| {
        link_delay(
            LinkParams { sigma: 0.1, t: 0.5 }.min_power() + s,
            LinkParams { sigma: 0.1, t: 0.5 },
        )
        .unwrap()
    };
    let quad = |s: f64| (s - 1.0) * (s - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let slots = rng.gen_range(1..=4);
        let g: Vec<u32> = (0..slots).map(|_| rng.gen_range(0..=40)).collect();
        let gf: Vec<f64> = g.iter().map(|&v| v as f64 * unit).collect();
        let stair = staircase_schedule(&gf).unwrap().levels;
        for f in [&delay as &dyn Fn(f64) -> f64, &quad] {
            let s: Vec<f64> = brute_force_schedule(&g, f, unit)
                .iter()
                .map(|&v| v as f64 * unit)
                .collect();
            worst = worst.max(max_abs_diff(&s, &stair));
        }
    }
    outcome(
        exact && worst <= unit + 1e-12,
        format!("(15, 6.25) -> (10.625, 10.625) exact: {exact}; 10 instances, 2 objectives: max deviation from grid optimum {worst:.1e} (grid 1e-3)"),
    )
}

fn oracle_equivalence(kkt: &mut Vec<f64>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for _ in 0..20 {
        let (net, t, e) = common::random_instance(&mut rng);
        let sol = solve_single_slot(&net, &t, &e, &Default::default()).unwrap();
        let oracle = convex_solve(&net, &t, &e, ConvexOptions::default()).unwrap();
        all_converged &= sol.converged;
        if sol.converged {
            kkt.push(single_kkt(&net, &t, &e, &sol));
        }
        worst = worst.max((sol.objective - oracle.objective).abs() / oracle.objective);
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        all_converged && worst < 1e-4 && elapsed < 30.0,
        format!(
            "20 instances: max relative gap {worst:.2e} (tol 1e-4), {elapsed:.2} s (limit 30 s)"
        ),
    )
}

fn kkt_suite(single: &[f64], joint: &[f64]) -> Outcome {
    let s = single.iter().copied().fold(0.0, f64::max);
    let j = joint.iter().copied().fold(0.0, f64::max);
    outcome(
        !single.is_empty() && !joint.is_empty() && s < 1e-6 && j < 1e-3,
        format!(
            "{} single-slot solutions: max residual {s:.2e} (tol 1e-6); {} joint solutions: max residual {j:.2e} (tol 1e-3)",
            single.len(),
            joint.len()
        ),
    )
}

fn derivative_checks() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut positive = true;
    let mut count = 0;
    for lambda in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
        for sigma in [0.05, 0.1, 0.5, 1.0] {
            for t in [0.1, 0.5, 1.0, 1.5, 2.0] {
                count += 1;
                let wl = WaterLevel::new(lambda).unwrap();
                let p = |sigma: f64, t: f64| p_of_lambda(wl, LinkParams { sigma, t }).unwrap();
                let (hs, ht) = (1e-5 * sigma, 1e-5 * t);
                let fd_sigma = (p(sigma + hs, t) - p(sigma - hs, t)) / (2.0 * hs);
                let fd_t = (p(sigma, t + ht) - p(sigma, t - ht)) / (2.0 * ht);
                let ds = dp_dsigma(wl, LinkParams { sigma, t }).unwrap();
                let dt = dp_dt(wl, LinkParams { sigma, t }).unwrap();
                positive &= ds > 0.0 && dt > 0.0;
                worst = worst
                    .max(((ds - fd_sigma) / ds).abs())
                    .max(((dt - fd_t) / dt).abs());
            }
        }
    }
    outcome(
        count == 100 && positive && worst <= 1e-5,
        format!("{count} grid points: max relative error {worst:.2e} (tol 1e-5), all positive: {positive}"),
    )
}

/// Smallest bottom-path delay reachable with top-path delay at most `d1`.
fn envelope(points: &[ParetoPoint], d1: f64) -> f64 {
    points
        .iter()
        .filter(|p| p.path_delays[0] <= d1)
        .map(|p| p.path_delays[1])
        .fold(f64::INFINITY, f64::min)
}

fn diamond_pareto(kkt: &mut Vec<f64>) -> Outcome {
    let (net, e) = common::diamond(true);
    let grid = 200;
    let opts = ParetoOptions {
        grid,
        weight_grid: 16,
        ..Default::default()
    };
    let front = pareto_sweep(&net, &e, &opts).unwrap();
    let (c, s) = (&front.cooperative, &front.standalone);
    let range = |pts: &[ParetoPoint]| {
        pts.iter()
            .map(|p| p.path_delays[0])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (lo, hi) = (range(c).0.max(range(s).0), range(c).1.min(range(s).1));
    let samples = 1000;
    let dominated = (0..samples)
        .filter(|&k| {
            let d1 = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
            envelope(c, d1) <= envelope(s, d1) * (1.0 + 1e-12)
        })
        .count();
    let share = dominated as f64 / samples as f64;

    let cell = 2.0 / grid as f64;
    let mut worst_cells: f64 = 0.0;
    let mut monotone = true;
    let mut converged = true;
    let mut undominated = true;
    for start in [vec![0.7, 1.3], vec![1.1, 0.9]] {
        let sol = solve_joint(
            &net,
            &e,
            &JointOptions {
                start_path_flows: Some(start),
                ..Default::default()
            },
        )
        .unwrap();
        converged &= sol.converged;
        if sol.converged {
            kkt.push(sol.kkt.max());
        }
        monotone &= sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let x = &sol.iterate.path_flows;
        let dist = c
            .iter()
            .map(|p| max_abs_diff(&p.path_flows, x))
            .fold(f64::INFINITY, f64::min);
        worst_cells = worst_cells.max(dist / cell);
        let d = sol.path_delay_trace.last().unwrap();
        undominated &= !c.iter().any(|p| {
            p.path_delays
                .iter()
                .zip(d)
                .all(|(a, b)| *a <= b * (1.0 - 1e-3))
        });
    }
    outcome(
        share >= 0.99 && worst_cells <= 2.0 && monotone && converged && undominated,
        format!(
            "cooperation dominates at {:.1}% of {samples} sampled top-path delays (need 99%); \
             joint runs converged: {converged}, distance to frontier {worst_cells:.2} cells (limit 2), \
             undominated: {undominated}, monotone traces: {monotone}",
            100.0 * share
        ),
    )
}

fn lambert() -> Outcome {
    let xs = [0.0, 1e-8, 0.1, 1.0, std::f64::consts::E, 10.0, 1e3, 1e6];
    let mut worst: f64 = 0.0;
    for x in xs {
        let w = lambert_w0(x).unwrap();
        worst = worst.max((w * w.exp() - x).abs() / x.max(1.0));
    }
    outcome(
        worst <= 1e-12,
        format!("max scaled residual {worst:.2e} (tol 1e-12)"),
    )
}

fn determinism() -> Outcome {
    let single = || {
        let (net, t, e) = common::topology2();
        format!(
            "{:?}",
            solve_single_slot(&net, &t, &e, &Default::default()).unwrap()
        )
    };
    let multi = || {
        let (net, t, rows) = common::topology1();
        let h = HarvestProfile::new(rows).unwrap();
        format!(
            "{:?}",
            solve_multi_slot_with_transfer(&net, &t, &h, &Default::default()).unwrap()
        )
    };
    let pareto = |parallel: bool| {
        let (net, e) = common::diamond(true);
        let opts = ParetoOptions {
            parallel,
            ..Default::default()
        };
        let f = pareto_sweep(&net, &e, &opts).unwrap();
        let j = solve_joint(&net, &e, &Default::default()).unwrap();
        format!("{:?}{:?}{:?}", f.cooperative, f.standalone, j.iterate)
    };
    let same = [
        single() == single(),
        multi() == multi(),
        pareto(false) == pareto(true),
    ];
    outcome(
        same.iter().all(|&s| s),
        format!(
            "repeat runs identical: single {}, multi {}, pareto serial/parallel {}",
            same[0], same[1], same[2]
        ),
    )
}

fn main() {
    let mut single_kkt_values = Vec::new();
    let mut joint_kkt_values = Vec::new();
    {
        let (net, t, e) = common::topology2();
        let sol = solve_single_slot(&net, &t, &e, &Default::default()).unwrap();
        if sol.converged {
            single_kkt_values.push(single_kkt(&net, &t, &e, &sol));
        }
    }
    let results = vec![
        ("1 topology 2 reproduction", topology2_reproduction()),
        ("2 topology 1 reproduction", topology1_reproduction()),
        ("3 staircase correctness", staircase_correctness()),
        (
            "4 oracle equivalence",
            oracle_equivalence(&mut single_kkt_values),
        ),
        ("6 derivative checks", derivative_checks()),
        ("7 diamond Pareto", diamond_pareto(&mut joint_kkt_values)),
        ("8 Lambert W", lambert()),
        ("9 determinism", determinism()),
    ];
    let kkt = (
        "5 KKT residuals",
        kkt_suite(&single_kkt_values, &joint_kkt_values),
    );
    let mut ordered: Vec<(&str, Outcome)> = results;
    ordered.insert(4, kkt);
    let mut failed = 0;
    for (name, o) in &ordered {
        println!(
            "[{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        ordered.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
