//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (bypassing the test harness capture) before asserting.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nos_core::allocation::integerise;
use nos_core::kernel::{f_sat, KernelParams, KernelState};
use nos_core::sim::{run, SimConfig};
use nos_core::stability::{
    k_star_envelope, k_star_exact, k_star_zero, linearised_divergence_step, step_bound, EnvelopeParams,
    LocalLinearisation,
};
use nos_core::study::run_sweep;
use nos_core::{InterferenceGraph, SchedulerKind, StudyConfig, TopologyName};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, ok: bool, detail: String) {
    let status = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id:>2}: {status}  {detail}");
    assert!(ok, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_01_spectral_radii() {
    let t = Instant::now();
    let rho = |name| InterferenceGraph::build_named(name, 0.6).unwrap().spectral_radius().unwrap();
    let (p, l, r) = (rho(TopologyName::Pair2), rho(TopologyName::Line4), rho(TopologyName::Ring8));
    let line_exact = 1.2 * (std::f64::consts::PI / 5.0).cos();
    let elapsed = t.elapsed();
    let ok = (p - 0.6).abs() <= 1e-15
        && (r - 1.2).abs() <= 1e-9
        && (l - line_exact).abs() <= 1e-9
        && (l - 0.971).abs() <= 1e-3
        && elapsed < Duration::from_secs(1);
    report(1, ok, format!("pair2 {p}, line4 {l}, ring8 {r}, {elapsed:.1?}"));
}

#[test]
fn criterion_02_zero_delay_threshold() {
    let lin = LocalLinearisation::new(1.0, 0.9, 0.30).unwrap();
    let k0 = k_star_zero(&lin).unwrap();
    let exact = k_star_exact(&lin, 0.0).unwrap().k_star;
    // 0.9 − 0.3 is the closest double to 0.6 plus one ulp.
    let ok = (k0 - 0.6).abs() <= 2.0 * f64::EPSILON && (exact - k0).abs() <= 1e-6;
    report(2, ok, format!("k*(0) = {k0}, exact = {exact}"));
}

#[test]
fn criterion_03_envelope_values() {
    let env = EnvelopeParams::from_linearisation(&LocalLinearisation::new(1.0, 0.9, 0.30).unwrap(), 10.0).unwrap();
    let expected = [(5.0, 0.363918), (12.0, 0.180717), (20.0, 0.081201)];
    let got: Vec<f64> = expected.iter().map(|&(d, _)| k_star_envelope(&env, d)).collect();
    let ok = expected.iter().zip(&got).all(|(&(_, e), &g)| (g - e).abs() <= 1e-6);
    report(3, ok, format!("k*(5, 12, 20) = {got:?}"));
}

#[test]
fn criterion_04_study_orderings() {
    let t = Instant::now();
    let out = run_sweep(&StudyConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let mut failures = Vec::new();
    let delays = [5.0, 12.0, 20.0];
    for topo in TopologyName::ALL {
        for d in delays {
            let [nos, pf, bp] = SchedulerKind::ALL.map(|k| out.point(topo, d, k).unwrap());
            if !(nos.auc >= pf.auc && pf.auc >= bp.auc) {
                failures.push(format!("AUC order at {topo} {d}"));
            }
            if !(nos.p999_ms <= pf.p999_ms && pf.p999_ms <= bp.p999_ms) {
                failures.push(format!("p999 order at {topo} {d}"));
            }
        }
        for k in SchedulerKind::ALL {
            for w in delays.windows(2) {
                let (a, b) = (out.point(topo, w[0], k).unwrap(), out.point(topo, w[1], k).unwrap());
                if !(b.p999_ms > a.p999_ms && b.maxq > a.maxq) {
                    failures.push(format!("{k} {topo} not increasing {}→{}", w[0], w[1]));
                }
            }
        }
    }
    let nos = out.point(TopologyName::Ring8, 20.0, SchedulerKind::Nos).unwrap().p999_ms;
    let pf = out.point(TopologyName::Ring8, 20.0, SchedulerKind::Pf).unwrap().p999_ms;
    let parity = (nos - pf).abs() / pf;
    if parity > 1e-6 {
        failures.push(format!("parity {parity}"));
    }
    let ok = failures.is_empty() && out.points.len() == 27 && elapsed < Duration::from_secs(1);
    report(4, ok, format!("27 points, parity {parity:.2e}, {elapsed:.1?}, violations {failures:?}"));
}

#[test]
fn criterion_05_tail_structure() {
    let out = run_sweep(&StudyConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    for c in &out.tails_line4 {
        for &(tau, bound) in &c.points {
            let err = (bound.ln() + c.theta * tau * tau).abs() / (c.theta * tau * tau).max(1.0);
            worst = worst.max(err);
        }
    }
    let theta = |k, d| out.tails_line4.iter().find(|c| c.scheduler == k && c.delta_ms == d).unwrap().theta;
    let ordered = [5.0, 12.0, 20.0].iter().all(|&d| {
        theta(SchedulerKind::Nos, d) >= theta(SchedulerKind::Pf, d) && theta(SchedulerKind::Pf, d) >= theta(SchedulerKind::Bp, d)
    });
    let ok = worst <= 1e-12 && ordered && out.tails_line4.len() == 9;
    report(5, ok, format!("max relative |log bound + θτ²| = {worst:.1e}, θ ordered: {ordered}"));
}

/// Enumerate every grant vector and keep the best one under the rule:
/// dropped users get nothing, survivors stay within one PRB of their rescaled
/// target, the total is as large as the budget allows, then the L1 distance
/// to the targets is minimal, then lower indices win ties.
fn brute_force(shares: &[f64], prb: u32, min_prb: u32, gamma: f64) -> Vec<u32> {
    let n = shares.len();
    let p = f64::from(prb);
    let budget = (gamma * p + 1e-9).floor() as u32;
    let survive: Vec<bool> = shares.iter().map(|&x| (x * p + 1e-9).floor() as u32 >= min_prb).collect();
    let total: f64 = shares.iter().sum();
    let kept: f64 = shares.iter().zip(&survive).filter(|(_, &s)| s).map(|(x, _)| x).sum();
    if budget < min_prb || kept <= 0.0 {
        return vec![0; n];
    }
    let target: Vec<f64> = shares.iter().map(|&x| x * total.min(gamma) / kept * p).collect();

    let mut best: Option<(u32, f64, Vec<u32>)> = None;
    let mut g = vec![0u32; n];
    loop {
        let feasible = g.iter().sum::<u32>() <= budget
            && (0..n).all(|i| if survive[i] { (f64::from(g[i]) - target[i]).abs() < 1.0 } else { g[i] == 0 });
        if feasible {
            let sum: u32 = g.iter().sum();
            let l1: f64 = (0..n).filter(|&i| survive[i]).map(|i| (f64::from(g[i]) - target[i]).abs()).sum();
            let better = match &best {
                None => true,
                Some((bs, bl, bg)) => sum > *bs || (sum == *bs && (l1 < bl - 1e-12 || ((l1 - bl).abs() <= 1e-12 && g > *bg))),
            };
            if better {
                best = Some((sum, l1, g.clone()));
            }
        }
        // Odometer over {0..=prb}^n.
        let mut i = 0;
        loop {
            if i == n {
                return best.map(|b| b.2).unwrap_or_else(|| vec![0; n]);
            }
            if g[i] < prb {
                g[i] += 1;
                break;
            }
            g[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn criterion_06_integeriser_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = Vec::new();
    let mut infeasible = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=3usize);
        let prb = rng.random_range(1..=8u32);
        let min_prb = rng.random_range(0..=2u32);
        let gamma = rng.random_range(0.05..=1.0f64);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let fill = rng.random_range(0.0..=1.0f64) * gamma;
        let sum: f64 = raw.iter().sum();
        let shares: Vec<f64> = raw.iter().map(|r| r / sum * fill).collect();

        let got = integerise(&shares, prb, min_prb, gamma);
        if got.iter().sum::<u32>() > (gamma * f64::from(prb) + 1e-9).floor() as u32 {
            infeasible += 1;
        }
        let want = brute_force(&shares, prb, min_prb, gamma);
        if got != want && mismatches.len() < 5 {
            mismatches.push(format!("{shares:?} P={prb} min={min_prb} γ={gamma}: {got:?} vs {want:?}"));
        }
    }
    let elapsed = t.elapsed();
    let ok = mismatches.is_empty() && infeasible == 0 && elapsed < Duration::from_secs(30);
    report(6, ok, format!("10^4 vectors, {infeasible} infeasible, mismatches {mismatches:?}, {elapsed:.1?}"));
}

#[test]
fn criterion_07_kernel_numerics() {
    // Soft reset contracts the distance to c by exactly e^{−ντ}.
    let p = KernelParams { c: 0.01, nu: 0.7, tau_rst: 3.0, v_th: 0.0, ..KernelParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut reset_err: f64 = 0.0;
    for _ in 0..1000 {
        let v0 = rng.random_range(0.0..10.0);
        let mut s = KernelState::with_state(vec![v0], vec![0.0], &p);
        s.spike_and_reset(&p, &[1.0], &[1.0]);
        reset_err = reset_err.max(((s.v[0] - p.c) - (v0 - p.c) * (-p.nu * p.tau_rst).exp()).abs());
    }

    // A spike reaches its neighbour's integration exactly Δ slots later.
    let delta = 7;
    let graph = InterferenceGraph::build_named(TopologyName::Pair2, 0.6).unwrap();
    let q = KernelParams { delta_slots: delta, v_th: f64::INFINITY, g: 1.0, ..KernelParams::default() };
    let mut s = KernelState::new(2, &q);
    let mut arrival = None;
    for slot in 0..30u64 {
        let pressure = s.integrate(&q, &[0.0, 0.0], &graph, slot).unwrap();
        if pressure[1] > 0.0 && arrival.is_none() {
            arrival = Some(slot);
        }
        s.push_spikes(vec![slot == 3, false]);
    }
    let lag_ok = arrival == Some(3 + delta as u64);

    // One Euler step from an equilibrium matches I + hJ to second order.
    let k = KernelParams { g: 0.0, v_th: f64::INFINITY, ..KernelParams::default() };
    let v_star = 0.5;
    let u_star = k.b * v_star;
    let drive = -(f_sat(v_star, k.alpha, k.kappa) + k.beta * v_star - u_star - k.chi * (v_star - k.v_ref));
    let jac = LocalLinearisation::from_kernel(&k, v_star).unwrap().jacobian();
    let single = InterferenceGraph::from_rows(vec![vec![0.0]]).unwrap();
    let err = |eps: f64| {
        let (pv, pu) = (eps, -0.5 * eps);
        let mut s = KernelState::with_state(vec![v_star + pv], vec![u_star + pu], &k);
        s.integrate(&k, &[drive], &single, 0).unwrap();
        let lin_v = v_star + pv + k.h * (jac[0][0] * pv + jac[0][1] * pu);
        let lin_u = u_star + pu + k.h * (jac[1][0] * pv + jac[1][1] * pu);
        ((s.v[0] - lin_v).powi(2) + (s.u[0] - lin_u).powi(2)).sqrt()
    };
    let ratio = err(1e-3) / err(5e-4);
    let ok = reset_err <= 1e-12 && lag_ok && (ratio - 4.0).abs() <= 0.5;
    report(7, ok, format!("reset error {reset_err:.1e}, lag arrival {arrival:?} (Δ = {delta}), error ratio {ratio:.4}"));
}

fn paired_config(delta: f64) -> SimConfig {
    let graph = InterferenceGraph::build_named(TopologyName::Ring8, 0.6).unwrap();
    let lambda = (0..8).map(|i| if i % 2 == 0 { 24.5 } else { 1.0 }).collect();
    let mut cfg = SimConfig::new(graph, lambda, SchedulerKind::Nos, 100_000, 1);
    cfg.kernel.delta_slots = 5;
    cfg.kernel.g = cfg.gain_for_margin(delta).unwrap();
    cfg
}

#[test]
fn criterion_08_stability_dichotomy() {
    let t = Instant::now();
    let stable_cfg = paired_config(0.05);
    let unstable_cfg = paired_config(-0.05);
    let margins = (stable_cfg.margin().unwrap().delta, unstable_cfg.margin().unwrap().delta);
    let stable = run(&stable_cfg).unwrap();
    let unstable = run(&unstable_cfg).unwrap();
    let elapsed = t.elapsed();
    let ratio = unstable.max_queue / stable.max_queue;
    let ok = (margins.0 - 0.05).abs() < 1e-12
        && (margins.1 + 0.05).abs() < 1e-12
        && stable.queue_trend_slope < 1e-3
        && ratio >= 10.0
        && elapsed < Duration::from_secs(120);
    report(
        8,
        ok,
        format!(
            "δ = {:+.3}: slope {:.2e}, max_queue {:.1}; δ = {:+.3}: slope {:.2e}, max_queue {:.1}; ratio {ratio:.1}, {elapsed:.1?}",
            margins.0, stable.queue_trend_slope, stable.max_queue, margins.1, unstable.queue_trend_slope, unstable.max_queue
        ),
    );
}

#[test]
fn criterion_09_step_bound() {
    let t = Instant::now();
    let mut cfg = paired_config(0.05);
    let lin = LocalLinearisation::worst_case(&cfg.kernel).unwrap();
    let rho = cfg.graph.spectral_radius().unwrap();
    let bound = step_bound(&lin, &cfg.kernel, cfg.kernel.g * rho);
    cfg.kernel.h = 0.9 * bound.h_max;
    let noisy = run(&cfg);

    let k_star = k_star_zero(&lin).unwrap();
    let k = 0.95 * k_star;
    let fast = step_bound(&lin, &cfg.kernel, k);
    let diverged = linearised_divergence_step(&lin, k, 4.0 * fast.h_max, 0, [1e-3, 0.0], 100_000, 1e6);
    let elapsed = t.elapsed();
    let ok = noisy.is_ok() && diverged.is_some() && elapsed < Duration::from_secs(60);
    report(
        9,
        ok,
        format!(
            "h = {:.4} over 10^5 noisy slots: {}; linearised k = {k:.4}, h = {:.4}: diverged at step {diverged:?}; {elapsed:.1?}",
            cfg.kernel.h,
            if noisy.is_ok() { "bounded" } else { "diverged" },
            4.0 * fast.h_max
        ),
    );
}

fn nos(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nos")).args(args).current_dir(dir).output().expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(root.join("sim.toml"), "[sim]\nn_slots = 3000\n").unwrap();
    for run in ["a", "b"] {
        let out = nos(&["study", "--out", &format!("study_{run}")], root);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = nos(&["simulate", "--config", "sim.toml", "--seed", "11", "--out", &format!("sim_{run}")], root);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let study = (read_dir_sorted(&root.join("study_a")), read_dir_sorted(&root.join("study_b")));
    let sim = (read_dir_sorted(&root.join("sim_a")), read_dir_sorted(&root.join("sim_b")));
    let ok = study.0.len() == 5 && study.0 == study.1 && sim.0.len() == 2 && sim.0 == sim.1;
    report(
        10,
        ok,
        format!("study files {} identical: {}; simulate files {} identical: {}", study.0.len(), study.0 == study.1, sim.0.len(), sim.0 == sim.1),
    );
}
