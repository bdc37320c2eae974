use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use nos_core::sim::{run, SimMetrics};
use nos_core::stability::{
    k_star_envelope, k_star_exact, k_star_zero, omega_zero, step_bound_for, EnvelopeParams,
};
use nos_core::study::{calibrate_gain, run_sweep, StudyPoint};
use nos_core::{InterferenceGraph, TopologyName};
use rayon::prelude::*;

use crate::config::Config;
use crate::output::{num, OutputDir};

pub fn study(cfg: &Config, out: &Path) -> Result<()> {
    let started = Instant::now();
    let result = run_sweep(&cfg.study)?;
    let cal = result.calibration;
    if cal.floor {
        eprintln!(
            "warning: NOS p99.9 cannot reach PF p99.9 at the calibration point ({} vs {}); using g = 0",
            cal.p999_nos, cal.p999_pf
        );
    }
    println!("calibrated g = {}", num(cal.g));

    let mut dir = OutputDir::create(out, &cfg.hash())?;
    let mode = result.mode.as_str();
    let figure = |value: fn(&StudyPoint) -> f64| -> Vec<Vec<String>> {
        result
            .points
            .iter()
            .map(|p| {
                vec![
                    p.topology.to_string(),
                    num(p.delta_ms),
                    p.scheduler.to_string(),
                    num(value(p)),
                    num(p.margin),
                    num(p.gamma_eff),
                    mode.to_string(),
                ]
            })
            .collect()
    };
    let header = ["topology", "delta_ms", "scheduler", "value", "delta_margin", "gamma_eff", "mode"];
    dir.write_csv("auc.csv", &header, &figure(|p| p.auc))?;
    dir.write_csv("maxq.csv", &header, &figure(|p| p.maxq))?;
    dir.write_csv("p999.csv", &header, &figure(|p| p.p999_ms))?;

    let tails: Vec<Vec<String>> = result
        .tails_line4
        .iter()
        .flat_map(|c| {
            c.points
                .iter()
                .map(move |&(tau, b)| vec![c.scheduler.to_string(), num(c.delta_ms), num(tau), num(b)])
        })
        .collect();
    dir.write_csv("tails_line4.csv", &["scheduler", "delta_ms", "tau", "bound"], &tails)?;

    let summary: Vec<Vec<String>> = result.points.iter().map(summary_row).collect();
    dir.write_csv("summary.csv", &SUMMARY_HEADER, &summary)?;
    dir.write_manifest("study", started.elapsed())
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "topology",
    "delta_ms",
    "scheduler",
    "delta_eff_ms",
    "margin",
    "gamma_eff",
    "auc",
    "xbar",
    "theta",
    "p999_ms",
    "maxq",
    "unstable",
];

fn summary_row(p: &StudyPoint) -> Vec<String> {
    vec![
        p.topology.to_string(),
        num(p.delta_ms),
        p.scheduler.to_string(),
        num(p.delta_eff_ms),
        num(p.margin),
        num(p.gamma_eff),
        num(p.auc),
        num(p.xbar),
        num(p.theta),
        num(p.p999_ms),
        num(p.maxq),
        p.unstable.to_string(),
    ]
}

pub struct StabilityArgs {
    pub exact: bool,
    pub topologies: Vec<TopologyName>,
    pub delays: Vec<f64>,
    pub g: Option<f64>,
}

pub fn stability(cfg: &Config, args: &StabilityArgs, out: &Path) -> Result<()> {
    let started = Instant::now();
    let lin = cfg.study.linearisation()?;
    k_star_zero(&lin)?;
    let env = EnvelopeParams::from_linearisation(&lin, cfg.study.tau_ctrl)?;
    let g = match args.g {
        Some(g) => g,
        None => calibrate_gain(&cfg.study)?.g,
    };
    let topologies = if args.topologies.is_empty() { cfg.study.topologies.clone() } else { args.topologies.clone() };
    let delays = if args.delays.is_empty() { cfg.study.delays.clone() } else { args.delays.clone() };

    let header = ["topology", "delta_ms", "k_star", "k", "delta", "omega0", "h_max"];
    println!("{}", header.join(","));
    let mut rows = Vec::new();
    for t in topologies {
        let rho = InterferenceGraph::build_named(t, cfg.study.w)?.spectral_radius()?;
        let k = g * lin.spike_slope * rho;
        for &d in &delays {
            let k_star = if args.exact { k_star_exact(&lin, d)?.k_star } else { k_star_envelope(&env, d) };
            let omega0 = omega_zero(&lin);
            let bound = step_bound_for(lin.jacobian(), lin.lipschitz(), k, omega0);
            let row = vec![t.to_string(), num(d), num(k_star), num(k), num(k_star - k), num(omega0), num(bound.h_max)];
            println!("{}", row.join(","));
            rows.push(row);
        }
    }
    let mut dir = OutputDir::create(out, &cfg.hash())?;
    dir.write_csv(if args.exact { "stability_exact.csv" } else { "stability.csv" }, &header, &rows)?;
    dir.write_manifest("stability", started.elapsed())
}

pub fn calibrate(cfg: &Config) -> Result<()> {
    let cal = calibrate_gain(&cfg.study)?;
    println!("g = {}", num(cal.g));
    println!("p999_nos = {}", num(cal.p999_nos));
    println!("p999_pf = {}", num(cal.p999_pf));
    println!("iterations = {}", cal.iterations);
    if cal.floor {
        eprintln!("warning: no gain reaches p99.9 parity; returned the nearest (g = 0)");
    }
    Ok(())
}

pub fn simulate(cfg: &Config, out: &Path) -> Result<()> {
    let started = Instant::now();
    let runs = cfg.sim_runs()?;
    for r in &runs {
        let over = r.config.overloaded_cliques();
        if !over.is_empty() {
            eprintln!(
                "warning: {} run at delay {} offers more than the budget on cliques {:?}",
                r.config.scheduler, r.delay, over
            );
        }
    }
    let results: Vec<Result<(SimMetrics, f64)>> = runs
        .par_iter()
        .map(|r| {
            let m = run(&r.config)?;
            Ok((m, r.config.margin()?.delta))
        })
        .collect();

    let hash = cfg.hash();
    let mut rows = Vec::new();
    let mut ccdf = Vec::new();
    for (r, res) in runs.iter().zip(results) {
        let (m, margin) = res?;
        let c = &r.config;
        rows.push(vec![
            hash.clone(),
            c.scheduler.to_string(),
            cfg.sim.topology.to_string(),
            r.delay.to_string(),
            c.seed.to_string(),
            num(c.kernel.g),
            num(margin),
            num(m.mean_queue_overall()),
            num(m.p999_delay_slots),
            num(m.max_queue),
            num(m.mean_utilisation),
            m.warn_count().to_string(),
            num(m.queue_trend_slope),
        ]);
        for &(tau, p) in &m.delay_ccdf {
            ccdf.push(vec![c.scheduler.to_string(), r.delay.to_string(), c.seed.to_string(), num(tau), num(p)]);
        }
    }
    let mut dir = OutputDir::create(out, &hash)?;
    dir.write_csv(
        "sim_metrics.csv",
        &[
            "config_hash",
            "scheduler",
            "topology",
            "delta_ms",
            "seed",
            "g",
            "margin",
            "mean_queue",
            "p999_delay_slots",
            "max_queue",
            "util",
            "warn_count",
            "queue_trend_slope",
        ],
        &rows,
    )?;
    dir.write_csv("sim_ccdf.csv", &["scheduler", "delta_ms", "seed", "tau", "ccdf"], &ccdf)?;
    dir.write_manifest("simulate", started.elapsed())
}
