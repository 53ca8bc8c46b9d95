//! Datasets behind the three figures.
//!
//! fig1: thresholds over `r` at `alpha = 2`.
//! fig2: state evolution with AMP and PCA simulations at `r = 2`.
//! fig3: the same at `r = 20`, where the transition is discontinuous.

use std::path::Path;

use anyhow::Result;
use gmmamp::amp::amp_iterate;
use gmmamp::model::{generate_instance, ModelParams};
use gmmamp::pca::{pca_cluster, pca_overlap_theory, PcaOptions};
use gmmamp::phase::rho_c;
use gmmamp::rng::{derive_seed, Stream};
use gmmamp::se::{predicted_maxprob_overlap, SeConfig, DEFAULT_EPSILON};
use serde::Serialize;

use crate::args::{AmpInitArg, Figure, ReproduceArgs, Scale, SeInitArg};
use crate::commands::{
    amp_config, linspace, phase_grid_table, phase_points, phase_table, print_phase_points,
    se_sweep, SeRow,
};
use crate::output::{write_text, Format, Table};
use crate::svg::{line_chart, Series};

const ALPHA: f64 = 2.0;

struct Plan {
    r: usize,
    n: usize,
    se_rhos: Vec<f64>,
    sim_rhos: Vec<f64>,
    seeds: usize,
    samples: usize,
    max_iters: usize,
    inits: Vec<AmpInitArg>,
}

fn plan(args: &ReproduceArgs) -> Plan {
    let full = args.scale == Scale::Full;
    let mut p = match args.figure {
        Figure::Fig2 => Plan {
            r: 2,
            n: 1000,
            se_rhos: linspace(0.5, 4.0, 36),
            sim_rhos: linspace(0.5, 4.0, 8),
            seeds: if full { 30 } else { 10 },
            samples: 200_000,
            max_iters: 1000,
            inits: vec![AmpInitArg::Uninformative],
        },
        _ => {
            let rc = rho_c(20, ALPHA);
            let mut se_rhos = linspace(10.0, 20.0, if full { 41 } else { 21 });
            se_rhos.extend([rc - 0.2, rc + 0.2]);
            se_rhos.sort_by(f64::total_cmp);
            Plan {
                r: 20,
                n: if full { 10_000 } else { 4000 },
                se_rhos,
                sim_rhos: if full {
                    linspace(10.0, 20.0, 11)
                } else {
                    vec![10.0, 12.0, 13.0, 14.0, 15.0, 16.0, 18.0, 20.0]
                },
                seeds: if full { 3 } else { 1 },
                samples: if full { 200_000 } else { 100_000 },
                max_iters: if full { 1000 } else { 300 },
                inits: vec![AmpInitArg::Uninformative, AmpInitArg::Informative],
            }
        }
    };
    if let Some(s) = args.samples {
        p.samples = s;
    }
    if let Some(s) = args.seeds {
        p.seeds = s;
    }
    p
}

pub fn run(args: &ReproduceArgs, seed: u64, out: &Path, format: Format) -> Result<Vec<String>> {
    match args.figure {
        Figure::Fig1 => fig1(args, seed, out, format),
        Figure::Fig2 | Figure::Fig3 => overlap_figure(args, seed, out, format),
    }
}

fn fig1(args: &ReproduceArgs, seed: u64, out: &Path, format: Format) -> Result<Vec<String>> {
    let samples = args.samples.unwrap_or(if args.scale == Scale::Full {
        200_000
    } else {
        50_000
    });
    let rs: Vec<usize> = (5..=30).collect();
    let points = phase_points(&rs, &[ALPHA], samples, seed)?;
    print_phase_points(&points);
    let ordered = points
        .iter()
        .filter_map(|p| Some((p.rho_sp?, p.rho_it?, p.rho_c)))
        .all(|(sp, it, c)| sp.value < it.value && it.value < c);
    println!("rho_sp < rho_it < rho_c for every first-order r: {ordered}");
    let mut files = vec![
        phase_table(&points).write(out, "phase", format)?,
        phase_grid_table(&points, 60).write(out, "phase_grid", format)?,
    ];
    if args.svg {
        let curve = |f: &dyn Fn(&gmmamp::phase::PhasePoint) -> Option<f64>| {
            points
                .iter()
                .filter_map(|p| Some((p.r as f64, f(p)? / (p.r as f64))))
                .collect::<Vec<_>>()
        };
        let svg = line_chart(
            "Thresholds at alpha = 2",
            "r",
            "rho / r",
            &[
                Series::line("rho_c", curve(&|p| Some(p.rho_c))),
                Series::line("rho_IT", curve(&|p| p.rho_it.map(|t| t.value))),
                Series::line("rho_sp", curve(&|p| p.rho_sp.map(|t| t.value))),
            ],
        );
        files.push(write_text(out, "fig1.svg", &svg)?);
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
struct SimPoint {
    rho: f64,
    seed: u64,
    init: AmpInitArg,
    amp_overlap: f64,
    amp_iterations: usize,
    amp_converged: bool,
    pca_overlap: Option<f64>,
}

fn simulate(plan: &Plan, seed: u64) -> Result<Vec<SimPoint>> {
    let mut points = Vec::new();
    for (i, &rho) in plan.sim_rhos.iter().enumerate() {
        for s in 0..plan.seeds {
            let inst_seed = derive_seed(seed, Stream::Sweep, (i * 1000 + s) as u64);
            let inst =
                generate_instance(ModelParams::new(plan.n, 2 * plan.n, plan.r, rho, inst_seed))?;
            let pca = pca_cluster(
                &inst,
                &PcaOptions {
                    seed: inst_seed,
                    ..PcaOptions::default()
                },
            )?;
            for (k, &init) in plan.inits.iter().enumerate() {
                let cfg = gmmamp::amp::AmpConfig {
                    max_iters: plan.max_iters,
                    ..amp_config(init, inst_seed)
                };
                let res = amp_iterate(&inst, &cfg)?;
                println!(
                    "rho {rho:.3} seed {s} {init:?}: AMP overlap {:.4} ({} iterations), PCA {:.4}",
                    res.overlap_report.overlap, res.iterations, pca.overlap_report.overlap
                );
                points.push(SimPoint {
                    rho,
                    seed: inst_seed,
                    init,
                    amp_overlap: res.overlap_report.overlap,
                    amp_iterations: res.iterations,
                    amp_converged: res.converged,
                    pca_overlap: (k == 0).then_some(pca.overlap_report.overlap),
                });
            }
        }
    }
    Ok(points)
}

fn se_overlap(row: &SeRow, b: Option<f64>, r: usize) -> Option<f64> {
    b.map(|b| predicted_maxprob_overlap(b, row.rho, ALPHA, r))
}

fn overlap_figure(
    args: &ReproduceArgs,
    seed: u64,
    out: &Path,
    format: Format,
) -> Result<Vec<String>> {
    let plan = plan(args);
    let stem = match args.figure {
        Figure::Fig2 => "fig2",
        _ => "fig3",
    };
    let cfg = SeConfig {
        samples: plan.samples,
        seed,
        ..SeConfig::default()
    };
    let rows = se_sweep(
        plan.r,
        ALPHA,
        &plan.se_rhos,
        SeInitArg::Both,
        DEFAULT_EPSILON,
        &cfg,
    )?;
    let mut se = Table::new(&[
        "rho",
        "b_amp",
        "b_inf",
        "overlap_amp",
        "overlap_inf",
        "pca_overlap_theory",
    ]);
    for row in &rows {
        se.push(vec![
            row.rho.into(),
            row.b_amp.into(),
            row.b_inf.into(),
            se_overlap(row, row.b_amp, plan.r).into(),
            se_overlap(row, row.b_inf, plan.r).into(),
            pca_overlap_theory(row.rho, ALPHA, plan.r)?.into(),
        ]);
    }
    let rc = rho_c(plan.r, ALPHA);
    let at = |rho: f64| {
        rows.iter()
            .find(|r| (r.rho - rho).abs() < 1e-9)
            .and_then(|r| se_overlap(r, r.b_amp, plan.r))
    };
    if let (Some(lo), Some(hi)) = (at(rc - 0.2), at(rc + 0.2)) {
        println!("state-evolution AMP overlap {lo:.4} at rho_c - 0.2 and {hi:.4} at rho_c + 0.2 (jump {:.4})", hi - lo);
    }
    let mut files = vec![se.write(out, &format!("{stem}_se"), format)?];

    let sims = if args.skip_simulation {
        Vec::new()
    } else {
        simulate(&plan, seed)?
    };
    if !sims.is_empty() {
        let mut t = Table::new(&[
            "rho",
            "seed",
            "init",
            "amp_overlap",
            "amp_iterations",
            "amp_converged",
            "pca_overlap",
        ]);
        for p in &sims {
            t.push(vec![
                p.rho.into(),
                p.seed.into(),
                format!("{:?}", p.init).to_lowercase().into(),
                p.amp_overlap.into(),
                p.amp_iterations.into(),
                p.amp_converged.into(),
                p.pca_overlap.into(),
            ]);
        }
        files.push(t.write(out, &format!("{stem}_sim"), format)?);
        report_agreement(&plan, &sims, &cfg, rc)?;
    }
    if args.svg {
        let col = |f: &dyn Fn(&SeRow) -> Option<f64>| {
            rows.iter()
                .filter_map(|r| Some((r.rho, f(r)?)))
                .collect::<Vec<_>>()
        };
        let mut series = vec![
            Series::line(
                "SE, uninformative",
                col(&|r| se_overlap(r, r.b_amp, plan.r)),
            ),
            Series::line("SE, informative", col(&|r| se_overlap(r, r.b_inf, plan.r))),
            Series::line(
                "PCA theory",
                col(&|r| pca_overlap_theory(r.rho, ALPHA, plan.r).ok()),
            ),
        ];
        for &init in &plan.inits {
            let pts = sims
                .iter()
                .filter(|p| p.init == init)
                .map(|p| (p.rho, p.amp_overlap))
                .collect();
            series.push(Series::points(
                &format!("AMP, {init:?}").to_lowercase(),
                pts,
            ));
        }
        series.push(Series::points(
            "PCA",
            sims.iter()
                .filter_map(|p| Some((p.rho, p.pca_overlap?)))
                .collect(),
        ));
        let title = format!("r = {}, alpha = 2, n = {}", plan.r, plan.n);
        files.push(write_text(
            out,
            &format!("{stem}.svg"),
            &line_chart(&title, "rho", "overlap", &series),
        )?);
    }
    Ok(files)
}

/// Mean uninformative AMP overlap against the state-evolution curve above
/// `rho_c`.
fn report_agreement(plan: &Plan, sims: &[SimPoint], cfg: &SeConfig, rc: f64) -> Result<()> {
    let rhos: Vec<f64> = plan.sim_rhos.iter().copied().filter(|&r| r > rc).collect();
    let rows = se_sweep(
        plan.r,
        ALPHA,
        &rhos,
        SeInitArg::Uninformative,
        DEFAULT_EPSILON,
        cfg,
    )?;
    let mut worst: f64 = 0.0;
    for row in &rows {
        let runs: Vec<f64> = sims
            .iter()
            .filter(|p| p.rho == row.rho && p.init == AmpInitArg::Uninformative)
            .map(|p| p.amp_overlap)
            .collect();
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        let pred = se_overlap(row, row.b_amp, plan.r).unwrap_or(0.0);
        worst = worst.max((mean - pred).abs());
        println!(
            "rho {:.3}: mean AMP overlap {mean:.4}, state evolution {pred:.4}",
            row.rho
        );
    }
    println!("largest AMP deviation from state evolution above rho_c: {worst:.4}");
    Ok(())
}
