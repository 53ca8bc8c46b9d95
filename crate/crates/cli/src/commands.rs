//! The subcommands. Each returns the names of the files it wrote.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gmmamp::amp::{amp_iterate, empirical_order_params, AmpConfig, AmpInit, AmpResult};
use gmmamp::io::{format_labels_csv, read_instance, write_instance};
use gmmamp::model::{generate_instance, GmmInstance, ModelParams};
use gmmamp::pca::{pca_cluster, pca_error_rate_theory, pca_overlap_theory, PcaOptions};
use gmmamp::phase::{rho_c, PhasePoint};
use gmmamp::se::{
    free_energy_gap, predicted_maxprob_overlap, scalar_argument, se_fixed_point, CalM, SeConfig,
    SeFixedPoint, SeInit,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{AmpArgs, AmpInitArg, GenerateArgs, PcaArgs, PhaseArgs, SeArgs, SeInitArg};
use crate::output::{write_json, write_text, Cell, Format, Table};
use crate::UsageError;

pub fn generate(args: &GenerateArgs, seed: u64, out: &Path) -> Result<Vec<String>> {
    let params = ModelParams::new(args.n, args.m, args.r, args.rho, seed).with_delta(args.delta);
    params.validate()?;
    let inst = generate_instance(params)?;
    write_instance(out, &inst)?;
    println!(
        "wrote instance n={} m={} r={} rho={} to {}",
        args.n,
        args.m,
        args.r,
        args.rho,
        out.display()
    );
    Ok(["params.json", "X.csv", "labels.csv", "V0.csv"]
        .map(String::from)
        .to_vec())
}

/// Scalar state-evolution prediction matching an AMP initialization.
pub fn se_prediction(
    inst: &GmmInstance,
    init: AmpInitArg,
    samples: usize,
    seed: u64,
) -> Result<SeFixedPoint> {
    let se_init = match init {
        AmpInitArg::Uninformative => SeInit::uninformative(),
        AmpInitArg::Informative => SeInit::Informative,
    };
    let p = &inst.params;
    let cfg = SeConfig {
        samples,
        seed,
        ..SeConfig::default()
    };
    Ok(se_fixed_point(
        se_init,
        p.effective_rho(),
        p.alpha(),
        p.r,
        &cfg,
    )?)
}

pub fn amp_config(init: AmpInitArg, seed: u64) -> AmpConfig {
    let init = match init {
        AmpInitArg::Uninformative => AmpInit::Uninformative,
        AmpInitArg::Informative => AmpInit::Informative,
    };
    AmpConfig {
        init,
        seed,
        record_trajectory: false,
        ..AmpConfig::default()
    }
}

#[derive(Debug, Serialize)]
struct AmpSummary {
    r: usize,
    rho: f64,
    alpha: f64,
    init: AmpInitArg,
    overlap: f64,
    /// Fraction of points in their true cluster.
    error_rate: f64,
    permutation: Vec<usize>,
    iterations: usize,
    converged: bool,
    b_s: f64,
    b_v: f64,
    se_b_star: Option<f64>,
    se_overlap: Option<f64>,
    se_std_error: Option<f64>,
}

/// Returns the files written and whether the iteration converged.
pub fn amp(args: &AmpArgs, seed: u64, out: &Path, format: Format) -> Result<(Vec<String>, bool)> {
    let inst = read_instance(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let cfg = AmpConfig {
        max_iters: args.max_iters,
        tol: args.tol,
        damping: args.damping,
        init_noise: args.init_noise,
        onsager: !args.no_onsager,
        record_trajectory: args.trajectory,
        ..amp_config(args.init, seed)
    };
    cfg.validate()?;
    let res: AmpResult = amp_iterate(&inst, &cfg)?;
    let order = empirical_order_params(&res.state, &inst)?;
    let p = &inst.params;
    let se = if args.no_se {
        None
    } else {
        Some(se_prediction(&inst, args.init, args.samples, seed)?)
    };
    let summary = AmpSummary {
        r: p.r,
        rho: p.effective_rho(),
        alpha: p.alpha(),
        init: args.init,
        overlap: res.overlap_report.overlap,
        error_rate: res.overlap_report.error_rate,
        permutation: res.overlap_report.permutation.clone(),
        iterations: res.iterations,
        converged: res.converged,
        b_s: order.b_s(),
        b_v: order.b_v(),
        se_b_star: se.as_ref().map(|s| s.b_star),
        se_overlap: se
            .as_ref()
            .map(|s| predicted_maxprob_overlap(s.b_star, p.effective_rho(), p.alpha(), p.r)),
        se_std_error: se.as_ref().map(|s| s.std_error),
    };
    let mut files = vec![write_json(out, "result.json", &summary)?];
    if args.assignments {
        let labels =
            gmmamp::hard_assign(res.s_hat.view())?.permuted(&res.overlap_report.permutation);
        files.push(write_text(
            out,
            "assignments.csv",
            &format_labels_csv(&labels),
        )?);
    }
    if args.trajectory {
        let mut t = Table::new(&["iteration", "overlap", "max_change"]);
        for pt in &res.trajectory {
            t.push(vec![
                pt.iteration.into(),
                pt.overlap.into(),
                pt.max_change.into(),
            ]);
        }
        files.push(t.write(out, "trajectory", format)?);
    }
    print!(
        "overlap {:.4} after {} iterations",
        summary.overlap, summary.iterations
    );
    match summary.se_overlap {
        Some(o) => println!(", state evolution predicts {o:.4}"),
        None => println!(),
    }
    Ok((files, res.converged))
}

/// One row of an SE sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeRow {
    pub rho: f64,
    pub b_amp: Option<f64>,
    pub b_inf: Option<f64>,
    pub phi_gap: Option<f64>,
    pub std_error: f64,
}

pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Fixed points of both recursions and the free-energy gap between the
/// uninformative point and the informative one, per signal strength.
pub fn se_sweep(
    r: usize,
    alpha: f64,
    rhos: &[f64],
    init: SeInitArg,
    epsilon: f64,
    cfg: &SeConfig,
) -> Result<Vec<SeRow>> {
    let calm = CalM::new(r, cfg.samples, cfg.seed)?;
    let rows: Vec<Result<SeRow>> = rhos
        .par_iter()
        .map(|&rho| {
            let run = |i: SeInit| se_fixed_point(i, rho, alpha, r, cfg);
            let amp = matches!(init, SeInitArg::Uninformative | SeInitArg::Both)
                .then(|| run(SeInit::Uninformative { epsilon }))
                .transpose()?;
            let inf = matches!(init, SeInitArg::Informative | SeInitArg::Both)
                .then(|| run(SeInit::Informative))
                .transpose()?;
            let b_ref = inf
                .as_ref()
                .or(amp.as_ref())
                .map(|f| f.b_star)
                .unwrap_or(0.0);
            let gap = free_energy_gap(scalar_argument(b_ref, rho, alpha, r), rho, alpha, &calm)?;
            let std_error = [&amp, &inf]
                .iter()
                .filter_map(|f| f.as_ref().map(|f| f.std_error))
                .fold(0.0, f64::max);
            Ok(SeRow {
                rho,
                b_amp: amp.map(|f| f.b_star),
                b_inf: inf.map(|f| f.b_star),
                phi_gap: Some(gap),
                std_error,
            })
        })
        .collect();
    rows.into_iter().collect()
}

pub fn se_table(rows: &[SeRow]) -> Table {
    let mut t = Table::new(&["rho", "b_amp", "b_inf", "phi_gap", "std_error"]);
    for row in rows {
        t.push(vec![
            row.rho.into(),
            row.b_amp.into(),
            row.b_inf.into(),
            row.phi_gap.into(),
            row.std_error.into(),
        ]);
    }
    t
}

pub fn se(args: &SeArgs, seed: u64, out: &Path, format: Format) -> Result<Vec<String>> {
    let rhos = match (args.rho, args.rho_min, args.rho_max) {
        (Some(rho), _, _) => vec![rho],
        (None, Some(lo), Some(hi)) if lo <= hi && args.rho_steps >= 1 => {
            linspace(lo, hi, args.rho_steps)
        }
        (None, Some(_), Some(_)) => bail!(UsageError(
            "need rho-min <= rho-max and rho-steps >= 1".into()
        )),
        _ => bail!(UsageError(
            "give --rho or both --rho-min and --rho-max".into()
        )),
    };
    let cfg = SeConfig {
        tol: args.tol,
        max_iters: args.max_iters,
        samples: args.samples,
        seed,
    };
    let rows = se_sweep(args.r, args.alpha, &rhos, args.init, args.epsilon, &cfg)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    println!("rho_c = {:.4}", rho_c(args.r, args.alpha));
    for row in &rows {
        println!(
            "rho {:.4}  b_amp {}  b_inf {}  phi_gap {}",
            row.rho,
            fmt(row.b_amp),
            fmt(row.b_inf),
            fmt(row.phi_gap)
        );
    }
    Ok(vec![se_table(&rows).write(out, "se_curve", format)?])
}

/// Thresholds for every `(r, alpha)` pair, computed in parallel.
pub fn phase_points(
    rs: &[usize],
    alphas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<PhasePoint>> {
    let pairs: Vec<(usize, f64)> = rs
        .iter()
        .flat_map(|&r| alphas.iter().map(move |&a| (r, a)))
        .collect();
    pairs
        .par_iter()
        .map(|&(r, alpha)| Ok(PhasePoint::compute(r, alpha, CalM::new(r, samples, seed)?)?))
        .collect()
}

pub fn phase_table(points: &[PhasePoint]) -> Table {
    let mut t = Table::new(&[
        "r",
        "alpha",
        "rho_c",
        "rho_sp",
        "rho_sp_err",
        "rho_it",
        "rho_it_err",
    ]);
    for p in points {
        t.push(vec![
            p.r.into(),
            p.alpha.into(),
            p.rho_c.into(),
            p.rho_sp.map(|s| s.value).into(),
            p.rho_sp.map(|s| s.std_error).into(),
            p.rho_it.map(|s| s.value).into(),
            p.rho_it.map(|s| s.std_error).into(),
        ]);
    }
    t
}

pub fn phase_grid_table(points: &[PhasePoint], steps: usize) -> Table {
    let mut t = Table::new(&["r", "alpha", "rho", "phase"]);
    for p in points {
        let top = 1.5 * p.rho_c;
        for i in 1..=steps {
            let rho = top * i as f64 / steps as f64;
            t.push(vec![
                p.r.into(),
                p.alpha.into(),
                rho.into(),
                p.phase_at(rho).to_string().into(),
            ]);
        }
    }
    t
}

pub fn print_phase_points(points: &[PhasePoint]) {
    let fmt = |t: Option<gmmamp::phase::Threshold>| {
        t.map_or("-".to_string(), |t| {
            format!("{:.4} +- {:.4}", t.value, t.std_error)
        })
    };
    for p in points {
        println!(
            "r {}  alpha {}  rho_c {:.4}  rho_sp {}  rho_it {}",
            p.r,
            p.alpha,
            p.rho_c,
            fmt(p.rho_sp),
            fmt(p.rho_it)
        );
    }
}

pub fn phase(args: &PhaseArgs, seed: u64, out: &Path, format: Format) -> Result<Vec<String>> {
    let rs: Vec<usize> = match (args.r, args.r_min, args.r_max) {
        (Some(r), _, _) => vec![r],
        (None, Some(lo), Some(hi)) if lo <= hi => (lo..=hi).collect(),
        _ => bail!(UsageError("give --r or both --r-min <= --r-max".into())),
    };
    if args.alpha.is_empty() || args.grid_steps == 0 {
        bail!(UsageError(
            "need at least one alpha and grid-steps >= 1".into()
        ));
    }
    let points = phase_points(&rs, &args.alpha, args.samples, seed)?;
    print_phase_points(&points);
    Ok(vec![
        phase_table(&points).write(out, "phase", format)?,
        phase_grid_table(&points, args.grid_steps).write(out, "phase_grid", format)?,
    ])
}

#[derive(Debug, Serialize)]
struct PcaSummary {
    r: usize,
    rho: f64,
    alpha: f64,
    overlap: f64,
    /// Fraction of points in their true cluster.
    error_rate: f64,
    theory_overlap: f64,
    theory_error_rate: f64,
    singular_values: Vec<f64>,
}

pub fn pca(args: &PcaArgs, seed: u64, out: &Path, format: Format) -> Result<Vec<String>> {
    let inst = read_instance(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let opts = PcaOptions {
        restarts: args.restarts,
        seed,
        ..PcaOptions::default()
    };
    let res = pca_cluster(&inst, &opts)?;
    let p = &inst.params;
    let (rho, alpha) = (p.effective_rho(), p.alpha());
    let summary = PcaSummary {
        r: p.r,
        rho,
        alpha,
        overlap: res.overlap_report.overlap,
        error_rate: res.overlap_report.error_rate,
        theory_overlap: pca_overlap_theory(rho, alpha, p.r)?,
        theory_error_rate: pca_error_rate_theory(rho, alpha, p.r)?,
        singular_values: res.singular_values.clone(),
    };
    println!(
        "overlap {:.4}, theory {:.4}",
        summary.overlap, summary.theory_overlap
    );
    let mut files = vec![write_json(out, "pca_result.json", &summary)?];
    if args.projected {
        let cols: Vec<String> = (1..=p.r).map(|k| format!("v{k}")).collect();
        let mut names: Vec<&str> = vec!["point"];
        names.extend(cols.iter().map(String::as_str));
        let mut t = Table::new(&names);
        for (j, row) in res.projected.rows().into_iter().enumerate() {
            let mut cells: Vec<Cell> = vec![(j + 1).into()];
            cells.extend(row.iter().map(|&v| Cell::Float(v)));
            t.push(cells);
        }
        files.push(t.write(out, "projected", format)?);
    }
    Ok(files)
}
