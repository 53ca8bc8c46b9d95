//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gmmamp --release --test acceptance`. Criterion
//! numbers given as arguments restrict the run, e.g. `-- 1 2 9`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gmmamp::amp::{amp_iterate, AmpConfig, AmpInit};
use gmmamp::denoisers::{f_s, f_v, log_z_s, log_z_v};
use gmmamp::linalg::{principal_angles, truncated_svd, SvdOptions};
use gmmamp::model::{generate_instance, overlap_score, GmmInstance, Labels, ModelParams};
use gmmamp::pca::{gaussian_amp_iterate, pca_cluster, pca_error_rate_theory, PcaOptions};
use gmmamp::phase::{r_c, rho_c, rho_it_from_scan, rho_sp_from_scan, PhaseScan};
use gmmamp::se::{
    bethe_free_energy, predicted_maxprob_overlap, se_fixed_point, se_matrix_step, CalM,
    ScalarOrder, SeConfig, SeFixedPoint, SeInit,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), gmmamp::Error>;

const MINUTE: u64 = 60;

struct Criterion {
    id: usize,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria = [
        Criterion {
            id: 1,
            budget: Duration::from_secs(1),
            run: c1_threshold_formulas,
        },
        Criterion {
            id: 2,
            budget: Duration::from_secs(2 * MINUTE),
            run: c2_second_order,
        },
        Criterion {
            id: 3,
            budget: Duration::from_secs(10 * MINUTE),
            run: c3_first_order,
        },
        Criterion {
            id: 4,
            budget: Duration::from_secs(10 * MINUTE),
            run: c4_boundary,
        },
        Criterion {
            id: 5,
            budget: Duration::from_secs(5 * MINUTE),
            run: c5_amp_tracks_se,
        },
        Criterion {
            id: 6,
            budget: Duration::from_secs(20 * MINUTE),
            run: c6_hard_phase_dynamics,
        },
        Criterion {
            id: 7,
            budget: Duration::from_secs(30 * MINUTE),
            run: c7_large_r,
        },
        Criterion {
            id: 8,
            budget: Duration::from_secs(3 * MINUTE),
            run: c8_pca,
        },
        Criterion {
            id: 9,
            budget: Duration::from_secs(2 * MINUTE),
            run: c9_gaussian_amp_subspace,
        },
        Criterion {
            id: 10,
            budget: Duration::from_secs(10 * MINUTE),
            run: c10_properties,
        },
    ];
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = elapsed <= c.budget;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let timing = format!("{:.1}s of {}s", elapsed.as_secs_f64(), c.budget.as_secs());
        let late = if in_time { "" } else { ", over budget" };
        println!(
            "criterion {}: {} ({detail}; {timing}{late})",
            c.id,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn instance(n: usize, r: usize, rho: f64, seed: u64) -> Result<GmmInstance, gmmamp::Error> {
    generate_instance(ModelParams::new(n, 2 * n, r, rho, seed))
}

fn both_inits(
    rho: f64,
    alpha: f64,
    r: usize,
    cfg: &SeConfig,
) -> Result<(SeFixedPoint, SeFixedPoint), gmmamp::Error> {
    Ok((
        se_fixed_point(SeInit::uninformative(), rho, alpha, r, cfg)?,
        se_fixed_point(SeInit::Informative, rho, alpha, r, cfg)?,
    ))
}

// the pinned values are the stated ones, not stand-ins for sqrt(2)
#[allow(clippy::approx_constant)]
fn c1_threshold_formulas() -> Outcome {
    let (a, b) = (rho_c(2, 2.0), rho_c(20, 2.0));
    let ok = (a - 1.4142).abs() <= 1e-3 && (b - 14.142).abs() <= 1e-3;
    Ok((ok, format!("rho_c(2, 2) = {a:.5}, rho_c(20, 2) = {b:.4}")))
}

fn c2_second_order() -> Outcome {
    let (r, alpha) = (2, 2.0);
    let cfg = SeConfig::default();
    let rc = rho_c(r, alpha);
    let mut ok = true;
    let mut parts = Vec::new();
    for rho in [1.0, 1.2, 1.6, 2.0, 3.0] {
        let (amp, inf) = both_inits(rho, alpha, r, &cfg)?;
        let tol = 1e-4f64.max(3.0 * amp.std_error.max(inf.std_error));
        let agree = (amp.b_star - inf.b_star).abs() <= tol;
        let sign = if rho < rc {
            amp.b_star < 1e-4
        } else {
            amp.b_star > 1e-4
        };
        ok &= agree && sign;
        parts.push(format!("b*({rho}) = {:.4}/{:.4}", amp.b_star, inf.b_star));
    }
    let near = se_fixed_point(SeInit::uninformative(), rc + 0.05, alpha, r, &cfg)?.b_star;
    ok &= near < 0.2;
    parts.push(format!("b*(rho_c + 0.05) = {near:.4}"));
    Ok((ok, parts.join(", ")))
}

fn c3_first_order() -> Outcome {
    let (r, alpha) = (20, 2.0);
    let cfg = SeConfig::default();
    let scan = PhaseScan::new(r, alpha, CalM::new(r, cfg.samples, cfg.seed)?)?;
    let sp = rho_sp_from_scan(&scan)?;
    let it = rho_it_from_scan(&scan)?;
    let rc = rho_c(r, alpha);
    let ordered = sp.value + sp.std_error < it.value - it.std_error && it.value + it.std_error < rc;
    let mut hard = Vec::new();
    for i in 0..8 {
        let rho = sp.value + (rc - sp.value) * (i as f64 + 0.5) / 8.0;
        let (amp, inf) = both_inits(rho, alpha, r, &cfg)?;
        if inf.b_star > 0.3 && amp.b_star < 1e-3 {
            hard.push(rho);
        }
    }
    let interval = match (hard.first(), hard.last()) {
        (Some(lo), Some(hi)) => format!("gap on rho in [{lo:.3}, {hi:.3}]"),
        _ => "no gap found".to_string(),
    };
    Ok((
        ordered && !hard.is_empty(),
        format!(
            "rho_sp = {:.4} +- {:.4}, rho_IT = {:.4} +- {:.4}, rho_c = {rc:.4}, {interval}",
            sp.value, sp.std_error, it.value, it.std_error
        ),
    ))
}

/// Distance to the limit left by the stopping rule, extrapolated from the
/// geometric decay of the last two steps.
fn truncation_error(fp: &SeFixedPoint) -> f64 {
    let h = &fp.history;
    if h.len() < 3 {
        return 0.0;
    }
    let (d1, d0) = (
        (h[h.len() - 1] - h[h.len() - 2]).abs(),
        (h[h.len() - 2] - h[h.len() - 3]).abs(),
    );
    let rate = if d0 > 0.0 { (d1 / d0).min(0.999) } else { 0.0 };
    d1 * rate / (1.0 - rate)
}

/// Points `rho / rho_c` of the grid over `[0.9, 1)` where the informative fixed
/// point sits more than three Monte Carlo errors above the uninformative one,
/// beyond what either run left unconverged.
fn gapped_rhos(r: usize, alpha: f64) -> Result<Vec<f64>, gmmamp::Error> {
    let cfg = SeConfig::default();
    let rc = rho_c(r, alpha);
    let mut out = Vec::new();
    for i in 0..10 {
        let rho = (0.9 + 0.01 * i as f64) * rc;
        let (amp, inf) = both_inits(rho, alpha, r, &cfg)?;
        let slack = truncation_error(&amp) + truncation_error(&inf);
        if inf.b_star - amp.b_star > 3.0 * amp.std_error.max(inf.std_error) + slack {
            out.push((rho / rc * 100.0).round() / 100.0);
        }
    }
    Ok(out)
}

fn c4_boundary() -> Outcome {
    let alpha = 2.0;
    let seven = gapped_rhos(7, alpha)?;
    let six = gapped_rhos(6, alpha)?;
    Ok((
        !seven.is_empty() && six.is_empty(),
        format!(
            "r_c = {:.3}, gapped rho/rho_c at r = 7: {seven:?}, at r = 6: {six:?}",
            r_c(alpha)
        ),
    ))
}

fn c5_amp_tracks_se() -> Outcome {
    let (r, alpha, n, seeds) = (2, 2.0, 1000, 10);
    let mut ok = true;
    let mut parts = Vec::new();
    for rho in [2.0, 2.5, 3.0] {
        let fp = se_fixed_point(SeInit::uninformative(), rho, alpha, r, &SeConfig::default())?;
        let want = predicted_maxprob_overlap(fp.b_star, rho, alpha, r);
        let mut sum = 0.0;
        for seed in 0..seeds {
            let cfg = AmpConfig {
                seed,
                record_trajectory: false,
                ..AmpConfig::default()
            };
            sum += amp_iterate(&instance(n, r, rho, seed)?, &cfg)?
                .overlap_report
                .overlap;
        }
        let mean = sum / seeds as f64;
        ok &= (mean - want).abs() <= 0.05;
        parts.push(format!("rho {rho}: AMP {mean:.3} vs SE {want:.3}"));
    }
    Ok((ok, parts.join(", ")))
}

fn c6_hard_phase_dynamics() -> Outcome {
    let (r, rho, n, seeds) = (20, 13.0, 4000, 10);
    let mut informative = Vec::new();
    let mut uninformative = Vec::new();
    for seed in 0..seeds {
        let inst = instance(n, r, rho, seed)?;
        for (init, out) in [
            (AmpInit::Informative, &mut informative),
            (AmpInit::Uninformative, &mut uninformative),
        ] {
            let cfg = AmpConfig {
                init,
                seed,
                max_iters: 300,
                record_trajectory: false,
                ..AmpConfig::default()
            };
            out.push(amp_iterate(&inst, &cfg)?.overlap_report.overlap);
        }
    }
    let inf_ok = informative.iter().all(|&o| o > 0.5);
    let stuck = uninformative.iter().filter(|&&o| o < 0.1).count();
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|o| format!("{o:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok((
        inf_ok && stuck >= 7,
        format!(
            "informative [{}], uninformative [{}], {stuck}/10 below 0.1",
            fmt(&informative),
            fmt(&uninformative)
        ),
    ))
}

fn c7_large_r() -> Outcome {
    let (r, alpha) = (200, 2.0);
    let cfg = SeConfig::default();
    let scan = PhaseScan::new(r, alpha, CalM::new(r, cfg.samples, cfg.seed)?)?;
    let sp = rho_sp_from_scan(&scan)?;
    let it = rho_it_from_scan(&scan)?;
    let rl = r as f64 * (r as f64).ln();
    let it_ratio = it.value / (2.0 * (rl / alpha).sqrt());
    let sp_ratio = sp.value / (2.0 * rl / alpha).sqrt();
    let ok = (0.8..=1.2).contains(&it_ratio) && (0.85..=1.15).contains(&sp_ratio);
    Ok((
        ok,
        format!(
            "rho_IT = {:.3} (ratio {it_ratio:.3}), rho_sp = {:.3} (ratio {sp_ratio:.3}), rho_c = {:.3}",
            it.value,
            sp.value,
            rho_c(r, alpha)
        ),
    ))
}

fn c8_pca() -> Outcome {
    let (r, alpha, n) = (2, 2.0, 2000);
    let opts = PcaOptions::default();
    let above = pca_cluster(&instance(n, r, 2.0, 11)?, &opts)?
        .overlap_report
        .error_rate;
    let want = pca_error_rate_theory(2.0, alpha, r)?;
    let below = pca_cluster(&instance(n, r, 1.0, 12)?, &opts)?
        .overlap_report
        .error_rate;
    let theory_below = pca_error_rate_theory(1.0, alpha, r)?;
    let ok = (above - want).abs() <= 0.03
        && (below - 0.5).abs() <= 0.02
        && (theory_below - 0.5).abs() <= 0.02;
    Ok((
        ok,
        format!("fraction correct at rho 2: {above:.4} vs {want:.4}, at rho 1: {below:.4} vs {theory_below:.4}"),
    ))
}

fn c9_gaussian_amp_subspace() -> Outcome {
    let (r, n) = (2, 1000);
    let inst = instance(n, r, 2.0 * rho_c(r, 2.0), 9)?;
    let res = gaussian_amp_iterate(&inst, 2000, 1e-10, 9)?;
    let svd = truncated_svd(inst.x.view(), r, SvdOptions::default())?;
    let angles = principal_angles(res.s_hat.view(), svd.v.view())?;
    let worst = angles.iter().copied().fold(0.0, f64::max);
    Ok((
        res.converged && worst < 0.05,
        format!("largest principal angle {worst:.2e} rad"),
    ))
}

fn c10_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // denoiser gradients by central differences
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let r = rng.random_range(2..6);
        let g = Array2::from_shape_fn((r, r), |_| rng.random_range(-1.0..1.0));
        let a = g.t().dot(&g);
        let b = Array1::from_shape_fn(r, |_| rng.random_range(-2.0..2.0));
        let diag = Array2::from_diag(&a.diag());
        let (out_v, out_s) = (f_v(a.view(), b.view())?, f_s(diag.view(), b.view()));
        for k in 0..r {
            let mut e = Array1::zeros(r);
            e[k] = h;
            let (up, down) = (&b + &e, &b - &e);
            let gv = (log_z_v(a.view(), up.view())? - log_z_v(a.view(), down.view())?) / (2.0 * h);
            let gs =
                (log_z_s(diag.view(), up.view()) - log_z_s(diag.view(), down.view())) / (2.0 * h);
            worst = worst
                .max((gv - out_v.mean[k]).abs())
                .max((gs - out_s.mean[k]).abs());
        }
    }
    if worst > 1e-6 {
        failures.push(format!("gradient error {worst:.1e}"));
    }

    // assignment outputs stay on the simplex under extreme fields
    for scale in [1e-300, 1.0, 1e6, 1e300] {
        for _ in 0..50 {
            let r = rng.random_range(2..12);
            let b = Array1::from_shape_fn(r, |_| rng.random_range(-1.0..1.0) * scale);
            let a = Array2::from_diag(&Array1::from_shape_fn(r, |_| rng.random_range(0.0..1e6)));
            let p = f_s(a.view(), b.view()).mean;
            if !(p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
                && (p.sum() - 1.0).abs() < 1e-12)
            {
                failures.push(format!("simplex violated at scale {scale:e}"));
            }
        }
    }

    // one matrix sweep keeps the symmetric ansatz
    let frob = |a: &Array2<f64>| a.mapv(|v| v * v).sum().sqrt();
    for b_s in [0.1, 0.5] {
        let order = ScalarOrder::from_b_s(b_s, 4.0, 2.0, 3).to_order_params(3);
        let step = se_matrix_step(&order, 4.0, 2.0, 200_000, 3)?;
        let (dv, ds) = step.order.ansatz_residual();
        if dv > 3.0 * frob(&step.std_error_v) || ds > 3.0 * frob(&step.std_error_s) {
            failures.push(format!(
                "ansatz residual ({dv:.1e}, {ds:.1e}) at b_s = {b_s}"
            ));
        }
    }

    // the Bethe free energy is flat in b_s at the fixed point
    let (r, rho, alpha) = (2, 2.0, 2.0);
    let fp = se_fixed_point(SeInit::Informative, rho, alpha, r, &SeConfig::default())?;
    let at = ScalarOrder::from_b_s(fp.b_star, rho, alpha, r);
    let dh = 1e-3;
    let mut slopes = Vec::new();
    for seed in 0..8 {
        let phi = |b: f64| {
            bethe_free_energy(
                &ScalarOrder { b_s: b, ..at }.to_order_params(r),
                rho,
                alpha,
                50_000,
                seed,
            )
        };
        slopes.push((phi(at.b_s + dh)?.value - phi(at.b_s - dh)?.value) / (2.0 * dh));
    }
    let k = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / k;
    let err = (slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0) / k).sqrt();
    if mean.abs() > 5.0 * err + 1e-3 {
        failures.push(format!("Bethe slope {mean:.2e} +- {err:.1e}"));
    }

    // overlap does not depend on how the estimate is labelled
    for _ in 0..20 {
        let r = rng.random_range(2..8);
        let truth = Labels::new((0..300).map(|_| rng.random_range(0..r)).collect(), r)?;
        let est = Labels::new(
            truth
                .as_slice()
                .iter()
                .map(|&l| {
                    if rng.random_bool(0.3) {
                        rng.random_range(0..r)
                    } else {
                        l
                    }
                })
                .collect(),
            r,
        )?;
        let mut perm: Vec<usize> = (0..r).collect();
        for i in (1..r).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let (x, y) = (
            overlap_score(&est, &truth)?,
            overlap_score(&est.permuted(&perm), &truth)?,
        );
        if (x.overlap - y.overlap).abs() > 1e-12 {
            failures.push(format!(
                "overlap {} vs {} after relabelling",
                x.overlap, y.overlap
            ));
        }
    }

    let detail = if failures.is_empty() {
        format!("gradients within {worst:.1e}, simplex, ansatz, Bethe slope {mean:.1e} +- {err:.1e}, relabelling")
    } else {
        failures.join("; ")
    };
    Ok((failures.is_empty(), detail))
}
