//! Thresholds and phases of the clustering problem.
//!
//! A nonzero fixed point `b_s = M_r(x)` of the scalar recursion exists at
//! exactly one signal strength `rho(x)`, so every threshold is read off the
//! curve `x -> rho(x)`: the spinodal is its minimum, and the
//! information-theoretic threshold is where the free-energy gap changes sign
//! on the branch past that minimum.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::cumulative_simpson;
use crate::se::{free_energy_gap_from_parts, CalM, CalMEstimate};

/// Points of the logarithmic `x` grid.
pub const GRID_POINTS: usize = 200;
/// Relative width at which threshold bracketing stops.
pub const X_RELATIVE_TOL: f64 = 1e-7;

pub fn rho_c(r: usize, alpha: f64) -> f64 {
    r as f64 / alpha.sqrt()
}

pub fn r_c(alpha: f64) -> f64 {
    4.0 + 2.0 * alpha.sqrt()
}

/// Whether the transition at `(r, alpha)` is first order.
pub fn is_first_order(r: usize, alpha: f64) -> bool {
    r as f64 > r_c(alpha)
}

/// The signal strength at which `b_s = calm_value = M_r(x)` is a fixed point.
pub fn rho_of_x(x: f64, r: usize, alpha: f64, calm_value: f64) -> Result<f64> {
    if !(calm_value > 0.0) {
        return Err(invalid(format!(
            "M_r(x) must be positive, got {calm_value}"
        )));
    }
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    let h = x / (2.0 * r as f64);
    Ok(h + (h * h + x / (alpha * calm_value)).sqrt())
}

/// `d rho / d M` at fixed `x`, for propagating Monte Carlo error.
fn rho_sensitivity(x: f64, r: usize, alpha: f64, m: f64) -> f64 {
    let h = x / (2.0 * r as f64);
    let d = h * h + x / (alpha * m);
    -x / (alpha * m * m) / (2.0 * d.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Easy,
    Hard,
    Impossible,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Easy => "EASY",
            Phase::Hard => "HARD",
            Phase::Impossible => "IMPOSSIBLE",
        })
    }
}

/// One point of the `x` scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseScanPoint {
    pub x: f64,
    pub rho_of_x: f64,
    pub calm: f64,
    pub calm_std_error: f64,
    /// `phi_B(0) - phi_B(M_r(x))` at `rho = rho_of_x`.
    pub gap: f64,
    /// `x / (r log r)`.
    pub beta: f64,
}

/// `M_r` on a logarithmic grid with panel midpoints, plus the cumulative
/// integral of `M_r` needed by the free-energy gap.
#[derive(Debug, Clone)]
pub struct PhaseScan {
    pub r: usize,
    pub alpha: f64,
    pub calm: CalM,
    pub points: Vec<PhaseScanPoint>,
    integral: Vec<f64>,
    error_integral: Vec<f64>,
    /// Multiple of the standard error added to every `M_r` value; nonzero
    /// only when probing threshold sensitivity.
    shift: f64,
}

/// Logarithmic grid from `10^-2 r` to `10^3 r log r`.
pub fn x_grid(r: usize, points: usize) -> Vec<f64> {
    let rf = r as f64;
    let lo = (1e-2 * rf).ln();
    let hi = (1e3 * rf * rf.ln().max(1.0)).ln();
    (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

impl PhaseScan {
    pub fn new(r: usize, alpha: f64, calm: CalM) -> Result<Self> {
        Self::with_grid(r, alpha, calm, x_grid(r, GRID_POINTS))
    }

    pub fn with_grid(r: usize, alpha: f64, calm: CalM, xs: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        if calm.r != r {
            return Err(invalid("M_r evaluator built for a different r"));
        }
        if xs.len() < 3 || xs[0] <= 0.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(
                "x grid must be positive, increasing and have at least 3 points",
            ));
        }
        // Evaluate grid and midpoints in one parallel sweep; cal_m memoizes.
        let mut all: Vec<f64> = vec![0.5 * xs[0]];
        all.extend(xs.iter().copied());
        all.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        {
            use rayon::prelude::*;
            all.par_iter()
                .map(|&x| calm.eval(x).map(|_| ()))
                .collect::<Result<Vec<()>>>()?;
        }
        let at = |x: f64| calm.eval(x);
        let ys: Vec<CalMEstimate> = xs.iter().map(|&x| at(x)).collect::<Result<_>>()?;
        let mids: Vec<CalMEstimate> = xs
            .windows(2)
            .map(|w| at(0.5 * (w[0] + w[1])))
            .collect::<Result<_>>()?;
        let head = at(0.5 * xs[0])?;

        let head_int = xs[0] / 6.0 * (4.0 * head.value + ys[0].value);
        let head_err = xs[0] / 6.0 * (4.0 * head.std_error + ys[0].std_error);
        let vals: Vec<f64> = ys.iter().map(|e| e.value).collect();
        let mvals: Vec<f64> = mids.iter().map(|e| e.value).collect();
        let errs: Vec<f64> = ys.iter().map(|e| e.std_error).collect();
        let merrs: Vec<f64> = mids.iter().map(|e| e.std_error).collect();
        let integral: Vec<f64> = cumulative_simpson(&xs, &vals, &mvals)
            .into_iter()
            .map(|c| c + head_int)
            .collect();
        let error_integral: Vec<f64> = cumulative_simpson(&xs, &errs, &merrs)
            .into_iter()
            .map(|c| c + head_err)
            .collect();

        let mut scan = Self {
            r,
            alpha,
            calm,
            points: Vec::new(),
            integral,
            error_integral,
            shift: 0.0,
        };
        scan.points = scan.build_points(&xs)?;
        Ok(scan)
    }

    fn build_points(&self, xs: &[f64]) -> Result<Vec<PhaseScanPoint>> {
        let rf = self.r as f64;
        let log_r = rf * rf.ln();
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let est = self.calm.eval(x)?;
                let m = self.shifted(&est);
                let rho = rho_of_x(x, self.r, self.alpha, m)?;
                let int = self.integral[i] + self.shift * self.error_integral[i];
                Ok(PhaseScanPoint {
                    x,
                    rho_of_x: rho,
                    calm: m,
                    calm_std_error: est.std_error,
                    gap: free_energy_gap_from_parts(x, m, int, rho, self.alpha, self.r),
                    beta: x / log_r,
                })
            })
            .collect()
    }

    fn shifted(&self, est: &CalMEstimate) -> f64 {
        (est.value + self.shift * est.std_error).clamp(f64::MIN_POSITIVE, 1.0)
    }

    /// A copy with every `M_r` value moved by `k` standard errors.
    pub fn perturbed(&self, k: f64) -> Result<Self> {
        let mut out = self.clone();
        out.shift = k;
        let xs: Vec<f64> = self.points.iter().map(|p| p.x).collect();
        out.points = out.build_points(&xs)?;
        Ok(out)
    }

    fn m_at(&self, x: f64) -> Result<f64> {
        Ok(self.shifted(&self.calm.eval(x)?))
    }

    pub fn rho_at(&self, x: f64) -> Result<f64> {
        rho_of_x(x, self.r, self.alpha, self.m_at(x)?)
    }

    /// `int_0^x M_r` for any `x` inside the grid.
    fn integral_to(&self, x: f64) -> Result<f64> {
        let i = self.points.partition_point(|p| p.x <= x).saturating_sub(1);
        let x0 = self.points[i].x;
        let base = self.integral[i] + self.shift * self.error_integral[i];
        if x == x0 {
            return Ok(base);
        }
        let y0 = self.points[i].calm;
        let ym = self.m_at(0.5 * (x0 + x))?;
        let y1 = self.m_at(x)?;
        Ok(base + (x - x0) / 6.0 * (y0 + 4.0 * ym + y1))
    }

    /// Free-energy gap along the fixed-point curve at `x`.
    pub fn gap_at(&self, x: f64) -> Result<f64> {
        let m = self.m_at(x)?;
        let rho = rho_of_x(x, self.r, self.alpha, m)?;
        Ok(free_energy_gap_from_parts(
            x,
            m,
            self.integral_to(x)?,
            rho,
            self.alpha,
            self.r,
        ))
    }

    /// Index of the grid point with the smallest `rho(x)`.
    pub fn argmin_index(&self) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.rho_of_x.total_cmp(&b.1.rho_of_x))
            .map(|(i, _)| i)
            .expect("non-empty scan")
    }

    /// Golden-section refinement of the minimum of `rho(x)` in `log x`.
    pub fn minimize_rho(&self) -> Result<(f64, f64)> {
        let i = self.argmin_index();
        let lo = self.points[i.saturating_sub(1)].x.ln();
        let hi = self.points[(i + 1).min(self.points.len() - 1)].x.ln();
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let f = |t: f64| self.rho_at(t.exp());
        let (mut a, mut b) = (lo, hi);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = f(c)?;
        let mut fd = f(d)?;
        while (b - a) > X_RELATIVE_TOL {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d)?;
            }
        }
        let x = (0.5 * (a + b)).exp();
        let grid_best = self.points[i];
        let rho = self.rho_at(x)?;
        if grid_best.rho_of_x < rho {
            return Ok((grid_best.x, grid_best.rho_of_x));
        }
        Ok((x, rho))
    }

    /// Root of the gap on the branch past the minimum of `rho(x)`, by
    /// bisection in `log x`. Returns `(x, rho)`.
    pub fn gap_root(&self) -> Result<(f64, f64)> {
        let (x_sp, _) = self.minimize_rho()?;
        let start = self.points.partition_point(|p| p.x <= x_sp);
        let mut lo = x_sp;
        let mut g_lo = self.gap_at(lo)?;
        let mut found = None;
        if g_lo < 0.0 {
            for p in &self.points[start..] {
                if p.gap >= 0.0 {
                    found = Some(p.x);
                    break;
                }
                lo = p.x;
                g_lo = p.gap;
            }
        }
        let Some(mut hi) = found else {
            return Err(Error::NoSignChange {
                scan: self.points.clone(),
            });
        };
        debug_assert!(g_lo < 0.0);
        while (hi / lo).ln() > X_RELATIVE_TOL {
            let mid = (lo * hi).sqrt();
            if self.gap_at(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = (lo * hi).sqrt();
        Ok((x, self.rho_at(x)?))
    }
}

/// A threshold with its Monte Carlo uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    pub std_error: f64,
    /// Location on the `x` axis.
    pub x: f64,
}

fn require_first_order(r: usize, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !is_first_order(r, alpha) {
        return Err(Error::NotFirstOrder { r, r_c: r_c(alpha) });
    }
    Ok(())
}

/// Spinodal threshold from an existing scan. The error is propagated by the
/// delta method through `rho(x)` at the minimizer.
pub fn rho_sp_from_scan(scan: &PhaseScan) -> Result<Threshold> {
    require_first_order(scan.r, scan.alpha)?;
    let (x, rho) = scan.minimize_rho()?;
    let est = scan.calm.eval(x)?;
    let err = (rho_sensitivity(x, scan.r, scan.alpha, est.value) * est.std_error).abs();
    Ok(Threshold {
        value: rho,
        std_error: err,
        x,
    })
}

/// Information-theoretic threshold from an existing scan. The error is the
/// larger shift of the root when every `M_r` value moves by one standard
/// error either way.
pub fn rho_it_from_scan(scan: &PhaseScan) -> Result<Threshold> {
    require_first_order(scan.r, scan.alpha)?;
    let (x, rho) = scan.gap_root()?;
    let mut err: f64 = 0.0;
    for k in [-1.0, 1.0] {
        if let Ok((_, shifted)) = scan.perturbed(k)?.gap_root() {
            err = err.max((shifted - rho).abs());
        }
    }
    Ok(Threshold {
        value: rho,
        std_error: err,
        x,
    })
}

pub fn rho_sp(r: usize, alpha: f64, calm: CalM) -> Result<Threshold> {
    require_first_order(r, alpha)?;
    rho_sp_from_scan(&PhaseScan::new(r, alpha, calm)?)
}

pub fn rho_it(r: usize, alpha: f64, calm: CalM) -> Result<Threshold> {
    require_first_order(r, alpha)?;
    rho_it_from_scan(&PhaseScan::new(r, alpha, calm)?)
}

/// Thresholds at one `(r, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub r: usize,
    pub alpha: f64,
    pub rho_c: f64,
    pub rho_sp: Option<Threshold>,
    pub rho_it: Option<Threshold>,
}

impl PhasePoint {
    pub fn compute(r: usize, alpha: f64, calm: CalM) -> Result<Self> {
        if r < 2 || !(alpha > 0.0) {
            return Err(invalid(format!(
                "need r >= 2 and alpha > 0, got r = {r}, alpha = {alpha}"
            )));
        }
        let (rho_sp, rho_it) = if is_first_order(r, alpha) {
            let scan = PhaseScan::new(r, alpha, calm)?;
            (
                Some(rho_sp_from_scan(&scan)?),
                Some(rho_it_from_scan(&scan)?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            r,
            alpha,
            rho_c: rho_c(r, alpha),
            rho_sp,
            rho_it,
        })
    }

    pub fn phase_at(&self, rho: f64) -> Phase {
        if rho > self.rho_c {
            return Phase::Easy;
        }
        match self.rho_it {
            Some(t) if rho > t.value => Phase::Hard,
            _ => Phase::Impossible,
        }
    }
}

pub fn classify(rho: f64, r: usize, alpha: f64, calm: CalM) -> Result<Phase> {
    if !(rho >= 0.0) {
        return Err(invalid(format!("rho must be >= 0, got {rho}")));
    }
    if rho > rho_c(r, alpha) {
        return Ok(Phase::Easy);
    }
    Ok(PhasePoint::compute(r, alpha, calm)?.phase_at(rho))
}

/// `M_r(beta r log r)` and `rho(beta r log r) / sqrt(r log r)` against their
/// large-`r` limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticPoint {
    pub beta: f64,
    pub r: usize,
    pub x: f64,
    pub calm: CalMEstimate,
    pub rho_ratio: f64,
    /// `sqrt(beta / alpha)`, the limit of `rho_ratio` for `beta >= 2`.
    pub rho_ratio_limit: f64,
}

pub fn asymptotic_limits(beta: f64, alpha: f64, calm: CalM) -> Result<AsymptoticPoint> {
    if !(beta > 0.0) || !(alpha > 0.0) {
        return Err(invalid("beta and alpha must be positive"));
    }
    let r = calm.r;
    let rf = r as f64;
    let x = beta * rf * rf.ln();
    let est = calm.eval(x)?;
    let rho_ratio = rho_of_x(x, r, alpha, est.value)? / (rf * rf.ln()).sqrt();
    Ok(AsymptoticPoint {
        beta,
        r,
        x,
        calm: est,
        rho_ratio,
        rho_ratio_limit: (beta / alpha).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_thresholds() {
        assert_abs_diff_eq!(rho_c(2, 2.0), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(rho_c(20, 2.0), 14.142135623730951, epsilon = 1e-12);
        assert_eq!(rho_c(3, 1.0), 3.0);
        assert_abs_diff_eq!(r_c(2.0), 6.82842712474619, epsilon = 1e-12);
        assert_eq!(r_c(1.0), 6.0);
        assert_eq!(r_c(4.0), 8.0);
        assert!(!is_first_order(8, 4.0));
        assert!(is_first_order(7, 2.0));
    }

    #[test]
    fn rho_of_x_solves_the_fixed_point_relation() {
        let (x, r, alpha, m) = (37.0, 9, 1.5, 0.4);
        let rho = rho_of_x(x, r, alpha, m).unwrap();
        let back = m * rho * rho / (1.0 / alpha + rho * m / r as f64);
        assert_abs_diff_eq!(back, x, epsilon = 1e-10);
        assert!(rho_of_x(1.0, 3, 1.0, 0.0).is_err());
    }

    #[test]
    fn sensitivity_matches_finite_difference() {
        let (x, r, alpha, m) = (12.0, 20, 2.0, 0.3);
        let h = 1e-6;
        let fd = (rho_of_x(x, r, alpha, m + h).unwrap() - rho_of_x(x, r, alpha, m - h).unwrap())
            / (2.0 * h);
        assert_abs_diff_eq!(rho_sensitivity(x, r, alpha, m), fd, epsilon = 1e-6);
    }

    #[test]
    fn second_order_regime_is_rejected() {
        let calm = CalM::new(6, 100, 0).unwrap();
        assert!(matches!(
            rho_sp(6, 2.0, calm),
            Err(Error::NotFirstOrder { r: 6, .. })
        ));
        assert!(matches!(
            rho_it(6, 2.0, calm),
            Err(Error::NotFirstOrder { .. })
        ));
    }

    #[test]
    fn phase_rules() {
        let p = PhasePoint {
            r: 20,
            alpha: 2.0,
            rho_c: rho_c(20, 2.0),
            rho_sp: Some(Threshold {
                value: 11.9,
                std_error: 0.0,
                x: 1.0,
            }),
            rho_it: Some(Threshold {
                value: 12.1,
                std_error: 0.0,
                x: 1.0,
            }),
        };
        assert_eq!(p.phase_at(15.0), Phase::Easy);
        assert_eq!(p.phase_at(p.rho_c), Phase::Hard);
        assert_eq!(p.phase_at(13.0), Phase::Hard);
        assert_eq!(p.phase_at(12.0), Phase::Impossible);
        let two = PhasePoint {
            r: 2,
            alpha: 2.0,
            rho_c: rho_c(2, 2.0),
            rho_sp: None,
            rho_it: None,
        };
        assert_eq!(two.phase_at(2.0), Phase::Easy);
        assert_eq!(two.phase_at(1.0), Phase::Impossible);
    }
}
