//! One-dimensional quadrature.

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Cumulative Simpson integral over a nonuniform grid where each panel
/// `[xs[i], xs[i + 1]]` also has its midpoint value `mids[i]`. Returns
/// `out[i] = integral from xs[0] to xs[i]`.
pub fn cumulative_simpson(xs: &[f64], ys: &[f64], mids: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(mids.len() + 1, xs.len().max(1));
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    if !xs.is_empty() {
        out.push(0.0);
    }
    for i in 0..mids.len() {
        acc += (xs[i + 1] - xs[i]) / 6.0 * (ys[i] + 4.0 * mids[i] + ys[i + 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_known_integrals() {
        assert_abs_diff_eq!(
            adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-12),
            2.0,
            epsilon = 1e-10
        );
        let gauss = adaptive_simpson(|u| (-0.5 * u * u).exp(), -12.0, 12.0, 1e-13);
        assert_abs_diff_eq!(gauss, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn cumulative_is_exact_for_cubics() {
        let xs = [0.0, 0.3, 1.0, 2.5];
        let f = |x: f64| x * x * x - x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mids: Vec<f64> = xs.windows(2).map(|w| f(0.5 * (w[0] + w[1]))).collect();
        let c = cumulative_simpson(&xs, &ys, &mids);
        for (x, ci) in xs.iter().zip(&c) {
            assert_abs_diff_eq!(*ci, x.powi(4) / 4.0 - x * x / 2.0, epsilon = 1e-12);
        }
    }
}
