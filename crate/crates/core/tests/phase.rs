//! Thresholds and phase classification.

use gmmamp::phase::{
    asymptotic_limits, classify, r_c, rho_c, rho_it, rho_of_x, rho_sp, Phase, PhasePoint, PhaseScan,
};
use gmmamp::se::CalM;
use gmmamp::Error;

#[test]
fn rho_of_x_tends_to_the_algorithmic_threshold() {
    for (r, alpha) in [(2, 2.0), (20, 2.0), (7, 0.5)] {
        let calm = CalM::new(r, 100_000, 0).unwrap();
        let x = 1e-4;
        let rho = rho_of_x(x, r, alpha, calm.eval(x).unwrap().value).unwrap();
        assert!((rho / rho_c(r, alpha) - 1.0).abs() < 1e-3, "r {r}: {rho}");
    }
}

#[test]
fn second_order_regime_has_no_metastable_branch() {
    let (r, alpha) = (5, 2.0);
    assert!((r as f64) < r_c(alpha));
    let calm = CalM::new(r, 20_000, 0).unwrap();
    assert!(matches!(
        rho_sp(r, alpha, calm),
        Err(Error::NotFirstOrder { .. })
    ));
    assert!(matches!(
        rho_it(r, alpha, calm),
        Err(Error::NotFirstOrder { .. })
    ));
    let scan = PhaseScan::new(r, alpha, calm).unwrap();
    // rho(x) never dips below rho_c, and the free-energy gap never turns
    assert!(scan
        .points
        .iter()
        .all(|p| p.rho_of_x > rho_c(r, alpha) * (1.0 - 1e-3)));
    assert!(matches!(scan.gap_root(), Err(Error::NoSignChange { .. })));

    let point = PhasePoint::compute(r, alpha, calm).unwrap();
    assert!(point.rho_sp.is_none() && point.rho_it.is_none());
    assert_eq!(point.phase_at(0.99 * point.rho_c), Phase::Impossible);
    assert_eq!(point.phase_at(1.01 * point.rho_c), Phase::Easy);
}

#[test]
fn first_order_thresholds_are_ordered_and_classify_consistently() {
    let (r, alpha) = (20, 2.0);
    let calm = CalM::new(r, 50_000, 0).unwrap();
    let p = PhasePoint::compute(r, alpha, calm).unwrap();
    let (sp, it) = (p.rho_sp.unwrap(), p.rho_it.unwrap());
    assert!(
        sp.value + 3.0 * sp.std_error < it.value - 3.0 * it.std_error,
        "{sp:?} {it:?}"
    );
    assert!(it.value < p.rho_c);
    assert!(sp.x < it.x, "the spinodal sits on the weaker branch");

    let mut last = Phase::Impossible;
    let rank = |ph: Phase| match ph {
        Phase::Impossible => 0,
        Phase::Hard => 1,
        Phase::Easy => 2,
    };
    for i in 0..=40 {
        let rho = 10.0 + 0.125 * i as f64;
        let ph = p.phase_at(rho);
        assert!(rank(ph) >= rank(last), "phase went backwards at rho {rho}");
        last = ph;
    }
    assert_eq!(classify(13.0, r, alpha, calm).unwrap(), Phase::Hard);
    assert_eq!(classify(11.0, r, alpha, calm).unwrap(), Phase::Impossible);
    assert_eq!(classify(15.0, r, alpha, calm).unwrap(), Phase::Easy);
}

#[test]
fn threshold_of_a_larger_mixture_sits_further_below_rho_c() {
    let alpha = 2.0;
    let ratio = |r: usize| {
        let calm = CalM::new(r, 20_000, 0).unwrap();
        rho_it(r, alpha, calm).unwrap().value / rho_c(r, alpha)
    };
    let (a, b) = (ratio(12), ratio(30));
    assert!(
        a < 1.0 && b < a,
        "rho_IT / rho_c: {a} at r = 12, {b} at r = 30"
    );
}

#[test]
fn overlap_map_sharpens_into_a_step_at_two_r_log_r() {
    let alpha = 2.0;
    let at = |beta: f64, r: usize| {
        let p = asymptotic_limits(beta, alpha, CalM::new(r, 20_000, 0).unwrap()).unwrap();
        (p.calm.value, p.calm.std_error)
    };
    let (mut above, mut below) = (0.0, 1.0);
    for r in [50, 200, 800] {
        let ((hi, e_hi), (lo, e_lo)) = (at(3.0, r), at(1.0, r));
        assert!(
            hi > above + 3.0 * e_hi && hi > 0.5,
            "r {r}: M(3 r log r) = {hi}"
        );
        assert!(
            lo < below - 3.0 * e_lo && lo < 0.5,
            "r {r}: M(r log r) = {lo}"
        );
        (above, below) = (hi, lo);
    }
}
