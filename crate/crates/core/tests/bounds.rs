//! Cross-strike and cross-variant properties of the primal-dual bounds.

mod common;

use roughsig::calibrate::EngineParams;
use roughsig::engine::heston::simulate_heston;
use roughsig::engine::PathEnsemble;
use roughsig::market::CpFlag;
use roughsig::pricing::{price_with_all_variants, ExerciseGrid, PricingConfig, RegressorKind};

fn ensembles(m: usize) -> (PathEnsemble, PathEnsemble, PathEnsemble) {
    let params = EngineParams::new(-0.7, 0.3, 0.04, 2.0, 0.04, 0.045);
    let t = 10.0 / 252.0;
    (
        simulate_heston(&params, 100.0, t, m, 10, 900).unwrap(),
        simulate_heston(&params, 100.0, t, m, 10, 901).unwrap(),
        simulate_heston(&params, 100.0, t, m, 10, 902).unwrap(),
    )
}

#[test]
fn american_call_without_dividends_prices_like_european() {
    // Early exercise is never optimal for a call on a non-dividend asset, so
    // the learned rule should hold to maturity and both bounds should sit at
    // the European value.
    let (primal, dual, eval) = ensembles(1 << 12);
    let grid = ExerciseGrid::daily(&eval);
    let cfg = PricingConfig {
        dual_iters: 60,
        ..PricingConfig::default()
    };
    let strike = 100.0;
    let results = price_with_all_variants(
        &primal,
        &dual,
        &eval,
        &grid,
        strike,
        CpFlag::Call,
        1.0,
        0.045,
        &[RegressorKind::LinearSignature],
        &cfg,
    )
    .unwrap();
    let b = &results[0].bounds;

    let t = eval.maturity();
    let disc = (-0.045 * t).exp();
    let payoffs: Vec<f64> = (0..eval.paths())
        .map(|p| disc * (eval.asset_at(p, eval.steps()) - strike).max(0.0))
        .collect();
    let (euro, euro_se) = roughsig::linalg::mean_and_se(&payoffs);

    assert!(
        (b.lower - euro).abs() <= 3.0 * (b.lower_se + euro_se),
        "call lower {} vs European {euro}",
        b.lower
    );
    assert!(
        b.upper + 3.0 * b.upper_se >= euro - 3.0 * euro_se,
        "call upper {} below European {euro}",
        b.upper
    );
    assert!(b.upper + 3.0 * b.upper_se >= b.lower - 3.0 * b.lower_se);
}

#[test]
fn put_lower_bound_is_monotone_in_strike() {
    // Common random numbers: the same three ensembles price a 3-strike ladder.
    let (primal, dual, eval) = ensembles(1 << 11);
    let grid = ExerciseGrid::daily(&eval);
    let cfg = PricingConfig {
        dual_iters: 40,
        ..PricingConfig::default()
    };
    let mut lowers = Vec::new();
    for strike in [90.0, 100.0, 110.0] {
        let results = price_with_all_variants(
            &primal,
            &dual,
            &eval,
            &grid,
            strike,
            CpFlag::Put,
            1.0,
            0.045,
            &[RegressorKind::LinearSignature],
            &cfg,
        )
        .unwrap();
        lowers.push(results[0].bounds.lower);
    }
    assert!(
        lowers[0] <= lowers[1] && lowers[1] <= lowers[2],
        "lower bounds not monotone in strike: {lowers:?}"
    );
}

#[test]
fn fitted_dual_beats_zero_control_within_noise_on_eval_paths() {
    let (primal, dual, eval) = ensembles(1 << 12);
    let grid = ExerciseGrid::daily(&eval);
    let cfg = PricingConfig {
        dual_iters: 100,
        ..PricingConfig::default()
    };
    let results = price_with_all_variants(
        &primal,
        &dual,
        &eval,
        &grid,
        100.0,
        CpFlag::Put,
        1.0,
        0.045,
        &[RegressorKind::LinearSignature],
        &cfg,
    )
    .unwrap();
    let fitted_upper = results[0].bounds.upper;
    let upper_se = results[0].bounds.upper_se;
    let (zero_upper, zero_se) =
        roughsig::pricing::dual_upper_bound_zero_control(&eval, &grid, 100.0, CpFlag::Put, 0.045);
    assert!(
        fitted_upper <= zero_upper + 3.0 * (upper_se + zero_se),
        "fitted upper {fitted_upper} above zero-control {zero_upper} beyond noise"
    );
    // On this fixture the control genuinely tightens the bound.
    assert!(
        fitted_upper < zero_upper,
        "control did not tighten: {fitted_upper} vs {zero_upper}"
    );
}

#[test]
fn all_variants_bracket_a_smooth_reference() {
    // American ATM put must be worth at least its European counterpart and
    // no more than the zero-control dual.
    let (primal, dual, eval) = ensembles(1 << 12);
    let grid = ExerciseGrid::daily(&eval);
    let cfg = PricingConfig {
        dual_iters: 60,
        mlp: roughsig::mlp::MlpConfig {
            epochs: 15,
            ..Default::default()
        },
        ..PricingConfig::default()
    };
    let results = price_with_all_variants(
        &primal,
        &dual,
        &eval,
        &grid,
        100.0,
        CpFlag::Put,
        1.0,
        0.045,
        &RegressorKind::all(),
        &cfg,
    )
    .unwrap();
    let (zero_upper, _) =
        roughsig::pricing::dual_upper_bound_zero_control(&eval, &grid, 100.0, CpFlag::Put, 0.045);
    for r in &results {
        let b = &r.bounds;
        assert!(b.lower > 0.0, "{}: lower bound vanished", r.kind.label());
        assert!(
            b.upper <= zero_upper + 3.0 * b.upper_se,
            "{}: upper {} above trivial bound {}",
            r.kind.label(),
            b.upper,
            zero_upper
        );
        assert!(b.gap_pct.is_some());
    }
}
