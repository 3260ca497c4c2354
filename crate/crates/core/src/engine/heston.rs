//! Heston engine, full-truncation Euler.
//!
//! The auxiliary variance process may dip below zero; drift and diffusion see
//! `max(v, 0)` and the stored path is the truncated value. The asset follows
//! log-Euler on the left-endpoint truncated variance, which keeps the
//! discounted asset an exact per-step martingale.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{fill_paths, grid, path_rng, validate_common, EngineError, EngineTag, PathEnsemble};
use crate::calibrate::EngineParams;

/// Simulates the Heston system on the daily grid.
pub fn simulate_heston(
    params: &EngineParams,
    spot: f64,
    maturity_years: f64,
    paths: usize,
    steps: usize,
    seed: u64,
) -> Result<PathEnsemble, EngineError> {
    validate_common(params, spot, maturity_years, paths, steps)?;

    let dt = maturity_years / steps as f64;
    let sqrt_dt = dt.sqrt();
    let (rho, eta, kappa, theta, v0, r) = (
        params.rho,
        params.eta,
        params.kappa,
        params.theta,
        params.v0,
        params.r,
    );
    let rho_perp = (1.0 - rho * rho).max(0.0).sqrt();

    let mut ensemble = PathEnsemble {
        n_paths: paths,
        n_steps: steps,
        asset: vec![0.0; paths * (steps + 1)],
        variance: vec![0.0; paths * (steps + 1)],
        dw: vec![0.0; paths * steps],
        grid: grid(maturity_years, steps),
        engine_tag: EngineTag::Heston,
        seed,
    };

    fill_paths(&mut ensemble, |p, asset, variance, dw| {
        let mut rng = path_rng(seed, p);
        let mut db = vec![0.0; steps];
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sqrt_dt * z;
        }
        for b in db.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *b = sqrt_dt * z;
        }

        asset[0] = spot;
        variance[0] = v0;
        let mut v_raw = v0;
        for t in 1..=steps {
            let v_plus = v_raw.max(0.0);
            let shock = v_plus.sqrt() * (rho * dw[t - 1] + rho_perp * db[t - 1]);
            asset[t] = asset[t - 1] * ((r - 0.5 * v_plus) * dt + shock).exp();
            v_raw += kappa * (theta - v_plus) * dt + eta * v_plus.sqrt() * dw[t - 1];
            variance[t] = v_raw.max(0.0);
        }
    });

    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mean_and_se;

    #[test]
    fn degenerate_sde_reduces_to_constant_variance() {
        // eta = 0, kappa = 0: variance frozen at v0, asset is exact GBM.
        let params = EngineParams::new(-0.5, 0.0, 0.09, 0.0, 0.09, 0.03);
        let e = simulate_heston(&params, 50.0, 0.5, 64, 16, 4).unwrap();
        for p in 0..e.paths() {
            for t in 0..=e.steps() {
                assert_eq!(e.variance_at(p, t), 0.09);
            }
        }
    }

    #[test]
    fn variance_mean_tracks_cir_closed_form() {
        // E[v_T] = theta + (v0 - theta) e^{-kappa T}
        let params = EngineParams::new(-0.3, 0.3, 0.09, 2.0, 0.04, 0.0);
        let t_years = 1.0;
        let steps = 64;
        let e = simulate_heston(&params, 100.0, t_years, 8192, steps, 13).unwrap();
        let expected = 0.04 + 0.05 * (-2.0f64).exp();
        let vs: Vec<f64> = (0..e.paths()).map(|p| e.variance_at(p, steps)).collect();
        let (mean, se) = mean_and_se(&vs);
        assert!(
            (mean - expected).abs() <= 4.0 * se,
            "E[v_T] = {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn truncation_keeps_stored_variance_non_negative() {
        // Feller badly violated: 2 kappa theta = 0.02 << eta^2 = 1.
        let params = EngineParams::new(-0.9, 1.0, 0.01, 1.0, 0.01, 0.0);
        let e = simulate_heston(&params, 100.0, 1.0, 512, 64, 99).unwrap();
        assert!(e.variance.iter().all(|v| *v >= 0.0));
        assert!(e.asset.iter().all(|x| *x > 0.0 && x.is_finite()));
    }
}
