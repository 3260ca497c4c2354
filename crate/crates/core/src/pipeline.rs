//! End-to-end batch pipeline: data -> Hurst -> forecast -> regime ->
//! calibration -> simulation -> signatures -> bounds -> report.
//!
//! Every stage is deterministic given the configuration and seeds; the JSON
//! report embeds both, so a re-run reproduces it byte for byte. Stage timings
//! are collected for the human-readable output but excluded from the JSON
//! surface to keep that guarantee.

use std::fs::File;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{
    default_heston_reversion, estimate_eta, estimate_rho, estimate_xi0, EngineParams,
    DEFAULT_CALIB_WINDOW, DEFAULT_KAPPA, DT,
};
use crate::dates::Date;
use crate::engine::{simulate, Compensator, EngineTag, HurstPath, PathEnsemble};
use crate::forecast::{
    predict_path, regime_for_threshold, train_horizon_models, ForecastPath, GbtConfig, Regime,
    DEFAULT_LAGS,
};
use crate::hurst::{rolling_hurst, DEFAULT_WINDOW};
use crate::market::{
    extract_atm_vol_series, load_price_series_with_stats, select_contract, CpFlag, IngestStats,
    OptionContract, PriceSeries, TRADING_DAYS_PER_YEAR,
};
use crate::mlp::MlpConfig;
use crate::pricing::{
    price_with_all_variants, ExerciseGrid, PricingConfig, RegressorKind, VariantResult,
};
use crate::signature::ChannelSelector;

const RFF_SEED_SALT: u64 = 0x5246_465f_5341;
const MLP_SEED_SALT: u64 = 0x4d4c_505f_5341;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
}

fn stage_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Which engine simulates the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    #[default]
    Auto,
    RBergomi,
    Heston,
}

impl EngineChoice {
    pub fn forced_regime(self) -> Option<Regime> {
        match self {
            EngineChoice::Auto => None,
            EngineChoice::RBergomi => Some(Regime::Rough),
            EngineChoice::Heston => Some(Regime::Smooth),
        }
    }
}

impl std::str::FromStr for EngineChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(EngineChoice::Auto),
            "rbergomi" => Ok(EngineChoice::RBergomi),
            "heston" => Ok(EngineChoice::Heston),
            other => Err(format!("unknown engine `{other}` (auto|rbergomi|heston)")),
        }
    }
}

/// Report rendering target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Table,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown output format `{other}` (json|table|csv)")),
        }
    }
}

/// Full pipeline configuration; defaults match the module interfaces and the
/// whole struct round-trips losslessly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub options_path: String,
    pub prices_path: String,
    pub ticker: String,
    pub quote_date: Date,
    pub dte: u32,
    pub cp_flag: CpFlag,

    pub hurst_window: usize,
    pub gbt: GbtConfig,
    pub forecast_lags: usize,
    /// Optional hysteresis threshold replacing the 0.5 regime boundary.
    pub rough_threshold: Option<f64>,

    pub calib_window: usize,
    pub kappa: f64,
    pub risk_free_rate: f64,
    pub dte_band: (u32, u32),

    pub paths: usize,
    pub engine: EngineChoice,
    pub seed: u64,
    pub compensator: Compensator,

    pub sig_channels: ChannelSelector,
    pub sig_depth: usize,

    pub rff_dim: usize,
    pub rff_gamma: Option<f64>,
    pub ridge_lambda: f64,

    pub regressors: Vec<RegressorKind>,
    pub dual_iters: usize,
    pub mlp_width: usize,
    pub mlp_epochs: usize,

    pub output: OutputFormat,
}

impl PipelineConfig {
    pub fn new(
        options_path: impl Into<String>,
        prices_path: impl Into<String>,
        ticker: impl Into<String>,
        quote_date: Date,
        dte: u32,
        cp_flag: CpFlag,
    ) -> Self {
        PipelineConfig {
            options_path: options_path.into(),
            prices_path: prices_path.into(),
            ticker: ticker.into(),
            quote_date,
            dte,
            cp_flag,
            hurst_window: DEFAULT_WINDOW,
            gbt: GbtConfig::default(),
            forecast_lags: DEFAULT_LAGS,
            rough_threshold: None,
            calib_window: DEFAULT_CALIB_WINDOW,
            kappa: DEFAULT_KAPPA,
            risk_free_rate: 0.045,
            dte_band: (1, 60),
            paths: 1 << 15,
            engine: EngineChoice::Auto,
            seed: 42,
            compensator: Compensator::Exact,
            sig_channels: ChannelSelector::default(),
            sig_depth: 3,
            rff_dim: crate::rff::DEFAULT_RFF_DIM,
            rff_gamma: None,
            ridge_lambda: crate::rff::DEFAULT_RIDGE_LAMBDA,
            regressors: RegressorKind::all().to_vec(),
            dual_iters: 200,
            mlp_width: 32,
            mlp_epochs: 40,
            output: OutputFormat::Json,
        }
    }

    fn pricing_config(&self) -> PricingConfig {
        PricingConfig {
            channels: self.sig_channels,
            ridge_lambda: self.ridge_lambda,
            rff_dim: self.rff_dim,
            rff_gamma: self.rff_gamma,
            rff_seed: self.seed ^ RFF_SEED_SALT,
            mlp: MlpConfig {
                hidden: (self.mlp_width, self.mlp_width),
                epochs: self.mlp_epochs,
                seed: self.seed ^ MLP_SEED_SALT,
                ..MlpConfig::default()
            },
            dual_iters: self.dual_iters,
            dual_step_scale: 1.0,
            itm_min: 32,
        }
    }
}

/// Forecast-accuracy diagnostics against realized Hurst values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDiagnostics {
    pub mae: f64,
    pub mse: f64,
    pub realized: Vec<f64>,
}

/// Mean absolute and mean squared forecast error.
pub fn forecast_diagnostics(
    forecast: &[f64],
    realized: &[f64],
) -> Result<(f64, f64), PipelineError> {
    if forecast.len() != realized.len() {
        return Err(PipelineError::Stage {
            stage: "diagnostics",
            message: format!("length mismatch: {} vs {}", forecast.len(), realized.len()),
        });
    }
    let n = forecast.len().max(1) as f64;
    let mae = forecast
        .iter()
        .zip(realized)
        .map(|(f, r)| (f - r).abs())
        .sum::<f64>()
        / n;
    let mse = forecast
        .iter()
        .zip(realized)
        .map(|(f, r)| (f - r) * (f - r))
        .sum::<f64>()
        / n;
    Ok((mae, mse))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTriple {
    pub primal: u64,
    pub dual: u64,
    pub eval: u64,
}

/// Self-contained run record; re-running with the embedded config and seeds
/// reproduces every number bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub contract: OptionContract,
    pub spot: f64,
    pub warnings: IngestStats,
    pub hurst_latest: f64,
    pub hurst_series_len: usize,
    pub forecast: ForecastPath,
    pub mean_hurst: f64,
    pub regime: Regime,
    pub engine_tag: EngineTag,
    pub params: EngineParams,
    pub seeds: SeedTriple,
    pub variants: Vec<VariantResult>,
    pub diagnostics: Option<ForecastDiagnostics>,
    /// Wall-clock stage timings; excluded from JSON so identical runs emit
    /// identical bytes.
    #[serde(skip)]
    pub timings_ms: Vec<(String, f64)>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

struct StageClock {
    timings: Vec<(String, f64)>,
    last: Instant,
}

impl StageClock {
    fn new() -> Self {
        StageClock {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push((
            stage.to_string(),
            now.duration_since(self.last).as_secs_f64() * 1e3,
        ));
        self.last = now;
    }
}

/// Joined per-date (log return, vol change, log-vol change) triples over the
/// common dates of the two series, oldest first.
fn joined_calibration_series(
    prices: &PriceSeries,
    vol_dates: &[Date],
    vols: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut common: Vec<(f64, f64)> = Vec::new();
    for (d, v) in vol_dates.iter().zip(vols) {
        if let Ok(i) = prices.dates.binary_search(d) {
            common.push((prices.closes[i], *v));
        }
    }
    let mut returns = Vec::new();
    let mut vol_changes = Vec::new();
    let mut log_vol_changes = Vec::new();
    for w in common.windows(2) {
        let (c0, v0) = w[0];
        let (c1, v1) = w[1];
        returns.push((c1 / c0).ln());
        vol_changes.push(v1 - v0);
        if v0 > 0.0 && v1 > 0.0 {
            log_vol_changes.push((v1 / v0).ln());
        }
    }
    (returns, vol_changes, log_vol_changes)
}

/// Executes every stage in order and assembles the report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    if config.sig_depth != 3 {
        return Err(PipelineError::Stage {
            stage: "config",
            message: format!(
                "signature depth {} unsupported; only depth 3",
                config.sig_depth
            ),
        });
    }
    if config.dte < 1 || config.paths == 0 {
        return Err(PipelineError::Stage {
            stage: "config",
            message: "dte and paths must be at least 1".into(),
        });
    }
    let mut clock = StageClock::new();

    // Data ingestion.
    let prices_file = File::open(&config.prices_path).map_err(stage_err("load-prices"))?;
    let (prices, warnings) = load_price_series_with_stats(prices_file, &config.ticker)
        .map_err(stage_err("load-prices"))?;
    let options_file = File::open(&config.options_path).map_err(stage_err("select-contract"))?;
    let contract = select_contract(
        options_file,
        &config.ticker,
        config.quote_date,
        config.dte,
        config.cp_flag,
    )
    .map_err(stage_err("select-contract"))?;
    let options_file = File::open(&config.options_path).map_err(stage_err("atm-vols"))?;
    let atm = extract_atm_vol_series(
        options_file,
        &config.ticker,
        config.dte_band.0..=config.dte_band.1,
    )
    .map_err(stage_err("atm-vols"))?;
    clock.lap("ingest");

    let spot_idx = prices
        .position_at_or_before(config.quote_date)
        .ok_or_else(|| PipelineError::Stage {
            stage: "load-prices",
            message: format!("no close at or before {}", config.quote_date),
        })?;
    let spot = prices.closes[spot_idx];

    // Rolling Hurst estimation on returns realized up to the quote date
    // (return i is realized on price date i + 1, so the slice is lookahead-free).
    let usable_returns = &prices.log_returns[..spot_idx];
    let mut hurst_series =
        rolling_hurst(usable_returns, config.hurst_window).map_err(stage_err("hurst"))?;
    hurst_series.attach_dates(&prices.dates[..=spot_idx]);
    clock.lap("hurst");

    // Multi-horizon forecast and regime decision.
    let horizon = config.dte as usize;
    let ensemble_models =
        train_horizon_models(&hurst_series, horizon, config.forecast_lags, &config.gbt)
            .map_err(stage_err("forecast"))?;
    let lags_start = hurst_series.values.len() - config.forecast_lags;
    let forecast = predict_path(&ensemble_models, &hurst_series.values[lags_start..])
        .map_err(stage_err("forecast"))?;
    let threshold = config.rough_threshold.unwrap_or(0.5);
    let regime = config
        .engine
        .forced_regime()
        .unwrap_or_else(|| regime_for_threshold(forecast.mean, threshold));
    clock.lap("forecast");

    // Calibration from the joined price / ATM-vol history.
    let hurst_latest = hurst_series.latest().expect("non-empty by construction");
    let (vol_dates, vols) = atm.up_to(config.quote_date);
    let (joined_returns, vol_changes, log_vol_changes) =
        joined_calibration_series(&prices, vol_dates, vols);
    let window = config.calib_window;
    let tail = |v: &[f64]| -> Vec<f64> { v[v.len().saturating_sub(window)..].to_vec() };
    let rho = estimate_rho(&tail(&joined_returns), &tail(&vol_changes))
        .map_err(stage_err("calibrate"))?;
    let eta_h = hurst_latest.clamp(1e-3, 1.0 - 1e-3);
    let eta = estimate_eta(&tail(&log_vol_changes), eta_h, DT).map_err(stage_err("calibrate"))?;
    let xi0 = estimate_xi0(contract.implied_vol);
    let (kappa, theta) = default_heston_reversion(contract.implied_vol, config.kappa);
    let params = EngineParams::new(rho, eta, xi0, kappa, theta, config.risk_free_rate);
    params.validate().map_err(stage_err("calibrate"))?;
    clock.lap("calibrate");

    // Simulation: three disjoint ensembles on the daily grid to expiry.
    let steps = config.dte as usize;
    let maturity = f64::from(config.dte) / TRADING_DAYS_PER_YEAR;
    let hurst_path = HurstPath::from_forecast(&forecast, steps);
    let seeds = SeedTriple {
        primal: config.seed,
        dual: config.seed.wrapping_add(1),
        eval: config.seed.wrapping_add(2),
    };
    let simulate_one = |seed: u64| -> Result<PathEnsemble, PipelineError> {
        simulate(
            regime,
            &params,
            &hurst_path,
            spot,
            maturity,
            config.paths,
            steps,
            seed,
            config.compensator,
        )
        .map_err(stage_err("simulate"))
    };
    let primal_train = simulate_one(seeds.primal)?;
    let dual_train = simulate_one(seeds.dual)?;
    let eval = simulate_one(seeds.eval)?;
    let engine_tag = eval.engine_tag;
    clock.lap("simulate");

    // Signature features and primal-dual bounds for every requested variant.
    let grid = ExerciseGrid::daily(&eval);
    let variants = price_with_all_variants(
        &primal_train,
        &dual_train,
        &eval,
        &grid,
        contract.strike,
        contract.cp_flag,
        contract.premium,
        params.r,
        &config.regressors,
        &config.pricing_config(),
    )
    .map_err(stage_err("price"))?;
    clock.lap("price");

    // Forecast-error diagnostics when realized data extends past the quote
    // date. Full-series value k ends on price date index k + window, so the
    // first estimate realized after the quote date is k = spot_idx + 1 - window.
    let full_hurst = rolling_hurst(&prices.log_returns, config.hurst_window)
        .map_err(stage_err("diagnostics"))?;
    let diagnostics = if spot_idx + 1 >= config.hurst_window {
        let first_future = spot_idx + 1 - config.hurst_window;
        if full_hurst.values.len() >= first_future + horizon {
            let realized = full_hurst.values[first_future..first_future + horizon].to_vec();
            let (mae, mse) = forecast_diagnostics(&forecast.values, &realized)?;
            Some(ForecastDiagnostics { mae, mse, realized })
        } else {
            None
        }
    } else {
        None
    };
    clock.lap("diagnostics");

    Ok(RunReport {
        schema_version: 1,
        config: config.clone(),
        contract,
        spot,
        warnings,
        hurst_latest,
        hurst_series_len: hurst_series.values.len(),
        forecast: forecast.clone(),
        mean_hurst: forecast.mean,
        regime,
        engine_tag,
        params,
        seeds,
        variants,
        diagnostics,
        timings_ms: clock.timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = PipelineConfig::new(
            "opts.csv",
            "prices.csv",
            "AAPL",
            "2023-08-31".parse().unwrap(),
            10,
            CpFlag::Put,
        );
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn diagnostics_formulas() {
        let (mae, mse) = forecast_diagnostics(&[0.4, 0.5], &[0.4, 0.5]).unwrap();
        assert_eq!((mae, mse), (0.0, 0.0));
        let forecast = vec![0.5; 10];
        let realized = vec![0.4; 10];
        let (mae, mse) = forecast_diagnostics(&forecast, &realized).unwrap();
        assert!((mae - 0.1).abs() < 1e-12);
        assert!((mse - 0.01).abs() < 1e-12);
        assert!(forecast_diagnostics(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn diagnostics_moment_inequalities() {
        let forecast = [0.3, 0.45, 0.5, 0.62];
        let realized = [0.35, 0.4, 0.58, 0.5];
        let (mae, mse) = forecast_diagnostics(&forecast, &realized).unwrap();
        assert!(mae >= 0.0 && mse >= 0.0);
        let max_abs = forecast
            .iter()
            .zip(&realized)
            .map(|(f, r)| (f - r).abs())
            .fold(0.0f64, f64::max);
        assert!(mse <= max_abs * mae + 1e-15);
    }

    #[test]
    fn engine_choice_parsing() {
        assert_eq!("auto".parse::<EngineChoice>().unwrap(), EngineChoice::Auto);
        assert_eq!(
            "rbergomi".parse::<EngineChoice>().unwrap(),
            EngineChoice::RBergomi
        );
        assert_eq!(
            "heston".parse::<EngineChoice>().unwrap(),
            EngineChoice::Heston
        );
        assert!("binomial".parse::<EngineChoice>().is_err());
        assert_eq!(EngineChoice::RBergomi.forced_regime(), Some(Regime::Rough));
        assert_eq!(EngineChoice::Auto.forced_regime(), None);
    }

    #[test]
    fn report_schema_fixture_renders_reference_numbers() {
        // Formatting-only check that diagnostics carry through serialization.
        let d = ForecastDiagnostics {
            mae: 0.0716,
            mse: 0.0082,
            realized: vec![0.5; 10],
        };
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("0.0716"));
        assert!(json.contains("0.0082"));
    }
}
