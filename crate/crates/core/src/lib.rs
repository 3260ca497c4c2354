//! American option pricing under time-varying volatility roughness.
//!
//! The pipeline: ingest price and option CSVs, estimate a rolling Hurst
//! series by rescaled-range analysis, forecast it with gradient-boosted
//! trees, switch between a dynamic-Hurst rough Bergomi engine and a Heston
//! engine on the mean forecast, lift simulated paths to truncated depth-3
//! signatures, and compute primal lower / dual upper price bounds with four
//! regression variants (including a Random-Fourier-Feature kernel
//! accelerator).

pub mod calibrate;
pub mod dates;
pub mod engine;
pub mod forecast;
pub mod hurst;
pub mod linalg;
pub mod market;
pub mod mlp;
pub mod pipeline;
pub mod pricing;
pub mod report;
pub mod rff;
pub mod signature;

pub use calibrate::EngineParams;
pub use dates::Date;
pub use engine::{Compensator, EngineTag, HurstPath, PathEnsemble};
pub use forecast::{ForecastPath, Regime};
pub use hurst::HurstSeries;
pub use market::{AtmVolSeries, CpFlag, OptionContract, PriceSeries};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, RunReport};
pub use pricing::{ExerciseGrid, PriceBounds, PricingConfig, RegressorKind};
pub use signature::{LogSignatureVector, SignatureVector};
