//! Batch CLI for the rough-volatility American option pricer.
//!
//! `price` runs the full pipeline (data -> Hurst -> forecast -> regime ->
//! calibrate -> simulate -> signatures -> bounds) and prints a report;
//! `simulate`, `hurst`, and `selftest` expose individual stages.

use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use roughsig::calibrate::EngineParams;
use roughsig::dates::Date;
use roughsig::engine::{simulate, Compensator, HurstPath};
use roughsig::forecast::{GbtConfig, Regime};
use roughsig::hurst::rolling_hurst;
use roughsig::linalg::mean_and_se;
use roughsig::market::{load_price_series, CpFlag};
use roughsig::pipeline::{run_pipeline, OutputFormat, PipelineConfig};
use roughsig::pricing::RegressorKind;
use roughsig::report::{render_csv, render_table};
use roughsig::signature::ChannelSelector;

#[derive(Parser)]
#[command(
    name = "roughsig",
    about = "American option pricing under time-varying volatility roughness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pricing pipeline on the two CSV datasets.
    Price(Box<PriceArgs>),
    /// Simulate one engine directly and report moment checks.
    Simulate(SimulateArgs),
    /// Print the rolling Hurst series for a ticker as CSV.
    Hurst(HurstArgs),
    /// Run a quick built-in invariant battery.
    Selftest,
}

#[derive(Args)]
struct PriceArgs {
    /// Options CSV (date,days,forward_price,strike_price,premium,impl_volatility,cp_flag,ticker,index_flag).
    #[arg(long)]
    options: String,
    /// Prices CSV (date,ticker,close,return).
    #[arg(long)]
    prices: String,
    #[arg(long)]
    ticker: String,
    /// Quote date, YYYY-MM-DD.
    #[arg(long)]
    date: String,
    /// Trading days to expiration.
    #[arg(long)]
    dte: u32,
    /// put or call.
    #[arg(long, default_value = "put")]
    cp: String,

    #[arg(long, default_value_t = 32)]
    hurst_window: usize,
    #[arg(long, default_value_t = 100)]
    gbt_rounds: usize,
    #[arg(long, default_value_t = 0.1)]
    gbt_lr: f64,
    #[arg(long, default_value_t = 3)]
    gbt_depth: u32,
    #[arg(long, default_value_t = 5)]
    forecast_lags: usize,
    /// Optional hysteresis threshold replacing the 0.5 regime boundary.
    #[arg(long)]
    rough_threshold: Option<f64>,

    #[arg(long, default_value_t = 64)]
    calib_window: usize,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.045)]
    risk_free_rate: f64,
    /// DTE band for the ATM vol series, min,max.
    #[arg(long, default_value = "1,60")]
    dte_band: String,

    /// Monte Carlo paths per ensemble.
    #[arg(long, default_value_t = 1 << 15)]
    paths: usize,
    /// auto | rbergomi | heston.
    #[arg(long, default_value = "auto")]
    engine: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// exact | paper variance compensator for the rough engine.
    #[arg(long, default_value = "exact")]
    compensator: String,

    /// Signature channels, e.g. time,vol,price.
    #[arg(long, default_value = "time,vol,price")]
    sig_channels: String,
    /// Signature truncation depth (only 3 is supported).
    #[arg(long, default_value_t = 3)]
    sig_depth: usize,

    /// Random Fourier frequency samples D (embedding dimension 2D).
    #[arg(long, default_value_t = 128)]
    rff_dim: usize,
    /// auto or a positive bandwidth value.
    #[arg(long, default_value = "auto")]
    rff_gamma: String,
    #[arg(long, default_value_t = 1e-3)]
    ridge_lambda: f64,

    /// all | linear | extended | deeplog | deepkernel.
    #[arg(long, default_value = "all")]
    regressor: String,
    #[arg(long, default_value_t = 200)]
    dual_iters: usize,
    #[arg(long, default_value_t = 32)]
    mlp_width: usize,
    #[arg(long, default_value_t = 40)]
    mlp_epochs: usize,

    /// json | table | csv.
    #[arg(long, default_value = "json")]
    output: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// rbergomi | heston.
    #[arg(long)]
    engine: String,
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Trading days to expiration; sets both the step count and T = dte/252.
    #[arg(long, default_value_t = 10)]
    dte: u32,
    #[arg(long, default_value_t = 1 << 14)]
    paths: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Constant Hurst value driving the rough kernel.
    #[arg(long, default_value_t = 0.1)]
    hurst: f64,
    #[arg(long, default_value_t = -0.7)]
    rho: f64,
    #[arg(long, default_value_t = 1.5)]
    eta: f64,
    #[arg(long, default_value_t = 0.04)]
    xi0: f64,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.04)]
    theta: f64,
    #[arg(long, default_value_t = 0.045)]
    risk_free_rate: f64,
    /// exact | paper.
    #[arg(long, default_value = "exact")]
    compensator: String,
}

#[derive(Args)]
struct HurstArgs {
    #[arg(long)]
    prices: String,
    #[arg(long)]
    ticker: String,
    #[arg(long, default_value_t = 32)]
    window: usize,
}

fn parse_dte_band(spec: &str) -> Result<(u32, u32)> {
    let (lo, hi) = spec
        .split_once(',')
        .ok_or_else(|| anyhow!("--dte-band expects min,max"))?;
    let lo: u32 = lo.trim().parse().context("bad dte band min")?;
    let hi: u32 = hi.trim().parse().context("bad dte band max")?;
    if lo > hi {
        bail!("--dte-band min exceeds max");
    }
    Ok((lo, hi))
}

fn build_config(args: &PriceArgs) -> Result<PipelineConfig> {
    let quote_date: Date = args.date.parse().map_err(|e| anyhow!("{e}"))?;
    let cp_flag: CpFlag = args.cp.parse().map_err(|e: String| anyhow!(e))?;
    let mut cfg = PipelineConfig::new(
        &args.options,
        &args.prices,
        &args.ticker,
        quote_date,
        args.dte,
        cp_flag,
    );
    cfg.hurst_window = args.hurst_window;
    cfg.gbt = GbtConfig {
        rounds: args.gbt_rounds,
        learning_rate: args.gbt_lr,
        max_depth: args.gbt_depth,
    };
    cfg.forecast_lags = args.forecast_lags;
    cfg.rough_threshold = args.rough_threshold;
    cfg.calib_window = args.calib_window;
    cfg.kappa = args.kappa;
    cfg.risk_free_rate = args.risk_free_rate;
    cfg.dte_band = parse_dte_band(&args.dte_band)?;
    cfg.paths = args.paths;
    cfg.engine = args.engine.parse().map_err(|e: String| anyhow!(e))?;
    cfg.seed = args.seed;
    cfg.compensator = parse_compensator(&args.compensator)?;
    cfg.sig_channels = ChannelSelector::parse(&args.sig_channels).map_err(|e| anyhow!("{e}"))?;
    cfg.sig_depth = args.sig_depth;
    cfg.rff_dim = args.rff_dim;
    cfg.rff_gamma = match args.rff_gamma.trim() {
        "auto" => None,
        v => Some(v.parse().context("bad --rff-gamma")?),
    };
    cfg.ridge_lambda = args.ridge_lambda;
    cfg.regressors = match args.regressor.trim() {
        "all" => RegressorKind::all().to_vec(),
        one => vec![one.parse().map_err(|e: String| anyhow!(e))?],
    };
    cfg.dual_iters = args.dual_iters;
    cfg.mlp_width = args.mlp_width;
    cfg.mlp_epochs = args.mlp_epochs;
    cfg.output = args.output.parse().map_err(|e: String| anyhow!(e))?;
    Ok(cfg)
}

fn parse_compensator(s: &str) -> Result<Compensator> {
    match s.trim().to_ascii_lowercase().as_str() {
        "exact" => Ok(Compensator::Exact),
        "paper" => Ok(Compensator::Paper),
        other => bail!("unknown compensator `{other}` (exact|paper)"),
    }
}

fn cmd_price(args: &PriceArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let report = run_pipeline(&cfg).map_err(|e| anyhow!("{e}"))?;
    match cfg.output {
        OutputFormat::Json => println!("{}", report.to_json()),
        OutputFormat::Table => print!("{}", render_table(&report)),
        OutputFormat::Csv => print!("{}", render_csv(&report)),
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let regime = match args.engine.trim().to_ascii_lowercase().as_str() {
        "rbergomi" => Regime::Rough,
        "heston" => Regime::Smooth,
        other => bail!("unknown engine `{other}` (rbergomi|heston)"),
    };
    let params = EngineParams::new(
        args.rho,
        args.eta,
        args.xi0,
        args.kappa,
        args.theta,
        args.risk_free_rate,
    );
    let steps = args.dte as usize;
    let maturity = f64::from(args.dte) / 252.0;
    let hurst = HurstPath::constant(args.hurst, steps);
    let ensemble = simulate(
        regime,
        &params,
        &hurst,
        args.spot,
        maturity,
        args.paths,
        steps,
        args.seed,
        parse_compensator(&args.compensator)?,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let disc = (-params.r * maturity).exp();
    let discounted: Vec<f64> = (0..ensemble.paths())
        .map(|p| disc * ensemble.asset_at(p, steps))
        .collect();
    let (asset_mean, asset_se) = mean_and_se(&discounted);
    let terminal_var: Vec<f64> = (0..ensemble.paths())
        .map(|p| ensemble.variance_at(p, steps))
        .collect();
    let (var_mean, var_se) = mean_and_se(&terminal_var);
    let var_reference = match regime {
        Regime::Rough => args.xi0,
        Regime::Smooth => args.theta + (args.xi0 - args.theta) * (-args.kappa * maturity).exp(),
    };

    let summary = serde_json::json!({
        "engine": ensemble.engine_tag.to_string(),
        "paths": ensemble.paths(),
        "steps": steps,
        "maturity_years": maturity,
        "seed": args.seed,
        "discounted_terminal_asset": { "mean": asset_mean, "se": asset_se, "reference": args.spot },
        "terminal_variance": { "mean": var_mean, "se": var_se, "reference": var_reference },
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_hurst(args: &HurstArgs) -> Result<()> {
    use std::io::Write;
    let file =
        std::fs::File::open(&args.prices).with_context(|| format!("opening {}", args.prices))?;
    let series = load_price_series(file, &args.ticker).map_err(|e| anyhow!("{e}"))?;
    let mut hurst = rolling_hurst(&series.log_returns, args.window).map_err(|e| anyhow!("{e}"))?;
    hurst.attach_dates(&series.dates);
    // Tolerate a closed pipe (e.g. `roughsig hurst ... | head`).
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let result = (|| -> std::io::Result<()> {
        writeln!(out, "date,hurst")?;
        for (d, h) in hurst.dates.iter().zip(&hurst.values) {
            writeln!(out, "{d},{h}")?;
        }
        out.flush()
    })();
    match result {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.context("writing hurst series"),
    }
}

fn cmd_selftest() -> Result<()> {
    let checks: Vec<(&str, Box<dyn Fn() -> Result<()>>)> = vec![
        ("volterra-kernel-conventions", Box::new(selftest_volterra)),
        ("signature-chen-identity", Box::new(selftest_chen)),
        ("rff-unit-norm", Box::new(selftest_rff)),
        ("gbt-constant-fit", Box::new(selftest_gbt)),
        ("heston-cir-mean", Box::new(selftest_heston)),
        ("rbergomi-variance-mean", Box::new(selftest_rbergomi)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest {name}: PASS"),
            Err(e) => {
                failed += 1;
                println!("selftest {name}: FAIL ({e})");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} selftest check(s) failed");
    }
    Ok(())
}

fn selftest_volterra() -> Result<()> {
    use roughsig::engine::volterra_weights;
    let flat = HurstPath::constant(0.5, 4);
    let w = volterra_weights(4, &flat).map_err(|e| anyhow!("{e}"))?;
    if w != vec![0.0, 0.0, 0.0, 1.0] {
        bail!("H = 1/2 weights should be the unit terminal weight, got {w:?}");
    }
    let rough = HurstPath::constant(0.1, 4);
    let w = volterra_weights(2, &rough).map_err(|e| anyhow!("{e}"))?;
    if (w[0] - (2f64.powf(-0.4) - 1.0)).abs() > 1e-14 || w[1] != 1.0 {
        bail!("H = 0.1 two-step weights wrong: {w:?}");
    }
    Ok(())
}

fn selftest_chen() -> Result<()> {
    use roughsig::signature::{signature, signature_range, AugmentedPath};
    let path = AugmentedPath::from_points(
        vec![
            vec![0.0, 0.0],
            vec![0.3, -0.2],
            vec![0.5, 0.4],
            vec![0.9, 0.1],
        ],
        vec!["time", "vol"],
    );
    let full = signature(&path, 3).map_err(|e| anyhow!("{e}"))?;
    let head = signature_range(&path, 0, 2).map_err(|e| anyhow!("{e}"))?;
    let tail = signature_range(&path, 2, 3).map_err(|e| anyhow!("{e}"))?;
    let product = head.chen(&tail);
    for (a, b) in product.coords.iter().zip(&full.coords) {
        if (a - b).abs() > 1e-12 {
            bail!("Chen identity violated: {a} vs {b}");
        }
    }
    Ok(())
}

fn selftest_rff() -> Result<()> {
    use roughsig::rff::{rff_embed, sample_rff};
    let map = sample_rff(10, 64, 0.5, 7).map_err(|e| anyhow!("{e}"))?;
    let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
    let e = rff_embed(&x, &map).map_err(|e| anyhow!("{e}"))?;
    let norm: f64 = e.features.iter().map(|v| v * v).sum();
    if (norm - 1.0).abs() > 1e-12 {
        bail!("embedding norm {norm} != 1");
    }
    Ok(())
}

fn selftest_gbt() -> Result<()> {
    use roughsig::forecast::fit_gbt;
    use roughsig::linalg::Matrix;
    let x = Matrix::from_rows((0..16).map(|i| vec![i as f64 / 16.0]).collect());
    let y = vec![0.5; 16];
    let model = fit_gbt(&x, &y, 5, 0.1, 2).map_err(|e| anyhow!("{e}"))?;
    if model.predict(&[0.3]) != 0.5 {
        bail!("constant fit drifted: {}", model.predict(&[0.3]));
    }
    Ok(())
}

fn selftest_heston() -> Result<()> {
    use roughsig::engine::heston::simulate_heston;
    let params = EngineParams::new(-0.3, 0.3, 0.09, 2.0, 0.04, 0.0);
    let e = simulate_heston(&params, 100.0, 1.0, 4096, 64, 5).map_err(|e| anyhow!("{e}"))?;
    let vs: Vec<f64> = (0..e.paths()).map(|p| e.variance_at(p, 64)).collect();
    let (mean, se) = mean_and_se(&vs);
    let expected = 0.04 + 0.05 * (-2.0f64).exp();
    if (mean - expected).abs() > 5.0 * se {
        bail!("E[v_T] = {mean}, expected {expected} (se {se})");
    }
    Ok(())
}

fn selftest_rbergomi() -> Result<()> {
    use roughsig::engine::rbergomi::simulate_rbergomi;
    let params = EngineParams::new(-0.7, 1.5, 0.04, 2.0, 0.04, 0.045);
    let hurst = HurstPath::constant(0.1, 16);
    let e = simulate_rbergomi(
        &params,
        &hurst,
        100.0,
        0.25,
        4096,
        16,
        9,
        Compensator::Exact,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let vs: Vec<f64> = (0..e.paths()).map(|p| e.variance_at(p, 16)).collect();
    let (mean, se) = mean_and_se(&vs);
    if (mean - 0.04).abs() > 5.0 * se {
        bail!("E[v_T] = {mean}, expected 0.04 (se {se})");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Price(args) => cmd_price(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Hurst(args) => cmd_hurst(args),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
