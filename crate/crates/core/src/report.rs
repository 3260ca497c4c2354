//! Human- and machine-readable renderings of a pipeline run.

use std::fmt::Write as _;

use crate::pipeline::RunReport;

/// Aligned text table: one header block plus one row per regression variant
/// (Method, Lower, Upper, per-side standard errors, Gap, Gap %, Premium Status).
pub fn render_table(report: &RunReport) -> String {
    let mut out = String::new();
    let c = &report.contract;
    let _ = writeln!(
        out,
        "{} {} {}  dte {}  strike {:.2}  premium {:.2}  spot {:.2}",
        c.ticker, c.cp_flag, c.quote_date, c.dte, c.strike, c.premium, report.spot
    );
    let _ = writeln!(
        out,
        "regime {}  (mean forecast H = {:.4}, latest H = {:.4})  engine {}",
        report.regime, report.mean_hurst, report.hurst_latest, report.engine_tag
    );
    let p = &report.params;
    let _ = writeln!(
        out,
        "params  rho {:+.4}  eta {:.4}  xi0 {:.6}  kappa {:.2}  theta {:.6}  r {:.4}",
        p.rho, p.eta, p.xi0, p.kappa, p.theta, p.r
    );
    let _ = writeln!(
        out,
        "seeds   primal {}  dual {}  eval {}   paths {}",
        report.seeds.primal, report.seeds.dual, report.seeds.eval, report.config.paths
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<26} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}  {}",
        "Method", "Lower", "Upper", "SE(low)", "SE(up)", "Gap", "Gap %", "Premium Status"
    );
    for v in &report.variants {
        let b = &v.bounds;
        let gap_pct = match b.gap_pct {
            Some(g) => format!("{:.2}%", 100.0 * g),
            None => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<26} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.4} {:>8}  {}",
            v.kind.label(),
            b.lower,
            b.upper,
            b.lower_se,
            b.upper_se,
            b.gap,
            gap_pct,
            b.premium_status
        );
    }
    if let Some(d) = &report.diagnostics {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "forecast errors vs realized: MAE {:.4}  MSE {:.4}",
            d.mae, d.mse
        );
    }
    if !report.timings_ms.is_empty() {
        let _ = writeln!(out);
        let total: f64 = report.timings_ms.iter().map(|(_, ms)| ms).sum();
        let stages: Vec<String> = report
            .timings_ms
            .iter()
            .map(|(name, ms)| format!("{name} {ms:.0}ms"))
            .collect();
        let _ = writeln!(
            out,
            "timings  {}  (total {:.0}ms)",
            stages.join("  "),
            total
        );
    }
    out
}

/// One CSV row per variant.
pub fn render_csv(report: &RunReport) -> String {
    let mut out = String::from("method,lower,lower_se,upper,upper_se,gap,gap_pct,premium_status\n");
    for v in &report.variants {
        let b = &v.bounds;
        let gap_pct = match b.gap_pct {
            Some(g) => format!("{}", g),
            None => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            v.kind.label(),
            b.lower,
            b.lower_se,
            b.upper,
            b.upper_se,
            b.gap,
            gap_pct,
            b.premium_status
        );
    }
    out
}
