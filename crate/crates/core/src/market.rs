//! CSV ingestion for the two input datasets and contract selection.
//!
//! Dataset 1 (options): header
//! `date,days,forward_price,strike_price,premium,impl_volatility,cp_flag,ticker,index_flag`.
//! Dataset 2 (prices): header `date,ticker,close,return`.
//! Both comma-separated with `.` decimal points. Columns are matched by name,
//! so extra columns and reordered headers are tolerated.

use std::collections::BTreeMap;
use std::io::Read;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::Date;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("no usable rows for ticker `{0}`")]
    EmptySeries(String),
    #[error("non-positive close {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: Date,
        value: f64,
    },
    #[error("no option row matches the requested contract")]
    NoMatch,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Put/call side of a contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpFlag {
    Put,
    Call,
}

impl FromStr for CpFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" | "put" => Ok(CpFlag::Put),
            "c" | "call" => Ok(CpFlag::Call),
            other => Err(format!("unknown cp_flag `{other}`")),
        }
    }
}

impl std::fmt::Display for CpFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CpFlag::Put => "put",
            CpFlag::Call => "call",
        })
    }
}

/// Daily close history for one ticker with recomputed log returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub dates: Vec<Date>,
    pub closes: Vec<f64>,
    pub log_returns: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series from already-clean rows, recomputing returns.
    pub fn new(ticker: String, dates: Vec<Date>, closes: Vec<f64>) -> Result<Self, MarketError> {
        assert_eq!(dates.len(), closes.len());
        for (d, c) in dates.iter().zip(&closes) {
            if *c <= 0.0 || !c.is_finite() {
                return Err(MarketError::NonPositivePrice {
                    ticker,
                    date: *d,
                    value: *c,
                });
            }
        }
        let log_returns = log_returns_from_closes(&closes);
        Ok(PriceSeries {
            ticker,
            dates,
            closes,
            log_returns,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Index of the last date `<= at`, if any.
    pub fn position_at_or_before(&self, at: Date) -> Option<usize> {
        match self.dates.binary_search(&at) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }
}

pub fn log_returns_from_closes(closes: &[f64]) -> Vec<f64> {
    closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

/// One listed contract selected from the options file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionContract {
    pub ticker: String,
    pub quote_date: Date,
    /// Trading days to expiration.
    pub dte: u32,
    pub strike: f64,
    pub forward_price: f64,
    pub premium: f64,
    pub implied_vol: f64,
    pub cp_flag: CpFlag,
}

impl OptionContract {
    /// Maturity in year units, `dte / 252`.
    pub fn maturity_years(&self) -> f64 {
        f64::from(self.dte) / TRADING_DAYS_PER_YEAR
    }
}

/// One ATM implied vol per quote date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtmVolSeries {
    pub dates: Vec<Date>,
    pub atm_implied_vols: Vec<f64>,
}

impl AtmVolSeries {
    /// Vols covering dates `<= at`, most recent last.
    pub fn up_to(&self, at: Date) -> (&[Date], &[f64]) {
        let end = self.dates.partition_point(|d| *d <= at);
        (&self.dates[..end], &self.atm_implied_vols[..end])
    }
}

/// Ingestion counters surfaced in the pipeline report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    /// Duplicate (date,ticker) rows dropped (last occurrence kept).
    pub duplicate_rows: usize,
    /// Rows whose stored return column disagreed with the recomputed value.
    pub return_mismatches: usize,
}

struct Header {
    idx: BTreeMap<String, usize>,
}

impl Header {
    fn parse(rec: &csv::StringRecord) -> Self {
        let idx = rec
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().to_ascii_lowercase(), i))
            .collect();
        Header { idx }
    }

    fn require(&self, name: &str) -> Result<usize, MarketError> {
        self.idx
            .get(name)
            .copied()
            .ok_or_else(|| MarketError::MissingColumn(name.to_string()))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.idx.get(name).copied()
    }
}

fn field<'r>(
    rec: &'r csv::StringRecord,
    col: usize,
    row: usize,
    name: &str,
) -> Result<&'r str, MarketError> {
    rec.get(col).ok_or_else(|| MarketError::MalformedRow {
        row,
        detail: format!("missing field `{name}`"),
    })
}

fn parse_f64(
    rec: &csv::StringRecord,
    col: usize,
    row: usize,
    name: &str,
) -> Result<f64, MarketError> {
    let raw = field(rec, col, row, name)?;
    raw.trim().parse().map_err(|_| MarketError::MalformedRow {
        row,
        detail: format!("bad number `{raw}` in `{name}`"),
    })
}

fn parse_date(rec: &csv::StringRecord, col: usize, row: usize) -> Result<Date, MarketError> {
    let raw = field(rec, col, row, "date")?;
    raw.parse().map_err(|_| MarketError::MalformedRow {
        row,
        detail: format!("bad date `{raw}`"),
    })
}

/// Loads, filters, and cleans the price history for one ticker.
///
/// Rows are sorted by date, duplicated dates keep the last occurrence, and log
/// returns are always recomputed from closes; any `return` column present is
/// only cross-checked and counted in [`IngestStats`].
pub fn load_price_series_with_stats<R: Read>(
    source: R,
    ticker: &str,
) -> Result<(PriceSeries, IngestStats), MarketError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = Header::parse(reader.headers()?);
    let date_col = header.require("date")?;
    let ticker_col = header.require("ticker")?;
    let close_col = header.require("close")?;
    let return_col = header.optional("return");

    let mut by_date: BTreeMap<Date, (f64, Option<f64>)> = BTreeMap::new();
    let mut stats = IngestStats::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2; // 1-based, after header
        if !field(&rec, ticker_col, row, "ticker")?.eq_ignore_ascii_case(ticker) {
            continue;
        }
        let date = parse_date(&rec, date_col, row)?;
        let close = parse_f64(&rec, close_col, row, "close")?;
        if close <= 0.0 || !close.is_finite() {
            return Err(MarketError::NonPositivePrice {
                ticker: ticker.to_string(),
                date,
                value: close,
            });
        }
        let stored_return = match return_col {
            // Vendor files leave the first return blank; ignore unparseable cells.
            Some(col) => field(&rec, col, row, "return")?.parse::<f64>().ok(),
            None => None,
        };
        if by_date.insert(date, (close, stored_return)).is_some() {
            stats.duplicate_rows += 1;
        }
    }
    if by_date.is_empty() {
        return Err(MarketError::EmptySeries(ticker.to_string()));
    }

    let dates: Vec<Date> = by_date.keys().copied().collect();
    let closes: Vec<f64> = by_date.values().map(|(c, _)| *c).collect();
    let stored: Vec<Option<f64>> = by_date.values().map(|(_, r)| *r).collect();
    let series = PriceSeries::new(ticker.to_string(), dates, closes)?;

    for (i, ret) in series.log_returns.iter().enumerate() {
        if let Some(column_value) = stored[i + 1] {
            if (column_value - ret).abs() > 1e-6 {
                stats.return_mismatches += 1;
            }
        }
    }
    Ok((series, stats))
}

pub fn load_price_series<R: Read>(source: R, ticker: &str) -> Result<PriceSeries, MarketError> {
    load_price_series_with_stats(source, ticker).map(|(s, _)| s)
}

struct OptionRow {
    date: Date,
    days: u32,
    forward_price: f64,
    strike: f64,
    premium: f64,
    implied_vol: f64,
    cp_flag: CpFlag,
}

fn read_option_rows<R: Read>(source: R, ticker: &str) -> Result<Vec<OptionRow>, MarketError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = Header::parse(reader.headers()?);
    let date_col = header.require("date")?;
    let days_col = header.require("days")?;
    let fwd_col = header.require("forward_price")?;
    let strike_col = header.require("strike_price")?;
    let premium_col = header.require("premium")?;
    let iv_col = header.require("impl_volatility")?;
    let cp_col = header.require("cp_flag")?;
    let ticker_col = header.require("ticker")?;

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if !field(&rec, ticker_col, row, "ticker")?.eq_ignore_ascii_case(ticker) {
            continue;
        }
        let days_raw = field(&rec, days_col, row, "days")?;
        let days: u32 = days_raw.parse().map_err(|_| MarketError::MalformedRow {
            row,
            detail: format!("bad integer `{days_raw}` in `days`"),
        })?;
        let cp_raw = field(&rec, cp_col, row, "cp_flag")?;
        let cp_flag = cp_raw
            .parse()
            .map_err(|detail| MarketError::MalformedRow { row, detail })?;
        let parsed = OptionRow {
            date: parse_date(&rec, date_col, row)?,
            days,
            forward_price: parse_f64(&rec, fwd_col, row, "forward_price")?,
            strike: parse_f64(&rec, strike_col, row, "strike_price")?,
            premium: parse_f64(&rec, premium_col, row, "premium")?,
            implied_vol: parse_f64(&rec, iv_col, row, "impl_volatility")?,
            cp_flag,
        };
        if parsed.days < 1
            || parsed.strike <= 0.0
            || parsed.implied_vol < 0.0
            || parsed.premium < 0.0
            || parsed.forward_price <= 0.0
        {
            return Err(MarketError::MalformedRow {
                row,
                detail: "days >= 1, strike/forward > 0, premium/implied vol >= 0 required"
                    .to_string(),
            });
        }
        rows.push(parsed);
    }
    Ok(rows)
}

/// Ordering key that makes ATM selection independent of input row order:
/// nearest strike to forward first, ties broken toward the lower strike, then
/// by the remaining numeric fields for a total order.
fn atm_key(r: &OptionRow) -> (f64, f64, u32, f64, f64) {
    (
        (r.strike - r.forward_price).abs(),
        r.strike,
        r.days,
        r.premium,
        r.implied_vol,
    )
}

fn better(a: &OptionRow, b: &OptionRow) -> bool {
    atm_key(a).partial_cmp(&atm_key(b)) == Some(std::cmp::Ordering::Less)
}

/// Picks the ATM contract among rows matching `(ticker, quote_date, dte, cp_flag)`.
pub fn select_contract<R: Read>(
    source: R,
    ticker: &str,
    quote_date: Date,
    dte: u32,
    cp_flag: CpFlag,
) -> Result<OptionContract, MarketError> {
    let rows = read_option_rows(source, ticker)?;
    let mut best: Option<OptionRow> = None;
    for row in rows {
        if row.date != quote_date || row.days != dte || row.cp_flag != cp_flag {
            continue;
        }
        match &best {
            Some(b) if !better(&row, b) => {}
            _ => best = Some(row),
        }
    }
    let r = best.ok_or(MarketError::NoMatch)?;
    Ok(OptionContract {
        ticker: ticker.to_string(),
        quote_date,
        dte: r.days,
        strike: r.strike,
        forward_price: r.forward_price,
        premium: r.premium,
        implied_vol: r.implied_vol,
        cp_flag: r.cp_flag,
    })
}

/// Per-date ATM implied vols for quotes whose `days` lies in `dte_band`.
pub fn extract_atm_vol_series<R: Read>(
    source: R,
    ticker: &str,
    dte_band: RangeInclusive<u32>,
) -> Result<AtmVolSeries, MarketError> {
    let rows = read_option_rows(source, ticker)?;
    let mut best_by_date: BTreeMap<Date, OptionRow> = BTreeMap::new();
    for row in rows {
        if !dte_band.contains(&row.days) {
            continue;
        }
        match best_by_date.get(&row.date) {
            Some(b) if !better(&row, b) => {}
            _ => {
                best_by_date.insert(row.date, row);
            }
        }
    }
    if best_by_date.is_empty() {
        return Err(MarketError::EmptySeries(ticker.to_string()));
    }
    Ok(AtmVolSeries {
        dates: best_by_date.keys().copied().collect(),
        atm_implied_vols: best_by_date.values().map(|r| r.implied_vol).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRICES_HEADER: &str = "date,ticker,close,return\n";
    const OPTIONS_HEADER: &str =
        "date,days,forward_price,strike_price,premium,impl_volatility,cp_flag,ticker,index_flag\n";

    fn d(s: &str) -> Date {
        s.parse().unwrap()
    }

    #[test]
    fn two_rows_give_single_log_return() {
        let csv = format!("{PRICES_HEADER}2023-01-02,AAPL,100,\n2023-01-03,AAPL,105,0.048790\n");
        let s = load_price_series(csv.as_bytes(), "AAPL").unwrap();
        assert_eq!(s.log_returns.len(), 1);
        assert!((s.log_returns[0] - 1.05f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn missing_ticker_is_empty_series() {
        let csv = format!("{PRICES_HEADER}2023-01-02,MSFT,100,\n");
        match load_price_series(csv.as_bytes(), "AAPL") {
            Err(MarketError::EmptySeries(t)) => assert_eq!(t, "AAPL"),
            other => panic!("expected EmptySeries, got {other:?}"),
        }
    }

    #[test]
    fn recomputed_returns_match_vendor_column() {
        // 10-row fixture; the return column holds hand-computed ln ratios.
        let closes: [f64; 10] = [
            100.0, 101.5, 99.2, 99.2, 103.7, 104.0, 101.1, 105.9, 106.2, 104.8,
        ];
        let mut csv = PRICES_HEADER.to_string();
        for (i, c) in closes.iter().enumerate() {
            let ret = if i == 0 {
                String::new()
            } else {
                format!("{:.9}", (c / closes[i - 1]).ln())
            };
            csv.push_str(&format!("2023-02-{:02},AAPL,{c},{ret}\n", i + 1));
        }
        let (s, stats) = load_price_series_with_stats(csv.as_bytes(), "AAPL").unwrap();
        assert_eq!(s.log_returns.len(), 9);
        for (i, r) in s.log_returns.iter().enumerate() {
            let hand = (closes[i + 1] / closes[i]).ln();
            assert!((r - hand).abs() < 1e-9, "return {i}: {r} vs {hand}");
        }
        assert_eq!(stats.return_mismatches, 0);
    }

    #[test]
    fn duplicate_dates_keep_last_row_and_count() {
        let csv = format!(
            "{PRICES_HEADER}2023-01-03,AAPL,105,\n2023-01-02,AAPL,100,\n2023-01-02,AAPL,101,\n"
        );
        let (s, stats) = load_price_series_with_stats(csv.as_bytes(), "AAPL").unwrap();
        assert_eq!(stats.duplicate_rows, 1);
        assert_eq!(s.closes, vec![101.0, 105.0]);
        assert_eq!(s.dates, vec![d("2023-01-02"), d("2023-01-03")]);
    }

    #[test]
    fn non_positive_close_is_rejected() {
        let csv = format!("{PRICES_HEADER}2023-01-02,AAPL,0,\n");
        assert!(matches!(
            load_price_series(csv.as_bytes(), "AAPL"),
            Err(MarketError::NonPositivePrice { .. })
        ));
    }

    #[test]
    fn malformed_number_is_reported_with_row() {
        let csv = format!("{PRICES_HEADER}2023-01-02,AAPL,abc,\n");
        match load_price_series(csv.as_bytes(), "AAPL") {
            Err(MarketError::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn returns_ignore_stored_column_content() {
        let base = format!("{PRICES_HEADER}2023-01-02,AAPL,100,\n2023-01-03,AAPL,105,9.99\n");
        let clean = format!("{PRICES_HEADER}2023-01-02,AAPL,100,\n2023-01-03,AAPL,105,\n");
        let (a, stats) = load_price_series_with_stats(base.as_bytes(), "AAPL").unwrap();
        let b = load_price_series(clean.as_bytes(), "AAPL").unwrap();
        assert_eq!(a.log_returns, b.log_returns);
        assert_eq!(stats.return_mismatches, 1);
    }

    #[test]
    fn series_round_trips_through_json() {
        let csv = format!("{PRICES_HEADER}2023-01-02,AAPL,100,\n2023-01-03,AAPL,105,\n");
        let s = load_price_series(csv.as_bytes(), "AAPL").unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: PriceSeries = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    fn options_fixture(rows: &[(&str, u32, f64, f64, f64, f64, &str)]) -> String {
        let mut csv = OPTIONS_HEADER.to_string();
        for (date, days, fwd, strike, prem, iv, cp) in rows {
            csv.push_str(&format!(
                "{date},{days},{fwd},{strike},{prem},{iv},{cp},AAPL,0\n"
            ));
        }
        csv
    }

    #[test]
    fn nearest_strike_wins() {
        let csv = options_fixture(&[
            ("2023-08-31", 10, 101.0, 95.0, 1.0, 0.21, "P"),
            ("2023-08-31", 10, 101.0, 100.0, 2.0, 0.20, "P"),
            ("2023-08-31", 10, 101.0, 105.0, 6.0, 0.22, "P"),
        ]);
        let c = select_contract(csv.as_bytes(), "AAPL", d("2023-08-31"), 10, CpFlag::Put).unwrap();
        assert_eq!(c.strike, 100.0);
        assert_eq!(c.premium, 2.0);
    }

    #[test]
    fn strike_ties_break_low() {
        let csv = options_fixture(&[
            ("2023-08-31", 10, 101.0, 99.0, 1.0, 0.21, "P"),
            ("2023-08-31", 10, 101.0, 103.0, 2.0, 0.20, "P"),
        ]);
        let c = select_contract(csv.as_bytes(), "AAPL", d("2023-08-31"), 10, CpFlag::Put).unwrap();
        assert_eq!(c.strike, 99.0);
    }

    #[test]
    fn no_match_when_filter_excludes_everything() {
        let csv = options_fixture(&[("2023-08-31", 10, 101.0, 99.0, 1.0, 0.21, "C")]);
        assert!(matches!(
            select_contract(csv.as_bytes(), "AAPL", d("2023-08-31"), 10, CpFlag::Put),
            Err(MarketError::NoMatch)
        ));
    }

    #[test]
    fn selection_is_permutation_invariant() {
        let rows = [
            ("2023-08-31", 10, 101.0, 95.0, 1.0, 0.21, "P"),
            ("2023-08-31", 10, 101.0, 100.0, 2.0, 0.20, "P"),
            ("2023-08-31", 10, 101.0, 105.0, 6.0, 0.22, "P"),
            ("2023-08-31", 10, 101.0, 102.0, 3.0, 0.19, "P"),
        ];
        let baseline = select_contract(
            options_fixture(&rows).as_bytes(),
            "AAPL",
            d("2023-08-31"),
            10,
            CpFlag::Put,
        )
        .unwrap();
        // All rotations of the row order select the same contract.
        for shift in 1..rows.len() {
            let mut perm = rows.to_vec();
            perm.rotate_left(shift);
            let c = select_contract(
                options_fixture(&perm).as_bytes(),
                "AAPL",
                d("2023-08-31"),
                10,
                CpFlag::Put,
            )
            .unwrap();
            assert_eq!(c, baseline);
        }
    }

    #[test]
    fn option_rows_violating_domain_bounds_are_malformed() {
        for bad in [
            ("2023-08-31", 0u32, 101.0, 100.0, 2.0, 0.20, "P"),
            ("2023-08-31", 10, 101.0, -5.0, 2.0, 0.20, "P"),
            ("2023-08-31", 10, 101.0, 100.0, 2.0, -0.1, "P"),
        ] {
            let csv = options_fixture(&[bad]);
            assert!(matches!(
                select_contract(csv.as_bytes(), "AAPL", d("2023-08-31"), 10, CpFlag::Put),
                Err(MarketError::MalformedRow { .. })
            ));
        }
    }

    #[test]
    fn atm_vol_series_single_date() {
        let csv = options_fixture(&[("2023-08-31", 10, 101.0, 100.0, 2.0, 0.20, "P")]);
        let s = extract_atm_vol_series(csv.as_bytes(), "AAPL", 1..=30).unwrap();
        assert_eq!(s.dates.len(), 1);
        assert_eq!(s.atm_implied_vols, vec![0.20]);
    }

    #[test]
    fn atm_vol_series_band_can_exclude_everything() {
        let csv = options_fixture(&[("2023-08-31", 90, 101.0, 100.0, 2.0, 0.20, "P")]);
        assert!(matches!(
            extract_atm_vol_series(csv.as_bytes(), "AAPL", 1..=30),
            Err(MarketError::EmptySeries(_))
        ));
    }

    #[test]
    fn atm_vol_series_matches_hand_walk() {
        // Five dates; per date the nearest-strike row inside the band wins.
        let csv = options_fixture(&[
            ("2023-08-01", 10, 100.0, 98.0, 1.0, 0.31, "P"),
            ("2023-08-01", 10, 100.0, 101.0, 1.0, 0.30, "P"), // |1| < |2| -> 0.30
            ("2023-08-02", 45, 100.0, 100.0, 1.0, 0.99, "P"), // out of band
            ("2023-08-02", 10, 100.0, 97.0, 1.0, 0.28, "P"),  // only in-band row
            ("2023-08-03", 10, 102.0, 101.0, 1.0, 0.26, "C"),
            ("2023-08-04", 5, 101.0, 100.0, 1.0, 0.24, "P"),
            ("2023-08-04", 10, 101.0, 100.0, 1.0, 0.23, "P"), // tie on |1|,strike -> lower days: 0.24
            ("2023-08-07", 10, 99.0, 99.0, 1.0, 0.22, "P"),
        ]);
        let s = extract_atm_vol_series(csv.as_bytes(), "AAPL", 1..=30).unwrap();
        assert_eq!(s.dates.len(), 5);
        assert_eq!(s.atm_implied_vols, vec![0.30, 0.28, 0.26, 0.24, 0.22]);
    }

    #[test]
    fn maturity_uses_trading_day_convention() {
        let c = OptionContract {
            ticker: "AAPL".into(),
            quote_date: d("2023-08-31"),
            dte: 10,
            strike: 100.0,
            forward_price: 101.0,
            premium: 2.0,
            implied_vol: 0.2,
            cp_flag: CpFlag::Put,
        };
        assert_eq!(c.maturity_years(), 10.0 / 252.0);
    }
}
