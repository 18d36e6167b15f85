//! Result tables: per-day series, metrics, correlations, equity curves,
//! cost sweeps and an optional SVG chart.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use mfin_core::calendar::Calendar;
use mfin_core::frame::Frame;
use mfin_core::metrics::{correlation, hit_rate, mar, mdd, pnl_ratio, sharpe, vol, MetricsReport};
use mfin_core::portfolio::{PortfolioSeries, ScaleState, Stage};

use crate::error::{CliError, Result};
use crate::harness::StrategyRun;
use crate::io::{parse_date, DATE_FORMAT};

pub const SERIES_HEADER: &str = "date,gross,net,turnover,scale_factor";
pub const METRICS_HEADER: [&str; 12] = ["MAR", "HR", "PNL", "Sharpe", "Sortino", "Calmar", "VOL", "MDD", "CORR", "BRK", "PSR", "MTR"];

/// One strategy's daily record, dated by the day the return is realised.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub gross: Vec<f64>,
    pub net: Vec<f64>,
    pub turnover: Vec<f64>,
    pub scale: Vec<f64>,
}

impl SeriesRecord {
    pub fn from_series(name: &str, series: &PortfolioSeries, calendar: &Calendar) -> Self {
        Self {
            name: name.into(),
            dates: (0..series.len()).map(|k| calendar.date(series.realized_index(k))).collect(),
            gross: series.gross.clone(),
            net: series.net(),
            turnover: series.turnover.clone(),
            scale: series.scale.clone(),
        }
    }

    pub fn from_run(run: &StrategyRun, calendar: &Calendar) -> Self {
        Self::from_series(&run.name, &run.series, calendar)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Net returns at another cost level (bps per unit turnover).
    pub fn net_at(&self, cost_bps: f64) -> Vec<f64> {
        self.gross.iter().zip(&self.turnover).map(|(g, v)| g - cost_bps * 1e-4 * v).collect()
    }

    /// Totals-only stand-in for breakeven computations.
    fn totals(&self) -> PortfolioSeries {
        let n = self.len();
        PortfolioSeries {
            start: 0,
            positions: Frame::from_vec(n, 0, Vec::new()),
            prior: Vec::new(),
            gross: self.gross.clone(),
            turnover: self.turnover.clone(),
            cost: 0.0,
            scale: self.scale.clone(),
            scale_state: vec![ScaleState::Unscaled; n],
            stage: Stage::Combined,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 64);
        s.push_str(SERIES_HEADER);
        s.push('\n');
        for k in 0..self.len() {
            let _ = writeln!(s, "{},{},{},{},{}", self.dates[k].format(DATE_FORMAT), self.gross[k], self.net[k], self.turnover[k], self.scale[k]);
        }
        s
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SERIES_HEADER) {
            return Err(CliError::Data(format!("{name}: expected header `{SERIES_HEADER}`")));
        }
        let mut r = Self { name: name.into(), dates: vec![], gross: vec![], net: vec![], turnover: vec![], scale: vec![] };
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            let bad = || CliError::Data(format!("{name}: row {}: malformed", row + 1));
            if cells.len() != 5 {
                return Err(bad());
            }
            let num = |c: &str| c.trim().parse::<f64>().map_err(|_| bad());
            r.dates.push(parse_date(cells[0]).ok_or_else(bad)?);
            r.gross.push(num(cells[1])?);
            r.net.push(num(cells[2])?);
            r.turnover.push(num(cells[3])?);
            r.scale.push(num(cells[4])?);
        }
        Ok(r)
    }
}

fn nan_if_err(r: std::result::Result<f64, mfin_core::metrics::MetricError>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Metrics of `net`; degenerate series get NaN where a statistic is undefined.
pub fn metrics_of(rec: &SeriesRecord, benchmark: Option<&[f64]>) -> MetricsReport {
    let series = rec.totals();
    if let Ok(m) = MetricsReport::compute(&rec.net, Some(&series), benchmark) {
        return m;
    }
    let (mdd_pct, mdd_sigma) = mdd(&rec.net);
    let corr = benchmark.and_then(|b| correlation(&rec.net, b).ok());
    let brk = mfin_core::metrics::breakeven_cost(&series);
    MetricsReport {
        mar: mar(&rec.net),
        hr: hit_rate(&rec.net),
        pnl: pnl_ratio(&rec.net),
        sharpe: nan_if_err(sharpe(&rec.net)),
        sortino: nan_if_err(mfin_core::metrics::sortino(&rec.net)),
        calmar: mfin_core::metrics::calmar(&rec.net),
        vol: vol(&rec.net),
        mdd: mdd_pct,
        mdd_sigma,
        corr_pearson: corr.map(|c| c.pearson),
        corr_spearman: corr.map(|c| c.spearman),
        brk_bps: Some(brk),
        psr: f64::NAN,
        psr_insufficient: true,
        mtr_days: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub ex_post: bool,
    pub metrics: MetricsReport,
}

pub fn metrics_table(records: &[SeriesRecord], ex_post: &[bool], benchmark: Option<&str>) -> Vec<MetricsRow> {
    let bench = benchmark.and_then(|b| records.iter().find(|r| r.name == b)).map(|r| r.net.clone());
    records
        .iter()
        .zip(ex_post.iter().chain(std::iter::repeat(&false)))
        .map(|(r, e)| {
            let b = bench.as_deref().filter(|b| b.len() == r.len());
            MetricsRow { strategy: r.name.clone(), ex_post: *e, metrics: metrics_of(r, b) }
        })
        .collect()
}

fn cell(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("strategy,");
    s.push_str(&METRICS_HEADER.join(","));
    s.push_str(",MDD_sigma,CORR_spearman,PSR_small_sample,ex_post\n");
    for r in rows {
        let m = &r.metrics;
        let fields = [
            cell(m.mar),
            cell(m.hr),
            cell(m.pnl),
            cell(m.sharpe),
            cell(m.sortino),
            cell(m.calmar),
            cell(m.vol),
            cell(m.mdd),
            opt(m.corr_pearson),
            opt(m.brk_bps),
            cell(m.psr),
            m.mtr_days.map(|d| d.to_string()).unwrap_or_default(),
            cell(m.mdd_sigma),
            opt(m.corr_spearman),
            m.psr_insufficient.to_string(),
            r.ex_post.to_string(),
        ];
        let _ = writeln!(s, "{},{}", r.strategy, fields.join(","));
    }
    s
}

/// Pearson above the diagonal, Spearman below, ones on it.
pub fn correlation_matrix(records: &[SeriesRecord]) -> Result<Vec<Vec<f64>>> {
    let n = records.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if records[i].dates != records[j].dates {
                return Err(CliError::Data(format!("{} and {} cover different dates", records[i].name, records[j].name)));
            }
            let c = correlation(&records[i].net, &records[j].net).map(|c| (c.pearson, c.spearman)).unwrap_or((f64::NAN, f64::NAN));
            m[i][j] = c.0;
            m[j][i] = c.1;
        }
    }
    Ok(m)
}

pub fn correlation_csv(records: &[SeriesRecord]) -> Result<String> {
    let m = correlation_matrix(records)?;
    let mut s = String::from("strategy");
    for r in records {
        s.push(',');
        s.push_str(&r.name);
    }
    s.push('\n');
    for (r, row) in records.iter().zip(&m) {
        s.push_str(&r.name);
        for v in row {
            s.push(',');
            s.push_str(&cell(*v));
        }
        s.push('\n');
    }
    Ok(s)
}

/// Compounded wealth `Π(1 + r)` per strategy.
pub fn equity_curves(records: &[SeriesRecord]) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            r.net
                .iter()
                .scan(1.0, |w, x| {
                    *w *= 1.0 + x;
                    Some(*w)
                })
                .collect()
        })
        .collect()
}

pub fn equity_csv(records: &[SeriesRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        return Ok("date\n".into());
    };
    if records.iter().any(|r| r.dates != first.dates) {
        return Err(CliError::Data("equity curves need aligned dates".into()));
    }
    let curves = equity_curves(records);
    let mut s = String::from("date");
    for r in records {
        s.push(',');
        s.push_str(&r.name);
    }
    s.push('\n');
    for k in 0..first.len() {
        s.push_str(&first.dates[k].format(DATE_FORMAT).to_string());
        for c in &curves {
            s.push(',');
            s.push_str(&cell(c[k]));
        }
        s.push('\n');
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweep {
    pub cost_bps: Vec<f64>,
    pub rows: Vec<(String, Vec<f64>)>,
}

/// Net Sharpe for every strategy at every cost level.
pub fn cost_sweep(records: &[SeriesRecord], grid_bps: &[f64]) -> CostSweep {
    let rows = records
        .iter()
        .map(|r| (r.name.clone(), grid_bps.iter().map(|c| nan_if_err(sharpe(&r.net_at(*c)))).collect()))
        .collect();
    CostSweep { cost_bps: grid_bps.to_vec(), rows }
}

impl CostSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy");
        for c in &self.cost_bps {
            let _ = write!(s, ",C={c}");
        }
        s.push('\n');
        for (name, vals) in &self.rows {
            s.push_str(name);
            for v in vals {
                s.push(',');
                s.push_str(&cell(*v));
            }
            s.push('\n');
        }
        s
    }

    /// Strategies whose Sharpe rises anywhere along the grid.
    pub fn non_monotone(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|(_, v)| v.windows(2).any(|w| w[1] > w[0]))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line chart of cumulative returns.
pub fn equity_svg(records: &[SeriesRecord]) -> String {
    let (w, h, pad) = (900.0, 420.0, 40.0);
    let curves = equity_curves(records);
    let (lo, hi) = curves.iter().flatten().fold((1.0f64, 1.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = (hi - lo).max(1e-12);
    let n = curves.iter().map(Vec::len).max().unwrap_or(0).max(2);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (k, (r, c)) in records.iter().zip(&curves).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let x = pad + (w - 2.0 * pad) * t as f64 / (n - 1) as f64;
                let y = h - pad - (h - 2.0 * pad) * (v - lo) / span;
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>", pts.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>", pad + 5.0, pad + 14.0 * (k as f64 + 1.0), r.name);
    }
    s.push_str("</svg>\n");
    s
}
