//! Subcommand implementations; `main` only parses arguments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mfin_core::calendar::Calendar;
use mfin_core::ingest::{build_panel, FactorPanel, MissingPolicy};
use mfin_core::mfin::{param_count, Dims, EpochLog};
use mfin_core::splits::{make_splits, SplitPlan};
use mfin_core::strategies::WeightsMatrix;
use tracing::info;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::harness::{run_cmb, Backtest, SplitSelection, StrategyRun};
use crate::io::{discovered, load_data_dir, panel_digest, read_panel, span, write_panel, DATE_FORMAT};
use crate::manifest::RunManifest;
use crate::mfin_run::run_mfin;
use crate::report::{correlation_csv, cost_sweep, equity_csv, equity_svg, metrics_csv, metrics_table, SeriesRecord};

pub const BENCHMARK: &str = "Long-only";

pub struct Context {
    pub config: RunConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub svg: bool,
}

impl Context {
    fn manifest(&self, command: &str, panel: Option<&FactorPanel>) -> RunManifest {
        RunManifest::new(command, self.config.seed, &self.config.to_toml(), &panel.map(panel_digest).unwrap_or_default())
    }
}

/// Raw CSVs in `dir` aligned onto a daily calendar.
pub fn ingest_panel(cfg: &RunConfig, dir: &Path) -> Result<FactorPanel> {
    let series = load_data_dir(dir)?;
    if series.is_empty() {
        return Err(CliError::Data(format!("{}: no input series", dir.display())));
    }
    let (found_assets, found_features) = discovered(&series);
    let assets = if cfg.data.assets.is_empty() { found_assets } else { cfg.data.assets.clone() };
    let mut features = if cfg.data.features.is_empty() { found_features } else { cfg.data.features.clone() };
    if let Some(pos) = features.iter().position(|f| *f == cfg.data.open_feature) {
        let open = features.remove(pos);
        features.insert(0, open);
    } else {
        return Err(CliError::Data(format!("no series for the open feature {}", cfg.data.open_feature)));
    }
    let (lo, hi) = span(&series).expect("non-empty series");
    let cal = Calendar::daily(cfg.data.start.unwrap_or(lo), cfg.data.end.unwrap_or(hi))?;
    Ok(build_panel(&series, cal, &assets, &features, MissingPolicy { neutral_fill: cfg.data.neutral_fill })?)
}

/// A written panel directory if `dir` holds a manifest, raw CSVs otherwise.
pub fn load_panel(cfg: &RunConfig, dir: &Path) -> Result<FactorPanel> {
    let panel = if dir.join("manifest.json").is_file() { read_panel(dir)? } else { ingest_panel(cfg, dir)? };
    panel.feature_index(&cfg.data.open_feature)?;
    Ok(panel)
}

pub fn plan(cfg: &RunConfig, panel: &FactorPanel) -> Result<SplitPlan> {
    Ok(make_splits(panel.calendar(), cfg.splits.first_test_start, cfg.splits.increment_months)?)
}

pub fn ingest(ctx: &Context) -> Result<()> {
    let panel = ingest_panel(&ctx.config, &ctx.data_dir)?;
    let dir = ctx.out_dir.join("panel");
    let m = write_panel(&panel, &dir)?;
    info!(assets = m.assets.len(), features = m.features.len(), dates = m.n_dates, "panel written to {}", dir.display());
    let mut manifest = ctx.manifest("ingest", Some(&panel));
    for (name, hash) in m.files {
        manifest.outputs.insert(format!("panel/{name}"), hash);
    }
    manifest.finish(&ctx.out_dir)
}

fn selections_csv(runs: &[&StrategyRun]) -> String {
    let mut s = String::from("strategy,split,test_start,test_end,rank,feature,parameters,train_sharpe\n");
    for r in runs {
        for sel in &r.selections {
            for (rank, p) in sel.picks.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},\"{}\",{}",
                    r.name,
                    sel.split,
                    sel.test_start.format(DATE_FORMAT),
                    sel.test_end.format(DATE_FORMAT),
                    rank + 1,
                    p.combo.feature,
                    p.combo.describe(),
                    p.sharpe
                );
            }
        }
    }
    s
}

/// Per-strategy series plus every table derived from them.
fn write_outputs(ctx: &Context, manifest: &mut RunManifest, records: &[SeriesRecord], ex_post: &[bool]) -> Result<()> {
    let root = &ctx.out_dir;
    let mut order = String::new();
    for r in records {
        manifest.emit(root, &format!("series/{}.csv", r.name), r.to_csv().as_bytes())?;
        order.push_str(&r.name);
        order.push('\n');
    }
    manifest.emit(root, "series/order.txt", order.as_bytes())?;
    write_tables(ctx, manifest, records, ex_post)
}

fn write_tables(ctx: &Context, manifest: &mut RunManifest, records: &[SeriesRecord], ex_post: &[bool]) -> Result<()> {
    let root = &ctx.out_dir;
    let rows = metrics_table(records, ex_post, Some(BENCHMARK));
    manifest.emit(root, "metrics.json", serde_json::to_string_pretty(&rows)?.as_bytes())?;
    manifest.emit(root, "metrics.csv", metrics_csv(&rows).as_bytes())?;
    manifest.emit(root, "correlation.csv", correlation_csv(records)?.as_bytes())?;
    manifest.emit(root, "equity.csv", equity_csv(records)?.as_bytes())?;
    let sweep = cost_sweep(records, &ctx.config.costs.sweep_bps);
    for name in sweep.non_monotone() {
        tracing::warn!("net Sharpe of {name} is not monotone in cost");
    }
    manifest.emit(root, "cost_sweep.csv", sweep.to_csv().as_bytes())?;
    if ctx.svg {
        manifest.emit(root, "equity.svg", equity_svg(records).as_bytes())?;
    }
    Ok(())
}

fn strategy_runs(ctx: &Context, panel: &FactorPanel, ex_post: bool) -> Result<Vec<StrategyRun>> {
    let cfg = &ctx.config;
    let plan = plan(cfg, panel)?;
    let bt = Backtest::new(panel, &cfg.data.open_feature, &plan, &cfg.strategies.grid, cfg.costs.backtest_bps)?;
    let mut runs = vec![bt.run_long_only()?];
    for kind in cfg.kinds()? {
        info!("{} {}", if ex_post { "exploring" } else { "backtesting" }, kind.label());
        runs.push(if ex_post { bt.run_exploration(kind)? } else { bt.run_realistic(kind)? });
    }
    if runs.len() > 2 {
        let parts: Vec<&StrategyRun> = runs[1..].iter().collect();
        runs.push(run_cmb(if ex_post { "CMB-ex-post" } else { "CMB" }, &parts)?);
    }
    Ok(runs)
}

fn run_strategies(ctx: &Context, command: &str, ex_post: bool) -> Result<()> {
    let panel = load_panel(&ctx.config, &ctx.data_dir)?;
    let runs = strategy_runs(ctx, &panel, ex_post)?;
    let mut manifest = ctx.manifest(command, Some(&panel));
    let records: Vec<SeriesRecord> = runs.iter().map(|r| SeriesRecord::from_run(r, panel.calendar())).collect();
    let flags: Vec<bool> = runs.iter().map(|r| r.ex_post).collect();
    write_outputs(ctx, &mut manifest, &records, &flags)?;
    let selected: Vec<&StrategyRun> = runs.iter().filter(|r| !r.selections.is_empty()).collect();
    let log: Vec<(&str, &Vec<SplitSelection>)> = selected.iter().map(|r| (r.name.as_str(), &r.selections)).collect();
    manifest.emit(&ctx.out_dir, "selections.json", serde_json::to_string_pretty(&log)?.as_bytes())?;
    manifest.emit(&ctx.out_dir, "selections.csv", selections_csv(&selected).as_bytes())?;
    manifest.finish(&ctx.out_dir)
}

pub fn backtest(ctx: &Context) -> Result<()> {
    run_strategies(ctx, "backtest", false)
}

pub fn explore(ctx: &Context) -> Result<()> {
    run_strategies(ctx, "explore", true)
}

fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,valid_loss,lr\n");
    for e in log {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, e.valid_loss, e.lr);
    }
    s
}

fn weights_csv(w: &WeightsMatrix, panel: &FactorPanel, rows: std::ops::Range<usize>) -> String {
    let mut s = String::from("date");
    for a in panel.assets() {
        s.push(',');
        s.push_str(a);
    }
    s.push('\n');
    for t in rows {
        s.push_str(&panel.calendar().date(t).format(DATE_FORMAT).to_string());
        for i in 0..w.cols() {
            let _ = write!(s, ",{}", w.get(t, i));
        }
        s.push('\n');
    }
    s
}

pub fn train_mfin(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let panel = load_panel(cfg, &ctx.data_dir)?;
    let plan = plan(cfg, &panel)?;
    let out = run_mfin(&panel, &cfg.data.open_feature, &plan, &cfg.mfin, cfg.seed, cfg.costs.backtest_bps)?;
    let mut manifest = ctx.manifest("train-mfin", Some(&panel));
    let root = &ctx.out_dir;
    for s in &out.splits {
        let dir = format!("mfin/split_{}", s.split);
        manifest.emit(root, &format!("{dir}/search.json"), serde_json::to_string_pretty(&s.search.records)?.as_bytes())?;
        manifest.emit(root, &format!("{dir}/best_trial.json"), serde_json::to_string_pretty(&s.search.best)?.as_bytes())?;
        for (m, (model, log)) in s.ensemble.members.iter().zip(&s.logs).enumerate() {
            let ck = Checkpoint::from_model(model, &s.ensemble.trial).to_json()?;
            manifest.emit(root, &format!("{dir}/seed_{m}.json"), ck.as_bytes())?;
            manifest.emit(root, &format!("{dir}/seed_{m}_log.csv"), log_csv(log).as_bytes())?;
            manifest.emit(root, &format!("{dir}/seed_{m}_weights.csv"), weights_csv(&s.member_weights[m], &panel, s.traded.clone()).as_bytes())?;
        }
        manifest.emit(root, &format!("{dir}/ensemble_weights.csv"), weights_csv(&s.weights, &panel, s.traded.clone()).as_bytes())?;
    }
    let bt = Backtest::new(&panel, &cfg.data.open_feature, &plan, &cfg.strategies.grid, cfg.costs.backtest_bps)?;
    let runs = [bt.run_long_only()?, out.run];
    let records: Vec<SeriesRecord> = runs.iter().map(|r| SeriesRecord::from_run(r, panel.calendar())).collect();
    write_outputs(ctx, &mut manifest, &records, &[false, false])?;
    manifest.finish(root)
}

/// Series CSVs under `dir/series`, in recorded order when available.
pub fn read_series_dir(dir: &Path) -> Result<Vec<SeriesRecord>> {
    let sdir = dir.join("series");
    let names: Vec<String> = match std::fs::read_to_string(sdir.join("order.txt")) {
        Ok(text) => text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect(),
        Err(_) => {
            let mut v: Vec<String> = std::fs::read_dir(&sdir)
                .map_err(|e| CliError::io(&sdir, e))?
                .filter_map(|e| e.ok()?.path().file_stem()?.to_str().map(str::to_string))
                .filter(|n| n != "order")
                .collect();
            v.sort();
            v
        }
    };
    names
        .iter()
        .map(|n| {
            let p = sdir.join(format!("{n}.csv"));
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            SeriesRecord::from_csv(n, &text)
        })
        .collect()
}

/// Rebuilds every table from the series in `--data-dir` (or `--out-dir`).
pub fn report(ctx: &Context) -> Result<()> {
    let src = if ctx.data_dir.join("series").is_dir() { &ctx.data_dir } else { &ctx.out_dir };
    let records = read_series_dir(src)?;
    let flags: Vec<bool> = records.iter().map(|r| r.name.ends_with("-ex-post")).collect();
    let mut manifest = ctx.manifest("report", None);
    write_tables(ctx, &mut manifest, &records, &flags)?;
    manifest.finish(&ctx.out_dir)
}

pub fn cost_sweep_cmd(ctx: &Context) -> Result<()> {
    let src = if ctx.data_dir.join("series").is_dir() { &ctx.data_dir } else { &ctx.out_dir };
    let records = read_series_dir(src)?;
    let sweep = cost_sweep(&records, &ctx.config.costs.sweep_bps);
    let mut manifest = ctx.manifest("cost-sweep", None);
    manifest.emit(&ctx.out_dir, "cost_sweep.csv", sweep.to_csv().as_bytes())?;
    manifest.emit(&ctx.out_dir, "cost_sweep.json", serde_json::to_string_pretty(&sweep)?.as_bytes())?;
    print!("{}", sweep.to_csv());
    manifest.finish(&ctx.out_dir)
}

/// Trainable-parameter table over the hyperparameter sweeps, with stages.
pub fn param_count_table(n_inputs: usize, asset_counts: &[usize]) -> String {
    let mut s = String::from("sweep,value,n_assets,origcim,reduction,cross_asset,lstm,head,total,extractor_share\n");
    let rows: [(&str, Vec<(usize, usize, usize)>); 3] = [
        ("hidden_layer_size", [32, 64, 96, 128].iter().map(|&h| (h, 40, 10)).collect()),
        ("n_filters", [16, 32, 48, 64].iter().map(|&f| (80, f, 10)).collect()),
        ("ts_filter_length", [3, 5, 10, 15, 20].iter().map(|&l| (80, 40, l)).collect()),
    ];
    for (sweep, points) in rows {
        for (h, f, l) in points {
            let value = match sweep {
                "hidden_layer_size" => h,
                "n_filters" => f,
                _ => l,
            };
            for &na in asset_counts {
                let c = param_count(&Dims { n_assets: na, n_inputs, n_filters: f, filter_length: l, hidden: h });
                let _ = writeln!(
                    s,
                    "{sweep},{value},{na},{},{},{},{},{},{},{:.4}",
                    c.origcim,
                    c.reduction,
                    c.cross_asset,
                    c.lstm,
                    c.head,
                    c.total,
                    c.extractor_share()
                );
            }
        }
    }
    s
}
