use std::fs;

use mfin_cli::commands::{ingest_panel, load_panel, read_series_dir};
use mfin_cli::config::RunConfig;
use mfin_cli::guard::GuardedPanel;
use mfin_cli::harness::{Backtest, StrategyRun};
use mfin_cli::io::{parse_columns, read_panel, write_panel};
use mfin_cli::report::{correlation_matrix, SeriesRecord};
use mfin_cli::synthetic::{epoch, ou_panel};
use mfin_cli::CliError;
use mfin_core::ingest::FactorPanel;
use mfin_core::splits::make_splits;
use mfin_core::strategies::StrategyKind;

fn write_raw(panel: &FactorPanel, dir: &std::path::Path) {
    for (i, asset) in panel.assets().iter().enumerate() {
        let mut cmc = String::from("date,open\n");
        let mut bic = String::from("date,value\n");
        for t in 0..panel.len() {
            let d = panel.calendar().date(t);
            cmc.push_str(&format!("{d},{}\n", panel.level(t, i, 0).unwrap()));
            bic.push_str(&format!("{d},{}\n", panel.level(t, i, 1).unwrap()));
        }
        fs::write(dir.join(format!("CMC_{asset}.csv")), cmc).unwrap();
        fs::write(dir.join(format!("BIC_{asset}_fair.csv")), bic).unwrap();
    }
}

#[test]
fn raw_csvs_rebuild_the_panel() {
    let p = ou_panel(120, 2, 5.0, 1);
    let dir = tempfile::tempdir().unwrap();
    write_raw(&p, dir.path());
    let got = ingest_panel(&RunConfig::default(), dir.path()).unwrap();
    assert_eq!(got.assets(), p.assets());
    assert_eq!(got.features(), p.features());
    for (a, b) in got.levels().iter().zip(p.levels()) {
        let (a, b) = (a.unwrap(), b.unwrap());
        assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} {b}");
    }
}

#[test]
fn panel_directory_round_trips_and_detects_tampering() {
    let p = ou_panel(90, 2, 5.0, 2);
    let dir = tempfile::tempdir().unwrap();
    let m = write_panel(&p, dir.path()).unwrap();
    assert_eq!(m.n_dates, 90);
    assert_eq!(read_panel(dir.path()).unwrap(), p);
    assert_eq!(load_panel(&RunConfig::default(), dir.path()).unwrap(), p);

    let file = dir.path().join("levels_A0.csv");
    let text = fs::read_to_string(&file).unwrap();
    fs::write(&file, text.replacen('1', "2", 1)).unwrap();
    let err = read_panel(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn malformed_rows_are_data_errors() {
    for (text, needle) in [
        ("date,open\n2020-01-01,1\n2020-01-02,abc\n", "row 2"),
        ("date,open\n2020-01-01,1\n2020-01-01,2\n", "duplicate"),
        ("date,open\n01/02/2020,1\n", "bad date"),
        ("day,open\n2020-01-01,1\n", "header"),
        ("date,open\n2020-01-01,inf\n", "non-finite"),
    ] {
        let err = parse_columns(text, "x.csv").unwrap_err();
        assert!(matches!(err, CliError::Data(_)), "{err}");
        assert!(err.to_string().contains(needle), "{err}");
        assert_eq!(err.exit_code(), 3);
    }
}

#[test]
fn blank_cells_are_missing_not_zero() {
    let cols = parse_columns("date,a,b\n2020-01-02,1,\n2020-01-01,2,3\n", "x.csv").unwrap();
    assert_eq!(cols[0].1.len(), 2);
    assert_eq!(cols[1].1.len(), 1);
    assert!(cols[0].1[0].0 < cols[0].1[1].0);
}

#[test]
fn guard_refuses_reads_past_the_horizon() {
    let p = ou_panel(50, 1, 5.0, 3);
    let g = GuardedPanel::new(&p, 30);
    assert!(g.view(30).is_ok());
    let err: CliError = g.view(31).unwrap_err().into();
    assert_eq!(err.exit_code(), 3);
    assert!(g.level(29, 0, 0).is_ok());
    assert!(g.ret(30, 0, 0).is_err());
}

fn small_run() -> (FactorPanel, Vec<StrategyRun>) {
    let p = ou_panel(900, 2, 5.0, 4);
    let plan = make_splits(p.calendar(), epoch() + chrono::Months::new(12), 12).unwrap();
    let grid = mfin_core::strategies::StrategyGrid::default();
    let bt = Backtest::new(&p, "open", &plan, &grid, 0.0).unwrap();
    let runs = vec![bt.run_long_only().unwrap(), bt.run_realistic(StrategyKind::Mop).unwrap()];
    (p, runs)
}

#[test]
fn series_csv_round_trips_and_reprices() {
    let (p, runs) = small_run();
    let rec = SeriesRecord::from_run(&runs[1], p.calendar());
    assert!(rec.to_csv().starts_with("date,gross,net,turnover,scale_factor\n"));
    let back = SeriesRecord::from_csv(&rec.name, &rec.to_csv()).unwrap();
    assert_eq!(back, rec);
    let at5 = back.net_at(5.0);
    let direct = runs[1].series.with_cost(5e-4).net();
    for (a, b) in at5.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn series_directory_keeps_order() {
    let (p, runs) = small_run();
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series");
    fs::create_dir_all(&series).unwrap();
    let mut order = String::new();
    for r in runs.iter().rev() {
        let rec = SeriesRecord::from_run(r, p.calendar());
        fs::write(series.join(format!("{}.csv", rec.name)), rec.to_csv()).unwrap();
        order.push_str(&format!("{}\n", rec.name));
    }
    fs::write(series.join("order.txt"), order).unwrap();
    let recs = read_series_dir(dir.path()).unwrap();
    assert_eq!(recs.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["MOP", "Long-only"]);
    let c = correlation_matrix(&recs).unwrap();
    assert_eq!(c[0][0], 1.0);
    assert!(c[0][1].abs() <= 1.0 && c[1][0].abs() <= 1.0);
}
