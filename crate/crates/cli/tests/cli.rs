use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfin_cli::synthetic::ou_panel;

const TOY: &str = r#"
seed = 5

[splits]
first_test_start = "2016-01-01"

[strategies]
kinds = ["MOP", "REV"]
mop_lookbacks = [21, 63]
rev_lookbacks = [5]
rev_entry = [1.75]
rev_exit = [0.75]

[mfin]
ensemble_seeds = 2

[mfin.fixed]
sequence_length = 30
max_epochs = 2
early_stopping = 2

[mfin.tuned]
c = [0.0]
k = [0.0]
dropout_rate = [0.0]
learning_rate = [0.01]
hidden_layer_size = [4]
n_filters = [2]
ts_filter_length = [3]

[mfin.hyperband]
max_epochs = 1
max_trials = 1
"#;

fn mfin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfin")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn seed_data(dir: &Path) {
    let p = ou_panel(900, 2, 5.0, 9);
    for (i, asset) in p.assets().iter().enumerate() {
        let mut s = String::from("date,open,fair\n");
        for t in 0..p.len() {
            s.push_str(&format!("{},{},{}\n", p.calendar().date(t), p.level(t, i, 0).unwrap(), p.level(t, i, 1).unwrap()));
        }
        fs::write(dir.join(format!("CMC_{asset}.csv")), s).unwrap();
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn param_count_prints_the_sweep_table() {
    let o = mfin(&["param-count", "--assets", "1,7"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("sweep,value,n_assets,origcim,reduction,cross_asset,lstm,head,total,extractor_share\n"));
    assert_eq!(text.lines().count(), 1 + 13 * 2);
    assert!(text.lines().any(|l| l.starts_with("n_filters,64,7,")));
}

#[test]
fn config_problems_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&mfin(&["--config", s(&bad), "backtest"])), 2);
    assert_eq!(code(&mfin(&["no-such-command"])), 2);
    assert_eq!(code(&mfin(&["param-count", "--assets", "0"])), 2);
}

#[test]
fn data_problems_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("CMC_A0.csv"), "date,open\n2020-01-01,1\n2020-01-02,x\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&mfin(&["--data-dir", s(dir.path()), "--out-dir", s(&out), "ingest"])), 3);
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&mfin(&["--data-dir", s(empty.path()), "--out-dir", s(&out), "ingest"])), 3);
}

#[test]
fn end_to_end_pipeline() {
    let root = tempfile::tempdir().unwrap();
    let raw = root.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    seed_data(&raw);
    let cfg = root.path().join("toy.toml");
    fs::write(&cfg, TOY).unwrap();
    let work = root.path().join("work");

    let o = mfin(&["--config", s(&cfg), "--data-dir", s(&raw), "--out-dir", s(&work), "ingest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let panel = work.join("panel");
    assert!(panel.join("manifest.json").is_file());

    let bt = root.path().join("bt");
    let o = mfin(&["--config", s(&cfg), "--data-dir", s(&panel), "--out-dir", s(&bt), "--threads", "2", "backtest", "--svg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.json", "metrics.csv", "correlation.csv", "equity.csv", "cost_sweep.csv", "equity.svg", "selections.json", "run_manifest.json", "series/Long-only.csv", "series/CMB.csv"] {
        assert!(bt.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(bt.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("strategy,MAR,HR,PNL,Sharpe,Sortino,Calmar,VOL,MDD,CORR,BRK,PSR,MTR"));

    let rep = root.path().join("rep");
    let o = mfin(&["--config", s(&cfg), "--data-dir", s(&bt), "--out-dir", s(&rep), "report"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(rep.join("metrics.csv")).unwrap(), fs::read(bt.join("metrics.csv")).unwrap());

    let o = mfin(&["--config", s(&cfg), "--data-dir", s(&bt), "--out-dir", s(&rep), "cost-sweep"]);
    assert_eq!(code(&o), 0);
    let sweep = fs::read_to_string(rep.join("cost_sweep.csv")).unwrap();
    assert!(sweep.starts_with("strategy,C=0,C=2.5,C=5,C=7.5,C=10,C=12.5"), "{sweep}");

    let runs: Vec<_> = ["m1", "m2"].iter().map(|n| root.path().join(n)).collect();
    for out in &runs {
        let o = mfin(&["--config", s(&cfg), "--data-dir", s(&panel), "--out-dir", s(out), "train-mfin"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let log = fs::read_to_string(runs[0].join("mfin/split_0/seed_0_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,valid_loss,lr\n"));
    let ckpt: serde_json::Value = serde_json::from_str(&fs::read_to_string(runs[0].join("mfin/split_0/seed_0.json")).unwrap()).unwrap();
    assert!(ckpt["tensors"].as_array().is_some_and(|t| !t.is_empty()));
    for f in ["series/MFIN.csv", "metrics.csv"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
}
