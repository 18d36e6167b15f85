use chrono::NaiveDate;
use proptest::prelude::*;

use mfin_core::autodiff::{Graph, Tensor};
use mfin_core::calendar::Calendar;
use mfin_core::frame::Frame;
use mfin_core::ingest::{build_panel, link_segments, FactorPanel, MissingPolicy, RawSeries, Source};
use mfin_core::metrics::{self, SharpeMoments};
use mfin_core::portfolio::{ensemble_average, portfolio_returns, second_layer_scale, VolEstimate};
use mfin_core::signals::{ew_zscore, k_day_return, macd, observed, BazParams, MopParams};
use mfin_core::strategies::{
    baz_weights, long_only_weights, mop_weights, rev_state_machine, select_top2, Combo, ScoredCombo, WeightsMatrix,
};
use mfin_core::signals::SignalParams;

fn day(k: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(k as u64)
}

fn levels_from(steps: &[f64]) -> Vec<f64> {
    steps
        .iter()
        .scan(100.0, |l, s| {
            *l *= 1.0 + s;
            Some(*l)
        })
        .collect()
}

fn single_panel(levels: &[f64]) -> FactorPanel {
    let cal = Calendar::daily(day(0), day(levels.len() - 1)).unwrap();
    FactorPanel::from_levels(cal, vec!["A".into()], vec!["f".into()], observed(levels)).unwrap()
}

fn steps(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.05f64..0.05, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linking_preserves_ratios_and_is_idempotent(a in steps(5..30), b in steps(5..30), scale in 0.1f64..10.0) {
        let la = levels_from(&a);
        let lb: Vec<f64> = levels_from(&b).into_iter().map(|v| v * scale).collect();
        let roll = la.len() - 1;
        let s1 = RawSeries::new("A", "gt", Source::Gt, la.iter().enumerate().map(|(k, v)| (day(k), *v)).collect()).unwrap();
        let s2 = RawSeries::new("A", "gt", Source::Gt, lb.iter().enumerate().map(|(k, v)| (day(roll + k), *v)).collect()).unwrap();
        let linked = link_segments(&[s1.clone(), s2.clone()]).unwrap();
        prop_assert_eq!(linked.observations.len(), la.len() + lb.len() - 1);
        let v = linked.values();
        for k in 1..la.len() {
            let want = la[k] / la[k - 1];
            prop_assert!((v[k] / v[k - 1] - want).abs() <= 1e-12 * want.abs());
        }
        prop_assert_eq!(&v[roll..], &lb[..]);
        let again = link_segments(&[linked.clone()]).unwrap();
        prop_assert_eq!(again, linked);
    }

    #[test]
    fn panel_ignores_series_order(a in steps(20..40), b in steps(20..40), rot in 0usize..4) {
        let n = a.len().min(b.len());
        let mk = |feature: &str, src: Source, xs: &[f64], from: usize| {
            RawSeries::new("A", feature, src, levels_from(xs).iter().enumerate().skip(from).map(|(k, v)| (day(k), *v)).collect()).unwrap()
        };
        let mut series = vec![mk("f", Source::Bic, &a[..n], 0), mk("f", Source::Bc, &b[..n], 3), mk("g", Source::Cmc, &b[..n], 0), mk("g", Source::Gt, &a[..n], 5)];
        let cal = Calendar::daily(day(0), day(n - 1)).unwrap();
        let feats = ["f".to_string(), "g".to_string()];
        let p1 = build_panel(&series, cal.clone(), &["A".into()], &feats, MissingPolicy::default()).unwrap();
        series.rotate_left(rot);
        series.swap(0, 1);
        let p2 = build_panel(&series, cal, &["A".into()], &feats, MissingPolicy::default()).unwrap();
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn future_levels_never_move_past_tensor_rows(a in steps(40..80), cut in 20usize..39, bump in 0.5f64..2.0) {
        let lv = levels_from(&a);
        let p = single_panel(&lv);
        let mut lv2 = lv.clone();
        lv2[cut..].iter_mut().for_each(|v| *v *= bump);
        let q = single_panel(&lv2);
        for t in 0..cut {
            prop_assert_eq!(p.standardized(t, 0, 0), q.standardized(t, 0, 0));
            prop_assert_eq!(p.std63(t, 0, 0), q.std63(t, 0, 0));
        }
    }

    #[test]
    fn signals_are_causal_and_scale_free(a in steps(80..120), cut in 40usize..79, c in 0.01f64..100.0) {
        let lv = levels_from(&a);
        let mut moved = lv.clone();
        moved[cut + 1..].iter_mut().for_each(|v| *v *= 1.7);
        let baz = BazParams::new(4, 12).unwrap();
        let m1 = macd(&observed(&lv), baz).unwrap();
        let m2 = macd(&observed(&moved), baz).unwrap();
        let k1 = k_day_return(&observed(&lv), 5).unwrap();
        let k2 = k_day_return(&observed(&moved), 5).unwrap();
        prop_assert_eq!(&m1[..=cut], &m2[..=cut]);
        prop_assert_eq!(&k1[..=cut], &k2[..=cut]);
        let scaled: Vec<f64> = lv.iter().map(|v| v * c).collect();
        let ks = k_day_return(&observed(&scaled), 5).unwrap();
        let ms = macd(&observed(&scaled), baz).unwrap();
        for t in 0..lv.len() {
            match (k1[t], ks[t]) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
            match (m1[t], ms[t]) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs())),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
        let neg: Vec<f64> = lv.iter().map(|v| -v).collect();
        let mn = macd(&observed(&neg), baz).unwrap();
        for t in 0..lv.len() {
            if let (Some(x), Some(y)) = (m1[t], mn[t]) {
                prop_assert!((x + y).abs() < 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn zscore_is_affine_invariant(d in steps(40..90), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let z1 = ew_zscore(&observed(&d), 63.0);
        let shifted: Vec<f64> = d.iter().map(|x| a * x + b).collect();
        let z2 = ew_zscore(&observed(&shifted), 63.0);
        for (x, y) in z1.iter().zip(&z2) {
            if let (Some(x), Some(y)) = (x, y) {
                prop_assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn momentum_weights_are_signs_and_scale_free(a in steps(80..140), c in 0.01f64..100.0) {
        let lv = levels_from(&a);
        let p = single_panel(&lv);
        let q = single_panel(&lv.iter().map(|v| v * c).collect::<Vec<_>>());
        for k in [5, 21] {
            let w1 = mop_weights(&p, 0, MopParams::new(k).unwrap()).unwrap();
            let w2 = mop_weights(&q, 0, MopParams::new(k).unwrap()).unwrap();
            prop_assert!(w1.as_slice().iter().all(|w| [-1.0, 0.0, 1.0].contains(w)));
            prop_assert_eq!(w1.as_slice(), w2.as_slice());
        }
        let b1 = baz_weights(&p, 0, BazParams::new(8, 24).unwrap()).unwrap();
        let b2 = baz_weights(&q, 0, BazParams::new(8, 24).unwrap()).unwrap();
        prop_assert!(b1.as_slice().iter().all(|w| [-1.0, 0.0, 1.0].contains(w)));
        prop_assert_eq!(b1.as_slice(), b2.as_slice());
    }

    #[test]
    fn reversion_positions_trace_back_to_an_entry(z in prop::collection::vec(prop::option::weighted(0.95, -3.0f64..3.0), 1..200)) {
        let (entry, exit) = (1.75, 0.75);
        let w = rev_state_machine(&z, entry, exit);
        for t in 0..w.len() {
            prop_assert!(w[t].abs() <= 1.0);
            if w[t] != 0.0 {
                let mut t0 = t;
                while t0 > 0 && w[t0 - 1] == w[t] {
                    t0 -= 1;
                }
                prop_assert!(z[t0].unwrap().abs() >= entry);
                for s in t0 + 1..=t {
                    prop_assert!(z[s].unwrap().abs() >= exit);
                }
            }
        }
    }

    #[test]
    fn top2_ignores_candidate_order(scores in prop::collection::vec((0usize..4, 0usize..5, -2.0f64..2.0), 2..30), seed in any::<u64>()) {
        let feats = ["fa", "fb", "fc", "fd"];
        let ks = [5, 21, 63, 126, 252];
        let mut cands: Vec<ScoredCombo> = scores
            .iter()
            .map(|(f, k, s)| ScoredCombo {
                combo: Combo { feature: feats[*f].into(), params: SignalParams::Mop(MopParams { k: ks[*k] }) },
                sharpe: (*s * 4.0).round() / 4.0,
            })
            .collect();
        let first = select_top2(&cands);
        let n = cands.len();
        cands.rotate_left((seed as usize) % n);
        cands.reverse();
        prop_assert_eq!(first, select_top2(&cands));
    }

    #[test]
    fn costs_only_ever_subtract(a in steps(60..100), b in steps(60..100), c1 in 0.0f64..0.002, dc in 0.0f64..0.002) {
        let n = a.len().min(b.len());
        let cal = Calendar::daily(day(0), day(n - 1)).unwrap();
        let mut lv = Vec::new();
        let (la, lb) = (levels_from(&a), levels_from(&b));
        for t in 0..n {
            lv.push(Some(la[t]));
            lv.push(Some(lb[t]));
        }
        let p = FactorPanel::from_levels(cal, vec!["A".into(), "B".into()], vec!["open".into()], lv).unwrap();
        let mut w = mop_weights(&p, 0, MopParams::new(5).unwrap()).unwrap();
        let vol = VolEstimate::from_panel(&p, 0);
        vol.mask_weights(&mut w);
        let r = mfin_core::portfolio::open_returns(&p, 0);
        let s = second_layer_scale(&portfolio_returns(&w, &r, &vol, 0.0, 1..n - 1).unwrap());
        let lo = s.with_cost(c1).net();
        let hi = s.with_cost(c1 + dc).net();
        prop_assert_eq!(s.with_cost(0.0).net(), s.gross.clone());
        for (x, y) in lo.iter().zip(&hi) {
            prop_assert!(y <= x);
        }
        if let (Ok(sa), Ok(sb)) = (metrics::sharpe(&lo), metrics::sharpe(&hi)) {
            prop_assert!(sb <= sa + 1e-12);
        }
    }

    #[test]
    fn long_only_on_rising_assets_earns(a in prop::collection::vec(0.0001f64..0.05, 40..80)) {
        let n = a.len();
        let cal = Calendar::daily(day(0), day(n - 1)).unwrap();
        let lv = levels_from(&a);
        let p = FactorPanel::from_levels(cal, vec!["A".into()], vec!["open".into()], observed(&lv)).unwrap();
        let mut w = long_only_weights(n, 1);
        let vol = VolEstimate::from_panel(&p, 0);
        vol.mask_weights(&mut w);
        let s = portfolio_returns(&w, &mfin_core::portfolio::open_returns(&p, 0), &vol, 0.0, 1..n - 1).unwrap();
        for (k, g) in s.gross.iter().enumerate() {
            if w.get(k + 1, 0) != 0.0 {
                prop_assert!(*g > 0.0);
            }
        }
    }

    #[test]
    fn ensembles_stay_bounded(ws in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 12), 1..6)) {
        let members: Vec<WeightsMatrix> = ws.into_iter().map(|v| WeightsMatrix::from_frame(Frame::from_vec(4, 3, v), "m")).collect();
        let e = ensemble_average(&members).unwrap();
        prop_assert!(e.is_bounded());
    }

    #[test]
    fn metric_scaling(xs in prop::collection::vec(-0.03f64..0.03, 40..200), c in 0.1f64..5.0) {
        prop_assume!(xs.iter().any(|x| *x < 0.0) && xs.iter().any(|x| *x > 0.0));
        let ys: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
        prop_assert!(close(metrics::sharpe(&xs).unwrap(), metrics::sharpe(&ys).unwrap()));
        prop_assert!(close(metrics::sortino(&xs).unwrap(), metrics::sortino(&ys).unwrap()));
        prop_assert!(close(metrics::mar(&xs) * c, metrics::mar(&ys)));
        prop_assert!(close(metrics::vol(&xs) * c, metrics::vol(&ys)));
        let (m, _) = metrics::mdd(&xs);
        prop_assert!((0.0..=1.0).contains(&m));
        let zs: Vec<f64> = xs.iter().map(|x| x * 0.5 + 0.01).collect();
        let cz = metrics::correlation(&xs, &zs).unwrap();
        let cz2 = metrics::correlation(&ys, &zs).unwrap();
        prop_assert!(close(cz.pearson, cz2.pearson) && close(cz.spearman, cz2.spearman));
    }

    #[test]
    fn psr_rises_with_track_length(sr in 0.01f64..0.3, skew in -1.0f64..1.0, kurt in 2.0f64..8.0, n in 30usize..2000) {
        let m = SharpeMoments { n, sharpe: sr, skew, kurtosis: kurt };
        prop_assume!(1.0 - skew * sr + (kurt - 1.0) / 4.0 * sr * sr > 0.0);
        prop_assert!(m.psr_at(n + 10, 0.0) > m.psr_at(n, 0.0) || m.psr_at(n, 0.0) == 1.0);
        let better = SharpeMoments { sharpe: sr * 1.2, ..m };
        let (a, b) = (metrics::mtr_from_moments(&m, 0.0, 0.99), metrics::mtr_from_moments(&better, 0.0, 0.99));
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn conv_output_ignores_later_rows(vals in prop::collection::vec(-1.0f64..1.0, 24), ks in prop::collection::vec(-1.0f64..1.0, 12), t in 0usize..5) {
        let run = |x: Vec<f64>| {
            let mut g = Graph::new();
            let xv = g.constant(Tensor::new(&[6, 2, 2], x));
            let kv = g.constant(Tensor::new(&[3, 1, 2, 2], ks.clone()));
            let y = g.conv2d_causal(xv, kv);
            g.value(y).data.clone()
        };
        let base = run(vals.clone());
        let mut moved = vals.clone();
        moved[(t + 1) * 4..].iter_mut().for_each(|v| *v += 1.0);
        let after = run(moved);
        prop_assert_eq!(&base[..(t + 1) * 4], &after[..(t + 1) * 4]);
    }
}
