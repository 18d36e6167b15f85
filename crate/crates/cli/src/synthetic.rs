//! Seeded synthetic panels with known structure.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use mfin_core::calendar::Calendar;
use mfin_core::ingest::FactorPanel;

pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
}

pub fn daily_calendar(start: NaiveDate, n: usize) -> Calendar {
    Calendar::daily(start, start + chrono::Days::new(n as u64 - 1)).expect("non-empty calendar")
}

pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Builds levels (`t`, asset, feature) from log-level paths `paths[i][j]`.
fn assemble(n: usize, assets: Vec<String>, features: Vec<String>, paths: &[Vec<Vec<f64>>]) -> FactorPanel {
    let (na, nf) = (assets.len(), features.len());
    let mut levels = vec![None; n * na * nf];
    for (i, per_asset) in paths.iter().enumerate() {
        for (j, path) in per_asset.iter().enumerate() {
            for t in 0..n {
                levels[(t * na + i) * nf + j] = Some(100.0 * path[t].exp());
            }
        }
    }
    FactorPanel::from_levels(daily_calendar(epoch(), n), assets, features, levels).expect("consistent shape")
}

fn walk(increments: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut x = 0.0;
    increments.map(|d| {
        x += d;
        x
    }).collect()
}

/// I.i.d. Gaussian open returns (`open` only).
pub fn gaussian_panel(n: usize, n_assets: usize, daily_vol: f64, seed: u64) -> FactorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, daily_vol).unwrap();
    let mut paths = Vec::new();
    for _ in 0..n_assets {
        let mut p = vec![0.0; n];
        let mut lv = 1.0f64;
        for v in p.iter_mut().skip(1) {
            lv *= 1.0 + d.sample(&mut rng);
            *v = lv.ln();
        }
        paths.push(vec![p]);
    }
    assemble(n, names("A", n_assets), vec!["open".into()], &paths)
}

/// `open` drifts by `± daily_vol` per day, flipping every `block` days;
/// `noise0..` are driftless walks of the same volatility.
pub fn trending_panel(n: usize, n_assets: usize, block: usize, daily_vol: f64, n_noise: usize, seed: u64) -> FactorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = vec!["open".to_string()];
    features.extend(names("noise", n_noise));
    let mut paths = Vec::new();
    for _ in 0..n_assets {
        let mut per = Vec::new();
        let g = |drift: &dyn Fn(usize) -> f64, rng: &mut ChaCha8Rng| {
            walk((0..n).map(|t| {
                let e: f64 = StandardNormal.sample(rng);
                if t == 0 { 0.0 } else { drift(t) + daily_vol * e }
            }))
        };
        per.push(g(&|t| if (t / block) % 2 == 0 { daily_vol } else { -daily_vol }, &mut rng));
        for _ in 0..n_noise {
            per.push(g(&|_| 0.0, &mut rng));
        }
        paths.push(per);
    }
    assemble(n, names("A", n_assets), features, &paths)
}

/// `open = fair · exp(x)` with `x` an AR(1) deviation of the given half-life.
pub fn ou_panel(n: usize, n_assets: usize, half_life: f64, seed: u64) -> FactorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = 1.0 - 0.5f64.powf(1.0 / half_life);
    let mut paths = Vec::new();
    for _ in 0..n_assets {
        let mut fair = vec![0.0; n];
        let mut open = vec![0.0; n];
        let mut x = 0.0;
        for t in 1..n {
            let (ef, ex): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            fair[t] = fair[t - 1] + 0.005 * ef;
            x = (1.0 - theta) * x + 0.02 * ex;
            open[t] = fair[t] + x;
        }
        paths.push(vec![open, fair]);
    }
    assemble(n, names("A", n_assets), vec!["open".into(), "fair".into()], &paths)
}

/// Regime `s_t = ±1` switching with probability `1/mean_regime`; the factor
/// rises in `+1` regimes and every asset drifts with the sign of `s_t`.
pub fn planted_panel(n: usize, n_assets: usize, mean_regime: f64, seed: u64) -> FactorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = vec![1.0; n];
    for t in 1..n {
        s[t] = if rng.random::<f64>() < 1.0 / mean_regime { -s[t - 1] } else { s[t - 1] };
    }
    let factor = walk((0..n).map(|t| {
        let e: f64 = StandardNormal.sample(&mut rng);
        if t == 0 { 0.0 } else { 0.01 * s[t] + 0.004 * e }
    }));
    let mut paths = Vec::new();
    for _ in 0..n_assets {
        let open = walk((0..n).map(|t| {
            let e: f64 = StandardNormal.sample(&mut rng);
            if t == 0 { 0.0 } else { 0.008 * s[t] + 0.02 * e }
        }));
        paths.push(vec![open, factor.clone()]);
    }
    assemble(n, names("A", n_assets), vec!["open".into(), "factor".into()], &paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = trending_panel(300, 2, 200, 0.02, 2, 1);
        assert_eq!((a.len(), a.n_assets(), a.n_features()), (300, 2, 3));
        assert_eq!(a, trending_panel(300, 2, 200, 0.02, 2, 1));
        assert_ne!(a, trending_panel(300, 2, 200, 0.02, 2, 2));
        let o = ou_panel(100, 1, 5.0, 3);
        assert!(o.levels().iter().all(|v| v.is_some_and(|x| x > 0.0)));
    }

    #[test]
    fn trend_blocks_alternate() {
        let p = trending_panel(800, 1, 200, 0.02, 0, 5);
        let lv = p.level_column(0, 0);
        let up = lv[199].unwrap() / lv[0].unwrap();
        let down = lv[399].unwrap() / lv[200].unwrap();
        assert!(up > 5.0 && down < 0.2, "{up} {down}");
    }
}
