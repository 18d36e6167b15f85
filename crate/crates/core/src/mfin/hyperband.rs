use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{HyperbandParams, SearchSpace, TrialConfig};
use super::MfinError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub trials: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub rungs: Vec<Rung>,
}

/// Successive-halving brackets for maximum resource `r_max` and factor `eta`.
pub fn schedule(r_max: usize, eta: usize) -> Vec<Bracket> {
    let mut s_max = 0;
    while eta.pow(s_max as u32 + 1) <= r_max {
        s_max += 1;
    }
    (0..=s_max)
        .rev()
        .map(|s| {
            let n = ((s_max + 1) * eta.pow(s as u32)).div_ceil(s + 1);
            let r = r_max as f64 / eta.pow(s as u32) as f64;
            let rungs = (0..=s)
                .map(|i| Rung {
                    trials: n / eta.pow(i as u32),
                    epochs: (libm::round(r * eta.pow(i as u32) as f64) as usize).clamp(1, r_max),
                })
                .collect();
            Bracket { s, rungs }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub bracket: usize,
    pub rung: usize,
    pub epochs: usize,
    pub config: TrialConfig,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbandResult {
    pub best: TrialConfig,
    pub best_loss: f64,
    pub records: Vec<TrialRecord>,
    pub sampled: usize,
}

/// Runs every bracket. `evaluate` receives a rung's `(config, epochs)` jobs
/// and returns one validation loss per job; non-finite losses rank last.
pub fn hyperband_search<F>(
    space: &SearchSpace,
    params: &HyperbandParams,
    seed: u64,
    mut evaluate: F,
) -> Result<HyperbandResult, MfinError>
where
    F: FnMut(&[(TrialConfig, usize)]) -> Result<Vec<f64>, MfinError>,
{
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = space.size();
    let mut records = Vec::new();
    let mut sampled = 0;
    let mut best: Option<(f64, usize, TrialConfig)> = None;
    let key = |l: f64| if l.is_finite() { l } else { f64::INFINITY };
    for _ in 0..params.hyperband_iterations {
        for (bi, bracket) in schedule(params.max_epochs, params.factor).into_iter().enumerate() {
            let budget = params.max_trials.saturating_sub(sampled);
            let n0 = bracket.rungs[0].trials.min(budget);
            if n0 == 0 {
                break;
            }
            let mut alive: Vec<(usize, TrialConfig)> =
                (0..n0).map(|j| (sampled + j, space.point(rng.random_range(0..size)))).collect();
            sampled += n0;
            for (ri, rung) in bracket.rungs.iter().enumerate() {
                let jobs: Vec<(TrialConfig, usize)> = alive.iter().map(|(_, c)| (*c, rung.epochs)).collect();
                let losses = evaluate(&jobs)?;
                if losses.len() != jobs.len() {
                    return Err(MfinError::Data("evaluator returned the wrong number of losses"));
                }
                let mut scored: Vec<(f64, usize, TrialConfig)> =
                    alive.iter().zip(&losses).map(|((id, c), l)| (key(*l), *id, *c)).collect();
                for (l, id, c) in &scored {
                    records.push(TrialRecord { trial: *id, bracket: bi, rung: ri, epochs: rung.epochs, config: *c, loss: *l });
                }
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let top = scored[0];
                if best.as_ref().is_none_or(|(bl, bid, _)| (top.0, top.1) < (*bl, *bid)) {
                    best = Some(top);
                }
                let keep = bracket.rungs.get(ri + 1).map_or(0, |r| r.trials.min(scored.len()).max(1));
                alive = scored.into_iter().take(keep).map(|(_, id, c)| (id, c)).collect();
            }
        }
    }
    let (best_loss, _, best) = best.ok_or(MfinError::Data("hyperband sampled no trials"))?;
    Ok(HyperbandResult { best, best_loss, records, sampled })
}
