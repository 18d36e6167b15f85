//! Read guard used while a selection is being made: anything dated at or
//! after the horizon is off limits until the selection is frozen.

use mfin_core::ingest::FactorPanel;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("lookahead: requested calendar index {requested} while selection is frozen before index {horizon}")]
pub struct LookaheadViolation {
    pub requested: usize,
    pub horizon: usize,
}

pub struct GuardedPanel<'a> {
    panel: &'a FactorPanel,
    horizon: usize,
}

impl<'a> GuardedPanel<'a> {
    pub fn new(panel: &'a FactorPanel, horizon: usize) -> Self {
        Self { panel, horizon: horizon.min(panel.len()) }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn check(&self, t: usize) -> Result<(), LookaheadViolation> {
        if t >= self.horizon {
            return Err(LookaheadViolation { requested: t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Copy of the first `len` calendar rows.
    pub fn view(&self, len: usize) -> Result<FactorPanel, LookaheadViolation> {
        if len > 0 {
            self.check(len - 1)?;
        }
        Ok(self.panel.truncated(len))
    }

    pub fn level(&self, t: usize, asset: usize, feature: usize) -> Result<Option<f64>, LookaheadViolation> {
        self.check(t)?;
        Ok(self.panel.level(t, asset, feature))
    }

    pub fn ret(&self, t: usize, asset: usize, feature: usize) -> Result<Option<f64>, LookaheadViolation> {
        self.check(t)?;
        Ok(self.panel.ret(t, asset, feature))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use mfin_core::calendar::Calendar;

    fn panel(n: usize) -> FactorPanel {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let cal = Calendar::daily(d0, d0 + chrono::Days::new(n as u64 - 1)).unwrap();
        let lv = (0..n).map(|t| Some(100.0 + t as f64)).collect();
        FactorPanel::from_levels(cal, vec!["A".into()], vec!["open".into()], lv).unwrap()
    }

    #[test]
    fn reads_stop_at_horizon() {
        let p = panel(30);
        let g = GuardedPanel::new(&p, 20);
        assert_eq!(g.view(20).unwrap().len(), 20);
        assert_eq!(g.level(19, 0, 0).unwrap(), Some(119.0));
        assert_eq!(g.view(21), Err(LookaheadViolation { requested: 20, horizon: 20 }));
        assert!(g.ret(25, 0, 0).is_err());
    }

    #[test]
    fn truncated_view_matches_full_history() {
        let p = panel(40);
        let v = GuardedPanel::new(&p, 25).view(25).unwrap();
        for t in 0..25 {
            assert_eq!(v.ret(t, 0, 0), p.ret(t, 0, 0));
            assert_eq!(v.std63(t, 0, 0), p.std63(t, 0, 0));
        }
    }
}
