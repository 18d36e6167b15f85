use super::Batch;
use crate::autodiff::{Graph, Tensor, Var};
use crate::math::sqrt;
use crate::TRADING_DAYS;

/// Loss assigned when the portfolio return has no dispersion.
pub const DEGENERATE_LOSS: f64 = 1e3;
const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutput {
    pub loss: Var,
    pub degenerate: bool,
}

/// `-√252 · mean(R) / std(R) + K |ρ(R, R_b)|` over one batch, with
/// `R_t = mean_i[w·Y1 - C·1e-4·|Δ(w·Y2)|]` and cost charged from the second
/// row on. `R_b` is the equal-weight row mean of `Y1`.
pub fn sharpe_loss(g: &mut Graph, w: Var, batch: &Batch, cost_bps: f64, k: f64) -> LossOutput {
    let y1 = g.constant(batch.y1.clone());
    let y2 = g.constant(batch.y2.clone());
    let pnl = g.mul(w, y1);
    let r = if cost_bps != 0.0 {
        let pos = g.mul(w, y2);
        let dp = g.diff_rows(pos);
        let turn = g.abs(dp);
        let cost = g.scale(turn, cost_bps * 1e-4);
        let net = g.sub(pnl, cost);
        g.row_mean(net)
    } else {
        g.row_mean(pnl)
    };
    let sd = g.std(r);
    if !(g.value(sd).item() > STD_FLOOR) {
        let loss = g.constant(Tensor::scalar(DEGENERATE_LOSS));
        return LossOutput { loss, degenerate: true };
    }
    let m = g.mean(r);
    let ratio = g.div(m, sd);
    let mut loss = g.scale(ratio, -sqrt(TRADING_DAYS));
    if k != 0.0 {
        let rb = benchmark(batch);
        let bm = rb.iter().sum::<f64>() / rb.len() as f64;
        let bc: alloc::vec::Vec<f64> = rb.iter().map(|b| b - bm).collect();
        let bnorm = sqrt(bc.iter().map(|b| b * b).sum::<f64>());
        if bnorm > 0.0 {
            let bcv = g.constant(Tensor::new(&[bc.len()], bc));
            let rc = g.sub(r, m);
            let prod = g.mul(rc, bcv);
            let cov = g.sum(prod);
            let sq = g.mul(rc, rc);
            let ss = g.sum(sq);
            let rn = g.sqrt(ss);
            let rn = g.scale(rn, bnorm);
            let rho = g.div(cov, rn);
            let rho = g.abs(rho);
            let pen = g.scale(rho, k);
            loss = g.add(loss, pen);
        }
    }
    LossOutput { loss, degenerate: false }
}

/// Long-only return per row: mean of `Y1` across assets.
pub fn benchmark(batch: &Batch) -> alloc::vec::Vec<f64> {
    let (t_len, na) = (batch.y1.shape[0], batch.y1.shape[1]);
    (0..t_len).map(|t| batch.y1.data[t * na..(t + 1) * na].iter().sum::<f64>() / na as f64).collect()
}
