use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Dims;
use super::MfinError;
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::math::sqrt;

/// Per-stage trainable parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// Four inception branches, kernels and biases.
    pub origcim: usize,
    pub reduction: usize,
    pub cross_asset: usize,
    pub lstm: usize,
    pub head: usize,
    pub total: usize,
}

impl ParamCount {
    pub fn extractor(&self) -> usize {
        self.origcim + self.reduction + self.cross_asset
    }

    pub fn extractor_share(&self) -> f64 {
        self.extractor() as f64 / self.total as f64
    }
}

pub fn param_count(d: &Dims) -> ParamCount {
    let (f, l, ni, na, h) = (d.n_filters, d.filter_length, d.n_inputs, d.n_assets, d.hidden);
    let origcim = (l * f + f) + (ni * f + f) + (l * ni * f + f) + (f + f);
    let reduction = (2 * ni + 2) * f * f + f;
    let cross_asset = l * na * f * f + f;
    let lstm = 4 * (h * (f + h) + h);
    let head = h * na + na;
    ParamCount { origcim, reduction, cross_asset, lstm, head, total: origcim + reduction + cross_asset + lstm + head }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIds {
    pub ts_k: ParamId,
    pub ts_b: ParamId,
    pub cs_k: ParamId,
    pub cs_b: ParamId,
    pub comb_k: ParamId,
    pub comb_b: ParamId,
    pub unit_k: ParamId,
    pub unit_b: ParamId,
    pub red_w: ParamId,
    pub red_b: ParamId,
    pub cross_k: ParamId,
    pub cross_b: ParamId,
    pub lstm_wx: ParamId,
    pub lstm_wh: ParamId,
    pub lstm_b: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Shared inception extractor per asset, a causal cross-asset convolution,
/// an LSTM position sizer and a tanh head with one output per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfinModel {
    pub dims: Dims,
    pub dropout: f64,
    pub seed: u64,
    pub params: ParamStore,
    pub ids: ModelIds,
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit).collect())
}

fn conv_kernel(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    let area = shape[0] * shape[1];
    glorot(&shape, area * shape[2], area * shape[3], rng)
}

impl MfinModel {
    pub fn new(dims: Dims, dropout: f64, seed: u64) -> Result<Self, MfinError> {
        let Dims { n_assets: na, n_inputs: ni, n_filters: f, filter_length: l, hidden: h } = dims;
        if na == 0 || ni == 0 || f == 0 || l == 0 || h == 0 {
            return Err(MfinError::Config("model dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let zeros = |n: usize| Tensor::zeros(&[n]);
        let ts_k = p.add("origcim.ts.kernel", conv_kernel([l, 1, 1, f], &mut rng));
        let ts_b = p.add("origcim.ts.bias", zeros(f));
        let cs_k = p.add("origcim.cs.kernel", conv_kernel([1, ni, 1, f], &mut rng));
        let cs_b = p.add("origcim.cs.bias", zeros(f));
        let comb_k = p.add("origcim.combined.kernel", conv_kernel([l, ni, 1, f], &mut rng));
        let comb_b = p.add("origcim.combined.bias", zeros(f));
        let unit_k = p.add("origcim.unit.kernel", conv_kernel([1, 1, 1, f], &mut rng));
        let unit_b = p.add("origcim.unit.bias", zeros(f));
        let width = (2 * ni + 2) * f;
        let red_w = p.add("reduction.kernel", glorot(&[width, f], width, f, &mut rng));
        let red_b = p.add("reduction.bias", zeros(f));
        let cross_k = p.add("cross_asset.kernel", conv_kernel([l, na, f, f], &mut rng));
        let cross_b = p.add("cross_asset.bias", zeros(f));
        let lstm_wx = p.add("lstm.input_kernel", glorot(&[f, 4 * h], f, 4 * h, &mut rng));
        let lstm_wh = p.add("lstm.recurrent_kernel", glorot(&[h, 4 * h], h, 4 * h, &mut rng));
        let mut lb = Tensor::zeros(&[4 * h]);
        lb.data[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        let lstm_b = p.add("lstm.bias", lb);
        let head_w = p.add("head.kernel", glorot(&[h, na], h, na, &mut rng));
        let head_b = p.add("head.bias", zeros(na));
        let ids = ModelIds {
            ts_k,
            ts_b,
            cs_k,
            cs_b,
            comb_k,
            comb_b,
            unit_k,
            unit_b,
            red_w,
            red_b,
            cross_k,
            cross_b,
            lstm_wx,
            lstm_wh,
            lstm_b,
            head_w,
            head_b,
        };
        Ok(Self { dims, dropout, seed, params: p, ids })
    }

    /// Rebuilds a model around stored parameters, checking names and shapes.
    pub fn from_params(dims: Dims, dropout: f64, seed: u64, params: ParamStore) -> Result<Self, MfinError> {
        let mut m = Self::new(dims, dropout, seed)?;
        if !m.params.shapes_match(&params) {
            return Err(MfinError::Checkpoint(format!("parameter set does not match dims {dims:?}")));
        }
        m.params = params;
        Ok(m)
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.dims)
    }

    fn check_x(&self, x: &Tensor) -> Result<usize, MfinError> {
        let d = &self.dims;
        if x.shape.len() != 3 || x.shape[1] != d.n_assets || x.shape[2] != d.n_inputs {
            return Err(MfinError::Shape(format!("expected (T, {}, {}), got {:?}", d.n_assets, d.n_inputs, x.shape)));
        }
        Ok(x.shape[0])
    }

    /// Inception branches for one asset's `(T, N_I)` returns, concatenated and
    /// flattened to `(T, (2 N_I + 2) F)`.
    pub fn origcim(&self, g: &mut Graph, xa: Var) -> Var {
        let t_len = g.shape(xa)[0];
        let (ni, f) = (self.dims.n_inputs, self.dims.n_filters);
        let x3 = g.reshape(xa, &[t_len, ni, 1]);
        let mut branch = |k: ParamId, b: ParamId, width: usize| {
            let kv = g.param(&self.params, k);
            let bv = g.param(&self.params, b);
            let y = g.conv2d_causal(x3, kv);
            let y = g.add_bias(y, bv);
            g.reshape(y, &[t_len, width * f])
        };
        let ts = branch(self.ids.ts_k, self.ids.ts_b, ni);
        let cs = branch(self.ids.cs_k, self.ids.cs_b, 1);
        let comb = branch(self.ids.comb_k, self.ids.comb_b, 1);
        let unit = branch(self.ids.unit_k, self.ids.unit_b, ni);
        g.concat_cols(&[ts, cs, comb, unit])
    }

    /// Reduced per-asset features `(T, F)` after ELU and dropout.
    pub fn asset_features(&self, g: &mut Graph, xa: Var) -> Var {
        let cat = self.origcim(g, xa);
        let w = g.param(&self.params, self.ids.red_w);
        let b = g.param(&self.params, self.ids.red_b);
        let y = g.dense(cat, w, b);
        let y = g.elu(y);
        g.dropout(y, self.dropout)
    }

    /// Per-asset feature stacks `(T, N_A, F)` from `x: (T, N_A, N_I)`.
    pub fn extract(&self, g: &mut Graph, x: &Tensor) -> Result<Var, MfinError> {
        let t_len = self.check_x(x)?;
        let (na, ni) = (self.dims.n_assets, self.dims.n_inputs);
        let feats: Vec<Var> = (0..na)
            .map(|a| {
                let mut col = Vec::with_capacity(t_len * ni);
                for t in 0..t_len {
                    let o = (t * na + a) * ni;
                    col.extend_from_slice(&x.data[o..o + ni]);
                }
                let xa = g.constant(Tensor::new(&[t_len, ni], col));
                self.asset_features(g, xa)
            })
            .collect();
        Ok(g.stack_axis1(&feats))
    }

    /// Positions `(T, N_A)` in `(-1, 1)`.
    pub fn forward(&self, g: &mut Graph, x: &Tensor) -> Result<Var, MfinError> {
        let t_len = self.check_x(x)?;
        let f = self.dims.n_filters;
        let feats = self.extract(g, x)?;
        let ck = g.param(&self.params, self.ids.cross_k);
        let cb = g.param(&self.params, self.ids.cross_b);
        let z = g.conv2d_causal(feats, ck);
        let z = g.reshape(z, &[t_len, f]);
        let z = g.add_bias(z, cb);
        let z = g.elu(z);
        let wx = g.param(&self.params, self.ids.lstm_wx);
        let wh = g.param(&self.params, self.ids.lstm_wh);
        let lb = g.param(&self.params, self.ids.lstm_b);
        let h = g.lstm(z, wx, wh, lb);
        let h = g.dropout(h, self.dropout);
        let hw = g.param(&self.params, self.ids.head_w);
        let hb = g.param(&self.params, self.ids.head_b);
        let y = g.dense(h, hw, hb);
        Ok(g.tanh(y))
    }

    /// Evaluation-mode positions.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, MfinError> {
        let mut g = Graph::new();
        let w = self.forward(&mut g, x)?;
        Ok(g.value(w).clone())
    }
}
