use alloc::vec::Vec;

use super::{Graph, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub worst_index: usize,
    pub checked: usize,
}

/// Denominator floor for relative errors on near-zero gradients.
pub const REL_FLOOR: f64 = 1e-5;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares tape gradients with central differences of step `h` on every
/// scalar in `params`. `build` must be deterministic.
pub fn check_gradients<F>(params: &ParamStore, h: f64, build: F) -> GradCheck
where
    F: Fn(&mut Graph, &ParamStore) -> Var,
{
    let mut g = Graph::new();
    let loss = build(&mut g, params);
    let grads = g.backward(loss).param_grads(params);
    let mut out = GradCheck { max_rel_error: 0.0, worst_param: 0, worst_index: 0, checked: 0 };
    let eval = |p: &ParamStore| {
        let mut g = Graph::new();
        let l = build(&mut g, p);
        g.value(l).item()
    };
    let mut probe = params.clone();
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for j in 0..params.get(id).len() {
            let x0 = params.get(id).data[j];
            probe.get_mut(id).data[j] = x0 + h;
            let up = eval(&probe);
            probe.get_mut(id).data[j] = x0 - h;
            let down = eval(&probe);
            probe.get_mut(id).data[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_error(grads[k].data[j], numeric);
            out.checked += 1;
            if e > out.max_rel_error {
                out = GradCheck { max_rel_error: e, worst_param: k, worst_index: j, checked: out.checked };
            }
        }
    }
    out
}
