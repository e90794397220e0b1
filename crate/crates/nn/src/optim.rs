use crate::store::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of every parameter from its stored gradient.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) {
    adam_step_selected(store, cfg, |_| true);
}

/// Adam update restricted to parameters whose name passes `select`.
pub fn adam_step_selected(store: &mut ParamStore, cfg: &AdamConfig, select: impl Fn(&str) -> bool) {
    let t = store.step_count + 1;
    adam_update(store, cfg, select, t);
    store.step_count = t;
}

/// Bias-corrected Adam update at step `t` (1-based) without touching the
/// store's step counter.
pub fn adam_update(store: &mut ParamStore, cfg: &AdamConfig, select: impl Fn(&str) -> bool, t: u64) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, p) in store.params_mut() {
        if !select(name) {
            continue;
        }
        let g = p.grad.data().to_vec();
        let m1 = p.m1.data_mut();
        for (m, gi) in m1.iter_mut().zip(&g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        }
        let m2 = p.m2.data_mut();
        for (v, gi) in m2.iter_mut().zip(&g) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m1, m2) = (p.m1.data().to_vec(), p.m2.data());
        for ((w, m), v) in p.value.data_mut().iter_mut().zip(&m1).zip(m2) {
            *w -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
}
