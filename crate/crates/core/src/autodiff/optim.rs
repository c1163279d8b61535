use std::collections::BTreeMap;

use super::graph::GradMap;
use super::params::ParamStore;


/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients for names missing from `params` are
    /// ignored; parameters without a gradient are left unchanged.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradMap) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            if p.numel() != g.numel() {
                continue;
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Sums gradient maps entry-wise, scaling the result by `scale`.
pub fn accumulate_grads<'a>(maps: impl IntoIterator<Item = &'a GradMap>, scale: f64) -> GradMap {
    let mut out = GradMap::new();
    for map in maps {
        for (k, g) in map {
            match out.get_mut(k) {
                Some(t) => t.add_assign(g),
                None => {
                    out.insert(k.clone(), g.clone());
                }
            }
        }
    }
    for t in out.values_mut() {
        *t = t.map(|v| v * scale);
    }
    out
}

/// Global L2 norm over all gradients.
pub fn grad_norm(grads: &GradMap) -> f64 {
    grads
        .values()
        .flat_map(|t| t.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut GradMap, max_norm: f64) {
    let n = grad_norm(grads);
    if n > max_norm && n > 0.0 {
        let k = max_norm / n;
        for t in grads.values_mut() {
            *t = t.map(|v| v * k);
        }
    }
}
