//! Central finite-difference verification of [`Graph::backward`].

use rand::seq::index::sample;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Worst mismatch found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Fraction of coordinates probed per parameter.
    pub fraction: f64,
    /// Lower bound on probed coordinates per parameter (capped by its size).
    pub min_per_param: usize,
    pub seed: u64,
    /// Denominator floor per unit of loss magnitude; gradients below
    /// `floor · max(1, |loss|)` are compared in absolute terms, since central
    /// differences carry rounding noise proportional to the loss.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            fraction: 0.05,
            min_per_param: 3,
            seed: 0,
            floor: 1e-5,
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(f: &F, params: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = f(&mut g, params)?;
    g.value(l).item()
}

/// Compares backprop gradients of the scalar built by `f` against central
/// differences on a random subset of every parameter's coordinates.
///
/// `f` must be deterministic: the same parameters give the same loss.
pub fn grad_check<F>(params: &ParamStore, opts: GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, params)?;
    let grads = g.backward(loss)?;
    let floor = opts.floor * g.value(loss).item()?.abs().max(1.0);
    drop(g);

    let mut rng = crate::seed::rng(opts.seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (name, t) in params.iter() {
        let n = t.numel();
        if n == 0 {
            continue;
        }
        let want = ((n as f64 * opts.fraction).ceil() as usize).max(opts.min_per_param).min(n);
        let analytic = grads
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no gradient for `{name}`")))?;
        for i in sample(&mut rng, n, want) {
            let orig = t.data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + opts.h;
            let up = eval(&f, &probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig - opts.h;
            let down = eval(&f, &probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.h);
            let err = relative_error(analytic.data()[i], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(report)
}
