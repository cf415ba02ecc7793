//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::ParamStore;

/// Floor on the denominator of the relative error. Gradients smaller than
/// this are compared on an absolute scale, since a central difference cannot
/// resolve them against rounding noise in the objective.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Times the step is divided by ten when the one-sided differences show a
/// kink (ReLU or max-pool switch) inside the step.
pub const MAX_STEP_REFINEMENTS: usize = 3;

const KINK_SUSPICION: f64 = 1e-2;
const SETTLED: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub eps: f64,
    /// Check at most this many coordinates of each parameter, sampled
    /// without replacement. `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate of the largest error.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
    /// Coordinates whose step had to be shrunk to stay off a kink.
    pub refined: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F>(f: &mut F, store: &ParamStore<f64>) -> Result<(Graph<f64>, Var, f64)>
where
    F: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let value = g
        .value(loss)
        .item()
        .ok_or_else(|| Error::NonScalarLoss(g.shape(loss).to_vec()))?;
    if !value.is_finite() {
        return Err(Error::NonFinite("objective value".into()));
    }
    Ok((g, loss, value))
}

/// Compares the tape's gradient of the scalar objective `f` against central
/// differences for every trainable parameter in `store`, returning the
/// largest relative error. Parameter values are restored before returning.
pub fn grad_check<F>(
    store: &mut ParamStore<f64>,
    config: &GradCheckConfig,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    if !(config.eps > 0.0 && config.eps.is_finite()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if store.iter().any(|(_, p)| !p.value.all_finite()) {
        return Err(Error::NonFinite("parameter value".into()));
    }
    store.clear_grads();
    let (g, loss, base) = evaluate(&mut f, store)?;
    g.backward_into(loss, store)?;
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
        refined: 0,
    };
    let ids: Vec<_> = store.ids().filter(|&id| store.get(id).trainable).collect();
    for id in ids {
        let analytic = match &store.get(id).grad {
            Some(g) => g.clone(),
            None => continue,
        };
        let len = analytic.len();
        let coords: Vec<usize> = match config.max_coords_per_param {
            Some(m) if m < len => {
                let mut c = index::sample(&mut rng, len, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        for i in coords {
            let orig = store.get(id).value[i];
            let mut central = |eps: f64| -> Result<(f64, f64, f64)> {
                store.get_mut(id).value.data_mut()[i] = orig + eps;
                let plus = evaluate(&mut f, store).map(|r| r.2);
                store.get_mut(id).value.data_mut()[i] = orig - eps;
                let minus = evaluate(&mut f, store).map(|r| r.2);
                store.get_mut(id).value.data_mut()[i] = orig;
                let (plus, minus) = (plus?, minus?);
                Ok((
                    (plus - minus) / (2.0 * eps),
                    (plus - base) / eps,
                    (base - minus) / eps,
                ))
            };
            let mut eps = config.eps;
            let (mut numeric, forward, backward) = central(eps)?;
            // One-sided slopes that disagree point at a kink inside the step;
            // shrink until two successive central differences agree.
            if relative_error(forward, backward) > KINK_SUSPICION {
                report.refined += 1;
                for _ in 0..MAX_STEP_REFINEMENTS {
                    eps /= 10.0;
                    let (finer, _, _) = central(eps)?;
                    // rounding in the objective limits what a step can resolve
                    let noise = 100.0 * f64::EPSILON * base.abs().max(1.0) / eps;
                    let scale = numeric.abs().max(finer.abs());
                    if (numeric - finer).abs() <= SETTLED * scale + noise {
                        break;
                    }
                    numeric = finer;
                }
            }
            let err = relative_error(analytic[i], numeric);
            report.coords_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    store.clear_grads();
    Ok(report)
}
