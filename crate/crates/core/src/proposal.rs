//! Pieces of the majorant proposal step shared by every driver.

use crate::ensemble::{Ensemble, FeatureId};
use crate::kernel::MajorantComponent;

/// A majorant component with its features resolved to tree ids in the
/// ensembles that supply the first and second particle.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Resolved {
    pub comp: MajorantComponent,
    pub f: FeatureId,
    pub g: FeatureId,
}

pub(crate) fn resolve(
    comps: &[MajorantComponent],
    first: &Ensemble,
    second: &Ensemble,
) -> Vec<Resolved> {
    comps
        .iter()
        .map(|c| Resolved {
            comp: *c,
            f: first.feature_id(&c.f).expect("feature registered in first ensemble"),
            g: second.feature_id(&c.g).expect("feature registered in second ensemble"),
        })
        .collect()
}

/// Proposal rate of one component. `half` applies to classes whose two
/// particles come from the same ensemble: each unordered pair is proposed
/// once per ordering.
#[inline]
pub(crate) fn component_rate(coef: f64, f_total: f64, g_total: f64, half: bool, inv_n: f64) -> f64 {
    let scale = if half { 0.5 * inv_n } else { inv_n };
    (scale * coef * f_total * g_total).max(0.0)
}

/// Index of the first positive weight whose cumulative interval contains
/// `target`. Zero weights are never chosen.
pub(crate) fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            if target < acc {
                return i;
            }
            last = Some(i);
        }
    }
    last.expect("pick called with no positive weight")
}
