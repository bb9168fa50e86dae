//! Step grid of the backward integration.

use crate::channel::{Link, MANAKOV_FACTOR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    /// Dispersion by the accumulated `integral beta2 dz` (s^2); negative
    /// values undo forward dispersion.
    Linear(f64),
    /// Kerr phase step with weight `integral gamma_eff g(z) dz` (1/W) over
    /// the forward segment, `g` the power profile relative to launch.
    Nonlinear(f64),
}

/// Forward-coordinate integrals over `[a, b]` of `beta2` and of
/// `gamma_eff * g(z)` along the link.
fn integrals(link: &Link, a: f64, b: f64) -> (f64, f64) {
    let mut z0 = 0.0;
    let mut disp = 0.0;
    let mut nl = 0.0;
    for (span, _) in link.spans() {
        let z1 = z0 + span.length_m();
        let lo = a.max(z0);
        let hi = b.min(z1);
        if hi > lo {
            disp += span.beta2() * (hi - lo);
            nl += MANAKOV_FACTOR * span.gamma() * span.effective_length(lo - z0, hi - z0);
        }
        z0 = z1;
    }
    (disp, nl)
}

/// Backward operator sequence for `n_steps` steps uniform in distance.
///
/// Each step's nonlinear operator sits at the fraction `nl_position` of its
/// forward segment (0 = segment input, where the power is highest) and is
/// weighted by the segment's whole effective length. Adjacent linear
/// operators are merged. Without nonlinear steps the result is a single
/// linear operator for the whole link.
pub(crate) fn build(link: &Link, n_steps: usize, nl_position: f64, with_nonlinear: bool) -> Result<Vec<Op>> {
    if n_steps == 0 {
        return Err(Error::config("number of DBP steps must be at least 1"));
    }
    if !(0.0..=1.0).contains(&nl_position) {
        return Err(Error::config("nonlinear step position must lie in [0, 1]"));
    }
    let total = link.total_length_m();
    if !with_nonlinear {
        return Ok(vec![Op::Linear(-integrals(link, 0.0, total).0)]);
    }
    let bound = |j: usize| {
        if j == n_steps {
            total
        } else {
            total * j as f64 / n_steps as f64
        }
    };
    let mut ops: Vec<Op> = Vec::new();
    let push_linear = |ops: &mut Vec<Op>, d: f64| {
        if d == 0.0 {
            return;
        }
        if let Some(Op::Linear(prev)) = ops.last_mut() {
            *prev += d;
        } else {
            ops.push(Op::Linear(d));
        }
    };
    for j in (0..n_steps).rev() {
        let (a, b) = (bound(j), bound(j + 1));
        let p = a + nl_position * (b - a);
        push_linear(&mut ops, -integrals(link, p, b).0);
        ops.push(Op::Nonlinear(integrals(link, a, b).1));
        push_linear(&mut ops, -integrals(link, a, p).0);
    }
    Ok(ops)
}
