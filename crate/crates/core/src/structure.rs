//! Structural properties of value tables: monotonicity in the queue and the
//! battery, and discrete convexity in `(q, e_b)`.

use num_traits::Num;

use crate::mdp::{SystemState, ValueTable};
use crate::scalar::Scalar;

/// Which property a finding breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    /// Non-decreasing in `q`.
    QueueMonotone,
    /// Non-increasing in `e_b`.
    BatteryMonotone,
    /// Second differences along `q`, along `e_b`, and the 2x2 determinant of
    /// the discrete Hessian.
    Convex,
}

/// Worst observed value of a difference that should be non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finding {
    pub property: Property,
    pub state: SystemState,
    pub margin: f64,
}

/// Minimum margin per property over a table; negative means violated.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub queue: Option<Finding>,
    pub battery: Option<Finding>,
    pub convex: Option<Finding>,
}

impl StructureReport {
    pub fn holds(&self, property: Property, tol: f64) -> bool {
        let f = match property {
            Property::QueueMonotone => self.queue,
            Property::BatteryMonotone => self.battery,
            Property::Convex => self.convex,
        };
        f.map_or(true, |f| f.margin >= -tol)
    }

    pub fn all_hold(&self, tol: f64) -> bool {
        [Property::QueueMonotone, Property::BatteryMonotone, Property::Convex].iter().all(|&p| self.holds(p, tol))
    }
}

fn keep_min(slot: &mut Option<Finding>, property: Property, state: SystemState, margin: f64) {
    if slot.map_or(true, |f| margin < f.margin) {
        *slot = Some(Finding { property, state, margin });
    }
}

/// Scans every exogenous slice of `v`.
pub fn check_structure<T: Scalar>(v: &ValueTable<T>) -> StructureReport {
    let d = v.dims();
    let mut r = StructureReport { queue: None, battery: None, convex: None };
    for x in d.states() {
        let at = |dq: i64, de: i64| -> Option<f64> {
            let q = x.q as i64 + dq;
            let e = x.e_b as i64 + de;
            (q >= 0 && e >= 0 && q as u64 <= d.q_max && e as u64 <= d.e_max)
                .then(|| v.get(&SystemState { q: q as u64, e_b: e as u64, ..x }).as_f64())
        };
        let c = at(0, 0).expect("state in table");
        if let Some(next) = at(1, 0) {
            keep_min(&mut r.queue, Property::QueueMonotone, x, next - c);
        }
        if let Some(next) = at(0, 1) {
            keep_min(&mut r.battery, Property::BatteryMonotone, x, c - next);
        }
        let dqq = at(1, 0).zip(at(-1, 0)).map(|(a, b)| a - 2.0 * c + b);
        let dee = at(0, 1).zip(at(0, -1)).map(|(a, b)| a - 2.0 * c + b);
        for s in [dqq, dee].into_iter().flatten() {
            keep_min(&mut r.convex, Property::Convex, x, s);
        }
        if let (Some(qq), Some(ee), Some(pp), Some(pe), Some(qp)) = (dqq, dee, at(1, 1), at(0, 1), at(1, 0)) {
            let qe = pp - pe - qp + c;
            keep_min(&mut r.convex, Property::Convex, x, qq * ee - qe * qe);
        }
    }
    r
}

/// `min(phi x1 + (1 - phi) x2, y) - (phi min(x1, y) + (1 - phi) min(x2, y))`.
///
/// Non-negative for `phi` in `[0, 1]`; with an exact number type the sign is
/// exact.
pub fn min_mixture_gap<N: Num + PartialOrd + Copy>(phi: N, x1: N, x2: N, y: N) -> N {
    let min = |a: N, b: N| if a < b { a } else { b };
    let one = N::one();
    let rhs = min(phi * x1 + (one - phi) * x2, y);
    let lhs = phi * min(x1, y) + (one - phi) * min(x2, y);
    rhs - lhs
}

/// Exact check of the min-mixture inequality.
pub fn min_mixture_holds<N: Num + PartialOrd + Copy>(phi: N, x1: N, x2: N, y: N) -> bool {
    min_mixture_gap(phi, x1, x2, y) >= N::zero()
}
