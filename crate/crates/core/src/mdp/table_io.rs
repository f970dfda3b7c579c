//! Text tables for values and policies.
//!
//! Values: `q,a,e_b,e_a,p,value`. Policies: `q,a,e_b,e_a,p,u,eta,k,battery_draw`.
//! `a`, `e_a` and `p` are chain state indices. One row per state in flat
//! index order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::{Dims, SystemState, TransformedAction};
use super::solve::{PolicyTable, ValueTable};

#[derive(Serialize, Deserialize)]
struct ValueRow {
    q: u64,
    a: usize,
    e_b: u64,
    e_a: usize,
    p: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct PolicyRow {
    q: u64,
    a: usize,
    e_b: u64,
    e_a: usize,
    p: usize,
    u: u64,
    eta: u64,
    k: u64,
    battery_draw: u64,
}

pub fn write_values<T: Scalar>(path: &Path, table: &ValueTable<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dims = table.dims();
    for (i, &v) in table.as_slice().iter().enumerate() {
        let x = dims.state(i);
        w.serialize(ValueRow { q: x.q, a: x.a, e_b: x.e_b, e_a: x.e_a, p: x.p, value: v.as_f64() })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_policy(path: &Path, table: &PolicyTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dims = table.dims();
    for (i, t) in table.as_slice().iter().enumerate() {
        let x = dims.state(i);
        let act = t.to_action(&x);
        w.serialize(PolicyRow {
            q: x.q,
            a: x.a,
            e_b: x.e_b,
            e_a: x.e_a,
            p: x.p,
            u: t.u,
            eta: t.eta,
            k: act.k,
            battery_draw: act.battery_draw,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn locate(dims: &Dims, x: &SystemState, seen: &mut [bool]) -> Result<usize> {
    if !dims.contains(x) {
        return Err(Error::Dimension(format!("state {x} outside the configured state space")));
    }
    let i = dims.index(x);
    if std::mem::replace(&mut seen[i], true) {
        return Err(Error::Dimension(format!("state {x} listed twice")));
    }
    Ok(i)
}

pub fn read_values<T: Scalar>(path: &Path, dims: Dims) -> Result<ValueTable<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut data = vec![T::zero(); dims.n_states()];
    let mut seen = vec![false; dims.n_states()];
    for row in r.deserialize() {
        let row: ValueRow = row?;
        let x = SystemState::new(row.q, row.a, row.e_b, row.e_a, row.p);
        data[locate(&dims, &x, &mut seen)?] = T::of(row.value);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Dimension("value table does not cover every state".into()));
    }
    ValueTable::from_vec(dims, data)
}

pub fn read_policy(path: &Path, dims: Dims) -> Result<PolicyTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut actions = vec![TransformedAction::default(); dims.n_states()];
    let mut seen = vec![false; dims.n_states()];
    for row in r.deserialize() {
        let row: PolicyRow = row?;
        let x = SystemState::new(row.q, row.a, row.e_b, row.e_a, row.p);
        if row.u > x.q || row.eta > x.e_b {
            return Err(Error::Dimension(format!("action (u={}, eta={}) out of range at {x}", row.u, row.eta)));
        }
        actions[locate(&dims, &x, &mut seen)?] = TransformedAction::new(row.u, row.eta);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Dimension("policy table does not cover every state".into()));
    }
    PolicyTable::from_vec(dims, actions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_roundtrip_and_reject_wrong_dims() {
        let dims = Dims { q_max: 2, e_max: 1, n_a: 2, n_e: 1, n_p: 2 };
        let values = ValueTable::from_vec(dims, (0..dims.n_states()).map(|i| i as f64 * 0.25).collect()).unwrap();
        let policy = PolicyTable::from_fn(dims, |x| TransformedAction::new(x.q / 2, x.e_b));
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("values.csv");
        let pp = dir.path().join("policy.csv");
        write_values(&vp, &values).unwrap();
        write_policy(&pp, &policy).unwrap();
        assert_eq!(read_values::<f64>(&vp, dims).unwrap(), values);
        assert_eq!(read_policy(&pp, dims).unwrap(), policy);

        let other = Dims { q_max: 3, ..dims };
        assert!(matches!(read_values::<f64>(&vp, other), Err(Error::Dimension(_))));
        let smaller = Dims { q_max: 1, ..dims };
        assert!(matches!(read_policy(&pp, smaller), Err(Error::Dimension(_))));
    }
}
