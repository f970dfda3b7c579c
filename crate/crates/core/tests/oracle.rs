mod support;

use evsched::mdp::solve_discounted;
use evsched::{ExogenousChains, MarkovChain, MdpModel, MdpModel64, ModelParams};
use support::oracle::Oracle;

fn two_state(values: [u64; 2], stay: f64) -> MarkovChain<f64> {
    MarkovChain::new(values.to_vec(), vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]], 0).unwrap()
}

fn instance(q_max: u64, e_max: u64, m: u64, arrival: u64, beta: f64) -> MdpModel64 {
    let params = ModelParams {
        charge_points: m,
        block_energy: 1,
        tau: 1.0,
        e_max: Some(e_max),
        q_max,
        beta,
        alpha: 0.9,
        cost_bound: f64::INFINITY,
        max_blocks: 1,
        energy_filter: true,
    };
    let chains = ExogenousChains::new(two_state([0, arrival], 0.6), two_state([0, 1], 0.7), two_state([1, 3], 0.5));
    MdpModel::new(params, chains).unwrap()
}

#[test]
fn solver_matches_policy_iteration() {
    for beta in [0.0, 1.0, 4.0] {
        let model = instance(4, 2, 2, 2, beta);
        let oracle = Oracle::new(&model);
        let (_, best) = oracle.policy_iteration();
        assert!(oracle.deviation_gap(&best) > -1e-9);

        let sol = solve_discounted(&model, 1e-10, 10_000).unwrap();
        let achieved = oracle.value_of(&sol.policy);
        for (i, s) in oracle.states.iter().enumerate() {
            assert!((achieved[i] - best[i]).abs() < 1e-6, "beta {beta} at {s}: {} vs {}", achieved[i], best[i]);
            // The span rule leaves V determined up to a constant of order tol.
            assert!((sol.values.get(s) - best[i]).abs() < 1e-6, "beta {beta} at {s}");
        }
    }
}

#[test]
fn solver_matches_full_enumeration() {
    for beta in [0.0, 1.0] {
        let model = instance(2, 1, 1, 1, beta);
        let chains = ExogenousChains::new(two_state([0, 1], 0.6), two_state([0, 1], 0.7), MarkovChain::constant(2));
        let model = MdpModel::new(model.params.clone(), chains).unwrap();
        let oracle = Oracle::new(&model);
        assert_eq!(oracle.policy_count(), 1_679_616);
        let min = oracle.enumerate_min();
        let sol = solve_discounted(&model, 1e-10, 10_000).unwrap();
        let achieved = oracle.value_of(&sol.policy);
        let worst = (0..oracle.n()).map(|i| (achieved[i] - min[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "beta {beta}: {worst}");
    }
}

#[test]
fn single_precision_solver_agrees() {
    let m64 = instance(4, 2, 2, 2, 1.0);
    let p = &m64.params;
    let params = ModelParams::<f32> {
        charge_points: p.charge_points,
        block_energy: p.block_energy,
        tau: 1.0,
        e_max: p.e_max,
        q_max: p.q_max,
        beta: 1.0,
        alpha: 0.9,
        cost_bound: f32::INFINITY,
        max_blocks: 1,
        energy_filter: true,
    };
    let c32 = |v: [u64; 2], s: f32| MarkovChain::new(v.to_vec(), vec![vec![s, 1.0 - s], vec![1.0 - s, s]], 0).unwrap();
    let m32 = MdpModel::new(params, ExogenousChains::new(c32([0, 2], 0.6), c32([0, 1], 0.7), c32([1, 3], 0.5))).unwrap();
    let s32 = solve_discounted(&m32, 1e-4, 10_000).unwrap();
    let oracle = Oracle::new(&m64);
    let (_, best) = oracle.policy_iteration();
    for (i, s) in oracle.states.iter().enumerate() {
        assert!((s32.values.get(s) as f64 - best[i]).abs() < 1e-2 * (1.0 + best[i]));
    }
}
