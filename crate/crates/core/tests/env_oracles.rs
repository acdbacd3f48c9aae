mod common;

use common::*;
use lsdqn_core::env::{
    deterministic_policy, dp_policy_eval, dp_q_star, make_cartpole_discrete, make_gridworld,
    CartPoleParams, GridworldSpec, TabularEnv,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn value_iteration_matches_policy_enumeration_on_two_by_two() {
    let mdp = make_gridworld(&GridworldSpec {
        width: 2,
        height: 2,
        goal: (1, 1),
        slip_prob: 0.2,
        gamma: 0.9,
        ..GridworldSpec::default()
    })
    .unwrap();
    let q_star = dp_q_star(&mdp);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; ns];
    for code in 0..na.pow(ns as u32) {
        let actions: Vec<usize> = (0..ns).map(|s| code / na.pow(s as u32) % na).collect();
        let q = dp_policy_eval(&mdp, &deterministic_policy(&actions, na)).unwrap();
        for s in 0..ns {
            best[s] = best[s].max(q[(s, actions[s])]);
        }
    }
    for s in 0..ns {
        let v_star = (0..na)
            .map(|a| q_star[(s, a)])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (v_star - best[s]).abs() < 1e-10,
            "state {s}: {v_star} vs {}",
            best[s]
        );
    }
}

#[test]
fn sampled_transitions_follow_the_table() {
    let mdp = make_gridworld(&GridworldSpec {
        start: (2, 2),
        slip_prob: 0.4,
        ..GridworldSpec::default()
    })
    .unwrap();
    // From the centre cell every direction is open: 4 distinct successors.
    let centre = 2 * 5 + 2;
    let dist = mdp.transition(centre, 1).clone();
    assert_eq!(dist.len(), 4);
    let mut env = TabularEnv::new(mdp.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut counts = vec![0u64; 4];
    let n = 100_000;
    for _ in 0..n {
        env.reset(&mut rng);
        let (obs, r, _) = env.step(1, &mut rng).unwrap();
        assert_eq!(r, mdp.reward(centre, 1));
        let next = mdp.decode(&obs).unwrap();
        counts[dist.iter().position(|&(t, _)| t == next).unwrap()] += 1;
    }
    let chi: f64 = dist
        .iter()
        .zip(&counts)
        .map(|(&(_, p), &c)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi < chi_square_critical_999(3), "chi-square {chi}");
}

#[test]
fn constant_push_crosses_a_bound() {
    let mut cp = make_cartpole_discrete(CartPoleParams::default()).unwrap();
    cp.reset_to([0.0; 4]);
    let limit = CartPoleParams::default().angle_limit;
    let mut steps = 0;
    loop {
        let (obs, _, done) = cp.step(1).unwrap();
        steps += 1;
        if done {
            assert!(
                obs[2].abs() > limit || obs[0].abs() > CartPoleParams::default().position_limit
            );
            break;
        }
        assert!(steps < 200, "never terminated");
    }
}
