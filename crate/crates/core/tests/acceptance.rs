//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines always print.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lsdqn_core::dqn::{compute_targets_ddqn, compute_targets_dqn, train};
use lsdqn_core::env::{
    dp_policy_eval, dp_q_star, greedy_policy, make_gridworld, EnvSpec, GridworldSpec,
};
use lsdqn_core::io::{self, Meta};
use lsdqn_core::linalg::{distance, norm, Matrix};
use lsdqn_core::lsdqn::{
    ablate_checkpoint, run, AblationConfig, AblationMethod, Checkpoint, RunConfig, SrlMethod,
};
use lsdqn_core::net::QNetwork;
use lsdqn_core::replay::Transition;
use lsdqn_core::srl::{
    ls_update_on, solve_srl, LsSystem, Regularizer, RegularizerKind, SrlConfig, SrlKind,
};
use lsdqn_core::stats::{wilcoxon_exact_p, wilcoxon_normal_p, wilcoxon_signed_rank};

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gridworld() -> lsdqn_core::env::TabularMdp {
    make_gridworld(&GridworldSpec {
        slip_prob: 0.1,
        gamma: 0.95,
        ..GridworldSpec::default()
    })
    .unwrap()
}

fn tabular_srl(kind: SrlKind, iterations: usize) -> SrlConfig {
    SrlConfig {
        kind,
        regularizer: RegularizerKind::None,
        lambda: 0.0,
        n_srl: usize::MAX,
        fqi_iterations: iterations,
        bias_feature: false,
    }
}

fn criterion_1() -> Outcome {
    let mdp = gridworld();
    let data = exhaustive_dataset(&mdp, 40);
    let net = tabular_net(mdp.n_states(), mdp.n_actions(), None);
    let upd = ls_update_on(&net, &data, &tabular_srl(SrlKind::Fqi, 400), mdp.gamma())
        .map_err(|e| e.to_string())?;
    let q = q_from_last_layer(&upd.weights, &upd.biases);
    let err = max_abs_diff(&q, &dp_q_star(&mdp));
    check(err <= 1e-6, || format!("max |Q_fqi - Q*| = {err:.3e}"))?;
    Ok(format!(
        "max |Q_fqi - Q*| = {err:.3e} over {} transitions",
        data.len()
    ))
}

fn criterion_2() -> Outcome {
    let mdp = gridworld();
    let data = exhaustive_dataset(&mdp, 40);
    let mut worst: f64 = 0.0;
    // The optimal policy, and greedy policies of arbitrary value tables.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tables = vec![dp_q_star(&mdp)];
    for _ in 0..3 {
        let mut q = Matrix::zeros(mdp.n_states(), mdp.n_actions());
        q.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        tables.push(q);
    }
    for q in &tables {
        let net = tabular_net(mdp.n_states(), mdp.n_actions(), Some(q));
        let policy = greedy_policy(q);
        let upd = ls_update_on(&net, &data, &tabular_srl(SrlKind::Lstdq, 1), mdp.gamma())
            .map_err(|e| e.to_string())?;
        let q_lstd = q_from_last_layer(&upd.weights, &upd.biases);
        let q_pi = dp_policy_eval(&mdp, &policy).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&q_lstd, &q_pi));
    }
    check(worst <= 1e-6, || {
        format!("max |Q_lstdq - Q^pi| = {worst:.3e}")
    })?;
    Ok(format!(
        "max |Q_lstdq - Q^pi| = {worst:.3e} over {} policies",
        tables.len()
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..40);
        let a = random_spd(n, rng.gen_range(0.0..1.0), &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let prior: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lambda = 10f64.powf(rng.gen_range(-3.0..3.0));
        let sys = LsSystem {
            a_tilde: a.clone(),
            b_tilde: b.clone(),
            n_samples: 1,
            kind: SrlKind::Fqi,
        };
        let w = solve_srl(
            &sys,
            &Regularizer::BayesianPrior {
                lambda,
                prior: prior.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        let mut lhs = a;
        lhs.add_diagonal(lambda);
        let aw = lhs.matvec(&w).unwrap();
        let rhs: Vec<f64> = b
            .iter()
            .zip(&prior)
            .map(|(bi, pi)| bi + lambda * pi)
            .collect();
        let ratio = distance(&aw, &rhs) / (1e-8 * (1.0 + norm(&b)));
        worst_ratio = worst_ratio.max(ratio);
    }
    check(worst_ratio <= 1.0, || {
        format!("residual bound exceeded by factor {worst_ratio:.3}")
    })?;

    let n = 12;
    let a = random_spd(n, 0.1, &mut rng);
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let prior: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sys = LsSystem {
        a_tilde: a,
        b_tilde: b,
        n_samples: 1,
        kind: SrlKind::Fqi,
    };
    let mut last = f64::INFINITY;
    let mut rel = f64::NAN;
    for lambda in [1e-2, 1.0, 1e2, 1e4, 1e6] {
        let w = solve_srl(
            &sys,
            &Regularizer::BayesianPrior {
                lambda,
                prior: prior.clone(),
            },
        )
        .map_err(|e| e.to_string())?;
        let d = distance(&w, &prior);
        check(d < last, || {
            format!("distance to prior not decreasing at lambda={lambda}")
        })?;
        last = d;
        rel = d / norm(&prior);
    }
    check(rel < 1e-3, || {
        format!("relative distance at lambda=1e6 is {rel:.3e}")
    })?;
    Ok(format!(
        "worst residual at {:.2e} of bound; relative prior distance at 1e6 = {rel:.2e}",
        worst_ratio
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let depth = rng.gen_range(1..4);
        let mut sizes = vec![rng.gen_range(2..8)];
        sizes.extend((0..depth).map(|_| rng.gen_range(3..12)));
        sizes.push(rng.gen_range(2..5));
        let net = QNetwork::<f64>::random(&sizes, &mut rng).unwrap();
        let state: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..net.n_actions())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let grads = net.backward(&state, &c).unwrap();
        let objective = |params: &[f64]| {
            let mut probe = net.clone();
            probe.params_mut().copy_from_slice(params);
            probe
                .q_values(&state)
                .unwrap()
                .iter()
                .zip(&c)
                .map(|(q, w)| q * w)
                .sum::<f64>()
        };
        for _ in 0..10 {
            let i = rng.gen_range(0..net.n_params());
            let numeric = central_difference(net.params(), i, 1e-6, objective);
            let analytic = grads.as_slice()[i];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    check(worst <= 1e-4, || {
        format!("worst relative error {worst:.3e}")
    })?;
    Ok(format!("worst relative error {worst:.3e} over 100 probes"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = QNetwork::<f64>::random(&[4, 16, 16, 3], &mut rng).unwrap();
    let mut terminals = 0;
    for _ in 0..1000 {
        let batch: Vec<Transition> = (0..32)
            .map(|_| Transition {
                state: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: rng.gen_range(0..3),
                reward: rng.gen_range(-2.0..2.0),
                next_state: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                terminal: rng.gen_bool(0.3),
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let gamma = rng.gen_range(0.0..0.999);
        let y_dqn = compute_targets_dqn(&refs, &net, gamma).unwrap();
        let y_ddqn = compute_targets_ddqn(&refs, &net, &net, gamma).unwrap();
        check(y_dqn == y_ddqn, || {
            "DDQN targets differ from DQN with shared weights".into()
        })?;
        for (t, y) in batch.iter().zip(&y_dqn) {
            if t.terminal {
                terminals += 1;
                check(*y == t.reward, || {
                    format!("terminal target {y} != reward {}", t.reward)
                })?;
            }
        }
    }
    Ok(format!(
        "1000 batches equal; {terminals} terminal targets equal r"
    ))
}

fn trained_checkpoint(steps: u64, dataset: usize) -> (Checkpoint, RunConfig) {
    let cfg = RunConfig {
        total_steps: steps,
        srl_method: SrlMethod::None,
        seed: 6,
        ..RunConfig::default()
    };
    let mut agent = cfg.build_agent().unwrap();
    while agent.steps() < steps {
        agent.step().unwrap();
    }
    let ckpt = Checkpoint {
        epoch: 1,
        step: steps,
        data: agent.buffer.snapshot(dataset).unwrap(),
        net: agent.net,
    };
    (ckpt, cfg)
}

fn criterion_6() -> Outcome {
    let (ckpt, run_cfg) = trained_checkpoint(100_000, 80_000);
    check(ckpt.data.len() == 80_000, || {
        format!("snapshot has {} samples", ckpt.data.len())
    })?;
    let cfg = AblationConfig {
        run: run_cfg.clone(),
        ..AblationConfig::default()
    };
    let env = run_cfg.build_env().unwrap();
    let rows = ablate_checkpoint(&cfg, &ckpt, &env).map_err(|e| e.to_string())?;
    let ls = rows
        .iter()
        .find(|r| r.method == AblationMethod::FqiLs)
        .unwrap();
    let mut summary = vec![format!("ls J={:.6e}", ls.objective)];
    for r in rows.iter().filter(|r| r.method != AblationMethod::FqiLs) {
        check(ls.objective <= r.objective + 1e-10, || {
            format!(
                "{} mb={:?} objective {:.12e} below LS {:.12e}",
                r.method.name(),
                r.minibatch,
                r.objective,
                ls.objective
            )
        })?;
    }
    for &mb in &cfg.minibatch_sizes {
        let find = |m| {
            rows.iter()
                .find(|r| r.method == m && r.minibatch == Some(mb))
                .unwrap()
        };
        let (with, without) = (
            find(AblationMethod::AdamWithPrior),
            find(AblationMethod::AdamWithoutPrior),
        );
        check(
            with.rel_weight_distance < without.rel_weight_distance,
            || {
                format!(
                    "mb={mb}: with-prior distance {:.3e} >= without-prior {:.3e}",
                    with.rel_weight_distance, without.rel_weight_distance
                )
            },
        )?;
        summary.push(format!(
            "mb={mb} dist {:.2e}/{:.2e}",
            with.rel_weight_distance, without.rel_weight_distance
        ));
    }
    Ok(summary.join("; "))
}

fn criterion_7() -> Outcome {
    let mut dqn_final = Vec::new();
    let mut fqi_final = Vec::new();
    let mut dqn_epochs: Vec<f64> = Vec::new();
    let mut fqi_epochs: Vec<f64> = Vec::new();
    for seed in 0..10 {
        for (method, finals, epochs) in [
            (SrlMethod::None, &mut dqn_final, &mut dqn_epochs),
            (SrlMethod::Fqi, &mut fqi_final, &mut fqi_epochs),
        ] {
            let cfg = RunConfig {
                seed,
                srl_method: method,
                condition_estimate: false,
                ..RunConfig::default()
            };
            let out = run(&cfg).map_err(|e| e.to_string())?;
            finals.push(out.curve.final_mean_return().unwrap());
            let means = out.curve.mean_returns();
            if epochs.is_empty() {
                epochs.resize(means.len(), 0.0);
            }
            for (acc, m) in epochs.iter_mut().zip(means) {
                *acc += m / 10.0;
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_dqn, m_fqi) = (mean(&dqn_final), mean(&fqi_final));
    let p = match wilcoxon_signed_rank(&fqi_epochs, &dqn_epochs) {
        Ok(w) => format!("{:.4e}", w.p_value),
        Err(e) => format!("undefined ({e})"),
    };
    let detail = format!(
        "final mean return fqi {m_fqi:.4} vs dqn {m_dqn:.4}; per-epoch signed-rank p = {p}"
    );
    check(m_fqi >= m_dqn, || detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let base = RunConfig {
        total_steps: 40_000,
        seed: 8,
        ..RunConfig::default()
    };
    let plain = RunConfig {
        srl_method: SrlMethod::None,
        ..base.clone()
    };
    let out = run(&plain).map_err(|e| e.to_string())?;
    let mut agent = plain.build_agent().unwrap();
    let curve = train(
        &mut agent,
        plain.total_steps,
        plain.eval_period,
        plain.eval_episodes,
        plain.seed,
    )
    .map_err(|e| e.to_string())?;
    check(out.curve.points == curve.points, || {
        "curves differ from the plain trainer".into()
    })?;
    let same_bits = out
        .net
        .params()
        .iter()
        .zip(agent.net.params())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    check(same_bits, || {
        "final parameters differ from the plain trainer".into()
    })?;

    let csv = |cfg: &RunConfig| -> Result<(String, String), String> {
        let out = run(cfg).map_err(|e| e.to_string())?;
        let meta = Meta::new("test", cfg.seed);
        let mut a = Vec::new();
        let mut b = Vec::new();
        io::write_curve(&mut a, &meta, &out.curve).map_err(|e| e.to_string())?;
        io::write_diagnostics(&mut b, &meta, &out.diagnostics).map_err(|e| e.to_string())?;
        Ok((
            io::data_section(&String::from_utf8(a).unwrap()),
            io::data_section(&String::from_utf8(b).unwrap()),
        ))
    };
    let fqi = RunConfig {
        srl_method: SrlMethod::Fqi,
        ..base
    };
    let first = csv(&fqi)?;
    let second = csv(&fqi)?;
    check(first == second, || {
        "repeated runs produced different CSV data".into()
    })?;
    Ok(format!(
        "{} epochs identical; repeated CSV data identical",
        curve.points.len()
    ))
}

fn criterion_9() -> Outcome {
    let magnitudes = [0.5, 1.0, 1.0, 2.5, 3.0, 3.0, 3.0, 4.25, 5.0, 6.5, 6.5, 8.0];
    let mut worst: f64 = 0.0;
    let mut patterns = 0;
    for n in 5..=magnitudes.len() {
        for mask in 0u32..(1 << n) {
            let diffs: Vec<f64> = (0..n)
                .map(|k| {
                    if mask >> k & 1 == 1 {
                        magnitudes[k]
                    } else {
                        -magnitudes[k]
                    }
                })
                .collect();
            let zeros = vec![0.0; n];
            let res = wilcoxon_signed_rank(&diffs, &zeros).map_err(|e| e.to_string())?;
            worst = worst.max((res.p_value - brute_force_wilcoxon_p(&diffs)).abs());
            patterns += 1;
        }
    }
    check(worst <= 1e-12, || {
        format!("exact p differs from enumeration by {worst:.3e}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut gap: f64 = 0.0;
    for _ in 0..10 {
        let diffs: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0) + 0.2).collect();
        let exact = wilcoxon_exact_p(&diffs).map_err(|e| e.to_string())?;
        let approx = wilcoxon_normal_p(&diffs).map_err(|e| e.to_string())?;
        gap = gap.max((exact - approx).abs());
    }
    check(gap <= 0.02, || format!("exact vs normal gap {gap:.4}"))?;
    Ok(format!(
        "{patterns} sign patterns match (max gap {worst:.1e}); n=20 exact/normal gap {gap:.4}"
    ))
}

fn main() {
    let _ = EnvSpec::Gridworld(GridworldSpec::default());
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        (
            "1 tabular FQI equals value iteration",
            criterion_1,
            Duration::from_secs(10),
        ),
        (
            "2 tabular LSTD-Q equals policy evaluation",
            criterion_2,
            Duration::from_secs(10),
        ),
        (
            "3 Bayesian-prior solve",
            criterion_3,
            Duration::from_secs(5),
        ),
        ("4 gradient check", criterion_4, Duration::from_secs(10)),
        (
            "5 DDQN reduction and terminal masking",
            criterion_5,
            Duration::from_secs(5),
        ),
        (
            "6 least-squares dominance over ADAM",
            criterion_6,
            Duration::from_secs(300),
        ),
        (
            "7 end-to-end improvement",
            criterion_7,
            Duration::from_secs(1800),
        ),
        (
            "8 degeneracy and determinism",
            criterion_8,
            Duration::from_secs(300),
        ),
        (
            "9 signed-rank correctness",
            criterion_9,
            Duration::from_secs(30),
        ),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f, budget) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > budget => Err(format!("took {elapsed:.1?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({elapsed:.1?}) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({elapsed:.1?}) {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
