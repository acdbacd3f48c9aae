use lsdqn_core::dqn::DqnConfig;
use lsdqn_core::lsdqn::{
    periodic_eval_run, run, DataSource, PeriodicConfig, RunConfig, SrlMethod, UpdateStatus,
};
use lsdqn_core::srl::SrlConfig;

fn small(method: SrlMethod) -> RunConfig {
    RunConfig {
        hidden: vec![16],
        total_steps: 4_000,
        n_drl: 1_000,
        srl_method: method,
        srl: SrlConfig {
            n_srl: 1_000,
            ..SrlConfig::default()
        },
        eval_period: 1_000,
        eval_episodes: 3,
        seed: 17,
        dqn: DqnConfig {
            learning_starts: 200,
            ..DqnConfig::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn huge_lambda_barely_moves_the_last_layer() {
    let mut cfg = small(SrlMethod::Fqi);
    cfg.srl.lambda = 1e9;
    let out = run(&cfg).unwrap();
    assert_eq!(out.diagnostics.len(), 4);
    for d in &out.diagnostics {
        assert_eq!(d.status, UpdateStatus::Applied);
        assert!(d.rel_change < 1e-3, "update {}: {}", d.update, d.rel_change);
    }
}

#[test]
fn rollout_data_has_the_requested_size() {
    for method in [SrlMethod::Fqi, SrlMethod::Lstdq] {
        let mut cfg = small(method);
        cfg.data_source = DataSource::Rollout;
        cfg.srl.n_srl = 300;
        let out = run(&cfg).unwrap();
        assert!(out.diagnostics.iter().all(|d| d.n_samples == 300));
        assert_eq!(out.curve.points.len(), 4);
    }
}

#[test]
fn probes_leave_the_trajectory_alone() {
    let plain = run(&small(SrlMethod::None)).unwrap();
    let table = periodic_eval_run(&PeriodicConfig {
        run: small(SrlMethod::None),
        ..PeriodicConfig::default()
    })
    .unwrap();
    assert_eq!(
        table.columns,
        [
            "dqn",
            "bayesian_prior_0.01",
            "bayesian_prior_1",
            "bayesian_prior_100"
        ]
    );
    assert_eq!(table.steps, plain.curve.steps());
    let dqn_column: Vec<f64> = table.values.iter().map(|row| row[0]).collect();
    assert_eq!(dqn_column, plain.curve.mean_returns());
}

#[test]
fn runs_are_reproducible() {
    let a = run(&small(SrlMethod::Lstdq)).unwrap();
    let b = run(&small(SrlMethod::Lstdq)).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.net, b.net);
}
