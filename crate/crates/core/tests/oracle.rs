use ratact_core::gradcore::AdamConfig;
use ratact_core::tdprobe::{
    collect_buffer, fitted_q_run, overestimation, value_iteration, ChainEnd, MdpSpec, ProbeConfig, QModel, QModelSpec,
    TabularQ,
};

fn chain(end: ChainEnd) -> MdpSpec {
    MdpSpec {
        end,
        reward_scale: 100.0,
        ..MdpSpec::default()
    }
}

fn converges(mdp: &MdpSpec, lr: f64, tau: f64, steps: usize) -> f64 {
    let buffer = collect_buffer(mdp, 1000, 7).unwrap();
    let model = QModelSpec::Tabular {
        adam: AdamConfig {
            lr,
            ..AdamConfig::default()
        },
    };
    let mut cfg = ProbeConfig::new(1, steps, 7);
    cfg.tau = tau;
    cfg.checkpoint_every = 1000;
    let r = fitted_q_run(mdp, &buffer, &model, &cfg).unwrap();
    assert!(!r.diverged);
    r.final_max_error
}

#[test]
fn tabular_fitted_q_reaches_value_iteration() {
    let mdp = chain(ChainEnd::Absorb);
    let err = converges(&mdp, 0.05, 0.05, 20_000);
    assert!(err < 0.01 * mdp.reward_scale, "max |Q - Q*| = {err}");

    let mdp = MdpSpec {
        gamma: 0.9,
        ..chain(ChainEnd::Wrap)
    };
    let err = converges(&mdp, 0.5, 0.1, 20_000);
    assert!(err < 0.01 * mdp.reward_scale, "wrap: max |Q - Q*| = {err}");
}

#[test]
fn oracle_predictor_has_zero_overestimation() {
    for end in [ChainEnd::Absorb, ChainEnd::Wrap] {
        let mdp = chain(end);
        let q = value_iteration(&mdp).unwrap();
        let model = QModel::Tabular(TabularQ::from_qtable(&q, AdamConfig::default()).unwrap());
        let table = model.table(&mdp).unwrap();
        assert_eq!(overestimation(&table, &q), 0.0);
    }
}
