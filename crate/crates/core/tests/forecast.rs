use fedwind_core::data::{generate_synthetic_fleet, FleetSpec, TurbineSeries};
use fedwind_core::forecast::{
    fedavg, local_train, rolling_forecast, train_cluster_fl, ClientDataset, FlOptions, ModelArtifact, ModelDims,
    ModelParams, NormConfig, RollingMode, TrainHyper, HORIZON, LAGS, N_INPUTS,
};
use fedwind_core::rng;
use proptest::prelude::*;

fn fleet_series(n: usize, steps: usize, seed: u64) -> Vec<TurbineSeries> {
    let fleet = generate_synthetic_fleet(&FleetSpec::three_archetypes(n, steps, seed)).unwrap();
    fleet.turbines().to_vec()
}

fn small_hyper(rounds: usize) -> TrainHyper {
    TrainHyper {
        hidden_dim: 6,
        rounds,
        batch_size: 16,
        learning_rate: 5e-3,
        ..Default::default()
    }
}

fn dims() -> ModelDims {
    ModelDims::new(N_INPUTS, 4, HORIZON)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fedavg_is_affine(
        scale in -3.0f64..3.0,
        weights in prop::collection::vec(1usize..50, 1..5),
        seed in any::<u64>(),
    ) {
        let models: Vec<ModelParams> = (0..weights.len()).map(|i| ModelParams::init(dims(), seed.wrapping_add(i as u64))).collect();
        let plain: Vec<(ModelParams, usize)> = models.iter().cloned().zip(weights.iter().copied()).collect();
        let scaled: Vec<(ModelParams, usize)> = models
            .iter()
            .map(|m| ModelParams { dims: m.dims, values: m.values.iter().map(|v| scale * v).collect() })
            .zip(weights.iter().copied())
            .collect();
        let a = fedavg(&plain).unwrap();
        let b = fedavg(&scaled).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((scale * x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn fedavg_of_copies_is_identity(copies in 1usize..6, seed in any::<u64>()) {
        let m = ModelParams::init(dims(), seed);
        let updates: Vec<(ModelParams, usize)> = (0..copies).map(|i| (m.clone(), i + 1)).collect();
        let avg = fedavg(&updates).unwrap();
        for (x, y) in avg.values.iter().zip(&m.values) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn single_client_is_plain_local_training() {
    let series = &fleet_series(3, 300, 4)[0];
    let client = ClientDataset::from_series(series, 0.7, &NormConfig::default()).unwrap();
    let hyper = small_hyper(4);
    let fl = train_cluster_fl(std::slice::from_ref(&client), &hyper, FlOptions::default()).unwrap();

    let mut params = ModelParams::init(hyper.dims(), hyper.seed);
    for round in 1..=hyper.rounds {
        let mut r = rng::stream(hyper.seed, &[0x7A11, round as u64]);
        params = local_train(&params, &client, &hyper, &mut r).unwrap();
    }
    assert_eq!(fl.params.values, params.values);
}

#[test]
fn identical_clients_follow_the_single_client_trajectory() {
    let series = &fleet_series(3, 300, 5)[1];
    let client = ClientDataset::from_series(series, 0.7, &NormConfig::default()).unwrap();
    let hyper = small_hyper(3);
    for rounds in 1..=hyper.rounds {
        let h = TrainHyper { rounds, ..hyper };
        let one = train_cluster_fl(std::slice::from_ref(&client), &h, FlOptions::default()).unwrap();
        let many = train_cluster_fl(&vec![client.clone(); 4], &h, FlOptions::default()).unwrap();
        for (a, b) in one.params.values.iter().zip(&many.params.values) {
            assert!((a - b).abs() <= 1e-12, "round {rounds}");
        }
    }
}

#[test]
fn training_history_covers_every_round() {
    let clients: Vec<ClientDataset> = fleet_series(3, 400, 6)
        .iter()
        .map(|s| ClientDataset::from_series(s, 0.7, &NormConfig::default()).unwrap())
        .collect();
    let out = train_cluster_fl(&clients, &small_hyper(5), FlOptions::default()).unwrap();
    assert_eq!(out.history.len(), 10);
    assert!(out.history.iter().all(|r| r.metrics.mse.is_finite()));
    assert!(out.params.is_finite());
}

#[test]
fn rolling_forecasts_are_deterministic_and_bounded() {
    let series = &fleet_series(3, 200, 7)[0];
    let model = ModelParams::init(ModelDims::new(N_INPUTS, 8, HORIZON), 3);
    let norm = NormConfig::default();
    let cap = series.meta.capacity_kw;
    for mode in [RollingMode::TeacherForced, RollingMode::Recursive] {
        for start in [LAGS, 50, 200 - 24] {
            let a = rolling_forecast(&model, series, &norm, start, 24, mode).unwrap();
            let b = rolling_forecast(&model, series, &norm, start, 24, mode).unwrap();
            assert_eq!(a, b);
            assert_eq!((a.predicted_kw.len(), a.invocations), (24, 8));
            assert_eq!(a.timestamps[0], series.timestamp(start));
            assert!(a.predicted_kw.iter().all(|&p| (0.0..=cap).contains(&p)));
        }
        assert!(rolling_forecast(&model, series, &norm, LAGS - 1, 24, mode).is_err());
        assert!(rolling_forecast(&model, series, &norm, 190, 24, mode).is_err());
    }
    // An exploding predictor is clamped to capacity.
    let huge = |_: &[f64]| vec![1e9; HORIZON];
    let t = rolling_forecast(&huge, series, &norm, 30, 24, RollingMode::Recursive).unwrap();
    assert!(t.predicted_kw.iter().all(|&p| p == cap));
}

#[test]
fn persistence_predictor_is_flat_in_recursive_mode() {
    let series = &fleet_series(3, 120, 8)[0];
    let last = |x: &[f64]| vec![x[(LAGS - 1) * N_INPUTS]; HORIZON];
    let t = rolling_forecast(&last, series, &NormConfig::default(), 60, 24, RollingMode::Recursive).unwrap();
    let expected = series.power[59].min(series.meta.capacity_kw);
    for p in t.predicted_kw {
        assert!((p - expected).abs() < 1e-9);
    }
}

#[test]
fn model_artifact_round_trip() {
    let hyper = small_hyper(2);
    let params = ModelParams::init(hyper.dims(), 9);
    let art = ModelArtifact::new(params, NormConfig::default(), hyper);
    let back = ModelArtifact::from_json(&art.to_json()).unwrap();
    assert_eq!(back, art);
    let mut broken = art.clone();
    broken.params.values.pop();
    assert!(ModelArtifact::from_json(&broken.to_json()).is_err());
}
