mod common;

use esncast_core::evaluation::msfe_series;
use esncast_core::market_data::Horizon;
use esncast_core::reservoir::ReservoirSpec;
use esncast_core::training::{run_esn, HorizonConfig, TrainingOptions};
use esncast_core::tuning::*;

fn base() -> ReservoirSpec {
    ReservoirSpec {
        state_dim: 20,
        ..ReservoirSpec::for_horizon(Horizon::Min10)
    }
}

#[test]
fn budget_one_returns_the_sampled_spec() {
    let (returns, signals) = common::market(12, 2, 14, 0.5, 4);
    let space = SearchSpace { budget: 1, seed: 9, ..Default::default() };
    let cfg = HorizonConfig::for_horizon(Horizon::Min10);
    let r = tune(&space, &base(), Horizon::Min10, &signals, &returns, &cfg, &TrainingOptions::default(), None).unwrap();
    assert_eq!(r.trials.len(), 1);
    assert_eq!(r.best, space.sample(&base(), 0));
}

#[test]
fn winner_is_the_argmin_and_reproducible() {
    let (returns, signals) = common::market(12, 2, 14, 0.5, 5);
    let space = SearchSpace { budget: 4, seed: 2, ..Default::default() };
    let cfg = HorizonConfig::for_horizon(Horizon::Min10);
    let opts = TrainingOptions::default();
    let r = tune(&space, &base(), Horizon::Min10, &signals, &returns, &cfg, &opts, None).unwrap();
    assert_eq!(r.trials.len(), 4);
    let min = r.trials.iter().filter_map(|t| t.objective).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_objective, min);
    assert_eq!(r.trials[r.best_trial].objective, Some(min));

    let rerun = msfe_series(&run_esn(&signals, &returns, &cfg, &opts, &r.best).unwrap(), &returns).unwrap().total();
    assert!((rerun - r.best_objective).abs() <= 1e-12 * r.best_objective);

    let again = tune(&space, &base(), Horizon::Min10, &signals, &returns, &cfg, &opts, None).unwrap();
    assert_eq!(again.best, r.best);
    let specs = |t: &TuneResult| t.trials.iter().map(|x| (x.spec.clone(), x.objective)).collect::<Vec<_>>();
    assert_eq!(specs(&again), specs(&r));

    let frag = r.fragment();
    let spec: ReservoirSpec = serde_json::from_value(frag["reservoir"]["10min"].clone()).unwrap();
    assert_eq!(spec, r.best);

    let mut log = Vec::new();
    r.write_trial_log(&mut log).unwrap();
    assert_eq!(String::from_utf8(log).unwrap().lines().count(), 5);
}

#[test]
fn two_candidates_pick_the_lower_msfe() {
    let (returns, signals) = common::market(12, 2, 14, 2.0, 6);
    let informative = base();
    let slow = ReservoirSpec { alpha: 1.0, gamma: 0.05, ..base() };
    let cfg = HorizonConfig::for_horizon(Horizon::Min10);
    let r = evaluate_candidates(
        vec![slow, informative],
        Horizon::Min10,
        &signals,
        &returns,
        &cfg,
        &TrainingOptions::default(),
        None,
    )
    .unwrap();
    let o: Vec<f64> = r.trials.iter().map(|t| t.objective.unwrap()).collect();
    assert_eq!(r.best_trial, if o[1] < o[0] { 1 } else { 0 });
}

#[test]
fn tuning_data_must_precede_evaluation() {
    let (returns, signals) = common::market(12, 2, 14, 0.5, 7);
    let last = *returns.dates().last().unwrap();
    let space = SearchSpace { budget: 1, ..Default::default() };
    let cfg = HorizonConfig::for_horizon(Horizon::Min10);
    let opts = TrainingOptions::default();
    assert!(tune(&space, &base(), Horizon::Min10, &signals, &returns, &cfg, &opts, Some(last)).is_err());
    let ok = tune(&space, &base(), Horizon::Min10, &signals, &returns, &cfg, &opts, last.succ_opt()).unwrap();
    assert!(ok.trials.iter().all(|t| t.last_forecast.unwrap() < ok.evaluation_start.unwrap()));
}

#[test]
fn all_failed_trials_report_diagnostics() {
    let (returns, signals) = common::market(12, 2, 6, 0.5, 8);
    let space = SearchSpace { budget: 2, ..Default::default() };
    let cfg = HorizonConfig::for_horizon(Horizon::Min10);
    let err = tune(&space, &base(), Horizon::Min10, &signals, &returns, &cfg, &TrainingOptions::default(), None).unwrap_err();
    assert!(err.to_string().contains("trial 0"), "{err}");
}
