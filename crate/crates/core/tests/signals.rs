mod common;

use esncast_core::io::{read_signal_panel_binary, read_signal_panel_csv, write_signal_panel_binary, write_signal_panel_csv};
use esncast_core::market_data::SLOTS_PER_DAY;
use esncast_core::signals::{build_signal_panel, SignalConfig, SIGNAL_DIM};

fn config(n_factors: usize) -> SignalConfig {
    SignalConfig {
        n_factors,
        ..SignalConfig::default()
    }
}

#[test]
fn first_signals_follow_the_factor_window() {
    let (returns, signals) = common::market(12, 2, 8, 0.5, 21);
    let cfg = config(2);
    let first = (0..signals.n_times())
        .find(|&t| (0..signals.n_stocks()).any(|i| signals.get(t, i).is_some()))
        .unwrap();
    assert_eq!(first / SLOTS_PER_DAY, cfg.factor_window_days);
    assert_eq!(signals.times, returns.times());
    for (z, &m) in signals.values.iter().zip(&signals.missing) {
        assert_eq!(z.iter().all(|v| v.is_finite()), !m);
    }
}

#[test]
fn signals_ignore_later_returns() {
    let mut returns = common::panel(12, 2, 8, 0.5, 22);
    let cfg = config(2);
    let (before, _) = build_signal_panel(&returns, &cfg).unwrap();
    let cut = 6 * SLOTS_PER_DAY + 17;
    for t in cut + 1..returns.n_times() {
        for i in 0..returns.n_stocks() {
            let v = returns.get(t, i).unwrap();
            returns.set(t, i, Some(-3.0 * v + 0.01));
        }
    }
    let (after, _) = build_signal_panel(&returns, &cfg).unwrap();
    let n = returns.n_stocks();
    for t in 0..=cut {
        for i in 0..n {
            assert_eq!(before.get(t, i), after.get(t, i), "row {t} stock {i}");
        }
    }
    assert!((cut + 1..returns.n_times()).any(|t| (0..n).any(|i| before.get(t, i) != after.get(t, i))));
}

#[test]
fn strong_reversion_makes_signals_predictive() {
    let (returns, signals) = common::market(40, 2, 10, 2.0, 23);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    let mut pairs = Vec::new();
    for t in 0..signals.n_times() - 1 {
        if (t + 1) % SLOTS_PER_DAY == 0 {
            continue;
        }
        for i in 0..signals.n_stocks() {
            if let (Some(z), Some(r)) = (signals.get(t, i), returns.get(t + 1, i)) {
                pairs.push((z[0], r));
            }
        }
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let corr = sxy / (sxx * syy).sqrt();
    assert!(pairs.len() > 5000);
    assert!(corr < -0.05, "correlation {corr}");
}

#[test]
fn late_listings_wait_for_a_full_window() {
    let mut returns = common::panel(12, 2, 8, 0.5, 24);
    for t in 0..2 * SLOTS_PER_DAY {
        returns.set(t, 5, None);
    }
    // interior gaps are forward-filled and do not exclude
    returns.set(4 * SLOTS_PER_DAY + 3, 6, None);
    let (signals, diag) = build_signal_panel(&returns, &config(2)).unwrap();
    assert_eq!(diag.incomplete_exclusions, 2);
    let day = |d: usize| d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY;
    assert!(day(5).chain(day(6)).all(|t| signals.get(t, 5).is_none()));
    assert!(day(7).any(|t| signals.get(t, 5).is_some()));
    assert!(day(5).any(|t| signals.get(t, 6).is_some()));
}

#[test]
fn signal_files_round_trip() {
    let (_, signals) = common::market(6, 1, 7, 0.5, 25);
    let mut csv = Vec::new();
    write_signal_panel_csv(&mut csv, &signals).unwrap();
    let header = String::from_utf8(csv.clone()).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 3 + SIGNAL_DIM);
    let back = read_signal_panel_csv(csv.as_slice()).unwrap();
    assert_eq!(back.missing, signals.missing);
    for (a, b) in back.values.iter().zip(&signals.values).flat_map(|(a, b)| a.iter().zip(b)) {
        assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    }
    let mut bin = Vec::new();
    write_signal_panel_binary(&mut bin, &signals).unwrap();
    assert_eq!(read_signal_panel_binary(bin.as_slice()).unwrap().missing, signals.missing);
}
