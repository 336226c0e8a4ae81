mod common;

use esncast_core::reservoir::*;
use esncast_core::signals::SIGNAL_DIM;
use nalgebra::{DMatrix, DVector};

fn spec(seed: u64) -> ReservoirSpec {
    ReservoirSpec {
        state_dim: 30,
        seed,
        ..ReservoirSpec::for_horizon(esncast_core::market_data::Horizon::Min30)
    }
}

/// Spectral radius by Gelfand's formula, renormalizing each power.
fn gelfand_radius(a: &DMatrix<f64>, powers: usize) -> f64 {
    let mut m = DMatrix::identity(a.nrows(), a.ncols());
    let mut log_norm = 0.0;
    for _ in 0..powers {
        m = a * m;
        let s = m.norm();
        log_norm += s.ln();
        m /= s;
    }
    (log_norm / powers as f64).exp()
}

#[test]
fn sampled_weights_are_normalized() {
    for seed in 0..5 {
        let s = spec(seed);
        let w = sample_weights(&s).unwrap();
        assert_eq!(w.a.shape(), (30, 30));
        assert_eq!(w.c.shape(), (30, SIGNAL_DIM));
        assert!((w.c.amax() - 1.0).abs() < 1e-15);
        let r = gelfand_radius(&w.a, 3000);
        assert!((r - 1.0).abs() < 0.02, "seed {seed}: radius {r}");
        let nz = w.a.iter().filter(|v| **v != 0.0).count() as f64 / 900.0;
        assert!((nz - s.a_sparsity).abs() < 0.06, "density {nz}");
    }
}

#[test]
fn weights_depend_only_on_the_seed() {
    let a = sample_weights(&spec(7)).unwrap();
    let b = sample_weights(&spec(7)).unwrap();
    let c = sample_weights(&spec(8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.a, c.a);
    let mut buf = Vec::new();
    a.write(&mut buf).unwrap();
    assert_eq!(ReservoirWeights::read(buf.as_slice()).unwrap(), a);
    assert!(ReservoirWeights::read(&buf[..buf.len() - 3]).is_err());
}

#[test]
fn state_updates_match_the_leaky_tanh_recursion() {
    let s = spec(3);
    let w = sample_weights(&s).unwrap();
    let inputs: Vec<Option<Vec<f64>>> = (0..25)
        .map(|t| (t % 7 != 3).then(|| (0..SIGNAL_DIM).map(|j| ((t * 5 + j) as f64).sin() * 2.0).collect()))
        .collect();
    let seq = run_state_sequence(&w, &s, &inputs, None).unwrap();
    let mut x = DVector::zeros(30);
    for (t, z) in inputs.iter().enumerate() {
        let z = DVector::from_vec(z.clone().unwrap_or_else(|| vec![0.0; SIGNAL_DIM]));
        let pre = s.rho * &w.a * &x + s.gamma * &w.c * z;
        x = s.alpha * &x + (1.0 - s.alpha) * pre.map(f64::tanh);
        let got = seq.states.row(t).transpose();
        assert!((got - &x).amax() < 1e-14, "step {t}");
        assert_eq!(seq.valid[t], inputs[t].is_some());
    }

    let mut state = ReservoirState::zeros(30);
    for z in &inputs {
        state = update_state(&state, &w, &s, z.as_deref()).unwrap();
    }
    assert_eq!(state.x, seq.states.row(24).transpose());
    assert!(update_state(&state, &w, &s, Some(&[1.0; 3])).is_err());
    assert!(update_state(&state, &w, &s, Some(&[f64::NAN; SIGNAL_DIM])).is_err());
}

#[test]
fn state_panel_follows_each_stock_sequence() {
    let (_, signals) = common::market(6, 1, 7, 0.5, 31);
    let s = spec(4);
    let w = sample_weights(&s).unwrap();
    let panel = run_state_panel(&w, &s, &signals).unwrap();
    let i = 2;
    let inputs: Vec<Option<Vec<f64>>> = (0..signals.n_times()).map(|t| signals.get(t, i).map(|z| z.to_vec())).collect();
    let seq = run_state_sequence(&w, &s, &inputs, None).unwrap();
    for t in 0..signals.n_times() {
        match panel.state(t, i) {
            Some(x) => assert_eq!(x, seq.states.row(t).iter().copied().collect::<Vec<_>>().as_slice()),
            None => assert!(!seq.valid[t]),
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    for f in [
        |s: &mut ReservoirSpec| s.alpha = 1.5,
        |s: &mut ReservoirSpec| s.rho = -0.1,
        |s: &mut ReservoirSpec| s.gamma = 0.0,
        |s: &mut ReservoirSpec| s.a_sparsity = 0.0,
        |s: &mut ReservoirSpec| s.state_dim = 0,
    ] {
        let mut s = spec(0);
        f(&mut s);
        assert!(sample_weights(&s).is_err());
    }
}
