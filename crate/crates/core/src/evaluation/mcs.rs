use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsOptions {
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for McsOptions {
    fn default() -> Self {
        McsOptions {
            alpha: 0.05,
            draws: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub models: Vec<String>,
    pub included: Vec<bool>,
    /// Cumulative MCS p-values.
    pub p_values: Vec<f64>,
    /// Model indices in elimination order; the last survivor is listed last.
    pub elimination_order: Vec<usize>,
    pub alpha: f64,
    pub draws: usize,
    pub block_length: usize,
    pub block_rule: String,
}

/// Expected block length of the stationary bootstrap: `ceil(T^(1/3))`.
pub fn block_length(t: usize) -> usize {
    let b = (t as f64).cbrt().ceil() as usize;
    // guard against cbrt rounding just above an integer cube
    if b > 1 && (b - 1).pow(3) >= t {
        b - 1
    } else {
        b.max(1)
    }
}

/// Stationary bootstrap index path; each draw uses its own ChaCha stream.
pub fn stationary_bootstrap_indices(t: usize, block: usize, seed: u64, draw: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let p = 1.0 / block as f64;
    let mut out = Vec::with_capacity(t);
    let mut k = rng.random_range(0..t);
    out.push(k);
    while out.len() < t {
        k = if rng.random::<f64>() < p {
            rng.random_range(0..t)
        } else {
            (k + 1) % t
        };
        out.push(k);
    }
    out
}

/// Model confidence set with the range statistic over pairwise mean loss
/// differentials.
pub fn model_confidence_set(models: &[String], losses: &[Vec<f64>], opts: &McsOptions) -> Result<McsResult> {
    let m = losses.len();
    if m < 2 || models.len() != m {
        return Err(Error::Data(format!("MCS needs >= 2 named models, got {m}")));
    }
    let t = losses[0].len();
    if t < 2 || losses.iter().any(|l| l.len() != t) {
        return Err(Error::Data("MCS loss series must share a common index of length >= 2".into()));
    }
    if losses.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite loss in MCS input".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) || opts.draws == 0 {
        return Err(Error::Config("MCS needs 0 < alpha < 1 and at least one draw".into()));
    }
    let block = block_length(t);
    let mean = |l: &[f64]| l.iter().sum::<f64>() / t as f64;

    // Bootstrap means of each model's loss; pairwise differentials follow by subtraction.
    let boot: Vec<Vec<f64>> = (0..opts.draws as u64)
        .into_par_iter()
        .map(|b| {
            let idx = stationary_bootstrap_indices(t, block, opts.seed, b);
            losses.iter().map(|l| idx.iter().map(|&k| l[k]).sum::<f64>() / t as f64).collect()
        })
        .collect();

    // Pairwise differential mean, bootstrap deviations and variance.
    let mut dbar = vec![vec![0.0; m]; m];
    let mut var = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let d: Vec<f64> = losses[i].iter().zip(&losses[j]).map(|(a, b)| a - b).collect();
            dbar[i][j] = mean(&d);
            if i != j {
                var[i][j] = boot
                    .iter()
                    .map(|bm| (bm[i] - bm[j] - dbar[i][j]).powi(2))
                    .sum::<f64>()
                    / opts.draws as f64;
            }
        }
    }
    let tstat = |i: usize, j: usize| -> f64 {
        if dbar[i][j] == 0.0 {
            0.0
        } else if var[i][j] > 1e-30 * dbar[i][j].powi(2) {
            dbar[i][j] / var[i][j].sqrt()
        } else {
            dbar[i][j].signum() * f64::INFINITY
        }
    };
    let tboot = |bm: &[f64], i: usize, j: usize| -> f64 {
        let dev = bm[i] - bm[j] - dbar[i][j];
        if var[i][j] > 1e-30 * dbar[i][j].powi(2) && var[i][j] > 0.0 {
            dev.abs() / var[i][j].sqrt()
        } else {
            0.0
        }
    };

    let mut alive: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    let mut p_values = vec![0.0; m];
    let mut running = 0.0f64;
    while alive.len() > 1 {
        let mut stat = 0.0f64;
        for &i in &alive {
            for &j in &alive {
                stat = stat.max(tstat(i, j).abs());
            }
        }
        let exceed = if stat == 0.0 {
            opts.draws
        } else {
            boot.iter()
                .filter(|bm| {
                    let mut s = 0.0f64;
                    for &i in &alive {
                        for &j in &alive {
                            s = s.max(tboot(bm, i, j));
                        }
                    }
                    s >= stat
                })
                .count()
        };
        let p = exceed as f64 / opts.draws as f64;
        running = running.max(p);
        // worst model: largest max_j t_ij, ties broken by name
        let worst = *alive
            .iter()
            .max_by(|&&a, &&b| {
                let ta = alive.iter().map(|&j| tstat(a, j)).fold(f64::NEG_INFINITY, f64::max);
                let tb = alive.iter().map(|&j| tstat(b, j)).fold(f64::NEG_INFINITY, f64::max);
                ta.total_cmp(&tb).then_with(|| models[b].cmp(&models[a]))
            })
            .expect("non-empty");
        p_values[worst] = running;
        order.push(worst);
        alive.retain(|&k| k != worst);
    }
    p_values[alive[0]] = 1.0;
    order.push(alive[0]);
    let included = p_values.iter().map(|&p| p >= opts.alpha).collect();
    Ok(McsResult {
        models: models.to_vec(),
        included,
        p_values,
        elimination_order: order,
        alpha: opts.alpha,
        draws: opts.draws,
        block_length: block,
        block_rule: "stationary bootstrap, expected block length ceil(T^(1/3))".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|k| format!("m{k}")).collect()
    }

    #[test]
    fn block_rule() {
        assert_eq!(block_length(500), 8);
        assert_eq!(block_length(512), 8);
        assert_eq!(block_length(513), 9);
        assert_eq!(block_length(1), 1);
    }

    #[test]
    fn bootstrap_draws_are_reproducible_and_in_range() {
        let a = stationary_bootstrap_indices(100, 5, 3, 7);
        assert_eq!(a, stationary_bootstrap_indices(100, 5, 3, 7));
        assert_ne!(a, stationary_bootstrap_indices(100, 5, 3, 8));
        assert!(a.iter().all(|&k| k < 100));
    }

    #[test]
    fn identical_losses_retain_everything() {
        let l: Vec<f64> = (0..200).map(|k| ((k * 37) % 11) as f64).collect();
        let r = model_confidence_set(&names(3), &[l.clone(), l.clone(), l], &McsOptions { draws: 200, ..Default::default() })
            .unwrap();
        assert!(r.included.iter().all(|&x| x));
        assert!(r.p_values.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn shifted_model_is_eliminated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut draw = || -> Vec<f64> { (0..500).map(|_| StandardNormal.sample(&mut rng)).map(|z: f64| z * z).collect() };
        let a = draw();
        let b = draw();
        let c: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        let r = model_confidence_set(&names(3), &[a, b, c], &McsOptions { draws: 500, ..Default::default() }).unwrap();
        assert!(!r.included[2]);
        assert_eq!(r.elimination_order[0], 2);
        assert_eq!(r.p_values[2], 0.0);
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let series: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..300).map(|_| StandardNormal.sample(&mut rng)).map(|z: f64| z * z + 0.05 * k as f64).collect())
            .collect();
        let opts = McsOptions { draws: 300, ..Default::default() };
        let n = names(3);
        let r1 = model_confidence_set(&n, &series, &opts).unwrap();
        let perm = [2usize, 0, 1];
        let r2 = model_confidence_set(
            &perm.iter().map(|&k| n[k].clone()).collect::<Vec<_>>(),
            &perm.iter().map(|&k| series[k].clone()).collect::<Vec<_>>(),
            &opts,
        )
        .unwrap();
        for (pos, &k) in perm.iter().enumerate() {
            assert_eq!(r2.p_values[pos], r1.p_values[k]);
            assert_eq!(r2.included[pos], r1.included[k]);
        }
    }
}
