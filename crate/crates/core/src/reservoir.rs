//! Echo state network reservoir: fixed random weights and leaky tanh states.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::market_data::{GridTime, Horizon};
use crate::signals::{SignalPanel, SIGNAL_DIM};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"ESNCWGHT";
const WEIGHTS_VERSION: u32 = 1;
const MAX_SAMPLE_ATTEMPTS: u64 = 8;
const INPUT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear pass-through, used to check the linear-reduction identity.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    /// Leak rate.
    pub alpha: f64,
    /// Spectral radius.
    pub rho: f64,
    /// Input scaling.
    pub gamma: f64,
    /// Bias scaling.
    pub zeta: f64,
    /// Fraction of nonzero entries in the recurrent matrix.
    pub a_sparsity: f64,
    /// Fraction of nonzero entries in the input matrix.
    pub c_sparsity: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        ReservoirSpec::for_horizon(Horizon::Min10)
    }
}

impl ReservoirSpec {
    /// Published per-horizon specification.
    pub fn for_horizon(h: Horizon) -> Self {
        let (alpha, a_sparsity, rho, c_sparsity, gamma) = match h {
            Horizon::Min10 => (0.9, 0.15, 0.4, 0.95, 0.005),
            Horizon::Min30 => (0.2, 0.15, 0.6, 0.55, 0.005),
            Horizon::Min60 => (0.0, 0.15, 0.6, 0.75, 0.005),
            Horizon::Hr2 => (0.0, 0.65, 0.6, 0.85, 0.005),
            Horizon::Eod => (0.0, 0.35, 0.0, 0.25, 0.015),
        };
        ReservoirSpec {
            state_dim: 100,
            input_dim: SIGNAL_DIM,
            alpha,
            rho,
            gamma,
            zeta: 0.0,
            a_sparsity,
            c_sparsity,
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    /// Pass-through reservoir (`K = D`, identity activation, `A = 0`, `C = I`,
    /// no leak, unit input scaling) whose states equal its inputs.
    pub fn linear_passthrough(dim: usize) -> Self {
        ReservoirSpec {
            state_dim: dim,
            input_dim: dim,
            alpha: 0.0,
            rho: 0.0,
            gamma: 1.0,
            zeta: 0.0,
            a_sparsity: 1.0,
            c_sparsity: 1.0,
            activation: Activation::Identity,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("reservoir: {m}")));
        if self.state_dim == 0 || self.input_dim == 0 {
            return fail("state_dim and input_dim must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail("rho must lie in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail("gamma must be positive");
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return fail("zeta must be non-negative");
        }
        if !(self.a_sparsity > 0.0 && self.a_sparsity <= 1.0) {
            return fail("a_sparsity must lie in (0, 1]");
        }
        if !(self.c_sparsity > 0.0 && self.c_sparsity <= 1.0) {
            return fail("c_sparsity must lie in (0, 1]");
        }
        Ok(())
    }

    /// Zero-input contraction factor `alpha + (1 - alpha) rho s_max`.
    pub fn contraction_bound(&self, weights: &ReservoirWeights) -> f64 {
        self.alpha + (1.0 - self.alpha) * self.rho * weights.a_max_singular_value()
    }
}

/// Normalized reservoir matrices, immutable after sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    /// `K x K`, unit spectral radius (or zero for the pass-through hook).
    pub a: DMatrix<f64>,
    /// `K x D`, unit max-abs entry.
    pub c: DMatrix<f64>,
    /// Always zero.
    pub b: DVector<f64>,
}

impl ReservoirWeights {
    /// Normalizes raw draws: `A / spectral_radius(A)`, `C / max|C|`.
    pub fn from_raw(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_shapes(&a, &c)?;
        let radius = spectral_radius(&a);
        if !(radius > 1e-12) || !radius.is_finite() {
            return Err(Error::Numerical(format!("recurrent matrix has spectral radius {radius}")));
        }
        let cmax = c.amax();
        if !(cmax > 0.0) || !cmax.is_finite() {
            return Err(Error::Numerical("input matrix is zero".into()));
        }
        Self::from_normalized(a / radius, c / cmax)
    }

    /// Uses the matrices as given.
    pub fn from_normalized(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_shapes(&a, &c)?;
        let k = a.nrows();
        Ok(ReservoirWeights {
            a,
            c,
            b: DVector::zeros(k),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn a_max_singular_value(&self) -> f64 {
        crate::linalg::max_singular_value(&self.a)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_u32::<LittleEndian>(WEIGHTS_VERSION)?;
        w.write_u64::<LittleEndian>(self.state_dim() as u64)?;
        w.write_u64::<LittleEndian>(self.input_dim() as u64)?;
        for x in self.a.iter().chain(self.c.iter()) {
            w.write_f64::<LittleEndian>(*x)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Data(format!("weights cache: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Data("weights cache: bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(bad)?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Data(format!("weights cache: unsupported version {version}")));
        }
        let k = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
        let d = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
        let mut read = |len: usize| -> Result<Vec<f64>> {
            (0..len).map(|_| r.read_f64::<LittleEndian>().map_err(bad)).collect()
        };
        let a = DMatrix::from_vec(k, k, read(k * k)?);
        let c = DMatrix::from_vec(k, d, read(k * d)?);
        Self::from_normalized(a, c)
    }
}

fn check_shapes(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 || c.nrows() != a.nrows() || c.ncols() == 0 {
        return Err(Error::Invariant(format!(
            "reservoir matrices have shapes {:?} and {:?}",
            a.shape(),
            c.shape()
        )));
    }
    Ok(())
}

/// Draws `A*` (sparse Gaussian) and `C*` (sparse uniform) and normalizes them.
///
/// Every entry consumes a mask draw and a value draw whatever the sparsity, so
/// specs sharing a seed share the underlying draws.
pub fn sample_weights(spec: &ReservoirSpec) -> Result<ReservoirWeights> {
    spec.validate()?;
    let (k, d) = (spec.state_dim, spec.input_dim);
    let mut crng = ChaCha8Rng::seed_from_u64(spec.seed);
    crng.set_stream(INPUT_STREAM);
    let c = DMatrix::from_fn(k, d, |_, _| {
        let keep = crng.random::<f64>() < spec.c_sparsity;
        let v = crng.random_range(-1.0..=1.0);
        if keep {
            v
        } else {
            0.0
        }
    });
    let cmax = c.amax();
    if cmax == 0.0 {
        return Err(Error::Numerical("sampled input matrix is all zero".into()));
    }
    for attempt in 0..MAX_SAMPLE_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(attempt);
        let a = DMatrix::from_fn(k, k, |_, _| {
            let keep = rng.random::<f64>() < spec.a_sparsity;
            let v: f64 = StandardNormal.sample(&mut rng);
            if keep {
                v
            } else {
                0.0
            }
        });
        let radius = spectral_radius(&a);
        if radius > 1e-12 && radius.is_finite() {
            return ReservoirWeights::from_normalized(a / radius, &c / cmax);
        }
    }
    Err(Error::Numerical(format!(
        "recurrent matrix had zero spectral radius in {MAX_SAMPLE_ATTEMPTS} draws"
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub x: DVector<f64>,
    /// Index of the last update in the driving sequence.
    pub last_update: Option<usize>,
    /// Consecutive updates driven by a missing input.
    pub decayed_steps: usize,
}

impl ReservoirState {
    pub fn zeros(k: usize) -> Self {
        ReservoirState {
            x: DVector::zeros(k),
            last_update: None,
            decayed_steps: 0,
        }
    }
}

/// Applies `alpha X + (1 - alpha) phi(rho A X + gamma C z + zeta b)` in place.
/// A missing input (`None`) is replaced by zero.
fn step(x: &mut DVector<f64>, scratch: &mut DVector<f64>, w: &ReservoirWeights, spec: &ReservoirSpec, z: Option<&[f64]>) {
    scratch.gemv(spec.rho, &w.a, x, 0.0);
    if let Some(z) = z {
        for (col, &zj) in w.c.column_iter().zip(z) {
            if zj != 0.0 {
                scratch.axpy(spec.gamma * zj, &col, 1.0);
            }
        }
    }
    if spec.zeta != 0.0 {
        scratch.axpy(spec.zeta, &w.b, 1.0);
    }
    let (alpha, act) = (spec.alpha, spec.activation);
    x.zip_apply(scratch, |xk, pre| *xk = alpha * *xk + (1.0 - alpha) * act.apply(pre));
}

fn check_input(z: Option<&[f64]>, d: usize) -> Result<()> {
    if let Some(z) = z {
        if z.len() != d {
            return Err(Error::Invariant(format!("input has {} entries, expected {d}", z.len())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("non-finite reservoir input must be marked missing".into()));
        }
    }
    Ok(())
}

/// One state update. `z = None` is a decay step.
pub fn update_state(
    state: &ReservoirState,
    weights: &ReservoirWeights,
    spec: &ReservoirSpec,
    z: Option<&[f64]>,
) -> Result<ReservoirState> {
    if state.x.len() != weights.state_dim() {
        return Err(Error::Invariant(format!(
            "state has dimension {}, weights expect {}",
            state.x.len(),
            weights.state_dim()
        )));
    }
    check_input(z, weights.input_dim())?;
    let mut x = state.x.clone();
    let mut scratch = DVector::zeros(x.len());
    step(&mut x, &mut scratch, weights, spec, z);
    Ok(ReservoirState {
        x,
        last_update: Some(state.last_update.map_or(0, |t| t + 1)),
        decayed_steps: if z.is_none() { state.decayed_steps + 1 } else { 0 },
    })
}

/// States for a driving sequence; `valid[t]` is false where the input was missing.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    /// `T x K`.
    pub states: DMatrix<f64>,
    pub valid: Vec<bool>,
}

pub fn run_state_sequence(
    weights: &ReservoirWeights,
    spec: &ReservoirSpec,
    inputs: &[Option<Vec<f64>>],
    x0: Option<&DVector<f64>>,
) -> Result<StateSequence> {
    let k = weights.state_dim();
    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(k));
    if x.len() != k {
        return Err(Error::Invariant(format!("initial state has dimension {}, expected {k}", x.len())));
    }
    let mut scratch = DVector::zeros(k);
    let mut states = DMatrix::zeros(inputs.len(), k);
    let mut valid = Vec::with_capacity(inputs.len());
    for (t, z) in inputs.iter().enumerate() {
        let z = z.as_deref();
        check_input(z, weights.input_dim())?;
        step(&mut x, &mut scratch, weights, spec, z);
        states.row_mut(t).tr_copy_from(&x);
        valid.push(z.is_some());
    }
    Ok(StateSequence { states, valid })
}

/// Per-stock reservoir states over a signal panel, started from zero at row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePanel {
    pub times: Vec<GridTime>,
    pub tickers: Vec<String>,
    pub state_dim: usize,
    /// Row-major `T x N x K`.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl StatePanel {
    pub fn state(&self, t: usize, i: usize) -> Option<&[f64]> {
        let cell = t * self.tickers.len() + i;
        self.valid[cell].then(|| &self.values[cell * self.state_dim..(cell + 1) * self.state_dim])
    }
}

pub fn run_state_panel(weights: &ReservoirWeights, spec: &ReservoirSpec, signals: &SignalPanel) -> Result<StatePanel> {
    if weights.input_dim() != SIGNAL_DIM {
        return Err(Error::Config(format!(
            "reservoir input_dim is {}, signals have {SIGNAL_DIM}",
            weights.input_dim()
        )));
    }
    let (tn, n, k) = (signals.n_times(), signals.n_stocks(), weights.state_dim());
    let per_stock: Vec<StateSequence> = (0..n)
        .into_par_iter()
        .map(|i| {
            let inputs: Vec<Option<Vec<f64>>> = (0..tn).map(|t| signals.get(t, i).map(|z| z.to_vec())).collect();
            run_state_sequence(weights, spec, &inputs, None)
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; tn * n * k];
    let mut valid = vec![false; tn * n];
    for (i, seq) in per_stock.iter().enumerate() {
        for t in 0..tn {
            let cell = t * n + i;
            valid[cell] = seq.valid[t];
            for (dst, src) in values[cell * k..(cell + 1) * k].iter_mut().zip(seq.states.row(t).iter()) {
                *dst = *src;
            }
        }
    }
    Ok(StatePanel {
        times: signals.times.clone(),
        tickers: signals.tickers.clone(),
        state_dim: k,
        values,
        valid,
    })
}
