use crate::reservoir::StatePanel;
use crate::signals::{SignalPanel, SIGNAL_DIM};

/// Time x stock panel of fixed-length feature vectors with validity.
pub trait FeaturePanel: Sync {
    fn dim(&self) -> usize;
    fn n_times(&self) -> usize;
    fn n_stocks(&self) -> usize;
    fn features(&self, t: usize, i: usize) -> Option<&[f64]>;
}

impl FeaturePanel for SignalPanel {
    fn dim(&self) -> usize {
        SIGNAL_DIM
    }

    fn n_times(&self) -> usize {
        self.times.len()
    }

    fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    fn features(&self, t: usize, i: usize) -> Option<&[f64]> {
        let cell = t * self.tickers.len() + i;
        (!self.missing[cell]).then(|| &self.values[cell][..])
    }
}

impl FeaturePanel for StatePanel {
    fn dim(&self) -> usize {
        self.state_dim
    }

    fn n_times(&self) -> usize {
        self.times.len()
    }

    fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    fn features(&self, t: usize, i: usize) -> Option<&[f64]> {
        self.state(t, i)
    }
}
