//! Standard-deviation gate for noisy scalar perception streams.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("window must hold at least one sample")]
    EmptyWindow,
    #[error("k_sigma must be finite and positive, got {0}")]
    InvalidThreshold(f64),
}

/// Samples are gated only once the window holds this many.
pub const WARM_UP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutcome {
    pub accepted: bool,
    /// Mean of the window after this sample was processed.
    pub value: f64,
}

/// Rejects samples further than `k_sigma` sample standard deviations from
/// the mean of the recent accepted ones.
///
/// A run of `flush_after` consecutive rejections is taken as a genuine change
/// in the signal: the window is cleared and restarted from the latest sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StatFilter {
    window: VecDeque<f64>,
    capacity: usize,
    k_sigma: f64,
    flush_after: usize,
    rejected_run: usize,
}

impl StatFilter {
    pub fn new(capacity: usize, k_sigma: f64) -> Result<Self, FilterError> {
        if capacity == 0 {
            return Err(FilterError::EmptyWindow);
        }
        if !(k_sigma.is_finite() && k_sigma > 0.0) {
            return Err(FilterError::InvalidThreshold(k_sigma));
        }
        Ok(Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
            k_sigma,
            flush_after: 3,
            rejected_run: 0,
        })
    }

    pub fn with_flush_after(mut self, n: usize) -> Self {
        self.flush_after = n;
        self
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Mean of the window, `None` before the first accepted sample.
    pub fn mean(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    fn std_dev(&self, mean: f64) -> f64 {
        let n = self.window.len();
        if n < 2 {
            return 0.0;
        }
        let ss: f64 = self.window.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    fn push(&mut self, sample: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(sample);
    }

    pub fn filter_sample(&mut self, sample: f64) -> FilterOutcome {
        if !sample.is_finite() {
            return FilterOutcome {
                accepted: false,
                value: self.mean().unwrap_or(f64::NAN),
            };
        }
        if self.window.len() >= WARM_UP {
            let mean = self.mean().unwrap_or(sample);
            let sigma = self.std_dev(mean);
            if (sample - mean).abs() > self.k_sigma * sigma {
                self.rejected_run += 1;
                if self.flush_after == 0 || self.rejected_run < self.flush_after {
                    return FilterOutcome { accepted: false, value: mean };
                }
                self.window.clear();
            }
        }
        self.rejected_run = 0;
        self.push(sample);
        FilterOutcome {
            accepted: true,
            value: self.mean().unwrap_or(sample),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn primed(samples: &[f64]) -> StatFilter {
        let mut f = StatFilter::new(8, 2.0).unwrap();
        for s in samples {
            assert!(f.filter_sample(*s).accepted);
        }
        f
    }

    #[test]
    fn outlier_rejected() {
        let mut f = primed(&[1.0, 1.02, 0.98, 1.0]);
        let out = f.filter_sample(5.0);
        assert!(!out.accepted);
        assert!((out.value - 1.0).abs() < 1e-12);
        assert_eq!(f.len(), 4);
    }

    #[test]
    fn threshold_edge() {
        // sample sigma of the window is sqrt(0.0008 / 3)
        let sigma = (0.0008f64 / 3.0).sqrt();
        let mut f = primed(&[1.0, 1.02, 0.98, 1.0]);
        assert!(f.filter_sample(1.0 + 1.99 * sigma).accepted);
        let mut f = primed(&[1.0, 1.02, 0.98, 1.0]);
        assert!(!f.filter_sample(1.0 + 2.01 * sigma).accepted);
    }

    #[test]
    fn warm_up_accepts_everything() {
        let mut f = primed(&[1.0, 1.0, 1.0]);
        assert!(f.filter_sample(1000.0).accepted);
    }

    #[test]
    fn mean_sample_with_zero_spread_accepted() {
        let mut f = primed(&[2.0; 6]);
        assert!(f.filter_sample(2.0).accepted);
    }

    #[test]
    fn fifo_eviction() {
        let mut f = StatFilter::new(3, 2.0).unwrap();
        for s in [1.0, 2.0, 3.0, 4.0] {
            f.filter_sample(s);
        }
        assert_eq!(f.samples().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn persistent_change_flushes_window() {
        let mut f = primed(&[1.0; 8]);
        assert!(!f.filter_sample(0.0).accepted);
        assert!(!f.filter_sample(0.0).accepted);
        let out = f.filter_sample(0.0);
        assert!(out.accepted);
        assert_eq!(out.value, 0.0);
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn invalid_construction() {
        assert!(StatFilter::new(0, 2.0).is_err());
        assert!(StatFilter::new(8, 0.0).is_err());
        assert!(StatFilter::new(8, f64::NAN).is_err());
    }
}
