//! Output analysis: time-weighted batch means and empirical CDF distances.

use crate::error::{Error, Result};

/// Accumulates time integrals of `k` functionals over equal-length batches
/// of `[start, end)`.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    start: f64,
    end: f64,
    width: f64,
    sums: Vec<Vec<f64>>,
    events: Vec<usize>,
}

impl BatchAccumulator {
    pub fn new(start: f64, end: f64, n_batches: usize, k: usize) -> Self {
        Self {
            start,
            end,
            width: (end - start) / n_batches as f64,
            sums: vec![vec![0.0; k]; n_batches],
            events: vec![0; n_batches],
        }
    }

    pub fn n_batches(&self) -> usize {
        self.sums.len()
    }

    fn end(&self) -> f64 {
        self.end
    }

    fn batch_end(&self, bi: usize) -> f64 {
        if bi + 1 == self.sums.len() {
            self.end
        } else {
            self.start + self.width * (bi + 1) as f64
        }
    }

    fn batch_of(&self, t: f64) -> usize {
        let mut bi = (((t - self.start) / self.width).floor() as usize).min(self.sums.len() - 1);
        while bi + 1 < self.sums.len() && self.batch_end(bi) <= t {
            bi += 1;
        }
        bi
    }

    /// Adds `values` held constant on `[t0, t1)`; parts outside the window are ignored.
    pub fn add(&mut self, t0: f64, t1: f64, values: &[f64]) {
        let mut a = t0.max(self.start);
        let b = t1.min(self.end());
        while a < b {
            let bi = self.batch_of(a);
            let edge = self.batch_end(bi).min(b);
            for (s, v) in self.sums[bi].iter_mut().zip(values) {
                *s += v * (edge - a);
            }
            a = edge;
        }
    }

    /// Records that an event happened at `t`.
    pub fn mark_event(&mut self, t: f64) {
        if t >= self.start && t < self.end() {
            let bi = self.batch_of(t);
            self.events[bi] += 1;
        }
    }

    pub fn events(&self) -> &[usize] {
        &self.events
    }

    /// Per-batch time averages, `[batch][functional]`.
    pub fn batch_averages(&self) -> Vec<Vec<f64>> {
        self.sums.iter().map(|r| r.iter().map(|s| s / self.width).collect()).collect()
    }
}

/// Mean and standard error of the batch averages in `values`.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Time-weighted batch means of a piecewise-constant series given as
/// `(duration, value)` pieces.
pub fn batch_means(samples: &[(f64, f64)], n_batches: usize) -> Result<(f64, f64)> {
    let total: f64 = samples.iter().map(|s| s.0).sum();
    if samples.is_empty() || !(total > 0.0) {
        return Err(Error::EmptySeries);
    }
    if n_batches < 2 {
        return Err(Error::InsufficientBatches { min: 2, got: n_batches });
    }
    let mut acc = BatchAccumulator::new(0.0, total, n_batches, 1);
    let mut t = 0.0;
    for &(dt, v) in samples {
        acc.add(t, t + dt, &[v]);
        t += dt;
    }
    let avgs: Vec<f64> = acc.batch_averages().into_iter().map(|r| r[0]).collect();
    Ok(mean_se(&avgs))
}

/// Kolmogorov-Smirnov distance between the empirical CDFs of `a` and `b`.
pub fn ecdf_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn constant_series() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| (0.5 + (i % 3) as f64, 4.25)).collect();
        let (m, se) = batch_means(&s, 10).unwrap();
        assert!((m - 4.25).abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn alternating_series_mean_zero() {
        let s: Vec<(f64, f64)> = (0..40).map(|i| (1.0, if i % 2 == 0 { 1.0 } else { -1.0 })).collect();
        let (m, _) = batch_means(&s, 2).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn empty_series_rejected() {
        assert_eq!(batch_means(&[], 4), Err(Error::EmptySeries));
    }

    #[test]
    fn coverage_on_iid_series() {
        let mut rng = crate::rng::stream(11, 0, crate::rng::Lane::Aux);
        let mut hits = 0;
        for _ in 0..100 {
            let s: Vec<(f64, f64)> =
                (0..2000).map(|_| (1.0, if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 })).collect();
            let (m, se) = batch_means(&s, 20).unwrap();
            if (m - 0.5).abs() <= 3.0 * se {
                hits += 1;
            }
        }
        assert!(hits >= 95, "coverage {hits}/100");
    }

    #[test]
    fn ks_examples() {
        let a = [0.3, 1.2, -4.0];
        assert_eq!(ecdf_distance(&a, &a), 0.0);
        assert_eq!(ecdf_distance(&[0.0; 5], &[1.0; 7]), 1.0);
        let mut rng = crate::rng::stream(5, 0, crate::rng::Lane::Aux);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        assert!(ecdf_distance(&x, &y) < 0.03);
    }

    proptest! {
        #[test]
        fn accumulator_conserves_integral(pieces in proptest::collection::vec((0.01f64..3.0, -5.0f64..5.0), 1..60), nb in 2usize..15) {
            let total: f64 = pieces.iter().map(|p| p.0).sum();
            let integral: f64 = pieces.iter().map(|p| p.0 * p.1).sum();
            let (m, se) = batch_means(&pieces, nb).unwrap();
            prop_assert!((m * total - integral).abs() < 1e-9 * (1.0 + integral.abs()));
            prop_assert!(se >= 0.0);
        }

        #[test]
        fn ks_symmetric_and_bounded(a in proptest::collection::vec(-3.0f64..3.0, 1..40), b in proptest::collection::vec(-3.0f64..3.0, 1..40)) {
            let d = ecdf_distance(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ecdf_distance(&b, &a));
        }
    }
}
