//! Seeded, splittable random streams.
//!
//! Backed by ChaCha8 (`rand_chacha`, version pinned in `Cargo.toml`). The
//! 64-bit seed is expanded into the ChaCha key and `stream_id` selects the
//! ChaCha stream, so two ids under one seed never overlap.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "uniform range [{lo}, {hi}) is empty or non-finite"
            )));
        }
        loop {
            let u: f64 = self.inner.random();
            let v = lo + (hi - lo) * u;
            // Rounding can land exactly on `hi` for wide ranges.
            if v < hi {
                return Ok(v);
            }
        }
    }

    /// Unit-interval draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "normal(mean={mean}, sd={sd}) needs finite mean and sd >= 0"
            )));
        }
        let z: f64 = StandardNormal.sample(&mut self.inner);
        Ok(mean + sd * z)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Derives an independent child stream from the next draw of this one.
    pub fn split(&mut self) -> RngStream {
        RngStream::new(self.inner.next_u64(), self.stream_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_ten(seed: u64, id: u64) -> Vec<f64> {
        let mut s = RngStream::new(seed, id);
        (0..10).map(|_| s.uniform(0.0, 1.0).unwrap()).collect()
    }

    #[test]
    fn uniform_in_range() {
        let mut s = RngStream::new(1, 0);
        let v = s.uniform(0.0, 1.0).unwrap();
        assert!((0.0..1.0).contains(&v));
        for _ in 0..10_000 {
            let v = s.uniform(-2.0, 5.0).unwrap();
            assert!((-2.0..5.0).contains(&v));
        }
    }

    #[test]
    fn same_seed_and_stream_reproduce() {
        assert_eq!(first_ten(1, 0), first_ten(1, 0));
    }

    #[test]
    fn distinct_streams_differ() {
        assert_ne!(first_ten(1, 0), first_ten(1, 1));
        assert_ne!(first_ten(1, 0), first_ten(2, 0));
    }

    #[test]
    fn invalid_uniform_range() {
        let mut s = RngStream::new(1, 0);
        assert!(s.uniform(1.0, 1.0).is_err());
        assert!(s.uniform(2.0, 1.0).is_err());
        assert!(s.uniform(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn degenerate_normal_returns_mean() {
        let mut s = RngStream::new(3, 0);
        for _ in 0..100 {
            assert_eq!(s.normal(3.0, 0.0).unwrap(), 3.0);
        }
        assert!(s.normal(0.0, -1.0).is_err());
    }

    #[test]
    fn normal_moments() {
        // sd/sqrt(n) ~ 0.003 for n = 1e5, so +-0.02 is > 6 standard errors.
        let mut s = RngStream::new(11, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.normal(0.0, 1.0).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "sd {}", var.sqrt());
    }

    #[test]
    fn normal_is_deterministic() {
        let mut a = RngStream::new(5, 2);
        let mut b = RngStream::new(5, 2);
        for _ in 0..20 {
            assert_eq!(
                a.normal(0.0, 1.0).unwrap().to_bits(),
                b.normal(0.0, 1.0).unwrap().to_bits()
            );
        }
    }
}
