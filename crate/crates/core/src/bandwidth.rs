//! Data-independent bandwidths from quantiles of grid distances, and the
//! halving ladder used by the multi-scale tests.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Bandwidth;
use crate::rng::{self, Domain};

/// Default number of Monte-Carlo pairs for grid-distance quantiles.
pub const DEFAULT_MC_PAIRS: usize = 200_000;

const PAIRS_PER_STREAM: usize = 1 << 16;

/// The `q`-quantile of `‖Z - Z'‖` for `Z, Z'` independent and uniform on the
/// grid `{1/n, …, 1}^d`, estimated from `mc_pairs` seeded pairs.
///
/// Depends only on its arguments, never on observed data. When `q` falls
/// inside the atom at zero (`q ≤ n^-d`), the grid spacing `1/n` is returned.
pub fn quantile_bandwidth(n: usize, d: usize, q: f64, mc_pairs: usize, seed: u64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DomainError(format!("quantile level {q} is outside (0, 1)")));
    }
    if n < 2 || d < 1 || mc_pairs == 0 {
        return Err(Error::DegenerateInput(format!(
            "need n >= 2, d >= 1 and mc_pairs >= 1, got n = {n}, d = {d}, mc_pairs = {mc_pairs}"
        )));
    }
    let mut squared = sample_squared_distances(n, d, mc_pairs, seed);
    let k = ((q * mc_pairs as f64).ceil() as usize).clamp(1, mc_pairs) - 1;
    let (_, &mut kth, _) = squared.select_nth_unstable(k);
    // coincident draws have distance 0; floor at the grid spacing so the
    // result is always a usable bandwidth
    Ok((kth.max(1) as f64).sqrt() / n as f64)
}

/// Squared grid distances in integer rank units; stream `c` produces pairs
/// `c·2¹⁶ ..` so the sample is independent of thread scheduling.
fn sample_squared_distances(n: usize, d: usize, pairs: usize, seed: u64) -> Vec<u64> {
    let chunks = pairs.div_ceil(PAIRS_PER_STREAM);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let len = PAIRS_PER_STREAM.min(pairs - c * PAIRS_PER_STREAM);
            let mut rng = rng::stream(seed, Domain::Bandwidth, c as u64);
            (0..len)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            let a = rng.random_range(0..n) as i64;
                            let b = rng.random_range(0..n) as i64;
                            ((a - b) * (a - b)) as u64
                        })
                        .sum::<u64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Bandwidths `σ_med · 2^{-i}` for `i = 0..=m`, `m = ⌈log₂(σ_med / σ_q01)⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthLadder {
    pub sigmas: Vec<Bandwidth>,
    pub sigma_median: f64,
    pub sigma_q01: f64,
    pub m: usize,
}

impl BandwidthLadder {
    pub fn from_quantiles(sigma_median: f64, sigma_q01: f64) -> Result<Self> {
        let top = Bandwidth::new(sigma_median)?;
        Bandwidth::new(sigma_q01)?;
        if sigma_q01 > sigma_median {
            return Err(Error::DomainError(format!(
                "lower quantile bandwidth {sigma_q01} exceeds the median bandwidth {sigma_median}"
            )));
        }
        // slack absorbs ratios like 0.4/0.05 = 8.000000000000002
        let m = ((sigma_median / sigma_q01).log2() - 1e-9).ceil().max(0.0) as usize;
        let sigmas = (0..=m)
            .map(|i| Bandwidth::new(top.get() / 2f64.powi(i as i32)))
            .collect::<Result<_>>()?;
        Ok(Self {
            sigmas,
            sigma_median,
            sigma_q01,
            m,
        })
    }

    /// A one-rung ladder, for single-bandwidth tests.
    pub fn single(sigma: Bandwidth) -> Self {
        Self {
            sigmas: vec![sigma],
            sigma_median: sigma.get(),
            sigma_q01: sigma.get(),
            m: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

/// Median and 1%-quantile bandwidths for `(n, d)` and the ladder between them.
pub fn build_ladder(n: usize, d: usize, mc_pairs: usize, seed: u64) -> Result<BandwidthLadder> {
    let median = quantile_bandwidth(n, d, 0.5, mc_pairs, seed)?;
    let q01 = quantile_bandwidth(n, d, 0.01, mc_pairs, seed)?;
    BandwidthLadder::from_quantiles(median, q01)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_median_matches_continuum() {
        // P(|U - U'| <= t) = 2t - t² gives the median 1 - √(1/2)
        let v = quantile_bandwidth(10_000, 1, 0.5, 1_000_000, 3).unwrap();
        assert!((v - (1.0 - 0.5f64.sqrt())).abs() < 0.003, "{v}");
    }

    #[test]
    fn quantiles_are_monotone_in_level_and_dimension() {
        let lo = quantile_bandwidth(50, 2, 0.01, 50_000, 1).unwrap();
        let hi = quantile_bandwidth(50, 2, 0.5, 50_000, 1).unwrap();
        assert!(lo < hi);
        let d8 = quantile_bandwidth(50, 8, 0.5, 50_000, 1).unwrap();
        assert!(d8 > hi);
    }

    #[test]
    fn tiny_grids_floor_at_spacing() {
        // P(Z = Z') = 1/64 > 0.01
        assert_eq!(quantile_bandwidth(8, 2, 0.01, 10_000, 0).unwrap(), 1.0 / 8.0);
    }

    #[test]
    fn rejects_bad_level() {
        for q in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(
                quantile_bandwidth(10, 2, q, 100, 0),
                Err(Error::DomainError(_))
            ));
        }
    }

    #[test]
    fn ladder_arithmetic() {
        let l = BandwidthLadder::from_quantiles(0.4, 0.06).unwrap();
        assert_eq!(l.m, 3);
        let s: Vec<f64> = l.sigmas.iter().map(|s| s.get()).collect();
        assert_eq!(s, vec![0.4, 0.2, 0.1, 0.05]);

        let flat = BandwidthLadder::from_quantiles(0.3, 0.3).unwrap();
        assert_eq!(flat.m, 0);
        assert_eq!(flat.sigmas.len(), 1);

        let exact = BandwidthLadder::from_quantiles(0.4, 0.05).unwrap();
        assert_eq!(exact.m, 3);
    }

    #[test]
    fn ladder_is_deterministic_and_bracketed() {
        let a = build_ladder(25, 2, 20_000, 42).unwrap();
        let b = build_ladder(25, 2, 20_000, 42).unwrap();
        assert_eq!(a, b);
        let last = a.sigmas.last().unwrap().get();
        assert!(last <= 2.0 * a.sigma_q01 && last > a.sigma_q01 / 2.0);
        for w in a.sigmas.windows(2) {
            assert_eq!(w[0].get(), 2.0 * w[1].get());
        }
        assert_eq!(a.sigmas[0].get(), a.sigma_median);
    }

    #[test]
    fn sampling_is_thread_count_independent() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| quantile_bandwidth(30, 3, 0.2, 300_000, 5).unwrap());
        let b = four.install(|| quantile_bandwidth(30, 3, 0.2, 300_000, 5).unwrap());
        assert_eq!(a, b);
    }
}
