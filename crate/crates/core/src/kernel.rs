//! Gaussian-kernel copula dependence statistic.
//!
//! For normalized ranks `Y⁽¹⁾…Y⁽ⁿ⁾` the statistic is the ratio of two kernel
//! mean discrepancies, `γ(Cₙ, Πₙ) / γ(Mₙ, Πₙ)`, where `Cₙ` is the empirical
//! copula, `Mₙ` the empirical maximum copula and `Πₙ` the grid uniform
//! copula. Both squared discrepancies expand into five sums:
//!
//! ```text
//! s₁ = (2/n²) Σ_{i<k} k(Y⁽ⁱ⁾, Y⁽ᵏ⁾) + 1/n
//! s₂ = n^{-(d+1)} Σᵢ Πⱼ Σₗ k¹(Yⱼ⁽ⁱ⁾, l/n)
//! v₁ = (2/n²) Σ_{k=1}^{n-1} (n-k) exp(-d k² / (2n²σ²)) + 1/n
//! v₂ = n^{-(d+1)} Σᵢ [Σₗ exp(-(i-l)² / (2n²σ²))]^d
//! v₃ = [(2/n²) Σ_{k=1}^{n-1} (n-k) exp(-k² / (2n²σ²)) + 1/n]^d
//! Î² = (s₁ - 2s₂ + v₃) / (v₁ - 2v₂ + v₃)
//! ```
//!
//! Every kernel argument is a difference of two grid points, so the kernel
//! reduces to a product of lookups `e[δ] = exp(-δ² / (2n²σ²))` indexed by
//! integer rank differences. Only `s₁` costs `O(d n²)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::ranks::RankMatrix;

/// Gaussian-kernel bandwidth in normalized-rank units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Self(sigma))
        } else {
            Err(Error::DomainError(format!(
                "bandwidth must be positive and finite, got {sigma}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;

    fn try_from(sigma: f64) -> Result<Self> {
        Self::new(sigma)
    }
}

impl From<Bandwidth> for f64 {
    fn from(b: Bandwidth) -> f64 {
        b.0
    }
}

/// One evaluation of the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    pub i_hat: f64,
    /// `s₁ - 2s₂ + v₃`, i.e. `γ²(Cₙ, Πₙ)`.
    pub numerator_sq: f64,
    /// `v₁ - 2v₂ + v₃`, i.e. `γ²(Mₙ, Πₙ)`.
    pub denominator_sq: f64,
    pub sigma: Bandwidth,
}

/// The data-free terms `v₁, v₂, v₃` for one `(n, d, σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTerms {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl ReferenceTerms {
    /// `γ²(Mₙ, Πₙ)`.
    pub fn denominator_sq(&self) -> f64 {
        self.v1 - 2.0 * self.v2 + self.v3
    }
}

/// Per-bandwidth lookup tables on the rank grid.
#[derive(Debug, Clone)]
struct GridKernel {
    sigma: Bandwidth,
    /// `exp(-δ² / (2n²σ²))` for `δ = 0..n`.
    diff: Vec<f64>,
    /// `Σₗ diff[|r - l|]` for rank `r = 1..=n`, stored at `r - 1`.
    row_sum: Vec<f64>,
    reference: ReferenceTerms,
}

impl GridKernel {
    fn new(n: usize, d: usize, sigma: Bandwidth) -> Self {
        let nf = n as f64;
        let scale = 1.0 / (2.0 * nf * nf * sigma.0 * sigma.0);
        let diff: Vec<f64> = (0..n).map(|k| (-((k * k) as f64) * scale).exp()).collect();

        // row sums are symmetric in r <-> n+1-r; compute one half and mirror
        // so the antitone reflection leaves s₂ bit-identical
        let mut row_sum = vec![0.0; n];
        for r in 0..n.div_ceil(2) {
            let s: f64 = (0..n).map(|l| diff[r.abs_diff(l)]).sum();
            row_sum[r] = s;
            row_sum[n - 1 - r] = s;
        }

        let df = d as f64;
        let v1 = 2.0 / (nf * nf)
            * (1..n)
                .map(|k| (n - k) as f64 * (-df * (k * k) as f64 * scale).exp())
                .sum::<f64>()
            + 1.0 / nf;
        let v2 = row_sum.iter().map(|g| g.powi(d as i32)).sum::<f64>() / nf.powi(d as i32 + 1);
        let one_dim =
            2.0 / (nf * nf) * (1..n).map(|k| (n - k) as f64 * diff[k]).sum::<f64>() + 1.0 / nf;
        let v3 = one_dim.powi(d as i32);

        Self {
            sigma,
            diff,
            row_sum,
            reference: ReferenceTerms { v1, v2, v3 },
        }
    }
}

/// The data-free terms `v₁, v₂, v₃`.
pub fn reference_terms(n: usize, d: usize, sigma: Bandwidth) -> ReferenceTerms {
    GridKernel::new(n, d, sigma).reference
}

const BLOCK_ROWS: usize = 32;
const PARALLEL_MIN_N: usize = 512;

/// Evaluates the statistic for fixed `(n, d)` over a list of bandwidths.
///
/// All data-independent work is done once at construction, so one engine can
/// be reused across many rank matrices (null tables, power studies).
#[derive(Debug, Clone)]
pub struct StatisticEngine {
    n: usize,
    d: usize,
    kernels: Vec<GridKernel>,
}

impl StatisticEngine {
    pub fn new(n: usize, d: usize, sigmas: &[Bandwidth]) -> Result<Self> {
        if n < 2 || d < 1 {
            return Err(Error::DegenerateInput(format!(
                "need n >= 2 and d >= 1, got n = {n}, d = {d}"
            )));
        }
        let kernels: Vec<GridKernel> = sigmas.iter().map(|&s| GridKernel::new(n, d, s)).collect();
        for k in &kernels {
            let den = k.reference.denominator_sq();
            if !(den > 0.0) {
                return Err(Error::NumericalUnderflow {
                    sigma: k.sigma.0,
                    n,
                    denominator: den,
                });
            }
        }
        Ok(Self { n, d, kernels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sigmas(&self) -> Vec<Bandwidth> {
        self.kernels.iter().map(|k| k.sigma).collect()
    }

    pub fn reference(&self, index: usize) -> ReferenceTerms {
        self.kernels[index].reference
    }

    /// Statistic values for every configured bandwidth, in order.
    pub fn evaluate(&self, y: &RankMatrix) -> Result<Vec<StatisticValue>> {
        if y.n() != self.n || y.d() != self.d {
            return Err(Error::DegenerateInput(format!(
                "engine built for n = {}, d = {} but ranks are {} x {}",
                self.n,
                self.d,
                y.n(),
                y.d()
            )));
        }
        let (n, d) = (self.n, self.d);
        let nf = n as f64;

        // row-major zero-based ranks for cache-friendly pair loops
        let mut rows = vec![0u32; n * d];
        for j in 0..d {
            for (i, &r) in y.column_ranks(j).iter().enumerate() {
                rows[i * d + j] = r - 1;
            }
        }

        let pair_sums = self.pair_sums(&rows);
        let norm = nf.powi(d as i32 + 1);

        Ok(self
            .kernels
            .iter()
            .zip(pair_sums)
            .map(|(k, pairs)| {
                let s1 = 2.0 / (nf * nf) * pairs + 1.0 / nf;
                let s2 = rows
                    .chunks_exact(d)
                    .map(|row| row.iter().map(|&r| k.row_sum[r as usize]).product::<f64>())
                    .sum::<f64>()
                    / norm;
                let v3 = k.reference.v3;
                let denominator_sq = k.reference.denominator_sq();
                // γ² ≥ 0; only rounding can push it below
                let numerator_sq = (s1 - 2.0 * s2 + v3).max(0.0);
                StatisticValue {
                    i_hat: (numerator_sq / denominator_sq).sqrt(),
                    numerator_sq,
                    denominator_sq,
                    sigma: k.sigma,
                }
            })
            .collect())
    }

    /// Just the `Î` values.
    pub fn i_hats(&self, y: &RankMatrix) -> Result<Vec<f64>> {
        Ok(self.evaluate(y)?.into_iter().map(|v| v.i_hat).collect())
    }

    /// `Σ_{i<k} k(Y⁽ⁱ⁾, Y⁽ᵏ⁾)` per bandwidth. Rows are split into fixed blocks
    /// whose partial sums are added in block order, so the result does not
    /// depend on the thread count.
    fn pair_sums(&self, rows: &[u32]) -> Vec<f64> {
        let (n, d) = (self.n, self.d);
        let m = self.kernels.len();
        let block = |start: usize| -> Vec<f64> {
            let mut acc = vec![0.0; m];
            for i in start..(start + BLOCK_ROWS).min(n) {
                let a = &rows[i * d..(i + 1) * d];
                for b in rows[(i + 1) * d..].chunks_exact(d) {
                    for (slot, k) in acc.iter_mut().zip(&self.kernels) {
                        let mut prod = 1.0;
                        for (&p, &q) in a.iter().zip(b) {
                            prod *= k.diff[p.abs_diff(q) as usize];
                        }
                        *slot += prod;
                    }
                }
            }
            acc
        };
        let starts: Vec<usize> = (0..n).step_by(BLOCK_ROWS).collect();
        let partials: Vec<Vec<f64>> = if n >= PARALLEL_MIN_N {
            starts.par_iter().map(|&s| block(s)).collect()
        } else {
            starts.iter().map(|&s| block(s)).collect()
        };
        let mut total = vec![0.0; m];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }
}

/// `Î_{σ,n}` for one bandwidth.
pub fn statistic(y: &RankMatrix, sigma: Bandwidth) -> Result<StatisticValue> {
    let engine = StatisticEngine::new(y.n(), y.d(), &[sigma])?;
    Ok(engine.evaluate(y)?[0])
}

/// A finitely supported probability measure on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedAtoms {
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Self { points, weights }
    }

    /// `Cₙ`: mass `1/n` on each normalized rank vector.
    pub fn empirical_copula(y: &RankMatrix) -> Self {
        Self::uniform(y.points())
    }

    /// `Mₙ`: mass `1/n` on each diagonal grid point `(i/n, …, i/n)`.
    pub fn max_copula(n: usize, d: usize) -> Self {
        Self::uniform((1..=n).map(|i| vec![i as f64 / n as f64; d]).collect())
    }

    /// `Πₙ`: mass `n^-d` on each of the `n^d` grid points.
    pub fn uniform_copula(n: usize, d: usize) -> Result<Self> {
        let count = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
        if count > 10_000_000 {
            return Err(Error::InstanceTooLarge {
                evaluations: count,
                limit: 10_000_000,
            });
        }
        let mut points = Vec::with_capacity(count as usize);
        let mut idx = vec![1usize; d];
        loop {
            points.push(idx.iter().map(|&i| i as f64 / n as f64).collect());
            let mut j = 0;
            while j < d && idx[j] == n {
                idx[j] = 1;
                j += 1;
            }
            if j == d {
                break;
            }
            idx[j] += 1;
        }
        Ok(Self::uniform(points))
    }

    fn validate(&self) -> Result<usize> {
        if self.points.len() != self.weights.len() || self.points.is_empty() {
            return Err(Error::DomainError("atoms and weights differ in length or are empty".into()));
        }
        let dim = self.points[0].len();
        if self.points.iter().any(|p| p.len() != dim) {
            return Err(Error::DomainError("atoms have mixed dimensions".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::DomainError("negative weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::DomainError(format!("weights sum to {total}, not 1")));
        }
        Ok(dim)
    }
}

/// Upper bound on kernel evaluations for [`brute_force_gamma`].
pub const BRUTE_FORCE_LIMIT: u128 = 20_000_000;

fn gauss(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

fn mean_kernel(p: &WeightedAtoms, q: &WeightedAtoms, sigma: f64) -> f64 {
    p.points
        .iter()
        .zip(&p.weights)
        .map(|(a, wa)| {
            wa * q
                .points
                .iter()
                .zip(&q.weights)
                .map(|(b, wb)| wb * gauss(a, b, sigma))
                .sum::<f64>()
        })
        .sum()
}

/// `γ_k(P, Q)` by exhaustive expectation over all atom pairs.
pub fn brute_force_gamma(p: &WeightedAtoms, q: &WeightedAtoms, sigma: Bandwidth) -> Result<f64> {
    let dp = p.validate()?;
    let dq = q.validate()?;
    if dp != dq {
        return Err(Error::WrongDimension {
            expected: dp,
            actual: dq,
        });
    }
    let (lp, lq) = (p.points.len() as u128, q.points.len() as u128);
    let evaluations = lp * lp + lq * lq + lp * lq;
    if evaluations > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            evaluations,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let s = sigma.0;
    let g2 = mean_kernel(p, p, s) + mean_kernel(q, q, s) - 2.0 * mean_kernel(p, q, s);
    Ok(g2.max(0.0).sqrt())
}

/// `Î` for `d = 2` through doubly centered one-dimensional Gram matrices.
///
/// With `Vₖ = H Kₖ H` the centered Gram matrix of column `k`,
/// `Σ V₁V₂ / √(Σ V₁² Σ V₂²)` equals `Î²`; the square root is returned.
pub fn gram_oracle_d2(y: &RankMatrix, sigma: Bandwidth) -> Result<f64> {
    if y.d() != 2 {
        return Err(Error::WrongDimension {
            expected: 2,
            actual: y.d(),
        });
    }
    let n = y.n();
    let s = sigma.0;
    let centered = |col: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|i| y.y(i, col)).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = (-(v[i] - v[j]).powi(2) / (2.0 * s * s)).exp();
            }
        }
        let row: Vec<f64> = (0..n).map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
        let grand = row.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                // K is symmetric, so column means equal row means
                k[i * n + j] += grand - row[i] - row[j];
            }
        }
        k
    };
    let v1 = centered(0);
    let v2 = centered(1);
    let cross: f64 = v1.iter().zip(&v2).map(|(a, b)| a * b).sum();
    let n1: f64 = v1.iter().map(|a| a * a).sum();
    let n2: f64 = v2.iter().map(|a| a * a).sum();
    Ok((cross / (n1 * n2).sqrt()).max(0.0).sqrt())
}

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `κ(σ) = ∫₀¹∫₀¹ exp(-(u-v)²/(2σ²)) du dv`
/// `     = √(2π)σ[2Φ(1/σ) - 1] - 2σ²[1 - exp(-1/(2σ²))]`.
pub fn kappa(sigma: Bandwidth) -> f64 {
    let s = sigma.0;
    // 2Φ(x) - 1 = erf(x/√2), evaluated directly to avoid 1 - erfc cancellation
    let centered = libm::erf(1.0 / (s * std::f64::consts::SQRT_2));
    (2.0 * std::f64::consts::PI).sqrt() * s * centered + 2.0 * s * s * (-1.0 / (2.0 * s * s)).exp_m1()
}

/// `λ(x, σ) = ∫₀¹ exp(-(x-v)²/(2σ²)) dv = √(2π)σ[Φ(x/σ) + Φ((1-x)/σ) - 1]`.
pub fn lambda_fn(x: f64, sigma: Bandwidth) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::DomainError(format!("x = {x} is outside [0, 1]")));
    }
    Ok(lambda_unchecked(x, sigma.0))
}

fn lambda_unchecked(x: f64, s: f64) -> f64 {
    let r = s * std::f64::consts::SQRT_2;
    // Φ(a) + Φ(b) - 1 = (erf(a/√2) + erf(b/√2)) / 2
    (2.0 * std::f64::consts::PI).sqrt() * s * 0.5 * (libm::erf(x / r) + libm::erf((1.0 - x) / r))
}

/// `∫₀¹ λ(u, σ)^d du` by order-doubling Gauss–Legendre.
pub fn lambda_power_integral(sigma: Bandwidth, d: usize) -> f64 {
    let s = sigma.0;
    quadrature::integrate_unit_converged(|u| lambda_unchecked(u, s).powi(d as i32), 1e-13, 4096)
}

/// `C_{σ,d} = γ²(M, Π) = κ(σ/√d) + κ(σ)^d - 2∫₀¹ λ(u,σ)^d du`.
pub fn c_sigma_d(sigma: Bandwidth, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::DomainError("d must be at least 1".into()));
    }
    let diag = Bandwidth::new(sigma.0 / (d as f64).sqrt())?;
    Ok(kappa(diag) + kappa(sigma).powi(d as i32) - 2.0 * lambda_power_integral(sigma, d))
}

/// Average squared Pearson correlation of the rank columns over all pairs.
///
/// This is the empirical analogue of the large-bandwidth limit of `Î²`.
pub fn spearman_limit(y: &RankMatrix) -> Result<f64> {
    let (n, d) = (y.n(), y.d());
    if d < 2 {
        return Err(Error::DegenerateInput("need at least two columns".into()));
    }
    // exact integer moments: Σr = n(n+1)/2, n·Var = n(n²-1)/12 for every column
    let n128 = n as i128;
    let mean_term = n128 * (n128 + 1) * (n128 + 1); // 4 n ((n+1)/2)²
    let var_term = n128 * (n128 * n128 - 1) / 3; // 4 n Var
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..d {
        for b in (a + 1)..d {
            let cross: i128 = y
                .column_ranks(a)
                .iter()
                .zip(y.column_ranks(b))
                .map(|(&p, &q)| p as i128 * q as i128)
                .sum();
            let corr = (4 * cross - mean_term) as f64 / var_term as f64;
            total += corr * corr;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}
