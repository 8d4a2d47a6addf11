//! Size and power estimation by repeated simulation or by subsampling a
//! real data set.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{self, BandwidthLadder, DEFAULT_MC_PAIRS};
use crate::csv_io;
use crate::datagen::{self, GeneratorSpec};
use crate::error::{Error, Result};
use crate::kernel::{self, Bandwidth, StatisticEngine};
use crate::multiscale::{self, AggregateNulls};
use crate::nulldist::{self, NullTable};
use crate::ranks::{self, DataMatrix, RankMatrix, TiePolicy};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Fresh draws from a generator; the spec's `seed` is replaced by a
    /// per-replicate seed derived from the master seed.
    Generator(GeneratorSpec),
    /// Uniform subsamples of `k` rows, without replacement, from a CSV file.
    CsvSubsample {
        path: PathBuf,
        k: usize,
        #[serde(default)]
        drop_columns: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Single bandwidth at the `q`-quantile of null grid distances.
    PerSigma { q: f64 },
    TMax,
    TSum,
    Fdr,
    /// Permutation test on the average squared rank correlation.
    SpearmanAvgBaseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PerSigma { q } => write!(f, "per_sigma(q={q})"),
            Self::TMax => write!(f, "t_max"),
            Self::TSum => write!(f, "t_sum"),
            Self::Fdr => write!(f, "fdr"),
            Self::SpearmanAvgBaseline => write!(f, "spearman_avg_baseline"),
        }
    }
}

/// Tie handling for experiment data; random tie-breaking is reseeded per
/// replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    #[default]
    Error,
    Random,
}

fn default_mc_pairs() -> usize {
    DEFAULT_MC_PAIRS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub data_source: DataSource,
    pub n_reps: usize,
    pub alpha: f64,
    pub b_null: usize,
    pub master_seed: u64,
    pub method_set: Vec<Method>,
    #[serde(default)]
    pub ties: TieMode,
    #[serde(default = "default_mc_pairs")]
    pub mc_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodPower {
    pub method: String,
    pub rejections: usize,
    pub power: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RuntimeStats {
    pub calibration_secs: f64,
    pub replicates_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub methods: Vec<MethodPower>,
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub b_null: usize,
    /// Wall-clock timings; excluded from serialized output to keep it reproducible.
    #[serde(skip)]
    pub runtime: RuntimeStats,
}

impl PowerResult {
    pub fn power(&self, method: &Method) -> Option<f64> {
        let label = method.to_string();
        self.methods.iter().find(|m| m.method == label).map(|m| m.power)
    }

    /// `method,power,ci_lo,ci_hi,n,reps,seed` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,power,ci_lo,ci_hi,n,reps,seed\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m.method, m.power, m.ci_lo, m.ci_hi, self.n, self.reps, self.seed
            ));
        }
        out
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Null calibration for the spearman baseline.
pub fn spearman_baseline_null(n: usize, d: usize, b: usize, seed: u64) -> Result<Vec<f64>> {
    nulldist::build_scalar_null(n, d, b, seed, kernel::spearman_limit)
}

/// Level-`alpha` permutation test on the average squared rank correlation.
pub fn spearman_avg_baseline(y: &RankMatrix, null_sorted: &[f64], alpha: f64) -> Result<bool> {
    let stat = kernel::spearman_limit(y)?;
    Ok(nulldist::p_value_sorted(stat, null_sorted).rejects(alpha))
}

enum Calibrated {
    Ladder {
        ladder: BandwidthLadder,
        engine: StatisticEngine,
        table: NullTable,
        nulls: AggregateNulls,
    },
    Single {
        engine: StatisticEngine,
        null_sorted: Vec<f64>,
    },
    Spearman {
        null_sorted: Vec<f64>,
    },
}

struct Source {
    n: usize,
    d: usize,
    pool: Option<DataMatrix>,
}

fn prepare_source(spec: &ExperimentSpec) -> Result<Source> {
    match &spec.data_source {
        DataSource::Generator(g) => {
            if g.n < 2 {
                return Err(Error::InvalidParam(format!("need n >= 2, got {}", g.n)));
            }
            Ok(Source {
                n: g.n,
                d: g.generator.dimension(),
                pool: None,
            })
        }
        DataSource::CsvSubsample { path, k, drop_columns } => {
            let data = csv_io::read_matrix(path)?.data.drop_columns(drop_columns)?;
            if *k > data.n() {
                return Err(Error::CsvTooSmall { k: *k, rows: data.n() });
            }
            if *k < 2 {
                return Err(Error::DegenerateInput(format!("subsample size {k} < 2")));
            }
            Ok(Source {
                n: *k,
                d: data.d(),
                pool: Some(data),
            })
        }
    }
}

fn replicate_data(spec: &ExperimentSpec, source: &Source, r: u64) -> Result<DataMatrix> {
    let seed = rng::derive_seed(spec.master_seed, Domain::Replicate, r);
    match (&spec.data_source, &source.pool) {
        (DataSource::Generator(g), _) => datagen::generate(&GeneratorSpec { seed, ..g.clone() }),
        (DataSource::CsvSubsample { .. }, Some(pool)) => {
            let mut rng = rng::stream(spec.master_seed, Domain::Subsample, r);
            let rows = index::sample(&mut rng, pool.n(), source.n).into_vec();
            pool.select_rows(&rows)
        }
        _ => unreachable!("csv source always carries its pool"),
    }
}

fn calibrate(spec: &ExperimentSpec, n: usize, d: usize) -> Result<Vec<Calibrated>> {
    let seed = spec.master_seed;
    let needs_ladder = spec
        .method_set
        .iter()
        .any(|m| matches!(m, Method::TMax | Method::TSum | Method::Fdr));
    let mut out = Vec::new();
    if needs_ladder {
        let ladder = bandwidth::build_ladder(n, d, spec.mc_pairs, seed)?;
        let table = nulldist::build_null_table(n, d, &ladder, spec.b_null, seed)?;
        out.push(Calibrated::Ladder {
            engine: StatisticEngine::new(n, d, &ladder.sigmas)?,
            nulls: AggregateNulls::new(&table),
            ladder,
            table,
        });
    }
    for m in &spec.method_set {
        match *m {
            Method::PerSigma { q } => {
                let sigma = Bandwidth::new(bandwidth::quantile_bandwidth(n, d, q, spec.mc_pairs, seed)?)?;
                let table = nulldist::build_null_table(n, d, &BandwidthLadder::single(sigma), spec.b_null, seed)?;
                out.push(Calibrated::Single {
                    engine: StatisticEngine::new(n, d, &[sigma])?,
                    null_sorted: table.per_sigma_sorted.into_iter().next().unwrap_or_default(),
                });
            }
            Method::SpearmanAvgBaseline => out.push(Calibrated::Spearman {
                null_sorted: spearman_baseline_null(n, d, spec.b_null, seed)?,
            }),
            _ => {}
        }
    }
    Ok(out)
}

fn decisions(spec: &ExperimentSpec, calibrated: &[Calibrated], y: &RankMatrix) -> Result<Vec<bool>> {
    let alpha = spec.alpha;
    let report = match calibrated.first() {
        Some(Calibrated::Ladder { ladder, engine, table, nulls }) => Some(multiscale::aggregate_prepared(
            engine, y, ladder, table, nulls, alpha,
        )?),
        _ => None,
    };
    let mut singles = calibrated.iter().filter(|c| !matches!(c, Calibrated::Ladder { .. }));
    spec.method_set
        .iter()
        .map(|m| {
            Ok(match m {
                Method::TMax => report.as_ref().is_some_and(|r| r.t_max_reject),
                Method::TSum => report.as_ref().is_some_and(|r| r.t_sum_reject),
                Method::Fdr => report.as_ref().is_some_and(|r| r.fdr_reject),
                Method::PerSigma { .. } => match singles.next() {
                    Some(Calibrated::Single { engine, null_sorted }) => {
                        let stat = engine.i_hats(y)?[0];
                        nulldist::p_value_sorted(stat, null_sorted).rejects(alpha)
                    }
                    _ => unreachable!("calibration follows method order"),
                },
                Method::SpearmanAvgBaseline => match singles.next() {
                    Some(Calibrated::Spearman { null_sorted }) => {
                        spearman_avg_baseline(y, null_sorted, alpha)?
                    }
                    _ => unreachable!("calibration follows method order"),
                },
            })
        })
        .collect()
}

/// Runs `n_reps` replicates and tallies each method's rejections.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<PowerResult> {
    if spec.n_reps == 0 {
        return Err(Error::DomainError("n_reps must be at least 1".into()));
    }
    if !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha = {} is outside (0, 1)", spec.alpha)));
    }
    if spec.method_set.is_empty() {
        return Err(Error::DomainError("method_set is empty".into()));
    }
    let start = Instant::now();
    let source = prepare_source(spec)?;
    let calibrated = calibrate(spec, source.n, source.d)?;
    let calibration_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let per_rep: Vec<Vec<bool>> = (0..spec.n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let data = replicate_data(spec, &source, r)?;
            let ties = match spec.ties {
                TieMode::Error => TiePolicy::Error,
                TieMode::Random => TiePolicy::Random {
                    seed: rng::derive_seed(spec.master_seed, Domain::TieBreak, r),
                },
            };
            let y = ranks::normalized_ranks(&data, ties)?;
            decisions(spec, &calibrated, &y)
        })
        .collect::<Result<_>>()?;
    let replicates_secs = start.elapsed().as_secs_f64();

    let methods = spec
        .method_set
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let rejections = per_rep.iter().filter(|row| row[k]).count();
            let (ci_lo, ci_hi) = wilson_interval(rejections, spec.n_reps);
            MethodPower {
                method: m.to_string(),
                rejections,
                power: rejections as f64 / spec.n_reps as f64,
                ci_lo,
                ci_hi,
            }
        })
        .collect();

    Ok(PowerResult {
        methods,
        n: source.n,
        d: source.d,
        reps: spec.n_reps,
        seed: spec.master_seed,
        alpha: spec.alpha,
        b_null: spec.b_null,
        runtime: RuntimeStats {
            calibration_secs,
            replicates_secs,
        },
    })
}
