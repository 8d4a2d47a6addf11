//! Multi-scale aggregation: `T_Max`, `T_Sum` and the FDR step-up rule.

use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthLadder;
use crate::error::{Error, Result};
use crate::kernel::{Bandwidth, StatisticEngine};
use crate::nulldist::{self, NullTable, PValue};
use crate::ranks::RankMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: Bandwidth,
    pub statistic: f64,
    pub p_value: PValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub ladder: BandwidthLadder,
    /// In ladder order, largest bandwidth first.
    pub per_sigma: Vec<SigmaResult>,
    pub t_max: f64,
    pub t_sum: f64,
    pub p_t_max: PValue,
    pub p_t_sum: PValue,
    pub fdr_reject: bool,
    pub t_max_reject: bool,
    pub t_sum_reject: bool,
    pub alpha: f64,
}

/// Step-up rule: reject iff some sorted `p₍ᵢ₎ < i·α/m`.
///
/// Input order is irrelevant.
pub fn fdr_step_up(p_values: &[f64], alpha: f64) -> bool {
    let mut p = p_values.to_vec();
    p.sort_by(f64::total_cmp);
    let m = p.len() as f64;
    p.iter()
        .enumerate()
        .any(|(i, &pi)| pi < (i + 1) as f64 * alpha / m)
}

/// Runs every test on `y` against `table`.
pub fn aggregate(
    y: &RankMatrix,
    ladder: &BandwidthLadder,
    table: &NullTable,
    alpha: f64,
) -> Result<TestReport> {
    let engine = StatisticEngine::new(y.n(), y.d(), &ladder.sigmas)?;
    aggregate_with(&engine, y, ladder, table, alpha)
}

/// As [`aggregate`], reusing a prepared engine for `ladder`.
pub fn aggregate_with(
    engine: &StatisticEngine,
    y: &RankMatrix,
    ladder: &BandwidthLadder,
    table: &NullTable,
    alpha: f64,
) -> Result<TestReport> {
    let nulls = AggregateNulls::new(table);
    aggregate_prepared(engine, y, ladder, table, &nulls, alpha)
}

/// Sorted row-wise max / sum of a table, computed once per table.
#[derive(Debug, Clone)]
pub struct AggregateNulls {
    pub row_max: Vec<f64>,
    pub row_sum: Vec<f64>,
}

impl AggregateNulls {
    pub fn new(table: &NullTable) -> Self {
        Self {
            row_max: table.sorted_row_max(),
            row_sum: table.sorted_row_sum(),
        }
    }
}

pub fn aggregate_prepared(
    engine: &StatisticEngine,
    y: &RankMatrix,
    ladder: &BandwidthLadder,
    table: &NullTable,
    nulls: &AggregateNulls,
    alpha: f64,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha = {alpha} is outside (0, 1)")));
    }
    table.check_matches(y.n(), y.d(), ladder)?;
    let values = engine.evaluate(y)?;
    let per_sigma: Vec<SigmaResult> = values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            Ok(SigmaResult {
                sigma: v.sigma,
                statistic: v.i_hat,
                p_value: nulldist::p_value(v.i_hat, table, k)?,
            })
        })
        .collect::<Result<_>>()?;

    let t_max = per_sigma
        .iter()
        .map(|r| r.statistic)
        .fold(f64::NEG_INFINITY, f64::max);
    let t_sum: f64 = per_sigma.iter().map(|r| r.statistic).sum();
    let p_t_max = nulldist::p_value_sorted(t_max, &nulls.row_max);
    let p_t_sum = nulldist::p_value_sorted(t_sum, &nulls.row_sum);
    let ps: Vec<f64> = per_sigma.iter().map(|r| r.p_value.p).collect();

    Ok(TestReport {
        ladder: ladder.clone(),
        fdr_reject: fdr_step_up(&ps, alpha),
        t_max_reject: p_t_max.rejects(alpha),
        t_sum_reject: p_t_sum.rejects(alpha),
        per_sigma,
        t_max,
        t_sum,
        p_t_max,
        p_t_sum,
        alpha,
    })
}

/// The per-bandwidth p-value curve, largest bandwidth first.
pub fn pvalue_profile(report: &TestReport) -> Vec<(f64, f64)> {
    let mut rows: Vec<(f64, f64)> = report
        .per_sigma
        .iter()
        .map(|r| (r.sigma.get(), r.p_value.p))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    rows
}
