//! Monte-Carlo null distributions from random coordinate-wise rank
//! permutations, their on-disk tables, and p-values / critical values.
//!
//! Under independence with continuous marginals every column of the rank
//! matrix is an independent uniform permutation, so the null law of the
//! statistic depends on `(n, d)` only. A table built once can be reused for
//! any data set of the same shape.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandwidth::BandwidthLadder;
use crate::error::{Error, Result};
use crate::kernel::StatisticEngine;
use crate::ranks::RankMatrix;
use crate::rng::{self, Domain};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_REPLICATES: usize = 10_000;
pub const MIN_REPLICATES: usize = 100;

const MAGIC: &[u8; 8] = b"COPDEPNT";

/// Replicate `replicate` of the permutation null: `d` independent uniform
/// permutations drawn from the counter stream `(seed, replicate)`.
pub fn null_ranks(n: usize, d: usize, seed: u64, replicate: u64) -> RankMatrix {
    let mut rng = rng::stream(seed, Domain::NullPermutation, replicate);
    let mut ranks = Vec::with_capacity(n * d);
    for _ in 0..d {
        let mut col: Vec<u32> = (1..=n as u32).collect();
        col.shuffle(&mut rng);
        ranks.extend(col);
    }
    RankMatrix::from_raw(n, d, ranks)
}

/// Null statistics across a bandwidth ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct NullTable {
    pub n: usize,
    pub d: usize,
    pub sigmas: BandwidthLadder,
    pub b: usize,
    pub seed: u64,
    /// Per bandwidth, the `b` null values in nondecreasing order.
    pub per_sigma_sorted: Vec<Vec<f64>>,
    /// `b` rows; row `r` holds every bandwidth's statistic on replicate `r`.
    pub joint_rows: Vec<Vec<f64>>,
    pub format_version: u32,
}

impl NullTable {
    fn from_rows(
        n: usize,
        d: usize,
        ladder: BandwidthLadder,
        seed: u64,
        joint_rows: Vec<Vec<f64>>,
    ) -> Self {
        let m = ladder.len();
        let per_sigma_sorted = (0..m)
            .map(|k| sorted(joint_rows.iter().map(|row| row[k]).collect()))
            .collect();
        Self {
            n,
            d,
            sigmas: ladder,
            b: joint_rows.len(),
            seed,
            per_sigma_sorted,
            joint_rows,
            format_version: FORMAT_VERSION,
        }
    }

    /// Errors unless the table was built for exactly this `(n, d, ladder)`.
    pub fn check_matches(&self, n: usize, d: usize, ladder: &BandwidthLadder) -> Result<()> {
        if self.n != n || self.d != d {
            return Err(Error::TableMismatch(format!(
                "table is for n = {}, d = {}; data has n = {n}, d = {d}",
                self.n, self.d
            )));
        }
        let same = self.sigmas.sigmas.len() == ladder.sigmas.len()
            && self
                .sigmas
                .sigmas
                .iter()
                .zip(&ladder.sigmas)
                .all(|(a, b)| a.get().to_bits() == b.get().to_bits());
        if !same {
            return Err(Error::TableMismatch(
                "bandwidth ladder differs from the table's".into(),
            ));
        }
        Ok(())
    }

    /// Sorted null values of the row-wise maximum across bandwidths.
    pub fn sorted_row_max(&self) -> Vec<f64> {
        sorted(
            self.joint_rows
                .iter()
                .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        )
    }

    /// Sorted null values of the row-wise sum across bandwidths.
    pub fn sorted_row_sum(&self) -> Vec<f64> {
        sorted(self.joint_rows.iter().map(|r| r.iter().sum()).collect())
    }

    fn sorted_for(&self, sigma_index: usize) -> Result<&[f64]> {
        self.per_sigma_sorted
            .get(sigma_index)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: sigma_index,
                len: self.per_sigma_sorted.len(),
            })
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Builds the joint null table: replicate `r` uses [`null_ranks`]`(n, d, seed, r)`
/// and evaluates every ladder bandwidth on that same rank matrix.
pub fn build_null_table(
    n: usize,
    d: usize,
    ladder: &BandwidthLadder,
    b: usize,
    seed: u64,
) -> Result<NullTable> {
    if b < MIN_REPLICATES {
        return Err(Error::DomainError(format!(
            "need at least {MIN_REPLICATES} null replicates, got {b}"
        )));
    }
    let engine = StatisticEngine::new(n, d, &ladder.sigmas)?;
    let rows = (0..b as u64)
        .into_par_iter()
        .map(|r| engine.i_hats(&null_ranks(n, d, seed, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NullTable::from_rows(n, d, ladder.clone(), seed, rows))
}

/// Sorted null sample of an arbitrary rank statistic under the same
/// permutation scheme as [`build_null_table`].
pub fn build_scalar_null<F>(n: usize, d: usize, b: usize, seed: u64, statistic: F) -> Result<Vec<f64>>
where
    F: Fn(&RankMatrix) -> Result<f64> + Sync,
{
    if b < MIN_REPLICATES {
        return Err(Error::DomainError(format!(
            "need at least {MIN_REPLICATES} null replicates, got {b}"
        )));
    }
    let values = (0..b as u64)
        .into_par_iter()
        .map(|r| statistic(&null_ranks(n, d, seed, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(sorted(values))
}

/// Monte-Carlo p-value `(1 + #{null ≥ observed}) / (b + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub p: f64,
    pub b: usize,
    /// Number of null values at least as large as the observation.
    pub exceedances: usize,
}

impl PValue {
    pub fn from_exceedances(exceedances: usize, b: usize) -> Self {
        Self {
            p: (1 + exceedances) as f64 / (b + 1) as f64,
            b,
            exceedances,
        }
    }

    /// `p ≤ alpha`, decided on the integer grid so that `α(b+1)` landing on an
    /// integer is not lost to rounding.
    pub fn rejects(&self, alpha: f64) -> bool {
        ((1 + self.exceedances) as f64) <= alpha * (self.b + 1) as f64 + 1e-9
    }
}

/// p-value of `observed` against a nondecreasing null sample.
pub fn p_value_sorted(observed: f64, null_sorted: &[f64]) -> PValue {
    let below = null_sorted.partition_point(|&x| x < observed);
    PValue::from_exceedances(null_sorted.len() - below, null_sorted.len())
}

pub fn p_value(observed: f64, table: &NullTable, sigma_index: usize) -> Result<PValue> {
    Ok(p_value_sorted(observed, table.sorted_for(sigma_index)?))
}

/// Empirical `(1-α)` quantile of a nondecreasing null sample: the order
/// statistic of rank `⌈(1-α)(b+1)⌉`, clamped to `[1, b]`.
///
/// `observed > critical_value_sorted(null, α)` holds exactly when
/// `p_value_sorted(observed, null).rejects(α)`.
pub fn critical_value_sorted(null_sorted: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha = {alpha} is outside (0, 1)")));
    }
    let b = null_sorted.len();
    if b == 0 {
        return Err(Error::DegenerateInput("empty null sample".into()));
    }
    // ⌈(1-α)(b+1)⌉ = (b+1) - ⌊α(b+1)⌋ on the integer grid
    let upper = (alpha * (b + 1) as f64 + 1e-9).floor() as usize;
    let k = (b + 1).saturating_sub(upper).clamp(1, b);
    Ok(null_sorted[k - 1])
}

pub fn critical_value(table: &NullTable, sigma_index: usize, alpha: f64) -> Result<f64> {
    critical_value_sorted(table.sorted_for(sigma_index)?, alpha)
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    n: usize,
    d: usize,
    b: usize,
    seed: u64,
    ladder: BandwidthLadder,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(flatten)]
    metadata: Metadata,
    metadata_sha256: String,
    payload_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes a table:
///
/// ```text
/// "COPDEPNT" | u32 LE header length | JSON header | b·m f64 LE, row-major
/// ```
pub fn encode_table(table: &NullTable) -> Result<Vec<u8>> {
    let metadata = Metadata {
        n: table.n,
        d: table.d,
        b: table.b,
        seed: table.seed,
        ladder: table.sigmas.clone(),
    };
    let mut payload = Vec::with_capacity(table.b * table.sigmas.len() * 8);
    for row in &table.joint_rows {
        for v in row {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format_version: table.format_version,
        metadata_sha256: sha256_hex(&serde_json::to_vec(&metadata)?),
        payload_sha256: sha256_hex(&payload),
        metadata,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_table(bytes: &[u8]) -> Result<NullTable> {
    let corrupt = |msg: &str| Error::CorruptTable(msg.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_bytes = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| corrupt("truncated header"))?;
    let raw: serde_json::Value =
        serde_json::from_slice(header_bytes).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    let version = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("header lacks format_version"))? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    if sha256_hex(&serde_json::to_vec(&header.metadata)?) != header.metadata_sha256 {
        return Err(corrupt("metadata hash mismatch"));
    }
    let Metadata { n, d, b, seed, ladder } = header.metadata;
    let m = ladder.len();
    let payload = &bytes[12 + header_len..];
    if m == 0 || payload.len() != b * m * 8 {
        return Err(corrupt(&format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            b * m * 8
        )));
    }
    if sha256_hex(payload) != header.payload_sha256 {
        return Err(corrupt("payload hash mismatch"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(corrupt("null statistics must be finite and nonnegative"));
    }
    let rows = values.chunks_exact(m).map(<[f64]>::to_vec).collect();
    Ok(NullTable::from_rows(n, d, ladder, seed, rows))
}

pub fn save_table(table: &NullTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let bytes = encode_table(table)?;
    // write-then-rename so readers never see a partial file
    let tmp = path.with_extension("npt.partial");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<NullTable> {
    decode_table(&fs::read(path)?)
}

/// `dir/n{n}_d{d}_b{b}_seed{seed}.npt`.
pub fn cache_path(dir: &Path, n: usize, d: usize, b: usize, seed: u64) -> PathBuf {
    dir.join(format!("n{n}_d{d}_b{b}_seed{seed}.npt"))
}

/// Loads the table at `path` if present (it must match exactly), otherwise
/// builds it and writes it there.
pub fn load_or_build(
    path: &Path,
    n: usize,
    d: usize,
    ladder: &BandwidthLadder,
    b: usize,
    seed: u64,
) -> Result<NullTable> {
    if path.exists() {
        let table = load_table(path)?;
        table.check_matches(n, d, ladder)?;
        if table.b != b || table.seed != seed {
            return Err(Error::TableMismatch(format!(
                "table has b = {}, seed = {}; requested b = {b}, seed = {seed}",
                table.b, table.seed
            )));
        }
        return Ok(table);
    }
    let table = build_null_table(n, d, ladder, b, seed)?;
    save_table(&table, path)?;
    Ok(table)
}
