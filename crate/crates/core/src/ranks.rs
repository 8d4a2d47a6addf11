//! Raw observations and their coordinate-wise normalized ranks.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// An `n x d` table of finite observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 2 {
            return Err(Error::DegenerateInput(format!(
                "need n >= 2 and d >= 2, got n = {n}, d = {d}"
            )));
        }
        if values.len() != n * d {
            return Err(Error::DegenerateInput(format!(
                "expected {} values for a {n} x {d} matrix, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                column: pos % d,
            });
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::DegenerateInput(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DegenerateInput("columns differ in length".into()));
        }
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            values.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(n, d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, row: usize, column: usize) -> f64 {
        self.values[row * self.d + column]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.d..(row + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, column: usize) -> Vec<f64> {
        self.rows().map(|r| r[column]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy keeping only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            if r >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: self.n,
                });
            }
            values.extend_from_slice(self.row(r));
        }
        Self::new(rows.len(), self.d, values)
    }

    /// Copy with the listed columns removed.
    pub fn drop_columns(&self, drop: &[usize]) -> Result<Self> {
        if let Some(&bad) = drop.iter().find(|&&c| c >= self.d) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.d,
            });
        }
        let keep: Vec<usize> = (0..self.d).filter(|c| !drop.contains(c)).collect();
        let values = self
            .rows()
            .flat_map(|r| keep.iter().map(move |&c| r[c]))
            .collect();
        Self::new(self.n, keep.len(), values)
    }

    /// Copy with columns reordered so that output column `k` is input column `order[k]`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.d)?;
        let values = self
            .rows()
            .flat_map(|r| order.iter().map(move |&c| r[c]))
            .collect();
        Self::new(self.n, self.d, values)
    }
}

fn check_permutation(order: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if order.len() != d {
        return Err(Error::DomainError(format!(
            "column order has length {}, expected {d}",
            order.len()
        )));
    }
    for &c in order {
        if c >= d || std::mem::replace(&mut seen[c], true) {
            return Err(Error::DomainError(format!(
                "{order:?} is not a permutation of 0..{d}"
            )));
        }
    }
    Ok(())
}

/// How to rank columns that contain repeated values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Refuse tied columns.
    #[default]
    Error,
    /// Order tied entries by a seeded uniform shuffle.
    Random { seed: u64 },
}

/// Coordinate-wise ranks `R_j^(i)` in `1..=n`, stored column-major.
///
/// The normalized rank is `R / n`; every column is a permutation of `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankMatrix {
    n: usize,
    d: usize,
    ranks: Vec<u32>,
}

impl RankMatrix {
    /// Builds a rank matrix from one rank vector (values `1..=n`) per column.
    pub fn from_rank_columns(columns: Vec<Vec<u32>>) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 || d < 1 {
            return Err(Error::DegenerateInput(format!(
                "need n >= 2 and d >= 1, got n = {n}, d = {d}"
            )));
        }
        let mut ranks = Vec::with_capacity(n * d);
        for (j, col) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::DegenerateInput(format!(
                    "column {j} has length {}, expected {n}",
                    col.len()
                )));
            }
            let mut seen = vec![false; n];
            for &r in &col {
                let ok = r >= 1 && (r as usize) <= n && !std::mem::replace(&mut seen[r as usize - 1], true);
                if !ok {
                    return Err(Error::DomainError(format!(
                        "column {j} is not a permutation of 1..={n}"
                    )));
                }
            }
            ranks.extend(col);
        }
        Ok(Self { n, d, ranks })
    }

    /// Every column equal to `1..=n`: the empirical maximum copula.
    pub fn comonotone(n: usize, d: usize) -> Result<Self> {
        let col: Vec<u32> = (1..=n as u32).collect();
        Self::from_rank_columns(vec![col; d])
    }

    pub(crate) fn from_raw(n: usize, d: usize, ranks: Vec<u32>) -> Self {
        debug_assert_eq!(ranks.len(), n * d);
        Self { n, d, ranks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Integer rank of observation `row` in column `column`.
    pub fn rank(&self, row: usize, column: usize) -> u32 {
        self.ranks[column * self.n + row]
    }

    /// Normalized rank `Y_column^(row)`.
    pub fn y(&self, row: usize, column: usize) -> f64 {
        self.rank(row, column) as f64 / self.n as f64
    }

    pub fn column_ranks(&self, column: usize) -> &[u32] {
        &self.ranks[column * self.n..(column + 1) * self.n]
    }

    /// Normalized rank vector `Y^(row)`.
    pub fn point(&self, row: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.y(row, j)).collect()
    }

    /// All `n` normalized rank vectors.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.d)?;
        let ranks = order
            .iter()
            .flat_map(|&c| self.column_ranks(c).iter().copied())
            .collect();
        Ok(Self::from_raw(self.n, self.d, ranks))
    }

    /// Applies `y -> (n+1)/n - y` to one column (rank `r -> n + 1 - r`).
    pub fn reverse_column(&self, column: usize) -> Result<Self> {
        if column >= self.d {
            return Err(Error::IndexOutOfRange {
                index: column,
                len: self.d,
            });
        }
        let mut ranks = self.ranks.clone();
        let top = self.n as u32 + 1;
        for r in &mut ranks[column * self.n..(column + 1) * self.n] {
            *r = top - *r;
        }
        Ok(Self::from_raw(self.n, self.d, ranks))
    }
}

/// Coordinate-wise normalized ranks of `data`.
pub fn normalized_ranks(data: &DataMatrix, tie_policy: TiePolicy) -> Result<RankMatrix> {
    let (n, d) = (data.n(), data.d());
    let columns: Vec<Vec<u32>> = (0..d)
        .into_par_iter()
        .map(|j| rank_column(&data.column(j), j, tie_policy))
        .collect::<Result<_>>()?;
    Ok(RankMatrix::from_raw(n, d, columns.concat()))
}

fn rank_column(values: &[f64], column: usize, tie_policy: TiePolicy) -> Result<Vec<u32>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    let cmp = |a: &usize, b: &usize| values[*a].partial_cmp(&values[*b]).unwrap_or(Ordering::Equal);
    match tie_policy {
        TiePolicy::Error => {
            order.sort_by(cmp);
            if order.windows(2).any(|w| values[w[0]] == values[w[1]]) {
                return Err(Error::TiesPresent { column });
            }
        }
        TiePolicy::Random { seed } => {
            let mut rng = rng::stream(seed, Domain::TieBreak, column as u64);
            let keys: Vec<u64> = (0..n).map(|_| rng.random()).collect();
            order.sort_by(|a, b| cmp(a, b).then(keys[*a].cmp(&keys[*b])).then(a.cmp(b)));
        }
    }
    let mut ranks = vec![0u32; n];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos as u32 + 1;
    }
    Ok(ranks)
}

/// A strictly monotone map together with its direction.
pub enum Monotone<F: Fn(f64) -> f64> {
    Increasing(F),
    Decreasing(F),
}

/// Returns a copy of `data` with `transform` applied to one column.
///
/// The map must be strictly monotone in the stated direction on the column's
/// values; a violation is reported as [`Error::DomainError`].
pub fn apply_monotone<F: Fn(f64) -> f64>(
    data: &DataMatrix,
    column: usize,
    transform: &Monotone<F>,
) -> Result<DataMatrix> {
    if column >= data.d() {
        return Err(Error::IndexOutOfRange {
            index: column,
            len: data.d(),
        });
    }
    let (f, increasing) = match transform {
        Monotone::Increasing(f) => (f, true),
        Monotone::Decreasing(f) => (f, false),
    };
    let mut values = data.values().to_vec();
    for row in values.chunks_exact_mut(data.d()) {
        row[column] = f(row[column]);
    }

    let mut pairs: Vec<(f64, f64)> = data
        .rows()
        .zip(values.chunks_exact(data.d()))
        .map(|(before, after)| (before[column], after[column]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pairs.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let ok = x0 == x1 && y0 == y1 || if increasing { y0 < y1 } else { y0 > y1 };
        if !ok {
            return Err(Error::DomainError(format!(
                "transform is not strictly {} on column {column}",
                if increasing { "increasing" } else { "decreasing" }
            )));
        }
    }
    DataMatrix::new(data.n(), data.d(), values)
}
