//! Data model for a two-arm completely randomized experiment: the full
//! potential-outcome population, one realized assignment, and the observed
//! dataset an analyst works with.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Dense `n x K` covariate matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n == 0 || k == 0 {
            return Err(Error::InvalidInput(
                "covariate matrix must be non-empty".into(),
            ));
        }
        let mut data = Vec::with_capacity(n * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, k, data })
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let k = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        if n == 0 || k == 0 {
            return Err(Error::InvalidInput(
                "covariate matrix must be non-empty".into(),
            ));
        }
        if let Some(bad) = cols.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let data = (0..n)
            .flat_map(|i| cols.iter().map(move |c| c[i]))
            .collect();
        Ok(Self { n, k, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.k + j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.k];
        for i in 0..self.n {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.n as f64);
        means
    }

    /// Returns the column-demeaned matrix together with the subtracted means.
    pub fn centered(&self) -> (Self, Vec<f64>) {
        let means = self.column_means();
        let data = self
            .data
            .chunks(self.k)
            .flat_map(|row| row.iter().zip(&means).map(|(v, m)| v - m))
            .collect();
        (
            Self {
                n: self.n,
                k: self.k,
                data,
            },
            means,
        )
    }

    /// `(1/n) Σ z_i z_iᵀ`.
    pub fn second_moment(&self) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.k);
        for i in 0..self.n {
            m.rank_one_update(1.0, self.row(i));
        }
        m.scale(1.0 / self.n as f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Both potential outcomes for every unit of the finite population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcomeTable {
    /// Outcome under treatment (arm A).
    pub a: Vec<f64>,
    /// Outcome under control (arm B).
    pub b: Vec<f64>,
    pub z: Covariates,
}

impl PotentialOutcomeTable {
    pub fn new(a: Vec<f64>, b: Vec<f64>, z: Covariates) -> Result<Self> {
        let n = a.len();
        if b.len() != n || z.n() != n {
            return Err(Error::SizeMismatch(format!(
                "a has {n} entries, b {}, z {} rows",
                b.len(),
                z.n()
            )));
        }
        if n < 4 {
            return Err(Error::InvalidInput(format!("population size {n} < 4")));
        }
        if n <= z.k() + 2 {
            return Err(Error::InvalidInput(format!(
                "population size {n} must exceed K + 2 = {}",
                z.k() + 2
            )));
        }
        Ok(Self { a, b, z })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn true_ate(&self) -> f64 {
        mean(&self.a) - mean(&self.b)
    }

    /// Adds `shift` to both potential outcomes of every unit.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            a: self.a.iter().map(|v| v + shift).collect(),
            b: self.b.iter().map(|v| v + shift).collect(),
            z: self.z.clone(),
        }
    }

    /// Multiplies both potential outcomes by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a: self.a.iter().map(|v| v * factor).collect(),
            b: self.b.iter().map(|v| v * factor).collect(),
            z: self.z.clone(),
        }
    }
}

/// The set of units assigned to treatment (arm A).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    n: usize,
    treated: Vec<usize>,
}

impl Assignment {
    /// Validates and sorts the treated indices. Both arms need at least two units.
    pub fn new(n: usize, mut treated: Vec<usize>) -> Result<Self> {
        treated.sort_unstable();
        if treated.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate treated index".into()));
        }
        if let Some(&last) = treated.last() {
            if last >= n {
                return Err(Error::InvalidInput(format!(
                    "treated index {last} out of range for n = {n}"
                )));
            }
        }
        let n_a = treated.len();
        if n_a < 2 {
            return Err(Error::DegenerateArm {
                arm: 'A',
                size: n_a,
                required: 2,
            });
        }
        if n - n_a < 2 {
            return Err(Error::DegenerateArm {
                arm: 'B',
                size: n - n_a,
                required: 2,
            });
        }
        Ok(Self { n, treated })
    }

    /// Builds from already sorted, distinct, in-range indices (the enumerator's output).
    pub(crate) fn from_sorted_unchecked(n: usize, treated: Vec<usize>) -> Self {
        debug_assert!(treated.windows(2).all(|w| w[0] < w[1]));
        Self { n, treated }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn treated(&self) -> &[usize] {
        &self.treated
    }

    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    pub fn n_control(&self) -> usize {
        self.n - self.treated.len()
    }

    pub fn indicator(&self) -> Vec<bool> {
        let mut t = vec![false; self.n];
        for &i in &self.treated {
            t[i] = true;
        }
        t
    }
}

/// One observed dataset: outcomes, treatment indicators and centered covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentData {
    pub y: Vec<f64>,
    pub t: Vec<bool>,
    /// Covariates with column means removed.
    pub z: Covariates,
    /// Column means that were subtracted from the raw covariates.
    pub centering_shift: Vec<f64>,
}

impl ExperimentData {
    /// Validates shapes and arm sizes, then demeans the covariates.
    pub fn new(y: Vec<f64>, t: Vec<bool>, z_raw: &Covariates) -> Result<Self> {
        let n = y.len();
        if t.len() != n || z_raw.n() != n {
            return Err(Error::SizeMismatch(format!(
                "y has {n} entries, t {}, z {} rows",
                t.len(),
                z_raw.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite outcome at row {i}"
            )));
        }
        let n_a = t.iter().filter(|&&x| x).count();
        check_arms(n_a, n - n_a, 2)?;
        let (z, centering_shift) = z_raw.centered();
        Ok(Self {
            y,
            t,
            z,
            centering_shift,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.z.k()
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&x| x).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Largest absolute column sum of the centered covariates.
    pub fn centering_residual(&self) -> f64 {
        let k = self.k();
        let mut sums = vec![0.0; k];
        for i in 0..self.n() {
            for (s, v) in sums.iter_mut().zip(self.z.row(i)) {
                *s += v;
            }
        }
        sums.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Writes `y`, `t` and the centered covariates as CSV with a header row.
    pub fn write_csv(&self, path: impl AsRef<Path>, z_names: &[String]) -> Result<()> {
        if z_names.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                found: z_names.len(),
            });
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string(), "t".to_string()];
        header.extend(z_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string(), u8::from(self.t[i]).to_string()];
            rec.extend(self.z.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn check_arms(n_a: usize, n_b: usize, required: usize) -> Result<()> {
    if n_a < required {
        return Err(Error::DegenerateArm {
            arm: 'A',
            size: n_a,
            required,
        });
    }
    if n_b < required {
        return Err(Error::DegenerateArm {
            arm: 'B',
            size: n_b,
            required,
        });
    }
    Ok(())
}

/// Observed data for `asn` drawn from `table`: `y_i = a_i` for treated units, `b_i` otherwise.
pub fn realize(table: &PotentialOutcomeTable, asn: &Assignment) -> Result<ExperimentData> {
    if asn.n() != table.n() {
        return Err(Error::SizeMismatch(format!(
            "assignment over {} units, table has {}",
            asn.n(),
            table.n()
        )));
    }
    let t = asn.indicator();
    let y = t
        .iter()
        .enumerate()
        .map(|(i, &treated)| if treated { table.a[i] } else { table.b[i] })
        .collect();
    ExperimentData::new(y, t, &table.z)
}

/// Reads an analysis dataset from CSV. The header row names the columns.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    y_col: &str,
    t_col: &str,
    z_cols: &[String],
) -> Result<ExperimentData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 1,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
    };
    if z_cols.is_empty() {
        return Err(Error::InvalidInput(
            "at least one covariate column is required".into(),
        ));
    }
    let y_idx = find(y_col)?;
    let t_idx = find(t_col)?;
    let z_idx = z_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        // Row numbers are 1-based file lines; the header is line 1.
        let line = r + 2;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::Parse {
                    row: line,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: name.to_string(),
                    message: format!("cannot parse {raw:?} as a real number"),
                })
        };
        y.push(field(y_idx, y_col)?);
        let tv = field(t_idx, t_col)?;
        t.push(if tv == 1.0 {
            true
        } else if tv == 0.0 {
            false
        } else {
            return Err(Error::NonBinaryTreatment {
                row: line,
                value: rec.get(t_idx).unwrap_or("").to_string(),
            });
        });
        rows.push(
            z_idx
                .iter()
                .zip(z_cols)
                .map(|(&i, name)| field(i, name))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("CSV file has no data rows".into()));
    }
    let z = Covariates::from_rows(&rows)?;
    ExperimentData::new(y, t, &z)
}

/// Arm-wise means and cross moments of an observed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n_a: usize,
    pub n_b: usize,
    pub p_a: f64,
    pub p_b: f64,
    pub mean_y_a: f64,
    pub mean_y_b: f64,
    pub mean_z_a: Vec<f64>,
    pub mean_z_b: Vec<f64>,
    pub mean_yz_a: Vec<f64>,
    pub mean_yz_b: Vec<f64>,
    pub mean_zz_a: SymMatrix,
    pub mean_zz_b: SymMatrix,
    pub mean_zz: SymMatrix,
}

pub fn group_stats(data: &ExperimentData) -> Result<GroupStats> {
    let n = data.n();
    let k = data.k();
    let n_a = data.n_treated();
    let n_b = n - n_a;
    check_arms(n_a, n_b, 1)?;

    let mut sum_y = [0.0; 2];
    let mut sum_z = [vec![0.0; k], vec![0.0; k]];
    let mut sum_yz = [vec![0.0; k], vec![0.0; k]];
    let mut sum_zz = [SymMatrix::zeros(k), SymMatrix::zeros(k)];
    for i in 0..n {
        let arm = usize::from(!data.t[i]);
        let zi = data.z.row(i);
        let yi = data.y[i];
        sum_y[arm] += yi;
        for j in 0..k {
            sum_z[arm][j] += zi[j];
            sum_yz[arm][j] += yi * zi[j];
        }
        sum_zz[arm].rank_one_update(1.0, zi);
    }
    let sizes = [n_a as f64, n_b as f64];
    let div = |v: &[f64], d: f64| v.iter().map(|x| x / d).collect::<Vec<_>>();
    let [zz_a, zz_b] = sum_zz;
    let mean_zz = SymMatrix::from_fn(k, |i, j| (zz_a.get(i, j) + zz_b.get(i, j)) / n as f64);
    Ok(GroupStats {
        n_a,
        n_b,
        p_a: n_a as f64 / n as f64,
        p_b: n_b as f64 / n as f64,
        mean_y_a: sum_y[0] / sizes[0],
        mean_y_b: sum_y[1] / sizes[1],
        mean_z_a: div(&sum_z[0], sizes[0]),
        mean_z_b: div(&sum_z[1], sizes[1]),
        mean_yz_a: div(&sum_yz[0], sizes[0]),
        mean_yz_b: div(&sum_yz[1], sizes[1]),
        mean_zz_a: zz_a.scale(1.0 / sizes[0]),
        mean_zz_b: zz_b.scale(1.0 / sizes[1]),
        mean_zz,
    })
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
