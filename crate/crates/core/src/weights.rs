//! Row-stochastic interaction matrices.
//!
//! Entry `w[i][j]` is the influence of agent `j` on agent `i`. Two families
//! are provided: the Café weights, where every agent keeps `theta` for itself
//! and spreads the rest evenly, and distance weights, where the off-diagonal
//! share decays with the squared distance between agents placed at random in
//! the unit square.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Row sums must be within this of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// Diagonal `theta`, off-diagonal `(1 - theta) / (n - 1)`; never materialized.
    Cafe { theta: f64 },
    /// Row-major `n * n` entries.
    Dense(Vec<f64>),
}

/// A validated `n x n` row-stochastic matrix with nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    repr: Repr,
}

impl WeightMatrix {
    /// Validates and wraps a row-major matrix.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("weight matrix"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            entries.extend(row);
        }
        Self::from_dense(n, entries)
    }

    pub fn from_dense(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("weight matrix"));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        for (row, chunk) in entries.chunks_exact(n).enumerate() {
            for (col, &value) in chunk.iter().enumerate() {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(Error::NegativeWeight { row, col, value });
                }
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotRowStochastic { row, sum });
            }
        }
        Ok(WeightMatrix {
            n,
            repr: Repr::Dense(entries),
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        make_cafe_weights(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Some(theta)` when the matrix has the Café structure.
    pub fn cafe_theta(&self) -> Option<f64> {
        match self.repr {
            Repr::Cafe { theta } => Some(theta),
            Repr::Dense(_) => None,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "weight index out of range");
        match &self.repr {
            Repr::Cafe { theta } => cafe_entry(self.n, *theta, i, j),
            Repr::Dense(entries) => entries[i * self.n + j],
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(i, j)).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        match &self.repr {
            Repr::Cafe { .. } => self.row(i).iter().sum(),
            Repr::Dense(entries) => entries[i * self.n..(i + 1) * self.n].iter().sum(),
        }
    }

    /// Row-major copy of all entries.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Cafe { .. } => (0..self.n).flat_map(|i| self.row(i)).collect(),
            Repr::Dense(entries) => entries.clone(),
        }
    }

    pub(crate) fn dense_entries(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Dense(entries) => Some(entries),
            Repr::Cafe { .. } => None,
        }
    }

    /// Writes one CSV row per matrix row, with a `w_0,...,w_{n-1}` header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record((0..self.n).map(|j| format!("w_{j}")))?;
        for i in 0..self.n {
            out.write_record(self.row(i).iter().map(|w| format!("{w:e}")))?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a square CSV matrix. A non-numeric first row is taken as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (index, record) in input.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if index == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidParameter(format!(
                        "weight row {index}: {e}"
                    )))
                }
            }
        }
        let matrix = Self::from_rows(rows)?;
        Ok(matrix.detect_cafe())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::format(path, other.to_string()),
        })
    }

    /// Switches to the implicit Café representation when the entries match it
    /// exactly, so imported Café matrices run on the fast path.
    fn detect_cafe(self) -> Self {
        let Repr::Dense(entries) = &self.repr else {
            return self;
        };
        let n = self.n;
        let theta = entries[0];
        let matches = (0..n).all(|i| (0..n).all(|j| entries[i * n + j] == cafe_entry(n, theta, i, j)));
        if matches {
            WeightMatrix {
                n,
                repr: Repr::Cafe { theta },
            }
        } else {
            self
        }
    }
}

fn cafe_entry(n: usize, theta: f64, i: usize, j: usize) -> f64 {
    if i == j {
        theta
    } else {
        (1.0 - theta) / (n - 1) as f64
    }
}

/// Café weights: `theta` on the diagonal, `(1 - theta) / (n - 1)` elsewhere.
///
/// For a single agent the only entry is 1 whatever `theta` is.
pub fn make_cafe_weights(n: usize, theta: f64) -> Result<WeightMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let theta = if n == 1 { 1.0 } else { theta };
    Ok(WeightMatrix {
        n,
        repr: Repr::Cafe { theta },
    })
}

/// A point in the unit square.
pub type Position = [f64; 2];

/// Distance weights together with the agent positions that produced them.
#[derive(Debug, Clone)]
pub struct DistanceWeights {
    pub weights: WeightMatrix,
    pub positions: Vec<Position>,
}

/// Places `n` agents uniformly in `[0, 1)^2` and weights neighbours by
/// inverse squared distance, keeping `theta` on the diagonal.
///
/// A point landing exactly on an earlier one is redrawn.
pub fn make_distance_weights(n: usize, theta: f64, seed: u64) -> Result<DistanceWeights> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "distance weights need at least two agents".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut positions: Vec<Position> = Vec::with_capacity(n);
    while positions.len() < n {
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        if positions.iter().any(|q| q == &p) {
            continue;
        }
        positions.push(p);
    }
    let weights = distance_weights_from_positions(&positions, theta)?;
    Ok(DistanceWeights { weights, positions })
}

/// Inverse-square weights for fixed positions. Positions must be distinct.
pub fn distance_weights_from_positions(positions: &[Position], theta: f64) -> Result<WeightMatrix> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "distance weights need at least two agents".into(),
        ));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut entries[i * n..(i + 1) * n];
        let mut total = 0.0;
        for (j, w) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let d2 = dx * dx + dy * dy;
            if d2 == 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "agents {i} and {j} share a position"
                )));
            }
            *w = 1.0 / d2;
            total += *w;
        }
        for (j, w) in row.iter_mut().enumerate() {
            *w = if i == j { theta } else { (1.0 - theta) * *w / total };
        }
    }
    // Rounding can leave a row a few ulps off; fold the residue into the
    // largest off-diagonal entry so the diagonal stays exactly theta.
    for i in 0..n {
        let row = &mut entries[i * n..(i + 1) * n];
        let sum: f64 = row.iter().sum();
        let (k, largest) = row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .fold((i, 0.0), |acc, (k, &w)| if w > acc.1 { (k, w) } else { acc });
        if largest > 0.0 {
            row[k] = (row[k] + (1.0 - sum)).max(0.0);
        }
    }
    WeightMatrix::from_dense(n, entries)
}
