//! Observed samples `(Y, D, X)` and the treatment/control views used by
//! every estimation stage.
//!
//! A [`Dataset`] is validated once at construction and immutable afterwards,
//! so it can be shared read-only between worker threads.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{PacsError, Result};

/// Validated observational sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<bool>,
    x: DMatrix<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, enforcing the arm, finiteness and naming invariants.
    pub fn new(y: Vec<f64>, d: Vec<bool>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(PacsError::InvalidData(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if d.len() != n {
            return Err(PacsError::DimensionMismatch {
                expected: n,
                got: d.len(),
            });
        }
        if x.nrows() != n {
            return Err(PacsError::DimensionMismatch {
                expected: n,
                got: x.nrows(),
            });
        }
        if x.ncols() == 0 {
            return Err(PacsError::InvalidData("need at least one covariate".into()));
        }
        if names.len() != x.ncols() {
            return Err(PacsError::DimensionMismatch {
                expected: x.ncols(),
                got: names.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(PacsError::InvalidData(format!(
                    "duplicate covariate name `{name}`"
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(PacsError::NonFinite {
                what: format!("y at row {}", i + 1),
            });
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(PacsError::NonFinite {
                what: format!("{} at row {}", names[k / n], k % n + 1),
            });
        }
        if !d.iter().any(|&t| t) {
            return Err(PacsError::EmptyArm("treatment"));
        }
        if d.iter().all(|&t| t) {
            return Err(PacsError::EmptyArm("control"));
        }
        Ok(Self { y, d, x, names })
    }

    /// Dataset with default covariate names `x1..xp`.
    pub fn with_default_names(y: Vec<f64>, d: Vec<bool>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(y, d, x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    /// Treatment indicator as 0.0 / 1.0.
    pub fn d_f64(&self) -> Vec<f64> {
        self.d.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Same units and treatment, new outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(y, self.d.clone(), self.x.clone(), self.names.clone())
    }

    /// Covariate matrix restricted to `columns` (in the given order).
    pub fn columns(&self, columns: &[usize]) -> DMatrix<f64> {
        self.x.select_columns(columns)
    }

    pub fn n_treated(&self) -> usize {
        self.d.iter().filter(|&&t| t).count()
    }

    pub fn view(&self, arm: Arm) -> GroupView<'_> {
        let want = arm == Arm::Treatment;
        let indices = (0..self.n()).filter(|&i| self.d[i] == want).collect();
        GroupView {
            parent: self,
            arm,
            indices,
        }
    }

    /// Writes the dataset back in the ingestion format (`y,d,<covariates>`).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |source| PacsError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["y".to_string(), "d".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec = Vec::with_capacity(self.p() + 2);
            rec.push(self.y[i].to_string());
            rec.push(if self.d[i] { "1" } else { "0" }.to_string());
            rec.extend((0..self.p()).map(|j| self.x[(i, j)].to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|source| PacsError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads a dataset from CSV. Header required; `y` and `d` mandatory; every
/// other column is a covariate, in file order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PacsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file).map_err(|e| match e {
        PacsError::Csv { source, .. } => PacsError::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let csv_err = |source| PacsError::Csv {
        path: "<reader>".into(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or(PacsError::MissingColumn("y"))?;
    let d_col = header
        .iter()
        .position(|h| h == "d")
        .ok_or(PacsError::MissingColumn("d"))?;
    let cov_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != y_col && c != d_col)
        .collect();
    let names: Vec<String> = cov_cols.iter().map(|&c| header[c].clone()).collect();

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut x_rows: Vec<f64> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| PacsError::BadCell {
                row,
                column: header[c].clone(),
                value: raw.to_string(),
            })
        };
        y.push(cell(y_col)?);
        let raw_d = rec.get(d_col).unwrap_or("");
        d.push(match raw_d.parse::<f64>() {
            Ok(1.0) => true,
            Ok(0.0) => false,
            _ => {
                return Err(PacsError::NotBinary {
                    row,
                    value: raw_d.to_string(),
                })
            }
        });
        for &c in &cov_cols {
            x_rows.push(cell(c)?);
        }
    }
    let n = y.len();
    if n < 2 {
        return Err(PacsError::InvalidData(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    let x = DMatrix::from_row_slice(n, names.len(), &x_rows);
    Dataset::new(y, d, x, names)
}

/// Treatment arm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Treatment => "treatment",
            Arm::Control => "control",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Units of one arm, borrowed from the parent dataset.
#[derive(Debug, Clone)]
pub struct GroupView<'a> {
    pub parent: &'a Dataset,
    pub arm: Arm,
    pub indices: Vec<usize>,
}

impl GroupView<'_> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn y(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| self.parent.y[i]).collect()
    }

    pub fn x(&self) -> DMatrix<f64> {
        self.parent.x.select_rows(&self.indices)
    }

    /// Inverse-probability weight of each unit in the arm: `1/p` for treated,
    /// `1/(1-p)` for controls.
    pub fn ipw_weights(&self, p_hat: &[f64]) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&i| match self.arm {
                Arm::Treatment => 1.0 / p_hat[i],
                Arm::Control => 1.0 / (1.0 - p_hat[i]),
            })
            .collect()
    }
}

/// Treatment and control views, in that order.
pub fn split_groups(ds: &Dataset) -> (GroupView<'_>, GroupView<'_>) {
    (ds.view(Arm::Treatment), ds.view(Arm::Control))
}

/// Ground-truth covariate taxonomy (0-based column indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateRoles {
    pub confounders: Vec<usize>,
    pub outcome_predictors: Vec<usize>,
    pub instruments: Vec<usize>,
    pub spurious: Vec<usize>,
}

/// Role of a single covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Confounder,
    OutcomePredictor,
    Instrument,
    Spurious,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Confounder => "confounder",
            Role::OutcomePredictor => "outcome_predictor",
            Role::Instrument => "instrument",
            Role::Spurious => "spurious",
        }
    }

    pub fn is_target(self) -> bool {
        matches!(self, Role::Confounder | Role::OutcomePredictor)
    }
}

impl CovariateRoles {
    /// Confounders 1-2, outcome predictors 3-4, instruments 5-8, spurious 9..p.
    pub fn standard_layout(p: usize) -> Result<Self> {
        if p < 8 {
            return Err(PacsError::Config(format!(
                "standard role layout needs p >= 8, got {p}"
            )));
        }
        Ok(Self {
            confounders: vec![0, 1],
            outcome_predictors: vec![2, 3],
            instruments: vec![4, 5, 6, 7],
            spurious: (8..p).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.confounders.len()
            + self.outcome_predictors.len()
            + self.instruments.len()
            + self.spurious.len()
    }

    /// Checks the four sets partition `0..p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut seen = vec![false; p];
        for &j in self
            .confounders
            .iter()
            .chain(&self.outcome_predictors)
            .chain(&self.instruments)
            .chain(&self.spurious)
        {
            if j >= p || seen[j] {
                return Err(PacsError::Config(format!(
                    "covariate roles do not partition 1..{p} (index {})",
                    j + 1
                )));
            }
            seen[j] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(PacsError::Config(format!(
                "covariate roles do not cover 1..{p}"
            )));
        }
        Ok(())
    }

    /// Target set: confounders and outcome predictors, sorted.
    pub fn target(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self
            .confounders
            .iter()
            .chain(&self.outcome_predictors)
            .copied()
            .collect();
        t.sort_unstable();
        t
    }

    /// Instruments and spurious covariates, sorted.
    pub fn complement(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.instruments.iter().chain(&self.spurious).copied().collect();
        t.sort_unstable();
        t
    }

    pub fn role_of(&self, j: usize) -> Option<Role> {
        if self.confounders.contains(&j) {
            Some(Role::Confounder)
        } else if self.outcome_predictors.contains(&j) {
            Some(Role::OutcomePredictor)
        } else if self.instruments.contains(&j) {
            Some(Role::Instrument)
        } else if self.spurious.contains(&j) {
            Some(Role::Spurious)
        } else {
            None
        }
    }
}
