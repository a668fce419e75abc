use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement type of a study column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Count,
    Binary,
    Categorical { levels: Vec<String> },
}

impl ColumnKind {
    /// Continuous and count columns carry a marginal distribution and are
    /// linked to the copula through quantile bins.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnKind::Continuous | ColumnKind::Count)
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }

    pub fn n_levels(&self) -> Option<usize> {
        match self {
            ColumnKind::Categorical { levels } => Some(levels.len()),
            ColumnKind::Binary => Some(2),
            _ => None,
        }
    }
}

/// Whether a column's missingness enters the copula through an indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingnessMode {
    /// Include a latent indicator `R_j`; missingness may depend on the
    /// missing value itself.
    Modeled,
    /// No indicator; missingness treated as completely at random.
    #[default]
    Mcar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    #[serde(default)]
    pub missingness_mode: MissingnessMode,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind, missingness_mode: MissingnessMode) -> Result<Self> {
        let schema = Self { name: name.into(), kind, missingness_mode };
        schema.check()?;
        Ok(schema)
    }

    pub fn continuous(name: impl Into<String>, mode: MissingnessMode) -> Self {
        Self { name: name.into(), kind: ColumnKind::Continuous, missingness_mode: mode }
    }

    pub fn count(name: impl Into<String>, mode: MissingnessMode) -> Self {
        Self { name: name.into(), kind: ColumnKind::Count, missingness_mode: mode }
    }

    pub fn binary(name: impl Into<String>, mode: MissingnessMode) -> Self {
        Self { name: name.into(), kind: ColumnKind::Binary, missingness_mode: mode }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Result<Self> {
        Self::new(name, ColumnKind::Categorical { levels }, MissingnessMode::Mcar)
    }

    pub fn check(&self) -> Result<()> {
        if let ColumnKind::Categorical { levels } = &self.kind {
            if levels.len() < 2 {
                return Err(Error::Config(format!(
                    "column `{}`: categorical columns need at least 2 levels",
                    self.name
                )));
            }
            let mut seen = std::collections::HashSet::new();
            if !levels.iter().all(|l| seen.insert(l)) {
                return Err(Error::Config(format!("column `{}`: duplicate level labels", self.name)));
            }
            if self.missingness_mode == MissingnessMode::Modeled {
                return Err(Error::Config(format!(
                    "column `{}`: nonignorable missingness is not supported for categorical columns",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Checks that a present cell holds a value valid for this column.
    pub fn check_value(&self, value: f64) -> Result<()> {
        let ok = match &self.kind {
            ColumnKind::Continuous => value.is_finite(),
            ColumnKind::Count => value.is_finite() && value.fract() == 0.0,
            ColumnKind::Binary => value == 0.0 || value == 1.0,
            ColumnKind::Categorical { levels } => {
                value.fract() == 0.0 && value >= 0.0 && (value as usize) < levels.len()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!("column `{}`: invalid value {value}", self.name)))
        }
    }
}

/// An `n × p` mixed-type table. Cells are `None` when missing, which fixes
/// the missingness mask `R`. Categorical cells hold the level index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schemas: Vec<ColumnSchema>,
    columns: Vec<Vec<Option<f64>>>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(schemas: Vec<ColumnSchema>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if schemas.len() != columns.len() {
            return Err(Error::Data(format!("{} schemas for {} columns", schemas.len(), columns.len())));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (schema, col) in schemas.iter().zip(&columns) {
            schema.check()?;
            if col.len() != n_rows {
                return Err(Error::Data(format!("column `{}` has {} rows, expected {n_rows}", schema.name, col.len())));
            }
            for v in col.iter().flatten() {
                schema.check_value(*v)?;
            }
        }
        Ok(Self { schemas, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn schemas(&self) -> &[ColumnSchema] {
        &self.schemas
    }

    pub fn schema(&self, j: usize) -> &ColumnSchema {
        &self.schemas[j]
    }

    pub fn column(&self, j: usize) -> &[Option<f64>] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.columns[j][i]
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.columns[j][i].is_none()
    }

    /// Missingness indicators of column `j` (`true` = missing).
    pub fn mask(&self, j: usize) -> Vec<bool> {
        self.columns[j].iter().map(Option::is_none).collect()
    }

    /// Observed `(row, value)` pairs of column `j`.
    pub fn observed(&self, j: usize) -> Vec<(usize, f64)> {
        self.columns[j].iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect()
    }

    pub fn observed_values(&self, j: usize) -> Vec<f64> {
        self.columns[j].iter().flatten().copied().collect()
    }

    pub fn missing_rows(&self, j: usize) -> Vec<usize> {
        self.columns[j].iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.columns.iter().map(|c| c.iter().filter(|v| v.is_none()).count()).sum()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schemas.iter().position(|s| s.name == name)
    }

    /// Same data with different schemas (e.g. switching a column's
    /// missingness mode); value checks are re-run.
    pub fn with_schemas(&self, schemas: Vec<ColumnSchema>) -> Result<Self> {
        Self::new(schemas, self.columns.clone())
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
        Self { schemas: self.schemas.clone(), columns, n_rows: rows.len() }
    }
}
