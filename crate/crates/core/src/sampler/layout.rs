//! Mapping from dataset columns to latent Gaussian coordinates.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::types::{ColumnKind, ColumnSchema, MissingnessMode};

/// What a latent coordinate represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum LatentRole {
    /// Continuous or count study column.
    Numeric { column: usize },
    /// Binary study column (probit).
    Binary { column: usize },
    /// One level of a categorical column (diagonal orthant).
    Level { column: usize, level: usize },
    /// Missingness indicator of a study column.
    Indicator { column: usize },
}

impl LatentRole {
    pub fn column(&self) -> usize {
        match *self {
            LatentRole::Numeric { column }
            | LatentRole::Binary { column }
            | LatentRole::Level { column, .. }
            | LatentRole::Indicator { column } => column,
        }
    }

    /// Numeric study coordinates have intercept fixed at zero.
    pub fn has_free_intercept(&self) -> bool {
        !matches!(self, LatentRole::Numeric { .. })
    }
}

/// Latent coordinates in order: study columns (categoricals expanded to
/// one coordinate per level) followed by the indicators of columns with
/// modeled missingness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentLayout {
    roles: Vec<LatentRole>,
    labels: Vec<String>,
    study: Vec<Range<usize>>,
    indicators: Vec<Option<usize>>,
}

impl LatentLayout {
    pub fn new(schemas: &[ColumnSchema]) -> Self {
        let mut roles = Vec::new();
        let mut labels = Vec::new();
        let mut study = Vec::with_capacity(schemas.len());
        for (column, s) in schemas.iter().enumerate() {
            let start = roles.len();
            match &s.kind {
                ColumnKind::Continuous | ColumnKind::Count => {
                    roles.push(LatentRole::Numeric { column });
                    labels.push(s.name.clone());
                }
                ColumnKind::Binary => {
                    roles.push(LatentRole::Binary { column });
                    labels.push(s.name.clone());
                }
                ColumnKind::Categorical { levels } => {
                    for (level, name) in levels.iter().enumerate() {
                        roles.push(LatentRole::Level { column, level });
                        labels.push(format!("{}[{}]", s.name, name));
                    }
                }
            }
            study.push(start..roles.len());
        }
        let mut indicators = vec![None; schemas.len()];
        for (column, s) in schemas.iter().enumerate() {
            if s.missingness_mode == MissingnessMode::Modeled {
                indicators[column] = Some(roles.len());
                roles.push(LatentRole::Indicator { column });
                labels.push(format!("R({})", s.name));
            }
        }
        Self { roles, labels, study, indicators }
    }

    pub fn dim(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[LatentRole] {
        &self.roles
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Latent coordinates of study column `j`.
    pub fn study(&self, j: usize) -> Range<usize> {
        self.study[j].clone()
    }

    /// Indicator coordinate of study column `j`, if modeled.
    pub fn indicator(&self, j: usize) -> Option<usize> {
        self.indicators[j]
    }

    pub fn free_intercepts(&self) -> Vec<bool> {
        self.roles.iter().map(LatentRole::has_free_intercept).collect()
    }

    /// Coordinates of numeric study columns and indicators, the block whose
    /// correlations are reported in simulation studies.
    pub fn n_study(&self) -> usize {
        self.study.last().map_or(0, |r| r.end)
    }
}
