use crate::error::{Error, Result};

/// Regression observations with predictors in the unit cube.
///
/// Predictors are stored column-wise: `column(i)` holds the `i`-th coordinate of
/// every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("dataset needs at least one predictor".into()));
        }
        if y.is_empty() {
            return Err(Error::InvalidParameter("dataset is empty".into()));
        }
        for col in &columns {
            if col.len() != y.len() {
                return Err(Error::DimensionMismatch { expected: y.len(), got: col.len() });
            }
            if let Some(&bad) = col.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::OutOfDomain(bad));
            }
        }
        if let Some(&bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite response {bad}")));
        }
        Ok(Self { columns, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::new(columns, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Same predictors, different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.columns.clone(), y)
    }
}
