use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DatasetError, FluxFrame};

/// Known transformation `f` applied to the treatment column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreatmentTransform {
    Identity,
    /// `(T - offset) / scale`; the Q10 form uses `offset = T_ref`, `scale = 10`.
    AffineScale { offset: f64, scale: f64 },
    /// `f(T)` supplied as its own column.
    Precomputed(String),
}

impl TreatmentTransform {
    pub fn q10(t_ref: f64) -> Self {
        TreatmentTransform::AffineScale {
            offset: t_ref,
            scale: 10.0,
        }
    }

    pub fn validate(&self, frame: Option<&FluxFrame>) -> Result<(), DatasetError> {
        match self {
            TreatmentTransform::AffineScale { scale, .. } if *scale == 0.0 || !scale.is_finite() => {
                Err(DatasetError::InvalidRoles("affine transform scale must be non-zero".into()))
            }
            TreatmentTransform::Precomputed(col) => match frame {
                Some(f) if !f.has_column(col) => Err(DatasetError::MissingColumn(col.clone())),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Evaluates `f(T)` row by row.
    pub fn apply(&self, frame: &FluxFrame, t_column: &str) -> Result<Vec<f64>, DatasetError> {
        self.validate(Some(frame))?;
        Ok(match self {
            TreatmentTransform::Identity => frame.column(t_column)?.to_vec(),
            TreatmentTransform::AffineScale { offset, scale } => frame
                .column(t_column)?
                .iter()
                .map(|t| (t - offset) / scale)
                .collect(),
            TreatmentTransform::Precomputed(col) => frame.column(col)?.to_vec(),
        })
    }

    /// Columns the transform reads besides the treatment itself.
    pub fn extra_columns(&self) -> Vec<String> {
        match self {
            TreatmentTransform::Precomputed(c) => vec![c.clone()],
            _ => vec![],
        }
    }
}

/// Assignment of frame columns to causal roles.
///
/// `x` holds effect modifiers (inputs of `θ(X)`), `w` further confounders or
/// mediators. Both enter the first-stage regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub y: String,
    pub t: String,
    pub x: Vec<String>,
    pub w: Vec<String>,
    pub f: TreatmentTransform,
}

impl RoleSpec {
    pub fn new(y: &str, t: &str, x: &[&str], w: &[&str], f: TreatmentTransform) -> Self {
        Self {
            y: y.to_string(),
            t: t.to_string(),
            x: x.iter().map(|s| s.to_string()).collect(),
            w: w.iter().map(|s| s.to_string()).collect(),
            f,
        }
    }

    /// Checks disjointness of the roles and, when a frame is given, that every
    /// named column exists.
    pub fn validate(&self, frame: Option<&FluxFrame>) -> Result<(), DatasetError> {
        let x: BTreeSet<&str> = self.x.iter().map(String::as_str).collect();
        let w: BTreeSet<&str> = self.w.iter().map(String::as_str).collect();
        if x.len() != self.x.len() || w.len() != self.w.len() {
            return Err(DatasetError::InvalidRoles("duplicate column in X or W".into()));
        }
        if let Some(c) = x.intersection(&w).next() {
            return Err(DatasetError::InvalidRoles(format!("column {c} is in both X and W")));
        }
        for role in [&self.y, &self.t] {
            if x.contains(role.as_str()) || w.contains(role.as_str()) {
                return Err(DatasetError::InvalidRoles(format!(
                    "column {role} cannot be both outcome/treatment and a covariate"
                )));
            }
        }
        if self.y == self.t {
            return Err(DatasetError::InvalidRoles("outcome and treatment coincide".into()));
        }
        if self.x.is_empty() && self.w.is_empty() {
            return Err(DatasetError::InvalidRoles("X and W are both empty".into()));
        }
        self.f.validate(frame)?;
        if let Some(frame) = frame {
            for c in self.required_columns() {
                frame.column(&c)?;
            }
        }
        Ok(())
    }

    /// First-stage covariates `X ∪ W`, X first.
    pub fn controls(&self) -> Vec<String> {
        self.x.iter().chain(&self.w).cloned().collect()
    }

    pub fn required_columns(&self) -> Vec<String> {
        let mut v = vec![self.y.clone(), self.t.clone()];
        v.extend(self.controls());
        v.extend(self.f.extra_columns());
        v
    }
}
