//! External fields `Q ∈ C(K)`: either an expression over the coordinates
//! (see [`expr`] for the grammar) or values on a grid of nodes.

pub mod expr;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Points, Result};
pub use expr::{parse_field, Expr, FieldExpression};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum FieldForm {
    Expression { expression: FieldExpression },
    /// Values at nodes; off-node points take the value of the nearest node.
    Grid { points: Points, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalField {
    pub form: FieldForm,
    pub offset: f64,
}

impl ExternalField {
    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            form: FieldForm::Expression { expression: FieldExpression::new(Expr::Num(0.0), dim) },
            offset: c,
        }
    }

    pub fn expression(source: &str, dim: usize) -> Result<Self> {
        Ok(Self { form: FieldForm::Expression { expression: parse_field(source, dim)? }, offset: 0.0 })
    }

    pub fn from_expression(expression: FieldExpression) -> Self {
        Self { form: FieldForm::Expression { expression }, offset: 0.0 }
    }

    pub fn grid(points: Points, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() || points.is_empty() {
            return Err(Error::Field(format!(
                "grid has {} nodes and {} values",
                points.len(),
                values.len()
            )));
        }
        Ok(Self { form: FieldForm::Grid { points, values }, offset: 0.0 })
    }

    /// `Q + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { form: self.form.clone(), offset: self.offset + c }
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            FieldForm::Expression { expression } => expression.dim(),
            FieldForm::Grid { points, .. } => points.dim(),
        }
    }

    /// True for `Q ≡ c` written as a bare number.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.form {
            FieldForm::Expression { expression } => match expression.expr() {
                Expr::Num(v) => Some(v + self.offset),
                _ => None,
            },
            FieldForm::Grid { .. } => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let v = match &self.form {
            FieldForm::Expression { expression } => expression.eval(x)?,
            FieldForm::Grid { points, values } => {
                let i = points.nearest(x).expect("grid is nonempty");
                values[i]
            }
        } + self.offset;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteField(format!("{x:?}")))
        }
    }

    /// Ambient gradient. Grid fields are piecewise constant and report zero.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.form {
            FieldForm::Expression { expression } => Ok(expression.eval_with_gradient(x)?.1),
            FieldForm::Grid { points, .. } => Ok(vec![0.0; points.dim()]),
        }
    }

    /// Values at every point, failing on any non-finite value.
    pub fn values_on(&self, pts: &Points) -> Result<Vec<f64>> {
        if let FieldForm::Grid { points, values } = &self.form {
            if points == pts {
                let out: Vec<f64> = values.iter().map(|v| v + self.offset).collect();
                if let Some(i) = out.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteField(format!("{:?}", pts.get(i))));
                }
                return Ok(out);
            }
        }
        pts.iter().map(|x| self.value(x)).collect()
    }
}
