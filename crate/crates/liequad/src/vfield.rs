//! Vector fields as tuples of rational-function components: Lie bracket,
//! pointwise evaluation, span rank and transitivity probes.

use crate::expr::{CoordinateSystem, ExprError, ScalarExpr};
use crate::linalg;
use std::fmt;
use std::sync::Arc;

/// Rank tolerance on singular values of the row-scaled value matrix.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldError {
    DimensionMismatch { expected: usize, got: usize },
    CoordinateMismatch,
    Eval(ExprError),
    /// A pole was hit while evaluating at a specific point.
    PoleAt { point: Vec<f64> },
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::DimensionMismatch { expected, got } => {
                write!(f, "expected {} components, got {}", expected, got)
            }
            FieldError::CoordinateMismatch => write!(f, "fields use different coordinate systems"),
            FieldError::Eval(e) => write!(f, "evaluation failed: {}", e),
            FieldError::PoleAt { point } => write!(f, "field has a pole at {:?}", point),
        }
    }
}

impl std::error::Error for FieldError {}

impl From<ExprError> for FieldError {
    fn from(e: ExprError) -> Self {
        FieldError::Eval(e)
    }
}

/// A vector field: one rational-function component per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub name: String,
    components: Vec<ScalarExpr>,
}

impl VectorField {
    pub fn new<S: Into<String>>(
        name: S,
        components: Vec<ScalarExpr>,
    ) -> Result<VectorField, FieldError> {
        let name = name.into();
        let first = components
            .first()
            .ok_or(FieldError::DimensionMismatch { expected: 1, got: 0 })?;
        let coords = first.coords().clone();
        if components.len() != coords.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: coords.dim(),
                got: components.len(),
            });
        }
        if components.iter().any(|c| c.coords() != &coords) {
            return Err(FieldError::CoordinateMismatch);
        }
        Ok(VectorField { name, components })
    }

    /// Parse a field from component strings.
    pub fn parse<S: Into<String>>(
        name: S,
        components: &[&str],
        coords: &Arc<CoordinateSystem>,
    ) -> Result<VectorField, ExprError> {
        let comps = components
            .iter()
            .map(|s| crate::expr::parse(s, coords))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(name, comps).map_err(|_| ExprError::CoordinateMismatch)
    }

    pub fn zero<S: Into<String>>(name: S, coords: &Arc<CoordinateSystem>) -> VectorField {
        VectorField {
            name: name.into(),
            components: (0..coords.dim()).map(|_| ScalarExpr::zero(coords)).collect(),
        }
    }

    pub fn coords(&self) -> &Arc<CoordinateSystem> {
        self.components[0].coords()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &ScalarExpr {
        &self.components[k]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField, FieldError> {
        self.check_compatible(other)?;
        let comps = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect();
        VectorField::new(format!("({}+{})", self.name, other.name), comps)
    }

    pub fn scale(&self, c: &num_rational::BigRational) -> VectorField {
        VectorField {
            name: self.name.clone(),
            components: self.components.iter().map(|e| e.scale(c)).collect(),
        }
    }

    fn check_compatible(&self, other: &VectorField) -> Result<(), FieldError> {
        if self.coords() != other.coords() {
            return Err(FieldError::CoordinateMismatch);
        }
        if self.dim() != other.dim() {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.coords().names();
        let mut parts = Vec::new();
        for (c, n) in self.components.iter().zip(names) {
            if !c.is_zero() {
                parts.push(format!("({}) d/d{}", c, n));
            }
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Lie bracket `[X, Y]`, component k: sum over j of
/// `X^j d_j Y^k - Y^j d_j X^k`, in canonical form.
pub fn bracket(x: &VectorField, y: &VectorField) -> Result<VectorField, FieldError> {
    x.check_compatible(y)?;
    let coords = x.coords().clone();
    let n = coords.dim();
    let mut comps = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = ScalarExpr::zero(&coords);
        for j in 0..n {
            let term = x
                .component(j)
                .mul(&y.component(k).diff(j))
                .sub(&y.component(j).mul(&x.component(k).diff(j)));
            acc = acc.add(&term);
        }
        comps.push(acc);
    }
    VectorField::new(format!("[{},{}]", x.name, y.name), comps)
}

/// Componentwise evaluation at a point.
pub fn eval_field(x: &VectorField, p: &[f64]) -> Result<Vec<f64>, FieldError> {
    x.components
        .iter()
        .map(|c| {
            c.eval(p).map_err(|e| match e {
                ExprError::DivisionByZero => FieldError::PoleAt { point: p.to_vec() },
                other => FieldError::Eval(other),
            })
        })
        .collect()
}

/// Field values stacked at a point: rows are fields, columns coordinates.
#[derive(Debug, Clone)]
pub struct PointFrame {
    pub point: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub rank: usize,
}

pub fn point_frame(fields: &[VectorField], p: &[f64]) -> Result<PointFrame, FieldError> {
    let matrix = fields
        .iter()
        .map(|f| eval_field(f, p))
        .collect::<Result<Vec<_>, _>>()?;
    let rank = linalg::rank_f64(&matrix, RANK_TOL);
    Ok(PointFrame {
        point: p.to_vec(),
        matrix,
        rank,
    })
}

/// Numerical rank of the span of the fields' values at `p`.
pub fn span_rank(fields: &[VectorField], p: &[f64]) -> Result<usize, FieldError> {
    Ok(point_frame(fields, p)?.rank)
}

#[derive(Debug, Clone)]
pub struct TransitivityReport {
    pub transitive: bool,
    /// Points where the span failed to reach full dimension, with the rank seen.
    pub witnesses: Vec<(Vec<f64>, usize)>,
}

/// Sample-based transitivity probe: the fields must span the full tangent
/// space at every sample point.
pub fn transitivity_check(
    fields: &[VectorField],
    samples: &[Vec<f64>],
) -> Result<TransitivityReport, FieldError> {
    assert!(!samples.is_empty(), "at least one sample point is required");
    let n = fields
        .first()
        .map(|f| f.dim())
        .unwrap_or(0);
    let mut witnesses = Vec::new();
    for p in samples {
        let r = span_rank(fields, p).map_err(|e| match e {
            FieldError::PoleAt { .. } => FieldError::PoleAt { point: p.clone() },
            other => other,
        })?;
        if r < n {
            witnesses.push((p.clone(), r));
        }
    }
    Ok(TransitivityReport {
        transitive: witnesses.is_empty(),
        witnesses,
    })
}
