//! Flat parameter and gradient vectors.

use std::ops::{Deref, DerefMut, Range};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, contiguous slice of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub range: Range<usize>,
}

/// Disjoint segments that exactly cover `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
    len: usize,
}

impl Layout {
    /// Builds a layout by appending segments of the given sizes in order.
    pub fn from_sizes<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        for (name, size) in parts {
            segments.push(Segment {
                name: name.into(),
                range: offset..offset + size,
            });
            offset += size;
        }
        Layout {
            segments,
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Parameters of a function approximator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        ParamVector {
            data: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn from_vec(layout: Arc<Layout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector::from_vec",
                expected: layout.len(),
                actual: data.len(),
            });
        }
        check_finite("parameters", &data)?;
        Ok(ParamVector { data, layout })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Replaces every value. Length must match and entries must be finite.
    pub fn assign(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector::assign",
                expected: self.data.len(),
                actual: values.len(),
            });
        }
        check_finite("parameters", values)?;
        self.data.copy_from_slice(values);
        Ok(())
    }

    /// Mutable access for in-crate update code that preserves finiteness.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .segment(name)
            .map(|s| &self.data[s.range.clone()])
    }

    pub fn zeros_like_gradient(&self) -> Gradient {
        Gradient::zeros(self.data.len())
    }
}

/// A dense vector aligned with some [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Gradient(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &[f64]) {
        axpy(a, x, &mut self.0);
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.0 {
            *v *= a;
        }
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        check_finite(context, &self.0)
    }
}

impl Deref for Gradient {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Gradient {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Gradient {
    fn from(v: Vec<f64>) -> Self {
        Gradient(v)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn check_finite(context: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: context.to_string(),
            index,
        }),
        None => Ok(()),
    }
}
