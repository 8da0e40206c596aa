use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::matrix::{dot, norm, Matrix};

/// A named block of weights inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered mapping of named weight matrices onto a flat vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a `rows x cols` segment. Names must be unique.
    pub fn push(mut self, name: impl Into<String>, rows: usize, cols: usize) -> Self {
        let name = name.into();
        assert!(
            self.segments.iter().all(|s| s.name != name),
            "duplicate segment name {name}"
        );
        self.segments.push(Segment {
            name,
            rows,
            cols,
            offset: self.total,
        });
        self.total += rows * cols;
        self
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Shape(format!("no parameter segment named `{name}`")))
    }

    pub fn into_shared(self) -> Arc<Layout> {
        Arc::new(self)
    }
}

macro_rules! flat_vector_common {
    ($ty:ident) => {
        impl $ty {
            pub fn zeros(layout: Arc<Layout>) -> Self {
                Self {
                    values: vec![0.0; layout.len()],
                    layout,
                }
            }

            pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
                if values.len() != layout.len() {
                    return Err(Error::Shape(format!(
                        "{} values for a layout of length {}",
                        values.len(),
                        layout.len()
                    )));
                }
                Ok(Self { values, layout })
            }

            pub fn layout(&self) -> &Arc<Layout> {
                &self.layout
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn segment(&self, name: &str) -> Result<&[f64]> {
                let seg = self.layout.segment(name)?;
                Ok(&self.values[seg.range()])
            }

            pub fn segment_matrix(&self, name: &str) -> Result<Matrix> {
                let seg = self.layout.segment(name)?;
                Matrix::from_vec(seg.rows, seg.cols, self.values[seg.range()].to_vec())
            }

            pub fn norm(&self) -> f64 {
                norm(&self.values)
            }

            pub fn is_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }

            pub fn same_layout(&self, other_layout: &Layout) -> bool {
                *self.layout == *other_layout
            }
        }
    };
}

/// Flat double-precision store for every trainable weight of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

/// Derivative of a scalar with respect to a [`ParamVector`], same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

flat_vector_common!(ParamVector);
flat_vector_common!(Gradient);

impl ParamVector {
    /// `self + scale * direction`, rejecting non-finite results.
    pub fn add_scaled(&self, direction: &Gradient, scale: f64) -> Result<ParamVector> {
        if !self.same_layout(direction.layout()) {
            return Err(Error::LayoutMismatch);
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(direction.values())
            .map(|(p, d)| p + scale * d)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParams);
        }
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    /// Elementwise `self - other` as a direction.
    pub fn difference(&self, other: &ParamVector) -> Result<Gradient> {
        if !self.same_layout(other.layout()) {
            return Err(Error::LayoutMismatch);
        }
        Ok(Gradient {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            layout: self.layout.clone(),
        })
    }
}

impl Gradient {
    pub fn dot(&self, other: &Gradient) -> Result<f64> {
        if !self.same_layout(other.layout()) {
            return Err(Error::LayoutMismatch);
        }
        Ok(dot(&self.values, &other.values))
    }

    pub fn scaled(&self, scale: f64) -> Gradient {
        Gradient {
            values: self.values.iter().map(|v| v * scale).collect(),
            layout: self.layout.clone(),
        }
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &Gradient, scale: f64) -> Result<Gradient> {
        if !self.same_layout(other.layout()) {
            return Err(Error::LayoutMismatch);
        }
        Ok(Gradient {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
            layout: self.layout.clone(),
        })
    }

    /// Reinterprets a direction as a point in parameter space.
    pub fn as_params(&self) -> ParamVector {
        ParamVector {
            values: self.values.clone(),
            layout: self.layout.clone(),
        }
    }
}
