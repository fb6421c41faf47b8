use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MscnError, Real};
use crate::featurizer::FeatureDims;

/// Fully connected layer, `y = x · weight + bias` with `weight` of shape
/// `(inputs, outputs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Dense<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = |_| F::from_f64(rng.random_range(-bound..bound)).expect("representable");
        Dense {
            weight: Array2::from_shape_fn((inputs, outputs), |_| draw(())),
            bias: Array1::from_shape_fn(outputs, |_| draw(())),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Two-layer MLP applied to every element of a set with shared weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SetModule<F> {
    pub hidden: Dense<F>,
    pub output: Dense<F>,
}

impl<F: Real> SetModule<F> {
    fn zeros(inputs: usize, h: usize) -> Self {
        SetModule {
            hidden: Dense::zeros(inputs, h),
            output: Dense::zeros(h, h),
        }
    }

    fn init<R: Rng + ?Sized>(inputs: usize, h: usize, rng: &mut R) -> Self {
        SetModule {
            hidden: Dense::init(inputs, h, rng),
            output: Dense::init(h, h, rng),
        }
    }
}

/// Shape of a network: feature widths and hidden units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MscnShape {
    pub table_dim: usize,
    pub join_dim: usize,
    pub predicate_dim: usize,
    pub hidden: usize,
}

impl MscnShape {
    pub fn new(dims: &FeatureDims, hidden: usize) -> Self {
        MscnShape {
            table_dim: dims.table_dim(),
            join_dim: dims.join_dim(),
            predicate_dim: dims.predicate_dim(),
            hidden,
        }
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.hidden;
        let module = |d: usize| d * h + h + h * h + h;
        module(self.table_dim) + module(self.join_dim) + module(self.predicate_dim) + 3 * h * h + h + h + 1
    }
}

/// All network parameters. Gradients and optimizer moments use the same
/// type.
#[derive(Clone, Debug, PartialEq)]
pub struct MscnParams<F> {
    pub tables: SetModule<F>,
    pub joins: SetModule<F>,
    pub predicates: SetModule<F>,
    pub merge: Dense<F>,
    pub head: Dense<F>,
}

impl<F: Real> MscnParams<F> {
    pub fn zeros(shape: MscnShape) -> Self {
        let h = shape.hidden;
        MscnParams {
            tables: SetModule::zeros(shape.table_dim, h),
            joins: SetModule::zeros(shape.join_dim, h),
            predicates: SetModule::zeros(shape.predicate_dim, h),
            merge: Dense::zeros(3 * h, h),
            head: Dense::zeros(h, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(shape: MscnShape, rng: &mut R) -> Self {
        let h = shape.hidden;
        MscnParams {
            tables: SetModule::init(shape.table_dim, h, rng),
            joins: SetModule::init(shape.join_dim, h, rng),
            predicates: SetModule::init(shape.predicate_dim, h, rng),
            merge: Dense::init(3 * h, h, rng),
            head: Dense::init(h, 1, rng),
        }
    }

    pub fn shape(&self) -> MscnShape {
        MscnShape {
            table_dim: self.tables.hidden.inputs(),
            join_dim: self.joins.hidden.inputs(),
            predicate_dim: self.predicates.hidden.inputs(),
            hidden: self.merge.outputs(),
        }
    }

    fn layers(&self) -> [&Dense<F>; 8] {
        [
            &self.tables.hidden,
            &self.tables.output,
            &self.joins.hidden,
            &self.joins.output,
            &self.predicates.hidden,
            &self.predicates.output,
            &self.merge,
            &self.head,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Dense<F>; 8] {
        [
            &mut self.tables.hidden,
            &mut self.tables.output,
            &mut self.joins.hidden,
            &mut self.joins.output,
            &mut self.predicates.hidden,
            &mut self.predicates.output,
            &mut self.merge,
            &mut self.head,
        ]
    }

    /// Every parameter array as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[F]> {
        self.layers()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn to_flat(&self) -> Vec<F> {
        self.slices().concat()
    }

    pub fn from_flat(shape: MscnShape, values: &[F]) -> Result<Self, MscnError> {
        if values.len() != shape.parameter_count() {
            return Err(MscnError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                shape.parameter_count(),
                values.len()
            )));
        }
        let mut params = MscnParams::zeros(shape);
        let mut rest = values;
        for s in params.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(params)
    }

    pub fn cast<G: Real>(&self) -> MscnParams<G> {
        let flat: Vec<G> = self
            .to_flat()
            .into_iter()
            .map(|v| G::from_f64(v.to_f64().expect("finite")).expect("representable"))
            .collect();
        MscnParams::from_flat(self.shape(), &flat).expect("same shape")
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
