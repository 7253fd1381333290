use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::gradcore::Tensor;

/// Ordered hidden states `z_0..z_L`.
///
/// Each state is a `[rows, d]` tensor. A single input has one row; a batch
/// carries one trajectory per row, and the geometry metrics average over rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<Tensor>,
    times: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<Tensor>) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("trajectory needs at least one state"));
        }
        let shape = states[0].shape().to_vec();
        if shape.len() != 2 {
            return Err(shape_err(
                "trajectory",
                format!("states must be 2-D, got {shape:?}"),
            ));
        }
        if let Some(bad) = states.iter().find(|s| s.shape() != shape.as_slice()) {
            return Err(shape_err(
                "trajectory",
                format!("state {:?} differs from {:?}", bad.shape(), shape),
            ));
        }
        Ok(Trajectory {
            states,
            times: None,
        })
    }

    pub fn with_times(states: Vec<Tensor>, times: Vec<f64>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(invalid(format!(
                "{} time stamps for {} states",
                times.len(),
                states.len()
            )));
        }
        let mut t = Trajectory::new(states)?;
        t.times = Some(times);
        Ok(t)
    }

    /// Single-row trajectory from plain vectors.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let states = points
            .iter()
            .map(|p| Tensor::new(vec![1, p.len()], p.clone()))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(states)
    }

    pub fn states(&self) -> &[Tensor] {
        &self.states
    }

    pub fn into_states(self) -> Vec<Tensor> {
        self.states
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of steps `L` (states minus one).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.states[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.states[0].cols()
    }

    pub fn first(&self) -> &Tensor {
        &self.states[0]
    }

    pub fn last(&self) -> &Tensor {
        &self.states[self.states.len() - 1]
    }

    /// Trajectory of a single row.
    pub fn row(&self, r: usize) -> Result<Trajectory> {
        if r >= self.rows() {
            return Err(crate::FieldError::OutOfRange {
                index: r,
                limit: self.rows(),
            });
        }
        let states = self
            .states
            .iter()
            .map(|s| s.select_rows(&[r]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            states,
            times: self.times.clone(),
        })
    }

    /// Rows of state `k` as plain vectors, for per-sample geometry.
    pub(crate) fn point(&self, k: usize, r: usize) -> &[f64] {
        self.states[k].row_slice(r)
    }
}
