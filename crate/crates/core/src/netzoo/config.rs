use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::odesolve::SolverSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// One nonlinear layer from the encoded input straight to the head.
    Endpoint,
    /// Shared Euler-stepped field that also receives the layer time.
    Timecond,
    /// Shared field advanced by Euler slices `h + Δt·f(h)`.
    Sharedfield,
    /// Time-dependent field integrated by a configurable solver.
    Continuous,
    /// Independent residual blocks, one per layer.
    Residual,
    /// Shared field plus a per-layer additive correction.
    Hybrid,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Endpoint,
        Family::Timecond,
        Family::Sharedfield,
        Family::Continuous,
        Family::Residual,
        Family::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Endpoint => "endpoint",
            Family::Timecond => "timecond",
            Family::Sharedfield => "sharedfield",
            Family::Continuous => "continuous",
            Family::Residual => "residual",
            Family::Hybrid => "hybrid",
        }
    }

    pub fn uses_time(self) -> bool {
        matches!(self, Family::Timecond | Family::Continuous)
    }

    pub fn shares_field(self) -> bool {
        matches!(
            self,
            Family::Timecond | Family::Sharedfield | Family::Continuous | Family::Hybrid
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Number of layers `L`. Ignored by `endpoint` (always 1) and by
    /// `continuous`, which takes `L` from the solver step count.
    pub depth: usize,
    pub classes: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    /// Inner width of the field / residual-block MLP (defaults to `hidden_dim`).
    #[serde(default)]
    pub field_width: Option<usize>,
    /// Output width of the endpoint layer (defaults to `hidden_dim`).
    #[serde(default)]
    pub endpoint_width: Option<usize>,
    /// Driven mode: the input is `L` concatenated slices of this width; the
    /// encoder reads slice 0 and layer `ℓ` additionally reads slice `ℓ`.
    #[serde(default)]
    pub drive_dim: Option<usize>,
}

impl ModelConfig {
    pub fn new(
        family: Family,
        input_dim: usize,
        hidden_dim: usize,
        depth: usize,
        classes: usize,
    ) -> Self {
        ModelConfig {
            family,
            input_dim,
            hidden_dim,
            depth,
            classes,
            activation: Activation::Tanh,
            horizon: 1.0,
            solver: None,
            field_width: None,
            endpoint_width: None,
            drive_dim: None,
        }
    }

    pub fn with_solver(mut self, spec: SolverSpec) -> Self {
        self.solver = Some(spec);
        self
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.activation = act;
        self
    }

    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = t;
        self
    }

    pub fn with_field_width(mut self, w: usize) -> Self {
        self.field_width = Some(w);
        self
    }

    pub fn with_endpoint_width(mut self, w: usize) -> Self {
        self.endpoint_width = Some(w);
        self
    }

    /// Driven mode with `depth` slices of `drive_dim` each.
    pub fn with_drive(mut self, drive_dim: usize) -> Self {
        self.drive_dim = Some(drive_dim);
        self
    }

    pub fn field_width(&self) -> usize {
        self.field_width.unwrap_or(self.hidden_dim)
    }

    pub fn endpoint_width(&self) -> usize {
        self.endpoint_width.unwrap_or(self.hidden_dim)
    }

    pub fn layers(&self) -> usize {
        match self.family {
            Family::Endpoint => 1,
            Family::Continuous => self.solver.map_or(self.depth, |s| s.steps),
            _ => self.depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.classes == 0 {
            return Err(invalid("input_dim, hidden_dim and classes must be >= 1"));
        }
        if self.depth == 0 {
            return Err(invalid("depth must be >= 1"));
        }
        if self.field_width() == 0 || self.endpoint_width() == 0 {
            return Err(invalid("field and endpoint widths must be >= 1"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        match (self.family, &self.solver) {
            (Family::Continuous, None) => {
                return Err(invalid("the continuous family requires a solver spec"))
            }
            (_, Some(spec)) => spec.validate()?,
            _ => {}
        }
        if let Some(u) = self.drive_dim {
            if self.family == Family::Endpoint {
                return Err(invalid("driven mode needs a multi-layer family"));
            }
            if u == 0 || self.input_dim != u * self.layers() {
                return Err(invalid(format!(
                    "driven input_dim {} must equal drive_dim {} x layers {}",
                    self.input_dim,
                    u,
                    self.layers()
                )));
            }
        }
        Ok(())
    }
}
