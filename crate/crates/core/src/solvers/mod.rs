//! Linear motion-and-structure solvers built on the normal-flow constraint.
//!
//! Every model is written as `n^T O(x) theta = |n|^2`: one scalar equation per
//! normal-flow observation, linear in the unknown parameters `theta`.

mod linear;
mod lsq;
mod ransac;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::Velocity;

pub use linear::{
    angular_velocity_row, diff_homography_row, global_flow_row, six_dof_row, solve_angular_velocity,
    solve_depth, solve_diff_homography, solve_global_flow, solve_optical_flow, solve_six_dof,
    DepthEstimate, Fit, FlowEstimate,
};
pub use lsq::{stack_and_solve, SolveDiagnostics, SolveOptions, Solution, StackedSystem};
pub use ransac::{ransac_estimate, FitReport, RansacConfig};

/// The five problem families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    OpticalFlow,
    Depth,
    AngularVelocity,
    SixDof,
    DiffHomographyLinear,
}

impl ModelTag {
    pub const ALL: [ModelTag; 5] = [
        ModelTag::OpticalFlow,
        ModelTag::Depth,
        ModelTag::AngularVelocity,
        ModelTag::SixDof,
        ModelTag::DiffHomographyLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::OpticalFlow => "optical-flow",
            ModelTag::Depth => "depth",
            ModelTag::AngularVelocity => "angular-velocity",
            ModelTag::SixDof => "six-dof",
            ModelTag::DiffHomographyLinear => "diff-homography",
        }
    }

    /// Minimal number of observations that determine the model.
    pub fn minimal_sample(self) -> usize {
        match self {
            ModelTag::OpticalFlow | ModelTag::Depth => 1,
            ModelTag::AngularVelocity => 3,
            ModelTag::SixDof => 6,
            // Nine entries but only eight are constrained: H + eps*I predicts the same flow.
            ModelTag::DiffHomographyLinear => 8,
        }
    }

    /// Parameters per solve (per observation for the per-pixel models).
    pub fn dimension(self) -> usize {
        match self {
            ModelTag::OpticalFlow => 2,
            ModelTag::Depth => 1,
            ModelTag::AngularVelocity => 3,
            ModelTag::SixDof => 6,
            ModelTag::DiffHomographyLinear => 9,
        }
    }

    /// Whether a single parameter vector is shared by all observations.
    pub fn is_global(self) -> bool {
        !matches!(self, ModelTag::OpticalFlow | ModelTag::Depth)
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "optical-flow" | "opticalflow" | "flow" => ModelTag::OpticalFlow,
            "depth" => ModelTag::Depth,
            "angular-velocity" | "angularvelocity" | "rotation" => ModelTag::AngularVelocity,
            "six-dof" | "sixdof" | "6dof" => ModelTag::SixDof,
            "diff-homography" | "diff-homography-linear" | "diffhomographylinear" | "homography" => {
                ModelTag::DiffHomographyLinear
            }
            _ => return Err(Error::InvalidInput(format!("unknown model kind `{s}`"))),
        })
    }
}

/// A model together with the context it needs.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Per-pixel full flow given the camera velocity.
    OpticalFlow { velocity: Velocity },
    /// Per-pixel depth given the camera velocity.
    Depth { velocity: Velocity },
    AngularVelocity,
    /// Camera velocity given one depth per observation.
    SixDof { depths: Vec<f64> },
    DiffHomographyLinear,
}

impl ModelKind {
    pub fn tag(&self) -> ModelTag {
        match self {
            ModelKind::OpticalFlow { .. } => ModelTag::OpticalFlow,
            ModelKind::Depth { .. } => ModelTag::Depth,
            ModelKind::AngularVelocity => ModelTag::AngularVelocity,
            ModelKind::SixDof { .. } => ModelTag::SixDof,
            ModelKind::DiffHomographyLinear => ModelTag::DiffHomographyLinear,
        }
    }

    pub fn minimal_sample(&self) -> usize {
        self.tag().minimal_sample()
    }
}
