//! Momentum-based model predictive control for humanoid push recovery with
//! reactive stepping.
//!
//! The controller predicts the centroidal momentum of the robot over a short
//! horizon, with contact wrenches as inputs, and re-solves a sparse convex QP
//! at every control tick. A step is handled by switching the swing foot's
//! wrench constraints at the expected touchdown stage.

pub mod check;
pub mod config;
pub mod contact;
pub mod controller;
pub mod cost;
pub mod error;
pub mod model;
pub mod output;
pub mod sim;
pub mod solver;
pub mod sparse;
pub mod transcription;

pub use contact::{FootParams, StanceConstraintBlock, SupportPolygon};
pub use controller::{ControllerOutput, MpcController, SteppingPhase, SteppingState};
pub use cost::{CostWeights, ReferenceTrajectory};
pub use error::{ConfigError, ContactError, ControllerError, ModelError, SimError, SolverError};
pub use model::{ContactGeometry, ContactWrench, MomentumState, WrenchPair};
pub use solver::{QpSolution, QpSolver, SolveStatus, SolverSettings};
pub use transcription::{ChiLayout, QpProblem};
