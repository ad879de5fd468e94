//! Comfort-aware obstacle avoidance for autonomous driving, in closed loop.
//!
//! The crate wires together:
//!
//! - [`vehicle`]: a constant-speed linear single-track model, its exact
//!   discrete linearization, and the objective ride-comfort indices
//!   (lateral acceleration, yaw rate, lateral jerk, yaw acceleration).
//! - [`field`]: artificial potential fields modelling occupants'
//!   psychological pressure toward obstacles and road boundaries.
//! - [`comfort`]: the subjective/objective evaluation model — AHP-weighted
//!   questionnaire scoring plus four classifiers mapping dynamics indices to
//!   a good/normal/poor label and a continuous confidence score.
//! - [`qp`]: a dense convex QP solver using the primal active-set method.
//! - [`tracker`]: receding-horizon path tracking via a condensed
//!   control-increment QP with hard input and soft state constraints.
//! - [`planner`]: receding-horizon local path planning over lateral-offset
//!   candidates scored by tracking deviation, both potential fields, and the
//!   comfort confidence term, under collision and last-point-to-steer
//!   constraints.
//! - [`sim`]: scenario configs, the closed planner/tracker/plant loop,
//!   CSV logs, and comfort reports.
//! - [`plot`]: self-contained SVG renderings of trajectories, constraint
//!   time series, field heatmaps, and multi-run overlays.

pub mod comfort;
pub mod field;
pub mod planner;
pub mod plot;
pub mod qp;
pub mod sim;
pub mod tracker;
pub mod vehicle;
