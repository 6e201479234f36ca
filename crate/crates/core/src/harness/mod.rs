//! Monte Carlo engine: grids of cells, per-trial pipelines, calibration and reports.

pub mod calibrate;
pub mod exec;
pub mod grid;
pub mod report;
pub mod scaling;
pub mod stats;
pub mod trial;

pub use calibrate::{calibrate, calibrate_c, calibrate_z, Calibration};
pub use exec::Execution;
pub use grid::{Budget, Cell, ExperimentGrid};
pub use report::{run_grid, CellRecord, CoverageReport, RunConstants};
pub use scaling::{diameter_scaling_report, ScalingReport};
pub use trial::{run_trial, PipelineConfig, TrialOutcome};
