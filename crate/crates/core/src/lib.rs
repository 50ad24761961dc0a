//! Spatio-temporal outbreak detection on a rectangular lattice of daily
//! counts: a fixed-window scan statistic and the forward selection scan,
//! with smoothing, threshold calibration, forecasting and a simulation
//! harness.

pub mod dof;
pub mod error;
pub mod example;
pub mod forecast;
pub mod fss;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod scan;
pub mod sim;
pub mod smoothing;

pub use error::{Error, Result};
pub use fss::{Expansion, FssMonitor, FssParams, PruneRule, SelectionMode, SignalReport};
pub use grid::{Axis, DailyCountStream, Grid, LatticeConfig, Region};
pub use scan::{ScanMonitor, ScanParams, ScanResult};
pub use smoothing::{SmoothState, SmoothingParams};
