//! Device model, simulator, dump I/O, characterization, filtering and
//! extraction for a DRAM-latency random number generator.

pub mod characterize;
pub mod extract;
pub mod filter;
pub mod io;
pub mod model;
pub mod rng;
pub mod sim;

pub use model::{
    BitStream, CellAddress, CellClass, DramGeometry, MeasurementSpec, ModelError,
    OperatingCondition, TrpFraction,
};
pub use sim::{PopulationConfig, SimError, SimulatedDevice};
