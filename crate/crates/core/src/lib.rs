//! Simulation and analysis of multi-antenna receivers that split each
//! antenna's signal between a coherent (CD) and an envelope (ED) detector.

pub mod harness;
pub mod mi_closed;
pub mod mi_mc;
pub mod model;
pub mod optimizer;
