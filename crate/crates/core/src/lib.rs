pub mod gaussian;
pub mod graphs;
pub mod ising;
pub mod montecarlo;
pub mod presets;
pub mod stats;
pub mod theory;
