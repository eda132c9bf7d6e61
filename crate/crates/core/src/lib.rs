//! Optimized versus evolved network topologies under node expansion.

pub mod analysis;
pub mod expansion;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod ring;
pub mod rng;
