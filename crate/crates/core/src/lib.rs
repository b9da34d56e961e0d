//! Neural approximated virtual elements for second-order elliptic problems on polygonal meshes.

pub mod cli;
pub mod geometry;
pub mod harmonic_basis;
pub mod neural_net;
pub mod navem_solver;
pub mod trainer;
pub mod vem_core;
