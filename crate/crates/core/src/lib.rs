//! Morse-Bott homology by flow lines with cascades, together with the
//! discretized path-space involutions, Novikov field arithmetic and moment maps
//! that accompany it.

pub mod geometry;
pub mod poly;
pub mod tol;
pub mod flow;
pub mod novikov;
pub mod homology;
pub mod involutions;
pub mod cascades;
pub mod momentmap;
