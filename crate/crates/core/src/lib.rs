pub mod dart;
pub mod geometry;
pub mod harness;
pub mod policies;
pub mod render;
pub mod sim;
