pub mod graph;
pub mod harness;
pub mod plan;
pub mod repset;
pub mod sim;
pub mod d2color;
pub mod ecolor;
mod track;
pub mod vcolor;
