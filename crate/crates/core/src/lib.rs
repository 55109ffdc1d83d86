pub mod controller;
pub mod demonstrator;
pub mod demos;
pub mod eval;
pub mod model;
pub mod sim;
pub mod teleop;
pub mod train;
