pub mod analytic;
pub mod cli;
pub mod error;
pub mod inversion;
pub mod model;
pub mod queue_sim;
pub mod risk_sim;
pub mod stats;
pub mod verify;
pub mod wiener_hopf;
