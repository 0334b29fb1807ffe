pub mod comms;
pub mod fixtures;
pub mod grid;
pub mod relay;
pub mod settings;
pub mod sim;
