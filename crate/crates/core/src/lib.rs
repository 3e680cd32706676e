pub mod asc;
pub mod batch;
pub mod assign;
pub mod cleaning;
pub mod config;
pub mod measures;
pub mod pipeline;
pub mod scene;
pub mod stimulus;
pub mod synth;
pub mod table;
mod util;
