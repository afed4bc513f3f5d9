pub mod cli;
pub mod parse;
pub mod report;

pub use cli::run_cli;
