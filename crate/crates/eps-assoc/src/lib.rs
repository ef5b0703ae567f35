//! File formats, GWAS batch testing, Monte Carlo simulation and the
//! command-line front end built on `eps-core`.

pub mod cli;
pub mod error;
pub mod formula;
pub mod gwas;
pub mod io;
pub mod montecarlo;

pub use error::{AppError, AppResult, InputError};
