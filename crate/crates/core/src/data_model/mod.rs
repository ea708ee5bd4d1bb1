//! Domain entities, file formats and model-ready feature tables.

mod features;
pub mod io;
mod types;

pub use io::{ingest_portfolio, ingest_rain_grid, write_portfolio, write_rain_grid, Portfolio, PortfolioPaths, DEFAULT_CLAIM_FLOOR};
pub use features::*;
pub use types::*;
