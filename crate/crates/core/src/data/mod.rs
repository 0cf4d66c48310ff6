//! Market-data model: schema, CSV ingestion, derived features, and the
//! binned-mean summary.

pub mod bins;
pub mod daylight;
pub mod features;
pub mod ingest;
pub mod schema;
pub mod table;

pub use bins::{bin_mean_ci, BinSummary};
pub use daylight::{daylight_hours, Location};
pub use features::derive_features;
pub use ingest::ingest_csv;
pub use schema::{PriceColumn, Schema, Technology};
pub use table::{MarketTable, Provenance};
