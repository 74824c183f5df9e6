//! Reproducible randomness and the region ledger.

mod ledger;
mod poisson;
mod stream;

pub use ledger::{Realization, RegionLedger, Segment};
pub use poisson::{sample_exponential, sample_poisson_count, sample_poisson_region};
pub use stream::RandomStream;
