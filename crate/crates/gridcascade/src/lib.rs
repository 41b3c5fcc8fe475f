//! Cascading line-failure simulation for power grids under the linearized
//! DC flow model.
//!
//! The crate covers the full pipeline: grid construction and validation
//! ([`grid`]), pseudo-inverse machinery with rank-1 line removal
//! ([`spectral`]), DC flow solves and single-failure sensitivity ([`dcflow`]),
//! cascade evolution with a reference engine and a fast pseudo-inverse-based
//! engine ([`cascade`]), severity metrics ([`metrics`]), initial-failure
//! selection heuristics ([`vulnerability`]), and synthetic instance
//! generators ([`generators`]).
//!
//! ```
//! use gridcascade::cascade::run_cfe_pb;
//! use gridcascade::generators::{fixture, Fixture};
//! use gridcascade::metrics::yield_of;
//!
//! // A four-bus instance where losing one well-chosen line cascades into a
//! // total blackout, while a strictly larger initial outage is harmless.
//! let grid = fixture(&Fixture::Obs61).unwrap();
//! let collapse = run_cfe_pb(&grid, &[1]).unwrap();
//! assert_eq!(collapse.t, 2);
//! assert_eq!(yield_of(&grid, &collapse), 0.0);
//!
//! let harmless = run_cfe_pb(&grid, &[1, 0]).unwrap();
//! assert_eq!(yield_of(&grid, &harmless), 1.0);
//! ```

pub mod cascade;
pub mod dcflow;
pub mod error;
pub mod generators;
pub mod grid;
pub mod metrics;
pub mod spectral;
pub mod vulnerability;

pub use error::{Error, Result};
pub use grid::{build_grid, shed_load, BalancePolicy, Bus, Grid, InstanceSpec, Line};
pub use spectral::{pseudo_inverse, PseudoInverse};
