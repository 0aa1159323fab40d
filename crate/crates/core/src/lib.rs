//! Delivery-time engine for cache-aided fog radio access networks.
//!
//! Edge nodes (ENs) with centrally placed caches and fronthaul links to a
//! cloud server serve users whose caches are filled at random. The crate
//! evaluates the achievable normalized delivery time (NDT) of the combined
//! IA/ZF/IC delivery scheme in exact arithmetic, builds the DoF-level
//! transmission schedules behind it, and checks both against bit-level
//! simulation.
//!
//! - [`model`]: parameters, subfile labels, class size profile
//! - [`placement`]: finite-size EN and user cache placement
//! - [`ndt`]: NDT formulas and scheme selection
//! - [`scheduler`]: transmission blocks, validation, reconciliation
//! - [`montecarlo`]: seeded statistical validation
//! - [`cli`]: the `fran` command-line front end

pub mod bitset;
pub mod cli;
pub mod invariants;
pub mod model;
pub mod montecarlo;
pub mod ndt;
pub mod placement;
pub mod rational;
pub mod scheduler;

pub use model::{
    class_profile, enumerate_subfiles, validate_config, ClassSizeProfile, DemandVector, EnTag,
    NetworkConfig, NetworkParams, SubfileId, UserSet,
};
pub use rational::Rational;
