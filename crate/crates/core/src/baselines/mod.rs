//! Reference registrars: point-to-point ICP and correspondence RANSAC.

mod icp;
mod ransac;

pub use icp::{icp, IcpConfig, IcpOutcome};
pub use ransac::{ransac_registration, RansacConfig, RansacOutcome};
