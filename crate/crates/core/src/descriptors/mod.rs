//! Point-wise feature providers: a handcrafted rotation-invariant histogram
//! descriptor and an oracle with a single corruption knob.

mod feature;
mod local;
mod normals;
mod oracle;

pub use feature::FeatureMatrix;
pub use local::{compute_local_descriptor, LocalDescriptor, DEFAULT_DESCRIPTOR_DIM};
pub use normals::{estimate_normals, NormalEstimate, FALLBACK_NORMAL};
pub use oracle::{oracle_features, OracleNoiseSpec, DEFAULT_ORACLE_DIM};
