//! Synthetic complete-to-partial benchmark: procedural organ-like shapes,
//! smooth deformations, ball crops, noise and random poses.

mod deform;
mod sample;
mod shape;
pub mod suite;

pub use deform::{
    deform, fiducial_rms, max_gradient, remove_rigid_component, sample_field, DeformationSpec, DisplacementField,
    RigidRemoval, GRADIENT_LIMIT, GRADIENT_REJECT,
};
pub use sample::{
    add_noise, build_model, build_sample, crop_visibility, oracle_descriptor, random_rigid, BenchmarkSample, Crop,
    DeformedModel, PreparedPair, SampleMetadata, SampleSpec,
};
pub use shape::{
    apply_scaling_augmentation, generate_shape, generate_shape_with, icosphere, scale_mesh, scaling_factors,
    ShapeParams, SyntheticMesh,
};
pub use suite::{
    default_visibility_edges, generate_entries, generate_suite, load_sample, read_suite_index, suite_entries,
    write_suite, SampleEntry, SampleManifest, SuiteConfig, SuiteIndex, SuiteIndexEntry,
};
