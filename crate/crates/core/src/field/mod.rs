//! The radiance field: dual-scale encoding, two MLP branches, fused heads.

pub mod checkpoint;
mod encoding;
mod network;

pub use encoding::{encode, encoded_dim, EncodingConfig};
pub use network::{
    activate_density, BoundField, FieldConfig, FieldOutput, FieldSample, RadianceField,
};
