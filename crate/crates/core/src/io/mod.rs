//! File formats.

pub mod affine;
pub mod nifti;
pub mod pgm;
pub mod report;

pub use affine::{format_affine, parse_affine, read_affine, write_affine};
pub use nifti::{
    read_nifti, read_scalar_nifti, read_vector_nifti, write_nifti, write_vector_nifti, Datatype,
    NiftiImage,
};
pub use pgm::write_pgm;
