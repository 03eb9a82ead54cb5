//! Spectral Poisson reconstruction on periodic lattices and isosurfacing.

pub mod fft;
pub mod grid;
pub mod marching;
pub mod poisson;
pub mod reconstruct;

pub use grid::{read_grid, write_grid, Lattice, ScalarGrid3, SpectrumGrid3, VectorGrid3};
pub use marching::extract_isosurface;
pub use poisson::{
    band_limit, poisson_field, poisson_spectrum, sample_cutoff, sample_extra_cutoff, solve_poisson,
    splat_normals, FrequencyCutoff, DEFAULT_SMOOTHING, SUBBANDS,
};
pub use reconstruct::{reconstruct_band_limited, SpectralReconstruction};
