//! Full-frequency decoding on a lattice and surface extraction.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{NormalizationTransform, TriangleMesh};
use crate::neural::DecoderParams;
use crate::spectral::{extract_isosurface, Lattice, ScalarGrid3};

const CHUNK: usize = 8192;

/// `f_F(q, e_F)` at every cell center of an `r^3` lattice.
pub fn decode_grid(
    params: &DecoderParams<f32>,
    e_full: ArrayView1<f32>,
    resolution: usize,
) -> Result<ScalarGrid3> {
    if e_full.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("e_F contains non-finite values"));
    }
    let lattice = Lattice::new(resolution)?;
    let centers = lattice.cell_centers();
    let chunks: Vec<Vec<f32>> = centers
        .par_chunks(CHUNK)
        .map(|chunk| {
            let q = Array2::from_shape_fn((chunk.len(), 3), |(i, j)| chunk[i][j] as f32);
            params.forward_full(e_full, q.view()).map(|s| s.to_vec())
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = chunks.into_iter().flatten().map(|v| v as f64).collect();
    ScalarGrid3::new(resolution, values)
}

/// Decodes `e_F`, extracts the zero level and maps it back through `transform`.
pub fn sharpen(
    params: &DecoderParams<f32>,
    e_full: ArrayView1<f32>,
    resolution: usize,
    transform: &NormalizationTransform,
) -> Result<TriangleMesh> {
    let grid = decode_grid(params, e_full, resolution)?;
    let mesh = extract_isosurface(&grid, 0.0)?;
    Ok(mesh.map_vertices(|p| transform.invert(p)))
}
