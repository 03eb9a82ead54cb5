//! Turning an observation into a signed-distance oracle in the model frame.

use std::collections::HashMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    normalization_for_bounds, normalize_mesh, sample_surface, MeshSdf, NormalizationTransform,
    OrientedPointCloud, SignedDistance, TriangleMesh,
};
use crate::seed::derive_seed;
use crate::spectral::{
    extract_isosurface, FrequencyCutoff, ScalarGrid3, SpectralReconstruction, DEFAULT_SMOOTHING,
};

/// Largest share of boundary edges an open mesh may have.
pub const MAX_BOUNDARY_FRACTION: f64 = 0.1;

/// A low-frequency observation in any supported representation.
#[derive(Debug, Clone)]
pub enum ObservationData {
    Mesh(TriangleMesh),
    /// Signed distances sampled on the `[-1, 1]^3` lattice, already in the
    /// model frame.
    Grid(ScalarGrid3),
    Points(OrientedPointCloud),
}

impl ObservationData {
    pub fn kind(&self) -> &'static str {
        match self {
            ObservationData::Mesh(_) => "mesh",
            ObservationData::Grid(_) => "grid",
            ObservationData::Points(_) => "points",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Rescale meshes and clouds into the model frame. Off when the input is
    /// already there.
    pub normalize: bool,
    /// Lattice used to reconstruct point clouds.
    pub reconstruction_resolution: usize,
    /// Surface samples that fitting queries are centered on.
    pub surface_points: usize,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            reconstruction_resolution: 128,
            surface_points: 16_384,
            seed: 0,
        }
    }
}

pub enum Oracle {
    Mesh(MeshSdf),
    Grid(ScalarGrid3),
}

impl SignedDistance for Oracle {
    fn signed_distance(&self, q: &Point3<f64>) -> f64 {
        match self {
            Oracle::Mesh(sdf) => sdf.signed_distance(q),
            Oracle::Grid(grid) => grid.sample_clamped(q),
        }
    }
}

/// An ingested observation: oracle and surface samples in the model frame,
/// plus the transform back to input coordinates.
pub struct ObservationInput {
    pub kind: &'static str,
    pub transform: NormalizationTransform,
    pub surface: OrientedPointCloud,
    pub oracle: Oracle,
}

fn ingest_err(e: impl std::fmt::Display) -> Error {
    Error::Ingest(e.to_string())
}

/// Rejects edge soups: any edge shared by more than two triangles, or too
/// many boundary edges for the inside test to mean anything.
fn check_surface(mesh: &TriangleMesh) -> Result<()> {
    if mesh.is_empty() {
        return Err(ingest_err("mesh has no triangles"));
    }
    if mesh.is_watertight() {
        return Ok(());
    }
    let mut uses: HashMap<(u32, u32), u32> = HashMap::new();
    for t in mesh.triangles() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *uses.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if uses.values().any(|&n| n > 2) {
        return Err(ingest_err("mesh has non-manifold edges"));
    }
    let boundary = uses.values().filter(|&&n| n == 1).count();
    let fraction = boundary as f64 / uses.len() as f64;
    if fraction > MAX_BOUNDARY_FRACTION {
        return Err(ingest_err(format!(
            "{:.0}% of mesh edges are open; inside and outside are undefined",
            100.0 * fraction
        )));
    }
    Ok(())
}

fn from_mesh(
    mesh: &TriangleMesh,
    transform: NormalizationTransform,
    config: &IngestConfig,
    kind: &'static str,
) -> Result<ObservationInput> {
    check_surface(mesh)?;
    let surface = sample_surface(
        mesh,
        config.surface_points,
        derive_seed(config.seed, "ingest-surface", 0),
    )
    .map_err(ingest_err)?;
    Ok(ObservationInput {
        kind,
        transform,
        surface,
        oracle: Oracle::Mesh(MeshSdf::new(mesh).map_err(ingest_err)?),
    })
}

pub fn ingest_observation(
    data: &ObservationData,
    config: &IngestConfig,
) -> Result<ObservationInput> {
    if config.surface_points == 0 {
        return Err(Error::invalid("surface_points must be positive"));
    }
    match data {
        ObservationData::Mesh(mesh) => {
            check_surface(mesh)?;
            let (mesh, transform) = if config.normalize {
                normalize_mesh(mesh).map_err(ingest_err)?
            } else {
                (mesh.clone(), NormalizationTransform::identity())
            };
            from_mesh(&mesh, transform, config, "mesh")
        }
        ObservationData::Grid(grid) => {
            let level = extract_isosurface(grid, 0.0).map_err(ingest_err)?;
            let surface = sample_surface(
                &level,
                config.surface_points,
                derive_seed(config.seed, "ingest-surface", 0),
            )
            .map_err(ingest_err)?;
            Ok(ObservationInput {
                kind: "grid",
                transform: NormalizationTransform::identity(),
                surface,
                oracle: Oracle::Grid(grid.clone()),
            })
        }
        ObservationData::Points(cloud) => {
            if cloud.is_empty() {
                return Err(ingest_err("point cloud is empty"));
            }
            let transform = if config.normalize {
                let pts = cloud.points();
                let (mut lo, mut hi) = (pts[0], pts[0]);
                for p in pts {
                    lo = lo.inf(p);
                    hi = hi.sup(p);
                }
                normalization_for_bounds(&lo, &hi).map_err(ingest_err)?
            } else {
                NormalizationTransform::identity()
            };
            let moved = OrientedPointCloud::new(
                cloud.points().iter().map(|p| transform.apply(p)).collect(),
                cloud.normals().to_vec(),
            )
            .map_err(ingest_err)?;
            let r = config.reconstruction_resolution;
            let mesh = SpectralReconstruction::new(&moved, r, DEFAULT_SMOOTHING)
                .and_then(|rec| rec.mesh(&FrequencyCutoff::nyquist(r)))
                .map_err(ingest_err)?;
            from_mesh(&mesh, transform, config, "points")
        }
    }
}
