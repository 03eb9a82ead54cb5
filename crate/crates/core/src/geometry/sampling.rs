use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cloud::OrientedPointCloud;
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

/// Queries are kept inside `[-QUERY_BOUND, QUERY_BOUND]^3`.
pub const QUERY_BOUND: f64 = 1.1;

/// Default broad-band standard deviation (normalized units).
pub const SIGMA_BROAD: f64 = 8.0;
/// Default near-surface standard deviation (normalized units).
pub const SIGMA_NEAR: f64 = 0.2;

const MAX_REDRAWS: usize = 1 << 16;

/// Area-weighted face picker over a mesh.
pub struct SurfaceSampler<'a> {
    mesh: &'a TriangleMesh,
    cumulative: Vec<f64>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        let mut total = 0.0;
        let cumulative: Vec<f64> = (0..mesh.triangles().len())
            .map(|f| {
                total += mesh.face_area(f);
                total
            })
            .collect();
        if !(total > 0.0) {
            return Err(Error::invalid("mesh has zero total area"));
        }
        Ok(Self { mesh, cumulative })
    }

    fn pick_face(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        // First face whose cumulative area exceeds u; zero-area faces are never chosen.
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    /// Draws `n` points with their host faces.
    pub fn sample(&self, n: usize, seed: u64) -> (OrientedPointCloud, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut faces = Vec::with_capacity(n);
        for _ in 0..n {
            let f = self.pick_face(&mut rng);
            let [a, b, c] = self.mesh.corners(f);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            let p = a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2);
            points.push(Point3::from(p));
            normals.push(self.mesh.face_normal(f).expect("positive-area face"));
            faces.push(f);
        }
        let cloud = OrientedPointCloud::new(points, normals).expect("unit face normals");
        (cloud, faces)
    }
}

/// Area-uniform surface samples with normals taken from the host face.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<OrientedPointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok(SurfaceSampler::new(mesh)?.sample(n, seed).0)
}

/// Two-Gaussian query sampler.
///
/// The first `n / 2` queries use standard deviation `sigma_broad`, the last
/// `n / 2` use `sigma_near`; each is a uniformly chosen surface point plus an
/// isotropic Gaussian offset. Draws leaving `[-1.1, 1.1]^3` are redrawn. The
/// box and the Gaussian both factor per axis, so redrawing each coordinate
/// independently samples exactly the truncated distribution.
pub fn sample_queries(
    surface: &OrientedPointCloud,
    n: usize,
    sigma_broad: f64,
    sigma_near: f64,
    seed: u64,
) -> Result<Vec<Point3<f64>>> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "query count must be positive and even, got {n}"
        )));
    }
    if surface.is_empty() {
        return Err(Error::invalid(
            "cannot sample queries around an empty surface",
        ));
    }
    if !(sigma_broad > 0.0 && sigma_near > 0.0) {
        return Err(Error::invalid("query standard deviations must be positive"));
    }
    if let Some(i) = surface.first_outside(QUERY_BOUND) {
        return Err(Error::invalid(format!(
            "surface point {i} lies outside the query domain"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = surface.points();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let sigma = if k < n / 2 { sigma_broad } else { sigma_near };
        let center = pts[rng.random_range(0..pts.len())];
        let mut q = Vector3::zeros();
        for axis in 0..3 {
            q[axis] = truncated_coordinate(&mut rng, center[axis], sigma)?;
        }
        out.push(Point3::from(q));
    }
    Ok(out)
}

fn truncated_coordinate(rng: &mut impl Rng, center: f64, sigma: f64) -> Result<f64> {
    for _ in 0..MAX_REDRAWS {
        let z: f64 = rng.sample(StandardNormal);
        let x = center + sigma * z;
        if x.abs() <= QUERY_BOUND {
            return Ok(x);
        }
    }
    Err(Error::invalid(format!(
        "could not place a query inside the domain around {center} with sigma {sigma}"
    )))
}
