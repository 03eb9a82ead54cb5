use nalgebra::Point3;
use rayon::prelude::*;

use super::bvh::TriangleBvh;
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

/// Anything that reports a signed distance (negative inside) at a point.
pub trait SignedDistance: Sync {
    fn signed_distance(&self, q: &Point3<f64>) -> f64;

    fn signed_distances(&self, queries: &[Point3<f64>]) -> Vec<f64> {
        queries
            .par_iter()
            .map(|q| self.signed_distance(q))
            .collect()
    }
}

/// Signed-distance oracle for a triangle mesh.
///
/// Magnitude is the exact distance to the nearest triangle; the sign is
/// negative where the generalized winding number exceeds one half, which
/// tolerates small holes.
pub struct MeshSdf {
    bvh: TriangleBvh,
}

impl MeshSdf {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::invalid("signed distance needs a non-empty mesh"));
        }
        Ok(Self {
            bvh: TriangleBvh::new(mesh),
        })
    }

    pub fn distance(&self, q: &Point3<f64>) -> f64 {
        self.bvh
            .closest_point(q)
            .expect("non-empty hierarchy")
            .distance_squared
            .sqrt()
    }

    pub fn winding_number(&self, q: &Point3<f64>) -> f64 {
        self.bvh.winding_number(q)
    }

    pub fn is_inside(&self, q: &Point3<f64>) -> bool {
        self.winding_number(q) > 0.5
    }
}

impl SignedDistance for MeshSdf {
    fn signed_distance(&self, q: &Point3<f64>) -> f64 {
        let d = self.distance(q);
        if d == 0.0 {
            0.0
        } else if self.is_inside(q) {
            -d
        } else {
            d
        }
    }
}

/// One-off signed distance. Build a [`MeshSdf`] when querying repeatedly.
pub fn signed_distance(mesh: &TriangleMesh, query: &Point3<f64>) -> Result<f64> {
    Ok(MeshSdf::new(mesh)?.signed_distance(query))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bvh::closest_point_on_triangle;
    use crate::geometry::primitives::{box_mesh, icosphere};
    use crate::geometry::sampling::sample_surface;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sphere_center_and_exterior() {
        let mesh = icosphere(1.0, 4);
        let center = signed_distance(&mesh, &Point3::origin()).unwrap();
        // Inscribed faces sit slightly inside the unit sphere.
        assert!(center < 0.0 && (center + 1.0).abs() < 5e-3, "{center}");

        let q = Point3::new(2.0, 0.0, 0.0);
        let outside = signed_distance(&mesh, &q).unwrap();
        let brute = (0..mesh.triangles().len())
            .map(|f| {
                let [a, b, c] = mesh.corners(f);
                (closest_point_on_triangle(&q, &a, &b, &c) - q).norm()
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(outside, brute);
        assert!((outside - 1.0).abs() < 5e-3);
    }

    #[test]
    fn vertex_query_is_exactly_zero() {
        let mesh = icosphere(1.0, 2);
        let v = mesh.vertices()[17];
        let d = signed_distance(&mesh, &v).unwrap();
        assert_eq!(d, 0.0);
        assert!(d.is_sign_positive());
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let empty = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(MeshSdf::new(&empty).is_err());
    }

    /// Ray parity against every triangle: independent inside/outside oracle.
    fn ray_parity_inside(mesh: &TriangleMesh, q: &Point3<f64>, dir: &Vector3<f64>) -> bool {
        let mut hits = 0;
        for f in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.corners(f);
            let e1 = b - a;
            let e2 = c - a;
            let h = dir.cross(&e2);
            let det = e1.dot(&h);
            if det.abs() < 1e-14 {
                continue;
            }
            let s = q - a;
            let u = s.dot(&h) / det;
            let qv = s.cross(&e1);
            let v = dir.dot(&qv) / det;
            let t = e2.dot(&qv) / det;
            if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
                hits += 1;
            }
        }
        hits % 2 == 1
    }

    #[test]
    fn winding_sign_agrees_with_ray_parity() {
        // Two disjoint closed parts.
        let mesh = box_mesh([1.2, 0.7, 0.9])
            .merged(&icosphere(0.3, 3).map_vertices(|p| p + Vector3::new(1.0, 0.5, 0.1)));
        assert!(mesh.is_watertight());
        let sdf = MeshSdf::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        // An irrational-ish direction avoids grazing edges.
        let dir = Vector3::new(0.5772, 0.3137, 0.7213).normalize();
        let mut disagreements = 0;
        for _ in 0..1000 {
            let q = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if sdf.is_inside(&q) != ray_parity_inside(&mesh, &q, &dir) {
                assert!(sdf.distance(&q) < 1e-6);
                disagreements += 1;
            }
        }
        assert!(disagreements <= 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn distance_bounded_by_surface_samples(x in -1.2f64..1.2, y in -1.2f64..1.2, z in -1.2f64..1.2) {
            let mesh = box_mesh([1.0, 0.5, 0.8]);
            let sdf = MeshSdf::new(&mesh).unwrap();
            let cloud = sample_surface(&mesh, 256, 3).unwrap();
            let q = Point3::new(x, y, z);
            let nearest_sample = cloud.points().iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(sdf.signed_distance(&q).abs() <= nearest_sample + 1e-12);
        }
    }
}
