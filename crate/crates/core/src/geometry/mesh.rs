use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the cubic working domain `[-1, 1]^3`.
pub const DOMAIN_SIDE: f64 = 2.0;

/// Fraction of the domain side covered by the longest bounding-box side after
/// normalization.
pub const NORMALIZED_EXTENT: f64 = 0.9;

/// Indexed triangle surface.
///
/// Triangle indices always reference existing vertices. Whether every edge is
/// shared by exactly two consistently oriented triangles is recorded in
/// [`TriangleMesh::is_watertight`] rather than assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    watertight: bool,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v as usize >= n))
        {
            return Err(Error::invalid(format!(
                "triangle {i} references vertex {:?} but the mesh has {n} vertices",
                t
            )));
        }
        if let Some(i) = vertices
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        let watertight = edges_are_closed(&triangles);
        Ok(Self {
            vertices,
            triangles,
            watertight,
        })
    }

    /// Drops zero-area triangles and vertices no triangle references.
    pub fn cleaned(&self) -> Self {
        let kept: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .copied()
            .filter(|t| triangle_vector_area(&self.vertices, t).norm() > 0.0)
            .collect();
        let mut used = vec![false; self.vertices.len()];
        for t in &kept {
            for &v in t {
                used[v as usize] = true;
            }
        }
        // Surviving vertices keep their relative order.
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (i, p) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = vertices.len() as u32;
                vertices.push(*p);
            }
        }
        let triangles: Vec<[u32; 3]> = kept.iter().map(|t| t.map(|v| remap[v as usize])).collect();
        let watertight = edges_are_closed(&triangles);
        Self {
            vertices,
            triangles,
            watertight,
        }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn corners(&self, face: usize) -> [Point3<f64>; 3] {
        self.triangles[face].map(|v| self.vertices[v as usize])
    }

    /// Half the cross product of two edges; its direction follows the winding.
    pub fn vector_area(&self, face: usize) -> Vector3<f64> {
        triangle_vector_area(&self.vertices, &self.triangles[face])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.vector_area(face).norm()
    }

    /// Unit normal of a face, `None` for a zero-area face.
    pub fn face_normal(&self, face: usize) -> Option<Vector3<f64>> {
        self.vector_area(face).try_normalize(0.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounds of the referenced geometry, `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    /// Signed enclosed volume via the divergence theorem. Positive for an
    /// outward-oriented closed surface.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    /// Reverses the winding of every triangle.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            watertight: self.watertight,
        }
    }

    pub fn map_vertices(&self, f: impl FnMut(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            watertight: self.watertight,
        }
    }

    /// Concatenates two meshes without welding shared positions.
    pub fn merged(&self, other: &Self) -> Self {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|v| v + offset)));
        let watertight = edges_are_closed(&triangles);
        Self {
            vertices,
            triangles,
            watertight,
        }
    }
}

fn triangle_vector_area(vertices: &[Point3<f64>], t: &[u32; 3]) -> Vector3<f64> {
    let [a, b, c] = t.map(|v| vertices[v as usize]);
    (b - a).cross(&(c - a)) * 0.5
}

/// Every directed edge must be matched by exactly one opposite edge.
fn edges_are_closed(triangles: &[[u32; 3]]) -> bool {
    if triangles.is_empty() {
        return false;
    }
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(triangles.len() * 3);
    for &[a, b, c] in triangles {
        for e in [(a, b), (b, c), (c, a)] {
            *directed.entry(e).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
}

/// Maps original coordinates into the normalized domain:
/// `normalized = (original - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p - Point3::from(self.center)) * self.scale)
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords / self.scale) + Vector3::from(self.center)
    }

    /// Lengths scale by the same factor as positions.
    pub fn apply_length(&self, d: f64) -> f64 {
        d * self.scale
    }

    pub fn invert_length(&self, d: f64) -> f64 {
        d / self.scale
    }
}

/// Transform that centers the box `[lo, hi]` at the origin and scales its
/// longest side to `0.9 * 2`, so the content sits inside `[-1, 1]^3` with margin.
pub fn normalization_for_bounds(
    lo: &Point3<f64>,
    hi: &Point3<f64>,
) -> Result<NormalizationTransform> {
    let extent = (hi - lo).max();
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::invalid("bounding box has zero extent"));
    }
    let target = NORMALIZED_EXTENT * DOMAIN_SIDE;
    let center = nalgebra::center(lo, hi);
    // Already-normalized input maps to an exact identity.
    if center.coords.norm() <= 1e-12 && (extent - target).abs() <= 1e-12 * target {
        return Ok(NormalizationTransform::identity());
    }
    Ok(NormalizationTransform {
        center: center.coords.into(),
        scale: target / extent,
    })
}

/// Normalizes the mesh with [`normalization_for_bounds`] of its bounding box.
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizationTransform)> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot normalize a mesh without triangles"));
    }
    let (lo, hi) = mesh
        .bounding_box()
        .ok_or_else(|| Error::invalid("cannot normalize a mesh without vertices"))?;
    let transform = normalization_for_bounds(&lo, &hi)?;
    Ok((mesh.map_vertices(|p| transform.apply(p)), transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::box_mesh;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn offset_unit_cube_is_centered_with_side_1_8() {
        let cube = box_mesh([1.0, 1.0, 1.0]).map_vertices(|p| p + Vector3::new(5.0, 5.0, 5.0));
        let (out, t) = normalize_mesh(&cube).unwrap();
        let (lo, hi) = out.bounding_box().unwrap();
        for k in 0..3 {
            assert_close(lo[k], -0.9, 1e-12);
            assert_close(hi[k], 0.9, 1e-12);
        }
        assert_close(t.scale, 1.8, 1e-12);
    }

    #[test]
    fn elongated_box_keeps_aspect() {
        let (out, t) = normalize_mesh(&box_mesh([4.0, 1.0, 1.0])).unwrap();
        let (lo, hi) = out.bounding_box().unwrap();
        let side = hi - lo;
        assert_close(t.scale, 1.8 / 4.0, 1e-15);
        assert_close(side.x, 1.8, 1e-12);
        assert_close(side.y, 0.45, 1e-12);
        assert_close(side.z, 0.45, 1e-12);
    }

    #[test]
    fn normalizing_twice_is_identity() {
        let mesh = box_mesh([3.0, 2.0, 0.5]).map_vertices(|p| p + Vector3::new(-2.0, 7.0, 1.0));
        let (once, _) = normalize_mesh(&mesh).unwrap();
        let (twice, t) = normalize_mesh(&once).unwrap();
        assert_eq!(t, NormalizationTransform::identity());
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn transform_round_trips() {
        let t = NormalizationTransform {
            center: [1.5, -2.0, 1e3],
            scale: 0.037,
        };
        let p = Point3::new(12.25, -0.5, 998.0);
        let back = t.invert(&t.apply(&p));
        assert!((back - p).norm() <= 1e-9 * p.coords.norm());
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let empty = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(
            normalize_mesh(&empty),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn cleaning_drops_degenerate_faces_and_orphans() {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(9.0, 9.0, 9.0),
        ];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        let clean = mesh.cleaned();
        assert_eq!(clean.triangles().len(), 1);
        assert_eq!(clean.vertices().len(), 3);
    }

    #[test]
    fn box_is_watertight_and_outward() {
        let b = box_mesh([1.0, 2.0, 3.0]);
        assert!(b.is_watertight());
        assert_close(b.signed_volume(), 6.0, 1e-12);
        let open = TriangleMesh::new(b.vertices().to_vec(), b.triangles()[1..].to_vec()).unwrap();
        assert!(!open.is_watertight());
        assert_close(b.flipped().signed_volume(), -6.0, 1e-12);
    }
}
