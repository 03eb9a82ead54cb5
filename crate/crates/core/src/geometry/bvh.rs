//! Bounding volume hierarchy over triangles.
//!
//! Answers exact closest-point queries and evaluates the generalized winding
//! number with a far-field dipole approximation: a node whose triangles all
//! lie far from the query (relative to the node's radius) contributes the
//! solid angle of its summed vector area, nearer nodes are opened and leaves
//! are summed exactly.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;

/// Opening criterion: a node is treated as a dipole when the query is farther
/// than `ACCURACY * radius` from its area-weighted centroid.
const ACCURACY: f64 = 2.5;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::from([f64::INFINITY; 3]),
            max: Point3::from([f64::NEG_INFINITY; 3]),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `[start, start + count)` into `order`. Interior: `start` is the
    /// right child and the left child is the next node.
    start: u32,
    count: u32,
    vector_area: Vector3<f64>,
    centroid: Point3<f64>,
    radius: f64,
}

/// Closest point on the surface to a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Point3<f64>,
    pub distance_squared: f64,
    pub face: usize,
}

pub struct TriangleBvh {
    corners: Vec<[Point3<f64>; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let corners: Vec<[Point3<f64>; 3]> = (0..mesh.triangles().len())
            .map(|f| mesh.corners(f))
            .collect();
        let centers: Vec<Point3<f64>> = corners
            .iter()
            .map(|[a, b, c]| Point3::from((a.coords + b.coords + c.coords) / 3.0))
            .collect();
        let mut bvh = Self {
            order: (0..corners.len() as u32).collect(),
            corners,
            nodes: Vec::new(),
        };
        if !bvh.corners.is_empty() {
            let n = bvh.order.len();
            bvh.build(&centers, 0, n);
        }
        bvh
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn build(&mut self, centers: &[Point3<f64>], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut center_bounds = Aabb::empty();
        let mut vector_area = Vector3::zeros();
        let mut weighted = Vector3::zeros();
        let mut area = 0.0;
        for &t in &self.order[start..end] {
            let [a, b, c] = &self.corners[t as usize];
            for p in [a, b, c] {
                bounds.grow(p);
            }
            center_bounds.grow(&centers[t as usize]);
            let va = (b - a).cross(&(c - a)) * 0.5;
            let w = va.norm();
            vector_area += va;
            weighted += centers[t as usize].coords * w;
            area += w;
        }
        let centroid = if area > 0.0 {
            Point3::from(weighted / area)
        } else {
            nalgebra::center(&bounds.min, &bounds.max)
        };
        let radius = self.order[start..end]
            .iter()
            .flat_map(|&t| self.corners[t as usize].iter())
            .map(|p| (p - centroid).norm())
            .fold(0.0, f64::max);

        let index = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            start: start as u32,
            count: (end - start) as u32,
            vector_area,
            centroid,
            radius,
        });
        if end - start <= LEAF_SIZE {
            return index;
        }
        let extent = center_bounds.max - center_bounds.min;
        let axis = extent.imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centers[a as usize][axis]
                .total_cmp(&centers[b as usize][axis])
                .then(a.cmp(&b))
        });
        self.build(centers, start, mid);
        let right = self.build(centers, mid, end);
        self.nodes[index].start = right as u32;
        self.nodes[index].count = 0;
        index
    }

    /// Exact nearest surface point. `None` for an empty hierarchy.
    pub fn closest_point(&self, q: &Point3<f64>) -> Option<ClosestPoint> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = ClosestPoint {
            point: *q,
            distance_squared: f64::INFINITY,
            face: usize::MAX,
        };
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(q)));
        while let Some((ni, d2)) = stack.pop() {
            if d2 > best.distance_squared {
                continue;
            }
            let node = &self.nodes[ni];
            if node.count > 0 {
                let s = node.start as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    let [a, b, c] = &self.corners[t as usize];
                    let p = closest_point_on_triangle(q, a, b, c);
                    let d2 = (p - q).norm_squared();
                    if d2 < best.distance_squared
                        || (d2 == best.distance_squared && (t as usize) < best.face)
                    {
                        best = ClosestPoint {
                            point: p,
                            distance_squared: d2,
                            face: t as usize,
                        };
                    }
                }
            } else {
                let (l, r) = (ni + 1, node.start as usize);
                let dl = self.nodes[l].bounds.distance_squared(q);
                let dr = self.nodes[r].bounds.distance_squared(q);
                // Visit the nearer child first.
                if dl < dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        Some(best)
    }

    /// Generalized winding number: ~1 inside a closed outward surface, ~0 outside.
    pub fn winding_number(&self, q: &Point3<f64>) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let r = node.centroid - q;
            let dist = r.norm();
            if dist > ACCURACY * node.radius && dist > 0.0 {
                total += node.vector_area.dot(&r) / (dist * dist * dist);
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    let [a, b, c] = &self.corners[t as usize];
                    total += triangle_solid_angle(q, a, b, c);
                }
            } else {
                stack.push(node.start as usize);
                stack.push(ni + 1);
            }
        }
        total / (4.0 * PI)
    }
}

/// Signed solid angle subtended by a triangle (Van Oosterom & Strackee).
pub fn triangle_solid_angle(
    q: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    let (a, b, c) = (a - q, b - q, c - q);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let numerator = a.dot(&b.cross(&c));
    let denominator = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * numerator.atan2(denominator)
}

/// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{box_mesh, icosphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_distance(mesh: &TriangleMesh, q: &Point3<f64>) -> f64 {
        (0..mesh.triangles().len())
            .map(|f| {
                let [a, b, c] = mesh.corners(f);
                (closest_point_on_triangle(q, &a, &b, &c) - q).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn brute_force_winding(mesh: &TriangleMesh, q: &Point3<f64>) -> f64 {
        (0..mesh.triangles().len())
            .map(|f| {
                let [a, b, c] = mesh.corners(f);
                triangle_solid_angle(q, &a, &b, &c)
            })
            .sum::<f64>()
            / (4.0 * PI)
    }

    #[test]
    fn closest_point_matches_brute_force() {
        let mesh = icosphere(0.7, 3);
        let bvh = TriangleBvh::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let q = Point3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            let got = bvh.closest_point(&q).unwrap().distance_squared.sqrt();
            let want = brute_force_distance(&mesh, &q);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn winding_number_tracks_exact_sum() {
        let mesh = box_mesh([1.0, 0.6, 0.8])
            .merged(&icosphere(0.2, 3).map_vertices(|p| p + Vector3::new(2.0, 0.0, 0.0)));
        let bvh = TriangleBvh::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let q = Point3::new(
                rng.random_range(-1.5..2.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let exact = brute_force_winding(&mesh, &q);
            let fast = bvh.winding_number(&q);
            assert!((exact - fast).abs() < 0.05, "{exact} vs {fast} at {q}");
            assert_eq!(exact > 0.5, fast > 0.5);
        }
    }

    #[test]
    fn closest_point_regions() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        assert_eq!(
            closest_point_on_triangle(&Point3::new(-1.0, -1.0, 0.0), &a, &b, &c),
            a
        );
        assert_eq!(
            closest_point_on_triangle(&Point3::new(2.0, -0.5, 0.0), &a, &b, &c),
            b
        );
        let p = closest_point_on_triangle(&Point3::new(0.25, 0.25, 3.0), &a, &b, &c);
        assert!((p - Point3::new(0.25, 0.25, 0.0)).norm() < 1e-15);
        let e = closest_point_on_triangle(&Point3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((e - Point3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }
}
