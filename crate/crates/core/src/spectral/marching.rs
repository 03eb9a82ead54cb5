//! Marching cubes over cell-centered lattices.
//!
//! Each cube's surface is assembled from per-face segments instead of a
//! 256-case lookup table. On a face with exactly two opposite corners inside,
//! the face-center average decides whether the inside corners connect. Both
//! cubes sharing a face see the same four values, so neighbouring cubes always
//! agree and the output is closed wherever the level set stays away from the
//! lattice boundary. The decision is also symmetric under negating the field
//! and the isolevel, which yields the same triangles with reversed winding.
//!
//! Segments are oriented so that every surface loop runs counter-clockwise
//! around the normal pointing from the inside (`value < isolevel`) to the
//! outside; for signed distances and shifted indicators that is the outward
//! normal.

use std::collections::HashMap;

use nalgebra::Point3;

use super::grid::ScalarGrid3;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

/// Cube faces as corner cycles, counter-clockwise seen from outside the cube.
/// Corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2], // -x
    [1, 3, 7, 5], // +x
    [0, 1, 5, 4], // -y
    [2, 6, 7, 3], // +y
    [0, 2, 3, 1], // -z
    [4, 5, 7, 6], // +z
];

/// Local edge id of the cube edge joining two adjacent corners:
/// `4 * axis + (lower corner with the axis bit removed, compacted)`.
fn local_edge(a: usize, b: usize) -> (usize, usize, usize) {
    let axis = (a ^ b).trailing_zeros() as usize;
    let lower = a.min(b);
    let rest = match axis {
        0 => lower >> 1,
        1 => (lower & 1) | ((lower >> 2) << 1),
        _ => lower & 3,
    };
    (4 * axis + rest, lower, axis)
}

/// Bitmask of the two faces (indices into `FACES`) containing each local edge.
fn edge_face_masks() -> [u8; 12] {
    let mut masks = [0u8; 12];
    for (f, face) in FACES.iter().enumerate() {
        for m in 0..4 {
            masks[local_edge(face[m], face[(m + 1) % 4]).0] |= 1 << f;
        }
    }
    masks
}

struct Crossing {
    edge: usize,
    /// True when walking from an inside corner to an outside corner.
    leaving: bool,
}

/// Extracts `{ value = isolevel }` as a triangle mesh in domain coordinates.
pub fn extract_isosurface(grid: &ScalarGrid3, isolevel: f64) -> Result<TriangleMesh> {
    if !isolevel.is_finite() {
        return Err(Error::invalid("isolevel must be finite"));
    }
    let lattice = grid.lattice();
    let r = lattice.resolution;
    let h = lattice.spacing();
    let values = grid.values();

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut vertex_of_edge: HashMap<usize, u32> = HashMap::new();

    let face_mask = edge_face_masks();
    let mut corner_index = [0usize; 8];
    let mut corner_value = [0f64; 8];
    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut inside_mask = 0u8;
                for c in 0..8 {
                    let idx = lattice.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    corner_index[c] = idx;
                    corner_value[c] = values[idx];
                    if values[idx] < isolevel {
                        inside_mask |= 1 << c;
                    }
                }
                if inside_mask == 0 || inside_mask == 0xff {
                    continue;
                }
                let inside = |c: usize| inside_mask & (1 << c) != 0;

                // Vertices on active edges, created in local edge order.
                let mut local_vertex = [u32::MAX; 12];
                let mut global_edge = [usize::MAX; 12];
                for a in 0..8 {
                    for axis in 0..3 {
                        let b = a | (1 << axis);
                        if b == a || inside(a) == inside(b) {
                            continue;
                        }
                        let (edge, lower, axis) = local_edge(a, b);
                        let gid = 3 * corner_index[lower] + axis;
                        global_edge[edge] = gid;
                        let (va, vb) = (corner_value[a], corner_value[b]);
                        local_vertex[edge] = *vertex_of_edge.entry(gid).or_insert_with(|| {
                            let t = (isolevel - va) / (vb - va);
                            let mut p = lattice.cell_center(
                                i + (a & 1),
                                j + ((a >> 1) & 1),
                                k + ((a >> 2) & 1),
                            );
                            p[axis] += t * h;
                            vertices.push(p);
                            (vertices.len() - 1) as u32
                        });
                    }
                }

                // Oriented segments: next[from] = to.
                let mut next = [usize::MAX; 12];
                let mut crossings: Vec<Crossing> = Vec::with_capacity(4);
                for face in &FACES {
                    crossings.clear();
                    for m in 0..4 {
                        let (a, b) = (face[m], face[(m + 1) % 4]);
                        if inside(a) != inside(b) {
                            crossings.push(Crossing {
                                edge: local_edge(a, b).0,
                                leaving: inside(a),
                            });
                        }
                    }
                    match crossings.len() {
                        0 => {}
                        2 => {
                            let (from, to) = if crossings[0].leaving { (1, 0) } else { (0, 1) };
                            next[crossings[from].edge] = crossings[to].edge;
                        }
                        4 => {
                            let center: f64 =
                                face.iter().map(|&c| corner_value[c]).sum::<f64>() / 4.0;
                            let connect_inside = center < isolevel;
                            for m in 0..4 {
                                let here = &crossings[m];
                                let after = &crossings[(m + 1) % 4];
                                let before = &crossings[(m + 3) % 4];
                                if !here.leaving {
                                    // Entering: pair with the adjacent leaving crossing.
                                    let partner = if connect_inside { before } else { after };
                                    next[here.edge] = partner.edge;
                                }
                            }
                        }
                        _ => unreachable!("a square face has an even number of sign changes"),
                    }
                }

                // Walk loops and triangulate each one. A fan diagonal joining
                // two vertices on a common cube face could coincide with the
                // neighbouring cube's diagonal, so such anchors are skipped;
                // when every anchor is blocked the loop gets a center vertex.
                let mut visited = [false; 12];
                for start in 0..12 {
                    if next[start] == usize::MAX || visited[start] {
                        continue;
                    }
                    let mut cycle = Vec::with_capacity(12);
                    let mut e = start;
                    while !visited[e] {
                        visited[e] = true;
                        cycle.push(e);
                        e = next[e];
                    }
                    let len = cycle.len();
                    let anchor = (0..len)
                        .filter(|&m| {
                            (2..len - 1)
                                .all(|d| face_mask[cycle[m]] & face_mask[cycle[(m + d) % len]] == 0)
                        })
                        .min_by_key(|&m| global_edge[cycle[m]]);
                    match anchor {
                        Some(anchor) => {
                            cycle.rotate_left(anchor);
                            for m in 1..len - 1 {
                                triangles.push([
                                    local_vertex[cycle[0]],
                                    local_vertex[cycle[m]],
                                    local_vertex[cycle[m + 1]],
                                ]);
                            }
                        }
                        None => {
                            // Summed in id order so reversed loops agree bitwise.
                            let mut ids: Vec<u32> =
                                cycle.iter().map(|&e| local_vertex[e]).collect();
                            ids.sort_unstable();
                            let sum = ids.iter().fold(Point3::origin(), |acc, &v| {
                                acc + vertices[v as usize].coords
                            });
                            vertices.push(sum / len as f64);
                            let center = (vertices.len() - 1) as u32;
                            for m in 0..len {
                                triangles.push([
                                    center,
                                    local_vertex[cycle[m]],
                                    local_vertex[cycle[(m + 1) % len]],
                                ]);
                            }
                        }
                    }
                }
            }
        }
    }
    if triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::Lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_grid(r: usize, radius: f64) -> ScalarGrid3 {
        ScalarGrid3::from_fn(r, |p| p.coords.norm() - radius).unwrap()
    }

    #[test]
    fn local_edges_are_a_bijection() {
        let mut seen = [false; 12];
        for a in 0..8 {
            for axis in 0..3 {
                let b = a | (1 << axis);
                if b != a {
                    let (e, lower, ax) = local_edge(a, b);
                    assert_eq!((lower, ax), (a, axis));
                    assert!(!seen[e]);
                    seen[e] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn sphere_vertices_lie_near_radius() {
        let r = 64;
        let mesh = extract_isosurface(&sphere_grid(r, 0.5), 0.0).unwrap();
        let tol = 2.0 * 3f64.sqrt() / r as f64;
        for v in mesh.vertices() {
            assert!((v.coords.norm() - 0.5).abs() <= tol);
        }
        assert!(mesh.is_watertight());
        // Outward orientation: positive enclosed volume close to the sphere's.
        let vol = mesh.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!((vol - exact).abs() < 0.02 * exact, "{vol} vs {exact}");
    }

    #[test]
    fn constant_grid_has_no_surface() {
        let grid = ScalarGrid3::from_fn(16, |_| 1.0).unwrap();
        assert!(matches!(
            extract_isosurface(&grid, 0.0),
            Err(Error::EmptySurface)
        ));
    }

    #[test]
    fn negation_flips_orientation_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let grid =
            ScalarGrid3::new(16, (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = extract_isosurface(&grid, 0.1).unwrap();
        let b = extract_isosurface(&grid.map(|v| -v), -0.1).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        let canonical = |m: &TriangleMesh| {
            let mut t: Vec<[u32; 3]> = m
                .triangles()
                .iter()
                .map(|&t| {
                    let r = (0..3).min_by_key(|&i| t[i]).unwrap();
                    [t[r], t[(r + 1) % 3], t[(r + 2) % 3]]
                })
                .collect();
            t.sort_unstable();
            t
        };
        assert_eq!(canonical(&a.flipped()), canonical(&b));
    }

    #[test]
    fn random_fields_are_closed_away_from_the_boundary() {
        // Force the boundary shell outside so every component closes.
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lattice = Lattice::new(16).unwrap();
            let values = lattice
                .cell_centers()
                .iter()
                .map(|p| {
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    if p.iter().any(|c| c.abs() > 0.85) {
                        1.0
                    } else {
                        noise
                    }
                })
                .collect();
            let grid = ScalarGrid3::new(16, values).unwrap();
            let mesh = extract_isosurface(&grid, 0.0).unwrap();
            assert!(mesh.is_watertight(), "seed {seed}");
        }
    }
}
