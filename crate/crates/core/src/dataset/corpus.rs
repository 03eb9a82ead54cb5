//! Procedural toy shapes: boxes, cylinders and fused spheres.

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::primitives::{box_mesh, cylinder};
use crate::geometry::TriangleMesh;
use crate::seed::derive_seed;
use crate::spectral::{extract_isosurface, ScalarGrid3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    Box,
    Cylinder,
    FusedSpheres,
}

impl ToyKind {
    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Box => "box",
            ToyKind::Cylinder => "cylinder",
            ToyKind::FusedSpheres => "spheres",
        }
    }
}

fn tilt(mesh: TriangleMesh, rng: &mut ChaCha8Rng) -> TriangleMesh {
    let rot = Rotation3::from_euler_angles(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
    );
    mesh.map_vertices(|p| rot * p)
}

/// Union of two or three spheres, meshed from its exact distance field.
fn fused_spheres(rng: &mut ChaCha8Rng) -> Result<TriangleMesh> {
    let count = rng.random_range(2..=3);
    let balls: Vec<(Point3<f64>, f64)> = (0..count)
        .map(|_| {
            let c = Vector3::from_fn(|_, _| rng.random_range(-0.35..0.35));
            (Point3::from(c), rng.random_range(0.25..0.45))
        })
        .collect();
    let grid = ScalarGrid3::from_fn(64, |p| {
        balls
            .iter()
            .map(|(c, r)| (p - c).norm() - r)
            .fold(f64::INFINITY, f64::min)
    })?;
    extract_isosurface(&grid, 0.0)
}

pub fn toy_shape(kind: ToyKind, seed: u64) -> Result<TriangleMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match kind {
        ToyKind::Box => {
            let size = [
                rng.random_range(0.4..1.0),
                rng.random_range(0.4..1.0),
                rng.random_range(0.4..1.0),
            ];
            tilt(box_mesh(size), &mut rng)
        }
        ToyKind::Cylinder => {
            let (r, h) = (rng.random_range(0.2..0.5), rng.random_range(0.4..1.2));
            tilt(cylinder(r, h, 48), &mut rng)
        }
        ToyKind::FusedSpheres => fused_spheres(&mut rng)?,
    })
}

/// `count` shapes cycling through the three kinds, named `<kind>_<index>`.
pub fn toy_corpus(count: usize, seed: u64) -> Result<Vec<(String, TriangleMesh)>> {
    const KINDS: [ToyKind; 3] = [ToyKind::Box, ToyKind::Cylinder, ToyKind::FusedSpheres];
    (0..count)
        .map(|i| {
            let kind = KINDS[i % 3];
            let mesh = toy_shape(kind, derive_seed(seed, "toy", i as u64))?;
            Ok((format!("{}_{i:02}", kind.name()), mesh))
        })
        .collect()
}
