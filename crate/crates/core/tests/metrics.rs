use fcp_core::evaluation::{chamfer, evaluate_pair, normal_consistency, ChamferOrder};
use fcp_core::geometry::kdtree::KdTree;
use fcp_core::geometry::primitives::{box_mesh, cylinder, icosphere, square_patch};
use fcp_core::geometry::{sample_surface, TriangleMesh};
use nalgebra::{Point3, Rotation3, Translation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn parallel_squares_match_the_analytic_offset() {
    let d = 0.1;
    let a = square_patch(1.0, 0.0, 1);
    let b = square_patch(1.0, d, 1);
    let l1 = chamfer(&a, &b, 20_000, ChamferOrder::L1, 5).unwrap();
    let l2 = chamfer(&a, &b, 20_000, ChamferOrder::L2, 5).unwrap();
    assert!(rel(l1, d) < 0.02, "L1 {l1}");
    assert!(rel(l2, d * d) < 0.02, "L2 {l2}");
}

/// Brute-force symmetric mean |cos| over nearest samples.
fn brute_nc(a: &TriangleMesh, b: &TriangleMesh, n: usize, seed: u64) -> f64 {
    let sa = sample_surface(a, n, seed).unwrap();
    let sb = sample_surface(b, n, seed).unwrap();
    let one_way = |x: &fcp_core::geometry::OrientedPointCloud,
                   y: &fcp_core::geometry::OrientedPointCloud| {
        let mut sum = 0.0;
        for (p, np) in x.points().iter().zip(x.normals()) {
            let mut best = (f64::INFINITY, 0usize);
            for (j, q) in y.points().iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best.0 {
                    best = (d, j);
                }
            }
            sum += np.dot(&y.normals()[best.1]).abs();
        }
        sum / x.len() as f64
    };
    0.5 * (one_way(&sa, &sb) + one_way(&sb, &sa))
}

#[test]
fn intersecting_planes_at_sixty_degrees() {
    let a = square_patch(1.0, 0.0, 2);
    let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), 60f64.to_radians());
    let b = a.map_vertices(|p| rot * p);
    let nc = normal_consistency(&a, &b, 1500, 2).unwrap();
    let oracle = brute_nc(&a, &b, 1500, 2);
    assert!(rel(nc, oracle) < 0.01, "{nc} vs {oracle}");
    assert!((nc - 0.5).abs() < 1e-9);
}

#[test]
fn random_meshes_score_perfectly_against_themselves() {
    let meshes = [
        icosphere(0.4, 2),
        box_mesh([0.3, 0.9, 0.5]),
        cylinder(0.3, 0.8, 24),
        square_patch(1.2, 0.1, 3),
        icosphere(0.7, 1).merged(&box_mesh([0.2, 0.2, 0.2])),
    ];
    for m in &meshes {
        let r = evaluate_pair(m, m, 3000, 17).unwrap();
        assert_eq!((r.cd_l1, r.cd_l2), (0.0, 0.0));
        assert!(r.nc >= 1.0 - 1e-6);
    }
}

#[test]
fn metrics_scale_and_move_as_expected() {
    let a = box_mesh([0.8, 0.5, 0.6]);
    let b = icosphere(0.45, 2);
    let base = evaluate_pair(&a, &b, 4000, 3).unwrap();

    let s = 1.7;
    let scale = |m: &TriangleMesh| m.map_vertices(|p| Point3::from(p.coords * s));
    let scaled = evaluate_pair(&scale(&a), &scale(&b), 4000, 3).unwrap();
    assert!(rel(scaled.cd_l1, s * base.cd_l1) < 1e-6);
    assert!(rel(scaled.cd_l2, s * s * base.cd_l2) < 1e-6);
    assert!(rel(scaled.nc, base.nc) < 1e-6);

    let rot = Rotation3::from_euler_angles(0.3, -1.1, 0.7);
    let shift = Translation3::new(0.2, -0.4, 0.15);
    let rigid = |m: &TriangleMesh| m.map_vertices(|p| shift * (rot * p));
    let moved = evaluate_pair(&rigid(&a), &rigid(&b), 4000, 3).unwrap();
    assert!(rel(moved.cd_l1, base.cd_l1) < 1e-6);
    assert!(rel(moved.cd_l2, base.cd_l2) < 1e-6);
    assert!(rel(moved.nc, base.nc) < 1e-6);
}

#[test]
fn vertex_noise_staircase_raises_chamfer() {
    let gt = icosphere(0.5, 3);
    let mut last = 0.0;
    for (level, amp) in [0.0, 0.01, 0.03].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(level as u64);
        let noisy = gt.map_vertices(|p| {
            let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            p + Vector3::from(z) * amp
        });
        let l1 = chamfer(&noisy, &gt, 5000, ChamferOrder::L1, 8).unwrap();
        assert!(l1 >= last, "level {level}: {l1} < {last}");
        last = l1;
    }
}

#[test]
fn kd_tree_agrees_with_brute_force_on_samples() {
    let cloud = sample_surface(&icosphere(0.5, 2), 500, 1).unwrap();
    let tree = KdTree::new(cloud.points());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let q = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let (_, d2) = tree.nearest(&q).unwrap();
        let brute = cloud
            .points()
            .iter()
            .map(|p| (p - q).norm_squared())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(d2, brute);
    }
}
