//! Point cloud to band-limited mesh.

use nalgebra::Point3;

use super::grid::{ScalarGrid3, SpectrumGrid3};
use super::marching::extract_isosurface;
use super::poisson::{
    band_limit, occupancy_from_spectrum, poisson_spectrum, splat_normals, FrequencyCutoff,
};
use crate::error::{Error, Result};
use crate::geometry::{OrientedPointCloud, TriangleMesh};

/// Full-band Poisson spectrum of one oriented point cloud. Truncating it at
/// different cutoffs shares a single forward solve.
#[derive(Debug, Clone)]
pub struct SpectralReconstruction {
    spectrum: SpectrumGrid3,
    points: Vec<Point3<f64>>,
}

impl SpectralReconstruction {
    pub fn new(
        cloud: &OrientedPointCloud,
        resolution: usize,
        smoothing_sigma: f64,
    ) -> Result<Self> {
        let v = splat_normals(cloud, resolution)?;
        if v.is_zero() {
            return Err(Error::DegenerateField(
                "splatted normal field is zero".into(),
            ));
        }
        Ok(Self {
            spectrum: poisson_spectrum(&v, smoothing_sigma)?,
            points: cloud.points().to_vec(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.spectrum.resolution()
    }

    pub fn spectrum(&self) -> &SpectrumGrid3 {
        &self.spectrum
    }

    /// Shifted indicator truncated at `cutoff`; negative inside.
    pub fn occupancy(&self, cutoff: &FrequencyCutoff) -> Result<ScalarGrid3> {
        let limited = band_limit(&self.spectrum, cutoff);
        Ok(occupancy_from_spectrum(&limited, &self.points)?.0)
    }

    /// Zero level set of [`Self::occupancy`].
    pub fn mesh(&self, cutoff: &FrequencyCutoff) -> Result<TriangleMesh> {
        extract_isosurface(&self.occupancy(cutoff)?, 0.0)
    }
}

/// One-shot reconstruction of `cloud` truncated at `cutoff`.
pub fn reconstruct_band_limited(
    cloud: &OrientedPointCloud,
    resolution: usize,
    cutoff: &FrequencyCutoff,
) -> Result<TriangleMesh> {
    SpectralReconstruction::new(cloud, resolution, super::poisson::DEFAULT_SMOOTHING)?.mesh(cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::icosphere;
    use crate::geometry::sample_surface;

    fn sphere_cloud(radius: f64, n: usize) -> OrientedPointCloud {
        sample_surface(&icosphere(radius, 5), n, 3).unwrap()
    }

    #[test]
    fn sphere_reconstructs_at_its_radius() {
        let cloud = sphere_cloud(0.5, 100_000);
        let rec = SpectralReconstruction::new(&cloud, 128, 2.0).unwrap();
        let mesh = rec.mesh(&FrequencyCutoff::nyquist(128)).unwrap();
        assert!(mesh.is_watertight());
        let n = mesh.vertices().len() as f64;
        let mean = mesh.vertices().iter().map(|v| v.coords.norm()).sum::<f64>() / n;
        assert!((mean - 0.5).abs() <= 0.02, "mean radius {mean}");
        assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn low_cutoff_loses_detail_but_keeps_the_blob() {
        let cloud = sphere_cloud(0.5, 20_000);
        let rec = SpectralReconstruction::new(&cloud, 64, 2.0).unwrap();
        let low = rec.mesh(&FrequencyCutoff::new(3.0).unwrap()).unwrap();
        let high = rec.mesh(&FrequencyCutoff::nyquist(64)).unwrap();
        assert!(low.is_watertight() && high.is_watertight());
        // A sphere is nearly band-limited, so both stay round.
        for m in [&low, &high] {
            let n = m.vertices().len() as f64;
            let mean = m.vertices().iter().map(|v| v.coords.norm()).sum::<f64>() / n;
            assert!((mean - 0.5).abs() < 0.1, "{mean}");
        }
    }

    #[test]
    fn empty_cloud_is_degenerate() {
        let empty = OrientedPointCloud::new(vec![], vec![]).unwrap();
        assert!(SpectralReconstruction::new(&empty, 16, 2.0).is_err());
    }
}
