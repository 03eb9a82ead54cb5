//! Spectral Poisson reconstruction and radial band limiting.
//!
//! Oriented normals are splatted onto a periodic lattice, the indicator
//! satisfying `laplacian(chi) = div(v)` is solved coefficient-wise in Fourier
//! space, and low-frequency variants are produced by zeroing every coefficient
//! whose integer wavevector is longer than a cutoff radius.

use std::f64::consts::PI;

use nalgebra::Point3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fft::{forward_real, inverse_to_real};
use super::grid::{ScalarGrid3, SpectrumGrid3, VectorGrid3};
use crate::error::{Error, Result};
use crate::geometry::OrientedPointCloud;

/// Default Gaussian smoothing width, in grid cells.
pub const DEFAULT_SMOOTHING: f64 = 2.0;

/// Upper end of the frequency band that observations are drawn from.
pub const MAX_BAND: f64 = 64.0;

/// Closed integer subbands tiling `[3, 64]`.
pub const SUBBANDS: [(u32, u32); 6] = [(3, 5), (5, 10), (10, 20), (20, 30), (30, 45), (45, 64)];

/// Closed band used for the extra, heavily corrupted observations.
pub const EXTRA_BAND: (u32, u32) = (3, 30);

/// Radial cutoff: coefficients with `|k| > frequency` are removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCutoff {
    pub frequency: f64,
    pub subband: Option<usize>,
}

impl FrequencyCutoff {
    pub fn new(frequency: f64) -> Result<Self> {
        if !(frequency >= 0.0 && frequency.is_finite()) {
            return Err(Error::invalid(format!(
                "cutoff frequency must be finite and non-negative, got {frequency}"
            )));
        }
        Ok(Self {
            frequency,
            subband: None,
        })
    }

    /// The Nyquist radius of a lattice: keeps the whole per-axis band.
    pub fn nyquist(resolution: usize) -> Self {
        Self {
            frequency: (resolution / 2) as f64,
            subband: None,
        }
    }
}

/// Uniform integer cutoff from one of the six fixed subbands.
pub fn sample_cutoff(subband_index: usize, seed: u64) -> Result<FrequencyCutoff> {
    let &(lo, hi) = SUBBANDS.get(subband_index).ok_or_else(|| {
        Error::invalid(format!(
            "subband index must be in 0..{}, got {subband_index}",
            SUBBANDS.len()
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(FrequencyCutoff {
        frequency: rng.random_range(lo..=hi) as f64,
        subband: Some(subband_index),
    })
}

/// Uniform integer cutoff from the extra corruption band `[3, 30]`.
pub fn sample_extra_cutoff(seed: u64) -> FrequencyCutoff {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FrequencyCutoff {
        frequency: rng.random_range(EXTRA_BAND.0..=EXTRA_BAND.1) as f64,
        subband: None,
    }
}

/// Distributes each normal to the eight surrounding cell centers with
/// trilinear weights (periodic wrap) and divides by the point count.
pub fn splat_normals(cloud: &OrientedPointCloud, resolution: usize) -> Result<VectorGrid3> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot splat an empty point cloud"));
    }
    if let Some(i) = cloud.first_outside(1.0) {
        return Err(Error::invalid(format!(
            "point {i} at {} lies outside [-1, 1]^3",
            cloud.points()[i]
        )));
    }
    let mut grid = VectorGrid3::zeros(resolution)?;
    let lattice = grid.lattice();
    let inv = 1.0 / cloud.len() as f64;
    let channels = grid.channels_mut();
    for (p, n) in cloud.points().iter().zip(cloud.normals()) {
        for (idx, w) in lattice.trilinear_stencil(p) {
            for axis in 0..3 {
                channels[axis][idx] += w * n[axis] * inv;
            }
        }
    }
    Ok(grid)
}

/// Spectral Gaussian low-pass for a smoothing width given in grid cells:
/// `exp(-(2 sigma |k| / r)^2 / 2)`.
fn smoothing_gain(sigma_cells: f64, radius_squared: f64, resolution: usize) -> f64 {
    let s = 2.0 * sigma_cells / resolution as f64;
    (-0.5 * s * s * radius_squared).exp()
}

/// Fourier coefficients of the indicator before any isolevel shift:
/// `chi(k) = g(k) * (i 2 pi k . v(k)) / (-|2 pi k|^2)`, `chi(0) = 0`.
///
/// Coefficients on a Nyquist plane are zeroed: the odd derivative multiplier
/// has no conjugate-symmetric value there, and keeping them would leave an
/// imaginary residue in the inverse transform.
pub fn poisson_spectrum(v: &VectorGrid3, smoothing_sigma: f64) -> Result<SpectrumGrid3> {
    if !(smoothing_sigma >= 0.0) {
        return Err(Error::invalid("smoothing sigma must be non-negative"));
    }
    let r = v.resolution();
    let spectra: Vec<Vec<Complex64>> = (0..3).map(|a| forward_real(v.channel(a), r)).collect();
    let mut out = SpectrumGrid3::new(r, vec![Complex64::default(); r * r * r])?;
    let half = (r / 2) as i64;
    for n in 0..r * r * r {
        let k = out.wavevector(n);
        if k == [0, 0, 0] || k.iter().any(|&c| c == -half) {
            continue;
        }
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        let divergence = Complex64::new(0.0, 2.0 * PI)
            * (spectra[0][n] * k[0] as f64
                + spectra[1][n] * k[1] as f64
                + spectra[2][n] * k[2] as f64);
        let gain = smoothing_gain(smoothing_sigma, k2, r);
        out.coefficients_mut()[n] = divergence * (gain / (-4.0 * PI * PI * k2));
    }
    Ok(out)
}

/// Zeroes every coefficient whose wavevector is longer than the cutoff; the
/// rest are copied unchanged.
///
/// Squared radii are integers, so the comparison allows a few ulps of slack:
/// a cutoff of `8 * sqrt(3)` must keep the `(8, 8, 8)` corner.
pub fn band_limit(spectrum: &SpectrumGrid3, cutoff: &FrequencyCutoff) -> SpectrumGrid3 {
    let f2 = cutoff.frequency * cutoff.frequency * (1.0 + 1e-12);
    let mut out = spectrum.clone();
    for n in 0..out.coefficients().len() {
        if out.radius_squared(n) as f64 > f2 {
            out.coefficients_mut()[n] = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Mean of the periodically interpolated field over `points`.
pub fn mean_at_points(grid: &ScalarGrid3, points: &[Point3<f64>]) -> f64 {
    points.iter().map(|p| grid.sample_periodic(p)).sum::<f64>() / points.len() as f64
}

/// Inverse transform followed by the isolevel shift: the returned field has
/// zero mean over `points`, so its zero level set passes through them on
/// average. Also returns the imaginary residue of the inverse transform.
pub fn occupancy_from_spectrum(
    spectrum: &SpectrumGrid3,
    points: &[Point3<f64>],
) -> Result<(ScalarGrid3, f64)> {
    let (grid, residue) = inverse_to_real(spectrum)?;
    let level = mean_at_points(&grid, points);
    Ok((grid.map(|v| v - level), residue))
}

/// Full spectral solve: splatted field to an isolevel-shifted indicator.
///
/// A vector field that is zero everywhere carries no surface and is rejected.
pub fn solve_poisson(
    v: &VectorGrid3,
    points: &[Point3<f64>],
    smoothing_sigma: f64,
) -> Result<ScalarGrid3> {
    if v.is_zero() {
        return Err(Error::DegenerateField(
            "splatted normal field is zero".into(),
        ));
    }
    if points.is_empty() {
        return Err(Error::invalid("isolevel needs at least one point"));
    }
    let spectrum = poisson_spectrum(v, smoothing_sigma)?;
    Ok(occupancy_from_spectrum(&spectrum, points)?.0)
}

/// Unshifted inverse of [`poisson_spectrum`]; linear in `v`.
pub fn poisson_field(v: &VectorGrid3, smoothing_sigma: f64) -> Result<ScalarGrid3> {
    Ok(inverse_to_real(&poisson_spectrum(v, smoothing_sigma)?)?.0)
}
