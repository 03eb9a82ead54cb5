use std::fs;
use std::path::Path;

use nalgebra::Point3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::io::write_atomic;

/// Smallest supported lattice resolution.
pub const MIN_RESOLUTION: usize = 16;

pub(crate) fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < MIN_RESOLUTION || !resolution.is_power_of_two() {
        return Err(Error::invalid(format!(
            "grid resolution must be a power of two >= {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    Ok(())
}

/// Cell-centered lattice over `[-1, 1]^3`, `x` fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub resolution: usize,
}

impl Lattice {
    pub fn new(resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        Ok(Self { resolution })
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let r = self.resolution;
        [index % r, (index / r) % r, index / (r * r)]
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let h = self.spacing();
        Point3::new(
            -1.0 + (i as f64 + 0.5) * h,
            -1.0 + (j as f64 + 0.5) * h,
            -1.0 + (k as f64 + 0.5) * h,
        )
    }

    /// All cell centers in storage order.
    pub fn cell_centers(&self) -> Vec<Point3<f64>> {
        (0..self.len())
            .map(|n| {
                let [i, j, k] = self.coords(n);
                self.cell_center(i, j, k)
            })
            .collect()
    }

    /// Continuous lattice coordinate of a position: cell centers sit on integers.
    pub fn continuous(&self, p: &Point3<f64>) -> [f64; 3] {
        let h = self.spacing();
        [
            (p.x + 1.0) / h - 0.5,
            (p.y + 1.0) / h - 0.5,
            (p.z + 1.0) / h - 0.5,
        ]
    }

    /// The eight periodic neighbours of `p` and their trilinear weights.
    pub fn trilinear_stencil(&self, p: &Point3<f64>) -> [(usize, f64); 8] {
        let r = self.resolution as i64;
        let u = self.continuous(p);
        let base = u.map(|c| c.floor());
        let frac = [u[0] - base[0], u[1] - base[1], u[2] - base[2]];
        let base = base.map(|c| c as i64);
        let mut out = [(0usize, 0.0f64); 8];
        for (corner, slot) in out.iter_mut().enumerate() {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for axis in 0..3 {
                let bit = (corner >> axis) & 1;
                idx[axis] = (base[axis] + bit as i64).rem_euclid(r) as usize;
                w *= if bit == 1 {
                    frac[axis]
                } else {
                    1.0 - frac[axis]
                };
            }
            *slot = (self.index(idx[0], idx[1], idx[2]), w);
        }
        out
    }
}

/// Real scalar field sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid3 {
    lattice: Lattice,
    values: Vec<f64>,
}

impl ScalarGrid3 {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        let lattice = Lattice::new(resolution)?;
        if values.len() != lattice.len() {
            return Err(Error::invalid(format!(
                "expected {} values for resolution {resolution}, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("grid value {i} is not finite")));
        }
        Ok(Self { lattice, values })
    }

    pub fn zeros(resolution: usize) -> Result<Self> {
        let lattice = Lattice::new(resolution)?;
        Ok(Self {
            lattice,
            values: vec![0.0; lattice.len()],
        })
    }

    /// Evaluates `f` at every cell center.
    pub fn from_fn(resolution: usize, f: impl Fn(&Point3<f64>) -> f64) -> Result<Self> {
        let lattice = Lattice::new(resolution)?;
        let values = lattice.cell_centers().iter().map(f).collect();
        Self::new(resolution, values)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn resolution(&self) -> usize {
        self.lattice.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.lattice.index(i, j, k)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            lattice: self.lattice,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Trilinear interpolation with periodic wrap-around, matching the
    /// periodic domain of the spectral solver.
    pub fn sample_periodic(&self, p: &Point3<f64>) -> f64 {
        self.lattice
            .trilinear_stencil(p)
            .iter()
            .map(|&(i, w)| self.values[i] * w)
            .sum()
    }

    /// Trilinear interpolation clamped to the outermost cell centers.
    pub fn sample_clamped(&self, p: &Point3<f64>) -> f64 {
        let r = self.lattice.resolution;
        let u = self
            .lattice
            .continuous(p)
            .map(|c| c.clamp(0.0, (r - 1) as f64));
        let base = u.map(|c| (c.floor() as usize).min(r - 2));
        let frac = [
            u[0] - base[0] as f64,
            u[1] - base[1] as f64,
            u[2] - base[2] as f64,
        ];
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for axis in 0..3 {
                let bit = (corner >> axis) & 1;
                idx[axis] = base[axis] + bit;
                w *= if bit == 1 {
                    frac[axis]
                } else {
                    1.0 - frac[axis]
                };
            }
            acc += w * self.get(idx[0], idx[1], idx[2]);
        }
        acc
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Three-channel vector field on the lattice (the splatted normals).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid3 {
    lattice: Lattice,
    channels: [Vec<f64>; 3],
}

impl VectorGrid3 {
    pub fn zeros(resolution: usize) -> Result<Self> {
        let lattice = Lattice::new(resolution)?;
        let n = lattice.len();
        Ok(Self {
            lattice,
            channels: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn resolution(&self) -> usize {
        self.lattice.resolution
    }

    pub fn channel(&self, axis: usize) -> &[f64] {
        &self.channels[axis]
    }

    pub(crate) fn channels_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.channels
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let n = self.lattice.index(i, j, k);
        [
            self.channels[0][n],
            self.channels[1][n],
            self.channels[2][n],
        ]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lattice: self.lattice,
            channels: self
                .channels
                .clone()
                .map(|c| c.into_iter().map(|v| v * s).collect()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.channels.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }
}

/// Complex Fourier coefficients of a lattice field in standard DFT layout:
/// storage index `n` along an axis holds wavenumber `n` for `n < r/2` and
/// `n - r` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid3 {
    lattice: Lattice,
    coefficients: Vec<Complex64>,
}

impl SpectrumGrid3 {
    pub fn new(resolution: usize, coefficients: Vec<Complex64>) -> Result<Self> {
        let lattice = Lattice::new(resolution)?;
        if coefficients.len() != lattice.len() {
            return Err(Error::invalid("spectrum length does not match resolution"));
        }
        Ok(Self {
            lattice,
            coefficients,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn resolution(&self) -> usize {
        self.lattice.resolution
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub(crate) fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    pub(crate) fn into_coefficients(self) -> Vec<Complex64> {
        self.coefficients
    }

    /// Signed wavenumber stored at index `n` along an axis.
    pub fn wavenumber(&self, n: usize) -> i64 {
        let r = self.lattice.resolution;
        if n < r / 2 {
            n as i64
        } else {
            n as i64 - r as i64
        }
    }

    /// Integer wavenumber vector of a storage index.
    pub fn wavevector(&self, index: usize) -> [i64; 3] {
        self.lattice.coords(index).map(|n| self.wavenumber(n))
    }

    /// Squared radial wavenumber `|k|^2` of a storage index.
    pub fn radius_squared(&self, index: usize) -> i64 {
        self.wavevector(index).iter().map(|k| k * k).sum()
    }

    /// Storage index of `-k` for the coefficient at `index`.
    pub fn conjugate_partner(&self, index: usize) -> usize {
        let r = self.lattice.resolution;
        let [i, j, k] = self.lattice.coords(index);
        self.lattice.index((r - i) % r, (r - j) % r, (r - k) % r)
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest relative violation of `X(-k) = conj(X(k))`.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let scale = self
            .coefficients
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        (0..self.coefficients.len())
            .map(|n| {
                (self.coefficients[self.conjugate_partner(n)] - self.coefficients[n].conj()).norm()
            })
            .fold(0.0, f64::max)
            / scale
    }
}

const GRID_MAGIC: &[u8; 4] = b"FCPG";
/// Dtype tag for little-endian `f32` payloads.
pub const DTYPE_F32: u32 = 1;
const GRID_HEADER_LEN: usize = 16;

/// Serializes a grid: `"FCPG"`, `u32` resolution, `u32` dtype tag, `u32`
/// reserved, then little-endian `f32` values, `x` fastest.
pub fn grid_bytes(grid: &ScalarGrid3) -> Vec<u8> {
    let mut out = Vec::with_capacity(GRID_HEADER_LEN + 4 * grid.values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(grid.resolution() as u32).to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in &grid.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn write_grid(path: &Path, grid: &ScalarGrid3) -> Result<()> {
    write_atomic(path, &grid_bytes(grid))
}

pub fn read_grid(path: &Path) -> Result<ScalarGrid3> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&bytes).map_err(|e| match e {
        Error::TruncatedFile { detail, .. } => Error::TruncatedFile {
            path: path.to_path_buf(),
            detail,
        },
        other => other,
    })
}

pub fn parse_grid(bytes: &[u8]) -> Result<ScalarGrid3> {
    let truncated = |detail: String| Error::TruncatedFile {
        path: Default::default(),
        detail,
    };
    if bytes.len() < GRID_HEADER_LEN {
        return Err(truncated(format!(
            "{} byte header is incomplete",
            bytes.len()
        )));
    }
    if &bytes[..4] != GRID_MAGIC {
        return Err(Error::format("grid", "missing FCPG magic"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let resolution = word(4) as usize;
    let dtype = word(8);
    if dtype != DTYPE_F32 {
        return Err(Error::format(
            "grid",
            format!("unsupported dtype tag {dtype}"),
        ));
    }
    check_resolution(resolution)?;
    let n = resolution.pow(3);
    let body = &bytes[GRID_HEADER_LEN..];
    if body.len() != 4 * n {
        return Err(truncated(format!(
            "expected {} payload bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ScalarGrid3::new(resolution, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_file_round_trip_and_truncation() {
        let grid = ScalarGrid3::from_fn(16, |p| p.x * 0.5 - p.y + p.z * p.z).unwrap();
        let bytes = grid_bytes(&grid);
        assert_eq!(&bytes[..4], b"FCPG");
        assert_eq!(bytes.len(), 16 + 4 * 16usize.pow(3));
        let back = parse_grid(&bytes).unwrap();
        for (a, b) in back.values().iter().zip(grid.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(matches!(
            parse_grid(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedFile { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(parse_grid(&bad).is_err());
    }

    #[test]
    fn resolution_must_be_power_of_two() {
        assert!(ScalarGrid3::zeros(8).is_err());
        assert!(ScalarGrid3::zeros(24).is_err());
        assert!(ScalarGrid3::zeros(32).is_ok());
    }

    #[test]
    fn interpolation_reproduces_linear_fields_inside() {
        let grid = ScalarGrid3::from_fn(32, |p| 2.0 * p.x - p.y + 0.5 * p.z).unwrap();
        let p = Point3::new(0.113, -0.42, 0.77);
        assert!((grid.sample_clamped(&p) - (2.0 * p.x - p.y + 0.5 * p.z)).abs() < 1e-12);
        assert!((grid.sample_periodic(&p) - (2.0 * p.x - p.y + 0.5 * p.z)).abs() < 1e-12);
    }

    #[test]
    fn wavenumber_layout() {
        let s = SpectrumGrid3::new(16, vec![Complex64::new(0.0, 0.0); 4096]).unwrap();
        assert_eq!(s.wavenumber(0), 0);
        assert_eq!(s.wavenumber(7), 7);
        assert_eq!(s.wavenumber(8), -8);
        assert_eq!(s.wavenumber(15), -1);
        let idx = s.lattice().index(1, 15, 8);
        assert_eq!(s.wavevector(idx), [1, -1, -8]);
        assert_eq!(s.wavevector(s.conjugate_partner(idx)), [-1, 1, -8]);
    }
}
