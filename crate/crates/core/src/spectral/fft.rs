//! Separable 3D FFT over cubic lattices stored `x` fastest.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::grid::{ScalarGrid3, SpectrumGrid3};
use crate::error::Result;

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
    // The planner caches plans per length and direction.
    planner
        .lock()
        .expect("fft planner poisoned")
        .plan_fft(len, direction)
}

/// In-place unnormalized 3D transform of an `r^3` buffer.
pub fn fft3(data: &mut [Complex64], r: usize, direction: FftDirection) {
    assert_eq!(data.len(), r * r * r, "buffer does not match resolution");
    let fft = plan(r, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    // x lines are contiguous.
    fft.process_with_scratch(data, &mut scratch);

    // y lines: transpose each z-slab, transform, transpose back.
    let mut slab = vec![Complex64::default(); r * r];
    for z in 0..r {
        let base = z * r * r;
        for y in 0..r {
            for x in 0..r {
                slab[x * r + y] = data[base + y * r + x];
            }
        }
        fft.process_with_scratch(&mut slab, &mut scratch);
        for y in 0..r {
            for x in 0..r {
                data[base + y * r + x] = slab[x * r + y];
            }
        }
    }

    // z lines: gather one y-row of x values at a time, batched.
    let mut lines = vec![Complex64::default(); r * r];
    for y in 0..r {
        for z in 0..r {
            for x in 0..r {
                lines[x * r + z] = data[(z * r + y) * r + x];
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for z in 0..r {
            for x in 0..r {
                data[(z * r + y) * r + x] = lines[x * r + z];
            }
        }
    }
}

pub fn forward_real(values: &[f64], r: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft3(&mut data, r, FftDirection::Forward);
    data
}

pub fn spectrum_of(grid: &ScalarGrid3) -> SpectrumGrid3 {
    let r = grid.resolution();
    SpectrumGrid3::new(r, forward_real(grid.values(), r)).expect("resolution already validated")
}

/// Normalized inverse transform. Returns the real part and the largest
/// magnitude of the discarded imaginary part.
pub fn inverse_to_real(spectrum: &SpectrumGrid3) -> Result<(ScalarGrid3, f64)> {
    let r = spectrum.resolution();
    let mut data = spectrum.clone().into_coefficients();
    fft3(&mut data, r, FftDirection::Inverse);
    let norm = 1.0 / (r * r * r) as f64;
    let mut residue: f64 = 0.0;
    let values = data
        .iter()
        .map(|c| {
            residue = residue.max((c.im * norm).abs());
            c.re * norm
        })
        .collect();
    Ok((ScalarGrid3::new(r, values)?, residue))
}
