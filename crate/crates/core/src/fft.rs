//! Centered, unitary FFTs.
//!
//! Index `floor(n/2)` on each axis is the origin in both domains: a delta at
//! the grid center transforms to a flat spectrum. Both directions carry a
//! `1/sqrt(N)` scale, so `inverse(forward(x)) = x` exactly and the adjoint of
//! the forward transform is the inverse transform.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;
use crate::volume::ComplexVolume;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        }
    }
}

/// Process-wide plan cache; rustfft plans are immutable and thread-safe.
fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().unwrap();
    cache
        .entry((n, dir == Direction::Forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match dir {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Inverse => planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

/// Circular shift of all three axes at once. `to_origin` moves the center
/// sample to index 0 (ifftshift); otherwise index 0 moves to the center
/// (fftshift). `scale` is folded into the copy.
fn shift3(
    src: &[Complex64],
    dst: &mut [Complex64],
    dims: [usize; 3],
    to_origin: bool,
    scale: f64,
) {
    let [nx, ny, nz] = dims;
    let shift = |n: usize, i: usize| -> usize {
        let c = n / 2;
        if to_origin {
            (i + c) % n
        } else {
            (i + n - c) % n
        }
    };
    let sx = nx / 2; // x handled by two contiguous copies below
    par::for_each_chunk_mut(dst, nx, |row, out| {
        let y = row % ny;
        let z = row / ny;
        let src_row = nx * (shift(ny, y) + ny * shift(nz, z));
        // out[x] = src[src_row + shift(nx, x)] * scale, written as two
        // contiguous segments of the rotated row.
        let split = if to_origin { nx - sx } else { sx };
        let rot = if to_origin { sx } else { nx - sx };
        for (o, s) in out[..split].iter_mut().zip(&src[src_row + rot..src_row + nx]) {
            *o = s * scale;
        }
        for (o, s) in out[split..].iter_mut().zip(&src[src_row..src_row + rot]) {
            *o = s * scale;
        }
    });
}

/// 1D FFT along axis 0 (contiguous lanes), in place, unnormalized.
fn fft_axis0(data: &mut [Complex64], nx: usize, dir: Direction) {
    if nx == 1 {
        return;
    }
    let fft = plan(nx, dir);
    let slab = nx * 64; // 64 lanes per task
    par::for_each_chunk_mut(data, slab, |_, chunk| {
        let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
        for lane in chunk.chunks_mut(nx) {
            fft.process_with_scratch(lane, &mut scratch);
        }
    });
}

/// Centered unitary 3D FFT, in place.
pub fn fft3_centered_inplace(data: &mut Vec<Complex64>, dims: [usize; 3], dir: Direction) {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    assert_eq!(data.len(), n, "data length does not match dims");

    let mut tmp = vec![Complex64::ZERO; n];
    // Move centers to the origin.
    shift3(data, &mut tmp, dims, true, 1.0);
    std::mem::swap(data, &mut tmp);

    // Axis 0: contiguous lanes.
    fft_axis0(data, nx, dir);

    // Axis 1: lanes with stride nx inside each z-slab.
    if ny > 1 {
        let fft = plan(ny, dir);
        par::for_each_chunk_mut(data, nx * ny, |_, slab| {
            let mut lane = vec![Complex64::ZERO; ny];
            let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
            for x in 0..nx {
                for y in 0..ny {
                    lane[y] = slab[x + nx * y];
                }
                fft.process_with_scratch(&mut lane, &mut scratch);
                for y in 0..ny {
                    slab[x + nx * y] = lane[y];
                }
            }
        });
    }

    // Axis 2: gather z-lanes into a lane-major scratch, transform, scatter.
    if nz > 1 {
        let fft = plan(nz, dir);
        {
            let src = &*data;
            par::for_each_chunk_mut(&mut tmp, nz, |lane, buf| {
                // lane = x + nx*y
                let o = lane;
                let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
                for (z, v) in buf.iter_mut().enumerate() {
                    *v = src[o + z * nx * ny];
                }
                fft.process_with_scratch(buf, &mut scratch);
            });
        }
        let src = &tmp;
        par::for_each_chunk_mut(data, nx * ny, |z, slab| {
            for (xy, v) in slab.iter_mut().enumerate() {
                *v = src[xy * nz + z];
            }
        });
    }

    // Move origins back to centers, folding in the unitary scale.
    let scale = 1.0 / (n as f64).sqrt();
    shift3(data, &mut tmp, dims, false, scale);
    std::mem::swap(data, &mut tmp);
}

/// Centered unitary 2D FFT, in place (used by the slicewise transforms).
pub fn fft2_centered_inplace(data: &mut Vec<Complex64>, dims: [usize; 2], dir: Direction) {
    fft3_centered_inplace(data, [dims[0], dims[1], 1], dir);
}

impl ComplexVolume {
    /// Centered unitary 3D FFT; see the module doc for conventions.
    pub fn fft_centered(&self, dir: Direction) -> ComplexVolume {
        let mut out = self.clone();
        fft3_centered_inplace(&mut out.data, out.grid.dims, dir);
        out
    }
}
