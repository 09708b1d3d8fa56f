//! Forward finite differences per axis, the total-variation sparsifier.
//!
//! Replicate boundary: the difference at the last sample along an axis is 0,
//! so constants map to exactly zero. `synthesize` is the exact adjoint
//! (a negative divergence), not an inverse -- this is the one system whose
//! gram operator differs from the identity.

use std::sync::Arc;

use num_complex::Complex64;

use crate::volume::{ComplexVolume, Grid3};

use super::{CoefficientStack, StackLayout};

pub(super) fn analyze(x: &ComplexVolume, layout: Arc<StackLayout>) -> CoefficientStack {
    let [nx, ny, nz] = x.grid.dims;
    let n = x.grid.n();
    let strides = [1usize, nx, nx * ny];
    let mut data = vec![Complex64::ZERO; layout.total];
    let src = &x.data;
    for (axis, ext) in [(0usize, nx), (1, ny), (2, nz)] {
        let out = &mut data[axis * n..(axis + 1) * n];
        let step = strides[axis];
        let mut i = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x_ in 0..nx {
                    let c = [x_, y, z][axis];
                    if c + 1 < ext {
                        out[i] = src[i + step] - src[i];
                    }
                    i += 1;
                }
            }
        }
    }
    CoefficientStack { data, layout }
}

/// Adjoint of [`analyze`]: `(D^T g)[m] = g[m - e_a] - g[m]`, with each term
/// dropped where the forward difference did not reach.
pub(super) fn synthesize(stack: &CoefficientStack, grid: Grid3) -> ComplexVolume {
    let [nx, ny, nz] = grid.dims;
    let n = grid.n();
    let strides = [1usize, nx, nx * ny];
    let mut out = ComplexVolume::zeros(grid);
    for (axis, ext) in [(0usize, nx), (1, ny), (2, nz)] {
        let g = &stack.data[axis * n..(axis + 1) * n];
        let step = strides[axis];
        let mut i = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x_ in 0..nx {
                    let c = [x_, y, z][axis];
                    let mut v = Complex64::ZERO;
                    if c >= 1 {
                        v += g[i - step];
                    }
                    if c + 1 < ext {
                        v -= g[i];
                    }
                    out.data[i] += v;
                    i += 1;
                }
            }
        }
    }
    out
}
