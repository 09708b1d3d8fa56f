//! Decimated orthogonal 4-tap wavelet, separable in 3D, periodic boundary.
//!
//! Periodic extension keeps every even row length >= 4 exactly orthogonal,
//! so synthesis is simultaneously the adjoint and the inverse of analysis.
//! Each octave level splits the current approximation block into eight
//! octants in place; the stack stores the final approximation first, then
//! the seven detail octants per level from coarsest to finest.

use std::sync::Arc;

use num_complex::Complex64;

use crate::volume::{ComplexVolume, Grid3};

use super::{CoefficientStack, StackLayout, SubbandMeta};

/// Analysis pair: orthogonal low-pass with two vanishing moments in the
/// high-pass (alternating-flip mirror).
fn filters() -> ([f64; 4], [f64; 4]) {
    let r3 = 3f64.sqrt();
    let c = 1.0 / (4.0 * 2f64.sqrt());
    let h = [c * (1.0 + r3), c * (3.0 + r3), c * (3.0 - r3), c * (1.0 - r3)];
    let g = [h[3], -h[2], h[1], -h[0]];
    (h, g)
}

fn block_dims(dims: [usize; 3], l: usize) -> [usize; 3] {
    [dims[0] >> l, dims[1] >> l, dims[2] >> l]
}

pub(super) fn layout(dims: [usize; 3], n_levels: usize) -> StackLayout {
    let approx: usize = block_dims(dims, n_levels).iter().product();
    let mut subbands = vec![SubbandMeta { level: 0, offset: 0, len: approx }];
    let mut off = approx;
    for lv in 1..=n_levels {
        let len: usize = block_dims(dims, n_levels - lv + 1).iter().product();
        for _ in 1..8 {
            subbands.push(SubbandMeta { level: lv, offset: off, len });
            off += len;
        }
    }
    StackLayout::from_subbands(subbands)
}

/// One decimation step: [approx | detail] halves, periodic wrap.
fn analyze_row(row: &mut [Complex64], tmp: &mut [Complex64], h: &[f64; 4], g: &[f64; 4]) {
    let n = row.len();
    let half = n / 2;
    for k in 0..half {
        let mut a = Complex64::ZERO;
        let mut d = Complex64::ZERO;
        for m in 0..4 {
            let x = row[(2 * k + m) % n];
            a += x * h[m];
            d += x * g[m];
        }
        tmp[k] = a;
        tmp[half + k] = d;
    }
    row.copy_from_slice(&tmp[..n]);
}

/// Exact inverse (= transpose) of [`analyze_row`].
fn synthesize_row(row: &mut [Complex64], tmp: &mut [Complex64], h: &[f64; 4], g: &[f64; 4]) {
    let n = row.len();
    let half = n / 2;
    tmp[..n].fill(Complex64::ZERO);
    for k in 0..half {
        let a = row[k];
        let d = row[half + k];
        for m in 0..4 {
            tmp[(2 * k + m) % n] += a * h[m] + d * g[m];
        }
    }
    row.copy_from_slice(&tmp[..n]);
}

/// Apply the 1D transform along every axis of the corner block `bd` of a
/// full-`dims` array. Axis passes commute, so one order serves both ways.
fn transform_block(work: &mut [Complex64], dims: [usize; 3], bd: [usize; 3], inverse: bool) {
    let (h, g) = filters();
    let max_n = bd[0].max(bd[1]).max(bd[2]);
    let mut row = vec![Complex64::ZERO; max_n];
    let mut tmp = vec![Complex64::ZERO; max_n];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let [oa, ob] = match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        let n = bd[axis];
        let stride = strides[axis];
        for qb in 0..bd[ob] {
            for qa in 0..bd[oa] {
                let base = qa * strides[oa] + qb * strides[ob];
                if axis == 0 {
                    let r = &mut work[base..base + n];
                    if inverse {
                        synthesize_row(r, &mut tmp, &h, &g);
                    } else {
                        analyze_row(r, &mut tmp, &h, &g);
                    }
                } else {
                    for i in 0..n {
                        row[i] = work[base + i * stride];
                    }
                    if inverse {
                        synthesize_row(&mut row[..n], &mut tmp, &h, &g);
                    } else {
                        analyze_row(&mut row[..n], &mut tmp, &h, &g);
                    }
                    for i in 0..n {
                        work[base + i * stride] = row[i];
                    }
                }
            }
        }
    }
}

/// Octant regions (origin, size) in stack subband order: the approximation
/// corner, then per level the seven detail octants indexed by the bit mask
/// (1 = detail along x, 2 = y, 4 = z).
fn regions(dims: [usize; 3], n_levels: usize) -> Vec<([usize; 3], [usize; 3])> {
    let mut out = vec![([0, 0, 0], block_dims(dims, n_levels))];
    for lv in 1..=n_levels {
        let hd = block_dims(dims, n_levels - lv + 1);
        for o in 1..8usize {
            let origin = [
                if o & 1 != 0 { hd[0] } else { 0 },
                if o & 2 != 0 { hd[1] } else { 0 },
                if o & 4 != 0 { hd[2] } else { 0 },
            ];
            out.push((origin, hd));
        }
    }
    out
}

pub(super) fn analyze(x: &ComplexVolume, n_levels: usize, layout: Arc<StackLayout>) -> CoefficientStack {
    let dims = x.grid.dims;
    let mut work = x.data.clone();
    for l in 0..n_levels {
        transform_block(&mut work, dims, block_dims(dims, l), false);
    }
    let mut data = vec![Complex64::ZERO; layout.total];
    for (meta, (origin, size)) in layout.subbands.iter().zip(regions(dims, n_levels)) {
        let mut pos = meta.offset;
        for z in 0..size[2] {
            for y in 0..size[1] {
                let base = origin[0] + dims[0] * ((origin[1] + y) + dims[1] * (origin[2] + z));
                data[pos..pos + size[0]].copy_from_slice(&work[base..base + size[0]]);
                pos += size[0];
            }
        }
    }
    CoefficientStack { data, layout }
}

pub(super) fn synthesize(stack: &CoefficientStack, grid: Grid3, n_levels: usize) -> ComplexVolume {
    let dims = grid.dims;
    let mut work = vec![Complex64::ZERO; grid.n()];
    for (meta, (origin, size)) in stack.layout.subbands.iter().zip(regions(dims, n_levels)) {
        let mut pos = meta.offset;
        for z in 0..size[2] {
            for y in 0..size[1] {
                let base = origin[0] + dims[0] * ((origin[1] + y) + dims[1] * (origin[2] + z));
                work[base..base + size[0]].copy_from_slice(&stack.data[pos..pos + size[0]]);
                pos += size[0];
            }
        }
    }
    for l in (0..n_levels).rev() {
        transform_block(&mut work, dims, block_dims(dims, l), true);
    }
    ComplexVolume::from_vec(grid, work).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn filter_pair_is_orthonormal_with_vanishing_moments() {
        let (h, g) = filters();
        let dot = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(&h, &h) - 1.0).abs() < 1e-15);
        assert!((dot(&g, &g) - 1.0).abs() < 1e-15);
        assert!(dot(&h, &g).abs() < 1e-15);
        // double-shift orthogonality (periodic length 4 and up)
        assert!((h[0] * h[2] + h[1] * h[3]).abs() < 1e-15);
        // low-pass sums to sqrt(2); high-pass kills constants and ramps
        assert!((h.iter().sum::<f64>() - 2f64.sqrt()).abs() < 1e-15);
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        assert!(g.iter().enumerate().map(|(m, v)| m as f64 * v).sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn row_transform_reconstructs() {
        let (h, g) = filters();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [4usize, 6, 8, 16] {
            let orig: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let mut row = orig.clone();
            let mut tmp = vec![Complex64::ZERO; n];
            analyze_row(&mut row, &mut tmp, &h, &g);
            // orthogonality: coefficient energy equals signal energy
            let e0: f64 = orig.iter().map(|v| v.norm_sqr()).sum();
            let e1: f64 = row.iter().map(|v| v.norm_sqr()).sum();
            assert!((e0 - e1).abs() < 1e-12 * e0.max(1.0));
            synthesize_row(&mut row, &mut tmp, &h, &g);
            for (a, b) in row.iter().zip(&orig) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn level_sizes_match_octave_decimation() {
        let lay = layout([32, 32, 32], 3);
        assert_eq!(lay.subbands.len(), 1 + 3 * 7);
        assert_eq!(lay.levels.len(), 4);
        assert_eq!(lay.levels[0].len(), 4 * 4 * 4);
        assert_eq!(lay.levels[1].len(), 7 * 4 * 4 * 4);
        assert_eq!(lay.levels[2].len(), 7 * 8 * 8 * 8);
        assert_eq!(lay.levels[3].len(), 7 * 16 * 16 * 16);
        assert_eq!(lay.total, 32 * 32 * 32);
    }

    #[test]
    fn constant_volume_lands_in_approximation_only() {
        let grid = Grid3::new([8, 8, 8], [1.0; 3]).unwrap();
        let x = ComplexVolume::from_vec(grid, vec![Complex64::new(2.5, -1.0); grid.n()]).unwrap();
        let lay = Arc::new(layout(grid.dims, 2));
        let stack = analyze(&x, 2, lay);
        // each 1D low-pass multiplies constants by sqrt(2): 2 levels x 3 axes
        let expect = Complex64::new(2.5, -1.0) * 8.0;
        for v in stack.level_slice(0) {
            assert!((v - expect).norm() < 1e-12);
        }
        for lv in 1..stack.layout.levels.len() {
            for v in stack.level_slice(lv) {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_reconstruction_anisotropic() {
        let grid = Grid3::new([8, 16, 8], [1.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<Complex64> = (0..grid.n())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let x = ComplexVolume::from_vec(grid, data).unwrap();
        let lay = Arc::new(layout(grid.dims, 2));
        let stack = analyze(&x, 2, lay);
        assert!((stack.norm2() - x.norm2()).abs() < 1e-12 * x.norm2());
        let back = synthesize(&stack, grid, 2);
        let mut err = 0.0f64;
        for (a, b) in back.data.iter().zip(&x.data) {
            err = err.max((a - b).norm());
        }
        assert!(err < 1e-12, "max reconstruction error {err}");
    }
}
