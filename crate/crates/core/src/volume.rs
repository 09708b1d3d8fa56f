//! Dense complex volumes on regular 3D grids.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Regular 3D grid: dimensions in voxels, voxel spacing in mm.
///
/// Data on a grid is stored flat and x-fastest: `idx = x + nx*(y + ny*z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3 {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Grid3 {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must all be >= 4, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive and finite, got {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    pub fn isotropic(n: usize, spacing: f64) -> Result<Self> {
        Self::new([n; 3], [spacing; 3])
    }

    /// Total voxel count.
    #[inline]
    pub fn n(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Physical extent (FOV) per axis in mm.
    pub fn fov(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }
}

/// Complex-valued volume on a [`Grid3`].
///
/// Binary operations require exact grid agreement (dims and spacing) and
/// panic otherwise; callers that mix grids have a logic error upstream.
#[derive(Clone, Debug)]
pub struct ComplexVolume {
    pub grid: Grid3,
    pub data: Vec<Complex64>,
}

impl ComplexVolume {
    pub fn zeros(grid: Grid3) -> Self {
        Self { grid, data: vec![Complex64::ZERO; grid.n()] }
    }

    pub fn from_vec(grid: Grid3, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.n() {
            return Err(Error::ShapeMismatch(format!(
                "volume data length {} does not match grid {:?} ({} voxels)",
                data.len(),
                grid.dims,
                grid.n()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Real-valued data promoted to complex (zero imaginary part).
    pub fn from_real(grid: Grid3, data: &[f64]) -> Result<Self> {
        if data.len() != grid.n() {
            return Err(Error::ShapeMismatch(format!(
                "volume data length {} does not match grid voxel count {}",
                data.len(),
                grid.n()
            )));
        }
        Ok(Self {
            grid,
            data: data.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> Complex64 {
        self.data[self.grid.idx(x, y, z)]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, z: usize) -> &mut Complex64 {
        &mut self.data[self.grid.idx(x, y, z)]
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: Complex64, x: &ComplexVolume) {
        assert_eq!(self.grid, x.grid, "volume grid mismatch");
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    /// Elementwise product with another volume.
    pub fn mul_assign_elem(&mut self, x: &ComplexVolume) {
        assert_eq!(self.grid, x.grid, "volume grid mismatch");
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a *= b;
        }
    }
}

/// `<a, b> = sum_i conj(a_i) * b_i` — conjugate-linear in the first argument.
pub fn inner_product(a: &ComplexVolume, b: &ComplexVolume) -> Complex64 {
    assert_eq!(a.grid, b.grid, "volume grid mismatch");
    inner_product_slices(&a.data, &b.data)
}

/// Inner product over raw coefficient slices, conjugate-linear in the first
/// argument.
pub fn inner_product_slices(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len(), "slice length mismatch");
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
