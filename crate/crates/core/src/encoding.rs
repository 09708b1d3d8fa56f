//! The encoding operator E = G.F.S: coil sensitivity weighting (S), centered
//! Fourier transform on an oversampled grid (F), and Kaiser-Bessel gridding
//! interpolation onto arbitrary k-space positions (G).
//!
//! The adjoint is the exact transpose of the forward pass (real kernel
//! weights, apodization applied symmetrically on the image side), so the
//! inner-product adjoint identity holds to machine precision, which the
//! solver's CG step depends on. Sample coordinates are in units of the
//! original Cartesian grid with DC at 0; on-grid positions reproduce the
//! centered FFT exactly because the apodization is the discrete transform of
//! the sampled kernel, not its continuous approximation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft3_centered_inplace, Direction};
use crate::sampling::Trajectory;
use crate::transforms::TransformSystem;
use crate::volume::{ComplexVolume, Grid3};

/// Receiver sensitivity profiles, one complex volume per coil.
///
/// Construction renormalizes so that the root-sum-of-squares is exactly 1
/// wherever it exceeds the support floor (5% of its maximum); below the
/// floor the maps are scaled by the floor value instead, which keeps the
/// operator bounded without amplifying voxels no coil can see.
pub struct SensitivityMaps {
    grid: Grid3,
    maps: Vec<ComplexVolume>,
    support: Vec<bool>,
}

/// Fraction of the peak sum-of-squares below which a voxel counts as
/// outside the coil support.
pub const SUPPORT_FLOOR: f64 = 0.05;

impl SensitivityMaps {
    pub fn new(maps: Vec<ComplexVolume>) -> Result<Self> {
        let Some(first) = maps.first() else {
            return Err(Error::InvalidParameter("need at least one coil map".into()));
        };
        let grid = first.grid;
        if maps.iter().any(|m| m.grid != grid) {
            return Err(Error::ShapeMismatch("coil maps must share one grid".into()));
        }
        let n = grid.n();
        let mut ssq = vec![0.0f64; n];
        for m in &maps {
            for (s, v) in ssq.iter_mut().zip(&m.data) {
                *s += v.norm_sqr();
            }
        }
        let max = ssq.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) || ssq.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "coil maps are zero or non-finite everywhere".into(),
            ));
        }
        let floor = SUPPORT_FLOOR * max;
        let mut maps = maps;
        let support: Vec<bool> = ssq.iter().map(|&s| s > floor).collect();
        let inv_rss: Vec<f64> = ssq.iter().map(|&s| 1.0 / s.max(floor).sqrt()).collect();
        for m in &mut maps {
            for (v, &w) in m.data.iter_mut().zip(&inv_rss) {
                *v *= w;
            }
        }
        Ok(Self { grid, maps, support })
    }

    /// Single uniform coil (S = 1 everywhere).
    pub fn uniform(grid: Grid3) -> Self {
        let one = ComplexVolume::from_vec(grid, vec![Complex64::ONE; grid.n()]).unwrap();
        Self { grid, support: vec![true; grid.n()], maps: vec![one] }
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn n_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn coil(&self, c: usize) -> &ComplexVolume {
        &self.maps[c]
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }
}

/// Acquired (or simulated) k-space data: one complex sample vector per coil,
/// in trajectory flat order.
#[derive(Clone, Debug)]
pub struct KSpaceSamples {
    pub coils: Vec<Vec<Complex64>>,
}

impl KSpaceSamples {
    pub fn new(coils: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = coils.first() else {
            return Err(Error::InvalidParameter("need at least one coil".into()));
        };
        let n = first.len();
        if coils.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch("coil sample vectors differ in length".into()));
        }
        if coils.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite k-space sample".into()));
        }
        Ok(Self { coils })
    }

    pub fn zeros(n_coils: usize, n_samples: usize) -> Self {
        Self { coils: vec![vec![Complex64::ZERO; n_samples]; n_coils] }
    }

    pub fn n_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn n_samples(&self) -> usize {
        self.coils.first().map_or(0, |c| c.len())
    }

    pub fn norm2(&self) -> f64 {
        self.coils
            .iter()
            .flatten()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let coils =
            self.coils.iter().map(|c| c.iter().map(|v| v * factor).collect()).collect();
        Self { coils }
    }

    /// self - other, elementwise.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n_coils(), other.n_coils());
        let coils = self
            .coils
            .iter()
            .zip(&other.coils)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Self { coils }
    }
}

/// Gridding configuration: kernel half-width in oversampled grid cells and
/// the grid oversampling ratio.
#[derive(Clone, Copy, Debug)]
pub struct GriddingParams {
    pub oversampling: f64,
    pub kernel_half_width: usize,
}

impl Default for GriddingParams {
    fn default() -> Self {
        Self { oversampling: 1.5, kernel_half_width: 3 }
    }
}

/// Kaiser-Bessel shape parameter for a given full kernel width (in grid
/// cells) and oversampling ratio, per the standard aliasing-error-minimizing
/// formula.
pub fn kaiser_bessel_beta(full_width: f64, oversampling: f64) -> f64 {
    let a = oversampling;
    std::f64::consts::PI * ((full_width / a).powi(2) * (a - 0.5).powi(2) - 0.8).sqrt()
}

fn bessel_i0(x: f64) -> f64 {
    // power series; converges quickly for the |x| <= ~20 used here
    let q = x * x / 4.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Tabulated Kaiser-Bessel profile kb(u) = I0(beta*sqrt(1-(u/hw)^2))/I0(beta)
/// on [0, hw], linearly interpolated between nodes.
struct KernelTable {
    hw: f64,
    per_unit: f64,
    vals: Vec<f64>,
}

const TABLE_PER_UNIT: usize = 4096;

impl KernelTable {
    fn build(beta: f64, hw: usize) -> Self {
        let n = hw * TABLE_PER_UNIT;
        let inv_i0 = 1.0 / bessel_i0(beta);
        let mut vals = Vec::with_capacity(n + 2);
        for i in 0..=n {
            let u = i as f64 / TABLE_PER_UNIT as f64;
            let t = 1.0 - (u / hw as f64).powi(2);
            vals.push(if t <= 0.0 { 0.0 } else { bessel_i0(beta * t.sqrt()) * inv_i0 });
        }
        vals.push(0.0); // guard node for interpolation at u = hw
        Self { hw: hw as f64, per_unit: TABLE_PER_UNIT as f64, vals }
    }

    /// Exact (series) value at integer offsets; used by the apodization.
    fn exact(beta: f64, hw: usize, j: usize) -> f64 {
        let t = 1.0 - (j as f64 / hw as f64).powi(2);
        bessel_i0(beta * t.sqrt()) / bessel_i0(beta)
    }

    #[inline]
    fn eval(&self, u: f64) -> f64 {
        debug_assert!(u >= 0.0);
        if u >= self.hw {
            return 0.0;
        }
        let p = u * self.per_unit;
        let i = p as usize;
        let frac = p - i as f64;
        self.vals[i] + frac * (self.vals[i + 1] - self.vals[i])
    }
}

/// Per-axis oversampled-grid geometry plus the image-domain apodization
/// correction (the inverse discrete transform of the integer kernel taps).
struct AxisGrid {
    n_os: usize,
    c_os: usize,
    /// embedding offset of original index 0 in the oversampled grid
    off: usize,
    /// fine cells per original cell: n_os / n
    step: f64,
    inv_apod: Vec<f64>,
}

impl AxisGrid {
    fn build(n: usize, params: GriddingParams) -> Result<(Self, KernelTable)> {
        let hw = params.kernel_half_width;
        let n_os = (n as f64 * params.oversampling).ceil() as usize;
        if n_os < 2 * hw + 1 {
            return Err(Error::InvalidParameter(format!(
                "oversampled axis length {n_os} shorter than kernel width {}",
                2 * hw + 1
            )));
        }
        // effective ratio after rounding keeps on-grid sampling exact
        let alpha = n_os as f64 / n as f64;
        let beta = kaiser_bessel_beta(2.0 * hw as f64, alpha);
        let c = n / 2;
        let c_os = n_os / 2;
        let taps: Vec<f64> = (0..=hw).map(|j| KernelTable::exact(beta, hw, j)).collect();
        let mut inv_apod = Vec::with_capacity(n);
        for m in 0..n {
            let mut a = taps[0];
            for (j, t) in taps.iter().enumerate().skip(1) {
                let ang = std::f64::consts::TAU * j as f64 * (m as f64 - c as f64) / n_os as f64;
                a += 2.0 * t * ang.cos();
            }
            if a <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "apodization window non-positive at index {m} (kernel too narrow)"
                )));
            }
            inv_apod.push(1.0 / a);
        }
        Ok((
            Self { n_os, c_os, off: c_os - c, step: alpha, inv_apod },
            KernelTable::build(beta, hw),
        ))
    }
}

/// Interpolation taps of one sample along one axis: flat strides into the
/// oversampled array plus real weights. At most 2*hw+1 entries.
#[derive(Clone)]
struct AxisTaps {
    n: u8,
    idx: [u32; 7],
    w: [f64; 7],
}

pub struct EncodingOperator {
    maps: SensitivityMaps,
    params: GriddingParams,
    axes: [AxisGrid; 3],
    os_dims: [usize; 3],
    /// per sample, per axis, precomputed kernel taps
    taps: Vec<[AxisTaps; 3]>,
    density: Option<Vec<f64>>,
    /// matches forward output to the unitary centered FFT on the original grid
    scale: f64,
}

impl EncodingOperator {
    /// Operator for an RPE (or any) trajectory; density weights, when given,
    /// must be one per flat trajectory sample.
    pub fn new(
        maps: SensitivityMaps,
        trajectory: &Trajectory,
        params: GriddingParams,
        density: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::from_samples(maps, trajectory.samples(), params, density)
    }

    /// Operator for raw sample positions (original-grid units, DC at 0).
    pub fn from_samples(
        maps: SensitivityMaps,
        samples: Vec<[f64; 3]>,
        params: GriddingParams,
        density: Option<Vec<f64>>,
    ) -> Result<Self> {
        if params.oversampling < 1.0 || !params.oversampling.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "oversampling must be >= 1, got {}",
                params.oversampling
            )));
        }
        if params.kernel_half_width < 1 || params.kernel_half_width > 7 {
            return Err(Error::InvalidParameter(format!(
                "kernel half-width must be in 1..=7, got {}",
                params.kernel_half_width
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidParameter("trajectory has no samples".into()));
        }
        if let Some(d) = &density {
            if d.len() != samples.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} density weights for {} samples",
                    d.len(),
                    samples.len()
                )));
            }
        }
        let grid = maps.grid();
        let mut built = Vec::with_capacity(3);
        for a in 0..3 {
            let nyq = grid.dims[a] as f64 / 2.0;
            if let Some(s) = samples.iter().find(|s| !(s[a].abs() <= nyq)) {
                return Err(Error::InvalidParameter(format!(
                    "sample coordinate {} exceeds the axis-{a} range [-{nyq}, {nyq}]",
                    s[a]
                )));
            }
            built.push(AxisGrid::build(grid.dims[a], params)?);
        }
        let (az, tz) = built.pop().unwrap();
        let (ay, ty) = built.pop().unwrap();
        let (ax, tx) = built.pop().unwrap();
        let os_dims = [ax.n_os, ay.n_os, az.n_os];
        let strides = [1usize, os_dims[0], os_dims[0] * os_dims[1]];
        let axes = [ax, ay, az];
        let tables = [tx, ty, tz];
        let hw = params.kernel_half_width as f64;
        let taps = crate::par::map_indexed(samples.len(), |m| {
            let mut per_axis = [(); 3].map(|_| AxisTaps { n: 0, idx: [0; 7], w: [0.0; 7] });
            for a in 0..3 {
                let t = axes[a].step * samples[m][a] + axes[a].c_os as f64;
                let lo = (t - hw).ceil() as i64;
                let hi = (t + hw).floor() as i64;
                let set = &mut per_axis[a];
                for j in lo..=hi {
                    let w = tables[a].eval((t - j as f64).abs());
                    let k = set.n as usize;
                    set.idx[k] = (j.rem_euclid(axes[a].n_os as i64) as usize * strides[a]) as u32;
                    set.w[k] = w;
                    set.n += 1;
                }
            }
            per_axis
        });
        let scale = ((os_dims.iter().product::<usize>() as f64)
            / (grid.n() as f64))
            .sqrt();
        Ok(Self { maps, params, axes, os_dims, taps, density, scale })
    }

    pub fn grid(&self) -> Grid3 {
        self.maps.grid()
    }

    pub fn n_coils(&self) -> usize {
        self.maps.n_coils()
    }

    pub fn n_samples(&self) -> usize {
        self.taps.len()
    }

    pub fn maps(&self) -> &SensitivityMaps {
        &self.maps
    }

    pub fn params(&self) -> GriddingParams {
        self.params
    }

    pub fn density(&self) -> Option<&[f64]> {
        self.density.as_deref()
    }

    /// y = Ex.
    pub fn forward(&self, x: &ComplexVolume) -> Result<KSpaceSamples> {
        if x.grid != self.grid() {
            return Err(Error::ShapeMismatch(format!(
                "volume grid {:?} does not match operator grid {:?}",
                x.grid.dims,
                self.grid().dims
            )));
        }
        let mut coils = Vec::with_capacity(self.n_coils());
        let mut big = vec![Complex64::ZERO; self.os_dims.iter().product()];
        for c in 0..self.n_coils() {
            big.fill(Complex64::ZERO);
            self.embed_apodized(x, c, &mut big);
            fft3_centered_inplace(&mut big, self.os_dims, Direction::Forward);
            let spec = &big;
            let vals = crate::par::map_indexed(self.n_samples(), |m| {
                self.gather(spec, &self.taps[m]) * self.scale
            });
            coils.push(vals);
        }
        Ok(KSpaceSamples { coils })
    }

    /// E*y (use_density = false) or E* D y with the density weights D
    /// (a preconditioned reconstruction, no longer the strict adjoint).
    pub fn adjoint(&self, y: &KSpaceSamples, use_density: bool) -> Result<ComplexVolume> {
        if y.n_coils() != self.n_coils() || y.n_samples() != self.n_samples() {
            return Err(Error::ShapeMismatch(format!(
                "k-space data is {} coils x {} samples, operator wants {} x {}",
                y.n_coils(),
                y.n_samples(),
                self.n_coils(),
                self.n_samples()
            )));
        }
        if use_density && self.density.is_none() {
            return Err(Error::InvalidParameter(
                "operator was built without density weights".into(),
            ));
        }
        let mut out = ComplexVolume::zeros(self.grid());
        let mut big = vec![Complex64::ZERO; self.os_dims.iter().product()];
        for (c, samples) in y.coils.iter().enumerate() {
            big.fill(Complex64::ZERO);
            for (m, &v) in samples.iter().enumerate() {
                let v = match (&self.density, use_density) {
                    (Some(d), true) => v * d[m],
                    _ => v,
                };
                self.spread(v, &self.taps[m], &mut big);
            }
            fft3_centered_inplace(&mut big, self.os_dims, Direction::Inverse);
            self.extract_combine(&big, c, &mut out);
        }
        out.scale(Complex64::from(self.scale));
        Ok(out)
    }

    /// beta E*E x + mu Psi*Psi x, the self-adjoint PSD operator of the
    /// solver's linear step. `gram = None` means Psi*Psi = identity.
    pub fn normal(
        &self,
        x: &ComplexVolume,
        beta: f64,
        mu: f64,
        gram: Option<&TransformSystem>,
    ) -> Result<ComplexVolume> {
        let mut out = if beta != 0.0 {
            let mut v = self.adjoint(&self.forward(x)?, false)?;
            v.scale(Complex64::from(beta));
            v
        } else {
            ComplexVolume::zeros(self.grid())
        };
        if mu != 0.0 {
            match gram {
                Some(t) => out.axpy(Complex64::from(mu), &t.gram(x)),
                None => out.axpy(Complex64::from(mu), x),
            }
        }
        Ok(out)
    }

    /// Multiply by S_c, divide by the separable apodization, and embed in the
    /// center of the oversampled array.
    fn embed_apodized(&self, x: &ComplexVolume, c: usize, big: &mut [Complex64]) {
        let [nx, ny, nz] = self.grid().dims;
        let [ax, ay, az] = &self.axes;
        let map = &self.maps.coil(c).data;
        let row_len = self.os_dims[0];
        let plane = self.os_dims[0] * self.os_dims[1];
        for z in 0..nz {
            let wz = az.inv_apod[z];
            for y in 0..ny {
                let wyz = ay.inv_apod[y] * wz;
                let src = z * nx * ny + y * nx;
                let dst = (z + az.off) * plane + (y + ay.off) * row_len + ax.off;
                for i in 0..nx {
                    big[dst + i] = x.data[src + i] * map[src + i] * (ax.inv_apod[i] * wyz);
                }
            }
        }
    }

    /// Adjoint of [`embed_apodized`]: crop, apodize, multiply by conj(S_c),
    /// accumulate into `out`.
    fn extract_combine(&self, big: &[Complex64], c: usize, out: &mut ComplexVolume) {
        let [nx, ny, nz] = self.grid().dims;
        let [ax, ay, az] = &self.axes;
        let map = &self.maps.coil(c).data;
        let row_len = self.os_dims[0];
        let plane = self.os_dims[0] * self.os_dims[1];
        for z in 0..nz {
            let wz = az.inv_apod[z];
            for y in 0..ny {
                let wyz = ay.inv_apod[y] * wz;
                let dst = z * nx * ny + y * nx;
                let src = (z + az.off) * plane + (y + ay.off) * row_len + ax.off;
                for i in 0..nx {
                    out.data[dst + i] +=
                        big[src + i] * map[dst + i].conj() * (ax.inv_apod[i] * wyz);
                }
            }
        }
    }

    #[inline]
    fn gather(&self, spec: &[Complex64], taps: &[AxisTaps; 3]) -> Complex64 {
        let [tx, ty, tz] = taps;
        let mut acc = Complex64::ZERO;
        for iz in 0..tz.n as usize {
            let bz = tz.idx[iz] as usize;
            let wz = tz.w[iz];
            for iy in 0..ty.n as usize {
                let byz = bz + ty.idx[iy] as usize;
                let wyz = wz * ty.w[iy];
                let mut s = Complex64::ZERO;
                for ix in 0..tx.n as usize {
                    s += spec[byz + tx.idx[ix] as usize] * tx.w[ix];
                }
                acc += s * wyz;
            }
        }
        acc
    }

    #[inline]
    fn spread(&self, v: Complex64, taps: &[AxisTaps; 3], big: &mut [Complex64]) {
        let [tx, ty, tz] = taps;
        for iz in 0..tz.n as usize {
            let bz = tz.idx[iz] as usize;
            let wz = tz.w[iz];
            for iy in 0..ty.n as usize {
                let byz = bz + ty.idx[iy] as usize;
                let vyz = v * (wz * ty.w[iy]);
                for ix in 0..tx.n as usize {
                    big[byz + tx.idx[ix] as usize] += vyz * tx.w[ix];
                }
            }
        }
    }
}
