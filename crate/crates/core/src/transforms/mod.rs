//! Sparsifying transforms.
//!
//! Four systems share one interface: 2D cone-adapted shearlets applied
//! slicewise, 3D pyramid-adapted shearlets, a decimated orthogonal wavelet,
//! and forward finite differences. `analyze` maps a volume to a coefficient
//! stack, `synthesize` is its exact adjoint. Both shearlet systems are
//! Parseval frames and the wavelet is orthogonal, so for those
//! `synthesize(analyze(x)) = x` and the solver's normal operator needs no
//! transform applications.
//!
//! Coefficients are stacked subband-major, subbands sorted by level, so each
//! level occupies one contiguous index range. Level 0 is the
//! low-pass/approximation band where the system has one; finer directional
//! or detail levels follow in increasing scale order. Within a slicewise
//! subband, coefficients are stored slice-major (in-plane index fastest),
//! which coincides with the volume layout when slicing along z.

mod grad;
mod shearlet;
mod wavelet;

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft3_centered_inplace, Direction};
use crate::volume::{ComplexVolume, Grid3};

pub use shearlet::shear_count;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    /// 2D cone-adapted band-limited shearlets, applied to each slice along
    /// `slice_axis`.
    Shearlet2dSlicewise,
    /// 3D pyramid-adapted band-limited shearlets.
    Shearlet3d,
    /// Decimated orthogonal 4-tap wavelet (periodic boundary).
    Wavelet3d,
    /// Forward finite differences per axis (replicate boundary); the TV
    /// sparsifier.
    Grad3d,
}

/// One subband's slot in the flat coefficient vector.
#[derive(Clone, Copy, Debug)]
pub struct SubbandMeta {
    pub level: usize,
    pub offset: usize,
    pub len: usize,
}

/// Flat layout of a coefficient stack: per-subband slots plus the contiguous
/// per-level ranges used for multilevel weighting.
#[derive(Clone, Debug)]
pub struct StackLayout {
    pub subbands: Vec<SubbandMeta>,
    pub levels: Vec<Range<usize>>,
    pub total: usize,
}

impl StackLayout {
    fn from_subbands(subbands: Vec<SubbandMeta>) -> Self {
        let total = subbands.last().map_or(0, |s| s.offset + s.len);
        let n_levels = subbands.iter().map(|s| s.level).max().unwrap_or(0) + 1;
        let mut levels = vec![0..0; n_levels];
        let mut seen = vec![false; n_levels];
        for s in &subbands {
            if !seen[s.level] {
                levels[s.level] = s.offset..s.offset + s.len;
                seen[s.level] = true;
            } else {
                assert_eq!(
                    levels[s.level].end, s.offset,
                    "subbands of one level must be contiguous"
                );
                levels[s.level].end = s.offset + s.len;
            }
        }
        StackLayout { subbands, levels, total }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Transform-domain coefficients, flat and subband-major.
#[derive(Clone, Debug)]
pub struct CoefficientStack {
    pub data: Vec<Complex64>,
    pub layout: Arc<StackLayout>,
}

impl CoefficientStack {
    pub fn zeros(layout: Arc<StackLayout>) -> Self {
        Self { data: vec![Complex64::ZERO; layout.total], layout }
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn level_slice(&self, level: usize) -> &[Complex64] {
        &self.data[self.layout.levels[level].clone()]
    }
}

/// Intermediate state for streaming per-subband analysis (one pass of the
/// expensive whole-volume work, then cheap per-subband extraction).
pub enum Prepared {
    /// Centered 3D spectrum of the input.
    Spectrum(Vec<Complex64>),
    /// Per-slice centered 2D spectra, slice-major.
    SliceSpectra(Vec<Complex64>),
    /// Full precomputed stack (systems whose whole transform is cheap).
    Stack(CoefficientStack),
}

/// Accumulator for streaming synthesis; finished by one inverse transform.
pub enum SynthAccum {
    Spectrum(Vec<Complex64>),
    SliceSpectra(Vec<Complex64>),
    Stack(CoefficientStack),
}

pub struct TransformSystem {
    grid: Grid3,
    kind: TransformKind,
    layout: Arc<StackLayout>,
    inner: Inner,
}

enum Inner {
    Shearlet2d { bank: shearlet::ShearletBank, slice_axis: usize },
    Shearlet3d { bank: shearlet::ShearletBank },
    Wavelet3d { n_levels: usize },
    Grad3d,
}

/// Default scale count for the multiscale systems: 3 when the smallest
/// relevant dimension allows it, else 2.
pub fn default_scales(min_dim: usize) -> usize {
    if min_dim >= 64 {
        3
    } else {
        2
    }
}

impl TransformSystem {
    /// Cone-adapted 2D shearlets applied to every slice along `slice_axis`
    /// (0 = x, 1 = y, 2 = z). The two in-plane dimensions must be powers of
    /// two with `2^(n_scales+1) <= min in-plane dim`.
    pub fn shearlet2d_slicewise(grid: Grid3, n_scales: usize, slice_axis: usize) -> Result<Self> {
        if slice_axis > 2 {
            return Err(Error::InvalidParameter("slice_axis must be 0, 1, or 2".into()));
        }
        let [u, v] = in_plane_axes(slice_axis);
        let (nu, nv) = (grid.dims[u], grid.dims[v]);
        for n in [nu, nv] {
            if !n.is_power_of_two() {
                return Err(Error::InvalidParameter(format!(
                    "slicewise shearlets need power-of-two in-plane dims, got {nu}x{nv}"
                )));
            }
        }
        check_scales(n_scales, nu.min(nv))?;
        let bank = shearlet::ShearletBank::build([nu, nv, 1], n_scales)?;
        let n_slices = grid.dims[slice_axis];
        let subbands = bank
            .subband_levels()
            .iter()
            .scan(0usize, |off, &level| {
                let len = nu * nv * n_slices;
                let meta = SubbandMeta { level, offset: *off, len };
                *off += len;
                Some(meta)
            })
            .collect();
        Ok(Self {
            grid,
            kind: TransformKind::Shearlet2dSlicewise,
            layout: Arc::new(StackLayout::from_subbands(subbands)),
            inner: Inner::Shearlet2d { bank, slice_axis },
        })
    }

    /// Pyramid-adapted 3D shearlets. The grid must be cubic with a
    /// power-of-two side >= 32 and `2^(n_scales+1) <= dim`.
    pub fn shearlet3d(grid: Grid3, n_scales: usize) -> Result<Self> {
        let n = grid.dims[0];
        if grid.dims[1] != n || grid.dims[2] != n {
            return Err(Error::InvalidParameter(format!(
                "3D shearlets need a cubic grid, got {:?}",
                grid.dims
            )));
        }
        if !n.is_power_of_two() || n < 32 {
            return Err(Error::InvalidParameter(format!(
                "3D shearlets need a power-of-two side >= 32, got {:?}",
                grid.dims
            )));
        }
        check_scales(n_scales, grid.dims.iter().copied().min().unwrap())?;
        let bank = shearlet::ShearletBank::build(grid.dims, n_scales)?;
        let voxels = grid.n();
        let subbands = bank
            .subband_levels()
            .iter()
            .scan(0usize, |off, &level| {
                let meta = SubbandMeta { level, offset: *off, len: voxels };
                *off += voxels;
                Some(meta)
            })
            .collect();
        Ok(Self {
            grid,
            kind: TransformKind::Shearlet3d,
            layout: Arc::new(StackLayout::from_subbands(subbands)),
            inner: Inner::Shearlet3d { bank },
        })
    }

    /// Orthogonal 4-tap wavelet, `n_levels` decimated octave levels.
    /// All dims must be divisible by 2^n_levels.
    pub fn wavelet3d(grid: Grid3, n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::InvalidParameter("wavelet needs n_levels >= 1".into()));
        }
        let m = 1usize << n_levels;
        if grid.dims.iter().any(|&d| d % m != 0 || d / m < 2) {
            return Err(Error::InvalidParameter(format!(
                "wavelet3d needs dims divisible by 2^{n_levels} with quotient >= 2, got {:?}",
                grid.dims
            )));
        }
        let layout = wavelet::layout(grid.dims, n_levels);
        Ok(Self {
            grid,
            kind: TransformKind::Wavelet3d,
            layout: Arc::new(layout),
            inner: Inner::Wavelet3d { n_levels },
        })
    }

    /// Forward differences along each axis; a single level covering all
    /// three gradient subbands (there is no approximation band).
    pub fn grad3d(grid: Grid3) -> Result<Self> {
        let n = grid.n();
        let subbands = (0..3)
            .map(|a| SubbandMeta { level: 0, offset: a * n, len: n })
            .collect();
        Ok(Self {
            grid,
            kind: TransformKind::Grad3d,
            layout: Arc::new(StackLayout::from_subbands(subbands)),
            inner: Inner::Grad3d,
        })
    }

    pub fn grid(&self) -> Grid3 {
        self.grid
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn layout(&self) -> &Arc<StackLayout> {
        &self.layout
    }

    pub fn n_subbands(&self) -> usize {
        self.layout.subbands.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.layout.total
    }

    /// Per-level index ranges (level 0 first).
    pub fn levels(&self) -> &[Range<usize>] {
        &self.layout.levels
    }

    /// True when `synthesize . analyze` is the identity (Parseval/orthogonal
    /// systems), letting the solver's normal operator skip the transform.
    pub fn gram_is_identity(&self) -> bool {
        !matches!(self.kind, TransformKind::Grad3d)
    }

    // -- whole-stack interface ------------------------------------------------

    pub fn analyze(&self, x: &ComplexVolume) -> CoefficientStack {
        assert_eq!(x.grid, self.grid, "transform grid mismatch");
        let prepared = self.prepare(x);
        let mut out = CoefficientStack::zeros(self.layout.clone());
        let metas = self.layout.subbands.clone();
        let parts =
            crate::par::split_lengths(&mut out.data, &metas.iter().map(|m| m.len).collect::<Vec<_>>());
        crate::par::for_each_part(parts, |s, part| self.analyze_subband(&prepared, s, part));
        out
    }

    /// Adjoint of [`analyze`](Self::analyze).
    pub fn synthesize(&self, c: &CoefficientStack) -> ComplexVolume {
        assert_eq!(c.data.len(), self.layout.total, "coefficient stack length mismatch");
        let mut acc = self.synth_new();
        for s in 0..self.n_subbands() {
            let m = &self.layout.subbands[s];
            self.synth_add(&mut acc, s, &c.data[m.offset..m.offset + m.len]);
        }
        self.synth_finish(acc)
    }

    /// `synthesize(analyze(x))`; identity for the Parseval/orthogonal systems.
    pub fn gram(&self, x: &ComplexVolume) -> ComplexVolume {
        if self.gram_is_identity() {
            x.clone()
        } else {
            self.synthesize(&self.analyze(x))
        }
    }

    // -- streaming interface ----------------------------------------------

    /// One-time whole-volume work shared by all `analyze_subband` calls.
    pub fn prepare(&self, x: &ComplexVolume) -> Prepared {
        assert_eq!(x.grid, self.grid, "transform grid mismatch");
        match &self.inner {
            Inner::Shearlet3d { .. } => {
                let mut spec = x.data.clone();
                fft3_centered_inplace(&mut spec, self.grid.dims, Direction::Forward);
                Prepared::Spectrum(spec)
            }
            Inner::Shearlet2d { bank, slice_axis } => {
                let spectra = slicewise_spectra(x, *slice_axis, bank.dims());
                Prepared::SliceSpectra(spectra)
            }
            Inner::Wavelet3d { n_levels } => {
                Prepared::Stack(wavelet::analyze(x, *n_levels, self.layout.clone()))
            }
            Inner::Grad3d => Prepared::Stack(grad::analyze(x, self.layout.clone())),
        }
    }

    /// Extract one subband's coefficients into `out` (length must equal the
    /// subband length).
    pub fn analyze_subband(&self, prepared: &Prepared, s: usize, out: &mut [Complex64]) {
        let meta = self.layout.subbands[s];
        assert_eq!(out.len(), meta.len, "subband buffer length mismatch");
        match (&self.inner, prepared) {
            (Inner::Shearlet3d { bank }, Prepared::Spectrum(spec)) => {
                bank.analyze_subband(spec, s, out);
                fft3_centered_inplace_slice(out, self.grid.dims, Direction::Inverse);
            }
            (Inner::Shearlet2d { bank, slice_axis }, Prepared::SliceSpectra(spectra)) => {
                let [nu, nv, _] = bank.dims();
                let slice_len = nu * nv;
                let n_slices = self.grid.dims[*slice_axis];
                let mut buf = vec![Complex64::ZERO; slice_len];
                for w in 0..n_slices {
                    bank.analyze_subband(&spectra[w * slice_len..(w + 1) * slice_len], s, &mut buf);
                    fft3_centered_inplace_slice(&mut buf, [nu, nv, 1], Direction::Inverse);
                    out[w * slice_len..(w + 1) * slice_len].copy_from_slice(&buf);
                }
            }
            (Inner::Wavelet3d { .. } | Inner::Grad3d, Prepared::Stack(stack)) => {
                out.copy_from_slice(&stack.data[meta.offset..meta.offset + meta.len]);
            }
            _ => unreachable!("prepared state does not match transform kind"),
        }
    }

    pub fn synth_new(&self) -> SynthAccum {
        match &self.inner {
            Inner::Shearlet3d { .. } => SynthAccum::Spectrum(vec![Complex64::ZERO; self.grid.n()]),
            Inner::Shearlet2d { .. } => {
                SynthAccum::SliceSpectra(vec![Complex64::ZERO; self.grid.n()])
            }
            Inner::Wavelet3d { .. } | Inner::Grad3d => {
                SynthAccum::Stack(CoefficientStack::zeros(self.layout.clone()))
            }
        }
    }

    /// Fold one subband's coefficients into the synthesis accumulator.
    pub fn synth_add(&self, acc: &mut SynthAccum, s: usize, coeffs: &[Complex64]) {
        let meta = self.layout.subbands[s];
        assert_eq!(coeffs.len(), meta.len, "subband buffer length mismatch");
        match (&self.inner, acc) {
            (Inner::Shearlet3d { bank }, SynthAccum::Spectrum(accum)) => {
                let mut spec = coeffs.to_vec();
                fft3_centered_inplace_slice(&mut spec, self.grid.dims, Direction::Forward);
                bank.accumulate_spectrum(s, &spec, accum);
            }
            (Inner::Shearlet2d { bank, slice_axis }, SynthAccum::SliceSpectra(accum)) => {
                let [nu, nv, _] = bank.dims();
                let slice_len = nu * nv;
                let n_slices = self.grid.dims[*slice_axis];
                let mut buf = vec![Complex64::ZERO; slice_len];
                for w in 0..n_slices {
                    buf.copy_from_slice(&coeffs[w * slice_len..(w + 1) * slice_len]);
                    fft3_centered_inplace_slice(&mut buf, [nu, nv, 1], Direction::Forward);
                    bank.accumulate_spectrum(
                        s,
                        &buf,
                        &mut accum[w * slice_len..(w + 1) * slice_len],
                    );
                }
            }
            (Inner::Wavelet3d { .. } | Inner::Grad3d, SynthAccum::Stack(stack)) => {
                for (a, c) in stack.data[meta.offset..meta.offset + meta.len].iter_mut().zip(coeffs)
                {
                    *a += c;
                }
            }
            _ => unreachable!("accumulator does not match transform kind"),
        }
    }

    pub fn synth_finish(&self, acc: SynthAccum) -> ComplexVolume {
        match (&self.inner, acc) {
            (Inner::Shearlet3d { .. }, SynthAccum::Spectrum(mut accum)) => {
                fft3_centered_inplace(&mut accum, self.grid.dims, Direction::Inverse);
                ComplexVolume::from_vec(self.grid, accum).unwrap()
            }
            (Inner::Shearlet2d { bank, slice_axis }, SynthAccum::SliceSpectra(mut accum)) => {
                let [nu, nv, _] = bank.dims();
                let slice_len = nu * nv;
                crate::par::for_each_chunk_mut(&mut accum, slice_len, |_, spec| {
                    fft3_centered_inplace_slice(spec, [nu, nv, 1], Direction::Inverse);
                });
                from_slice_major(&accum, *slice_axis, self.grid)
            }
            (Inner::Wavelet3d { n_levels }, SynthAccum::Stack(stack)) => {
                wavelet::synthesize(&stack, self.grid, *n_levels)
            }
            (Inner::Grad3d, SynthAccum::Stack(stack)) => grad::synthesize(&stack, self.grid),
            _ => unreachable!("accumulator does not match transform kind"),
        }
    }
}

fn check_scales(n_scales: usize, min_dim: usize) -> Result<()> {
    if n_scales == 0 {
        return Err(Error::InvalidParameter("shearlet systems need n_scales >= 1".into()));
    }
    if (1usize << (n_scales + 1)) > min_dim {
        return Err(Error::InvalidParameter(format!(
            "n_scales = {n_scales} too deep for min dim {min_dim} (need 2^(J+1) <= dim)"
        )));
    }
    Ok(())
}

/// The two in-plane axes for a given slice axis, in ascending order.
pub(crate) fn in_plane_axes(slice_axis: usize) -> [usize; 2] {
    match slice_axis {
        0 => [1, 2],
        1 => [0, 2],
        2 => [0, 1],
        _ => panic!("slice_axis must be 0, 1, or 2"),
    }
}

fn fft3_centered_inplace_slice(data: &mut [Complex64], dims: [usize; 3], dir: Direction) {
    // fft3_centered_inplace takes a Vec for swap convenience; wrap.
    let mut v = data.to_vec();
    fft3_centered_inplace(&mut v, dims, dir);
    data.copy_from_slice(&v);
}

/// Gather `x` into slice-major layout along `slice_axis` and 2D-FFT each
/// slice in place.
fn slicewise_spectra(x: &ComplexVolume, slice_axis: usize, bank_dims: [usize; 3]) -> Vec<Complex64> {
    let [nu, nv, _] = bank_dims;
    let slice_len = nu * nv;
    let mut out = vec![Complex64::ZERO; x.grid.n()];
    let grid = x.grid;
    let src = &x.data;
    crate::par::for_each_chunk_mut(&mut out, slice_len, |w, dst| {
        gather_slice_into(src, grid, slice_axis, w, dst);
        fft3_centered_inplace_slice(dst, [nu, nv, 1], Direction::Forward);
    });
    out
}

/// Copy slice `w` of a volume into a contiguous (u fastest) 2D buffer.
fn gather_slice_into(
    src: &[Complex64],
    grid: Grid3,
    slice_axis: usize,
    w: usize,
    dst: &mut [Complex64],
) {
    let [ua, va] = in_plane_axes(slice_axis);
    let (nu, nv) = (grid.dims[ua], grid.dims[va]);
    let mut coord = [0usize; 3];
    coord[slice_axis] = w;
    let mut i = 0;
    for v in 0..nv {
        coord[va] = v;
        for u in 0..nu {
            coord[ua] = u;
            dst[i] = src[grid.idx(coord[0], coord[1], coord[2])];
            i += 1;
        }
    }
}

/// Inverse of the gather used in `slicewise_spectra`: rebuild a volume from
/// slice-major data.
fn from_slice_major(slice_major: &[Complex64], slice_axis: usize, grid: Grid3) -> ComplexVolume {
    let [ua, va] = in_plane_axes(slice_axis);
    let (nu, nv) = (grid.dims[ua], grid.dims[va]);
    let slice_len = nu * nv;
    let mut out = ComplexVolume::zeros(grid);
    for w in 0..grid.dims[slice_axis] {
        let src = &slice_major[w * slice_len..(w + 1) * slice_len];
        let mut coord = [0usize; 3];
        coord[slice_axis] = w;
        let mut i = 0;
        for v in 0..nv {
            coord[va] = v;
            for u in 0..nu {
                coord[ua] = u;
                out.data[grid.idx(coord[0], coord[1], coord[2])] = src[i];
                i += 1;
            }
        }
    }
    out
}
