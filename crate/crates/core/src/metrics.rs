//! Image-quality metrics: relative error, slice-averaged HaarPSI, and a
//! simplified vessel-sharpness score.
//!
//! All three operate on voxel magnitudes. HaarPSI follows the published
//! reference construction (logistic-pooled Haar-coefficient similarities,
//! weighted by third-scale response) on jointly 8-bit-rescaled slices;
//! vessel sharpness probes intensity profiles perpendicular to a supplied
//! centerline and is deliberately simple — it is meant for comparisons
//! between reconstructions of the same scene, not as an absolute measure.


use crate::error::{Error, Result};
use crate::io::fmt_csv_float;
use crate::volume::{ComplexVolume, Grid3};

/// l2 distance of the magnitude images over the magnitude norm of `reference`.
pub fn relative_error(rec: &ComplexVolume, reference: &ComplexVolume) -> Result<f64> {
    if rec.grid != reference.grid {
        return Err(Error::ShapeMismatch(format!(
            "volume grids differ: {:?} vs {:?}",
            rec.grid.dims, reference.grid.dims
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in rec.data.iter().zip(&reference.data) {
        let d = a.norm() - b.norm();
        num += d * d;
        den += b.norm_sqr();
    }
    if den <= 0.0 {
        return Err(Error::InvalidParameter("reference volume is zero".into()));
    }
    Ok((num / den).sqrt())
}

// HaarPSI constants from the reference construction.
const HAARPSI_C: f64 = 30.0;
const HAARPSI_ALPHA: f64 = 4.2;
const HAARPSI_SCALES: usize = 3;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-HAARPSI_ALPHA * x).exp())
}

fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln() / HAARPSI_ALPHA
}

/// 2x2 block mean followed by a stride-2 subsampling (odd trailing samples
/// dropped); the reference construction's low-pass prefilter.
fn subsample(img: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (w / 2, h / 2);
    let mut out = vec![0.0; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            let i = 2 * y * w + 2 * x;
            out[y * w2 + x] = 0.25 * (img[i] + img[i + 1] + img[i + w] + img[i + w + 1]);
        }
    }
    (out, w2, h2)
}

/// Haar response at `scale` (kernel side 2^scale, one half negated, zero
/// padding). `vertical` transposes the kernel.
fn haar_response(img: &[f64], w: usize, h: usize, scale: usize, vertical: bool) -> Vec<f64> {
    let side = 1usize << scale;
    let half = side / 2;
    let weight = 1.0 / side as f64;
    let c = side as i64 / 2;
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for ky in 0..side as i64 {
                let yy = y + ky - c;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for kx in 0..side as i64 {
                    let xx = x + kx - c;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    // top half (or left half when transposed) carries -1
                    let neg = if vertical { kx < half as i64 } else { ky < half as i64 };
                    let v = img[yy as usize * w + xx as usize];
                    acc += if neg { -v } else { v };
                }
            }
            out[(y as usize) * w + x as usize] = acc * weight;
        }
    }
    out
}

/// HaarPSI of one pair of equally sized 2D magnitude slices already scaled
/// to the 8-bit range. Returns the numerator/denominator pair of the final
/// weighted pooling so slices can be averaged by the caller.
fn haarpsi_slice(a: &[f64], b: &[f64], w: usize, h: usize) -> (f64, f64) {
    let (a, w2, h2) = {
        let (img, w2, h2) = subsample(a, w, h);
        (img, w2, h2)
    };
    let (b, _, _) = subsample(b, w, h);
    let mut resp_a = Vec::with_capacity(2 * HAARPSI_SCALES);
    let mut resp_b = Vec::with_capacity(2 * HAARPSI_SCALES);
    for orient in 0..2 {
        for scale in 1..=HAARPSI_SCALES {
            resp_a.push(haar_response(&a, w2, h2, scale, orient == 1));
            resp_b.push(haar_response(&b, w2, h2, scale, orient == 1));
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for orient in 0..2 {
        let base = orient * HAARPSI_SCALES;
        for p in 0..w2 * h2 {
            let weight = resp_a[base + 2][p].abs().max(resp_b[base + 2][p].abs());
            let mut sim = 0.0;
            for scale in 0..2 {
                let ma = resp_a[base + scale][p].abs();
                let mb = resp_b[base + scale][p].abs();
                sim += (2.0 * ma * mb + HAARPSI_C) / (ma * ma + mb * mb + HAARPSI_C);
            }
            num += logistic(sim / 2.0) * weight;
            den += weight;
        }
    }
    (num, den)
}

/// Slice-averaged HaarPSI of the two volumes' magnitudes along `slice_axis`
/// (0 = x, the default elsewhere). Magnitudes are rescaled jointly so the
/// brighter volume spans [0, 255].
pub fn haarpsi(rec: &ComplexVolume, reference: &ComplexVolume, slice_axis: usize) -> Result<f64> {
    if rec.grid != reference.grid {
        return Err(Error::ShapeMismatch(format!(
            "volume grids differ: {:?} vs {:?}",
            rec.grid.dims, reference.grid.dims
        )));
    }
    if slice_axis > 2 {
        return Err(Error::InvalidParameter("slice_axis must be 0, 1, or 2".into()));
    }
    let peak = rec.max_abs().max(reference.max_abs());
    if peak <= 0.0 {
        return Err(Error::InvalidParameter("both volumes are zero".into()));
    }
    let scale = 255.0 / peak;
    let dims = rec.grid.dims;
    let [ua, va] = match slice_axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let (w, h) = (dims[ua], dims[va]);
    if w / 2 < (1 << HAARPSI_SCALES) || h / 2 < (1 << HAARPSI_SCALES) {
        return Err(Error::InvalidParameter(format!(
            "in-plane dims {w}x{h} too small for {HAARPSI_SCALES}-scale haarpsi"
        )));
    }
    let n_slices = dims[slice_axis];
    let sums = crate::par::map_indexed(n_slices, |s| {
        let mut pa = vec![0.0; w * h];
        let mut pb = vec![0.0; w * h];
        let mut coord = [0usize; 3];
        coord[slice_axis] = s;
        let mut i = 0;
        for v in 0..h {
            coord[va] = v;
            for u in 0..w {
                coord[ua] = u;
                let p = rec.grid.idx(coord[0], coord[1], coord[2]);
                pa[i] = rec.data[p].norm() * scale;
                pb[i] = reference.data[p].norm() * scale;
                i += 1;
            }
        }
        haarpsi_slice(&pa, &pb, w, h)
    });
    let mut total = 0.0;
    for (num, den) in sums {
        if den <= 0.0 {
            return Err(Error::InvalidParameter(
                "degenerate slice pair (no structure in either volume)".into(),
            ));
        }
        total += logit(num / den).powi(2);
    }
    Ok(total / n_slices as f64)
}

/// Vessel-sharpness outcome. `score` is the mean over usable profiles; a
/// profile is skipped when its center sits below the noise floor.
#[derive(Clone, Copy, Debug)]
pub struct VesselSharpness {
    pub score: f64,
    pub profiles_used: usize,
    pub profiles_skipped: usize,
}

/// Fraction of the volume's peak magnitude below which a profile center is
/// considered noise.
pub const VESSEL_NOISE_FLOOR: f64 = 0.05;

fn trilinear(mag: &[f64], grid: Grid3, p: [f64; 3]) -> Option<f64> {
    let [nx, ny, nz] = grid.dims;
    let lim = [nx as f64, ny as f64, nz as f64];
    for a in 0..3 {
        if !(p[a] >= 0.0 && p[a] <= lim[a] - 1.0) {
            return None;
        }
    }
    let i = [p[0].floor() as usize, p[1].floor() as usize, p[2].floor() as usize];
    let f = [p[0] - i[0] as f64, p[1] - i[1] as f64, p[2] - i[2] as f64];
    let i1 = [
        (i[0] + 1).min(nx - 1),
        (i[1] + 1).min(ny - 1),
        (i[2] + 1).min(nz - 1),
    ];
    let mut acc = 0.0;
    for cz in 0..2 {
        let z = if cz == 0 { i[2] } else { i1[2] };
        let wz = if cz == 0 { 1.0 - f[2] } else { f[2] };
        for cy in 0..2 {
            let y = if cy == 0 { i[1] } else { i1[1] };
            let wy = if cy == 0 { 1.0 - f[1] } else { f[1] };
            for cx in 0..2 {
                let x = if cx == 0 { i[0] } else { i1[0] };
                let wx = if cx == 0 { 1.0 - f[0] } else { f[0] };
                acc += mag[grid.idx(x, y, z)] * wx * wy * wz;
            }
        }
    }
    Some(acc)
}

fn normalize3(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-12 {
        None
    } else {
        Some([v[0] / n, v[1] / n, v[2] / n])
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Mean edge steepness of a tubular structure: per profile, the largest
/// magnitude step per voxel on each side of the center, averaged and
/// normalized by the center intensity so a one-voxel step edge scores 1.
///
/// `centerline` points are in mm (voxel index times spacing); profiles are
/// sampled at one-voxel steps with trilinear interpolation out to
/// `2 * radius_hint_mm` plus margin.
pub fn vessel_sharpness(
    vol: &ComplexVolume,
    centerline: &[[f64; 3]],
    radius_hint_mm: f64,
    n_profiles: usize,
) -> Result<VesselSharpness> {
    if centerline.len() < 2 {
        return Err(Error::InvalidParameter("centerline needs at least 2 points".into()));
    }
    if !(radius_hint_mm > 0.0) {
        return Err(Error::InvalidParameter("radius hint must be positive".into()));
    }
    if n_profiles == 0 {
        return Err(Error::InvalidParameter("need at least one profile".into()));
    }
    let grid = vol.grid;
    let mag: Vec<f64> = vol.data.iter().map(|c| c.norm()).collect();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let floor = VESSEL_NOISE_FLOOR * peak;
    let to_voxel = |p: [f64; 3]| [p[0] / grid.spacing[0], p[1] / grid.spacing[1], p[2] / grid.spacing[2]];

    // voxel-space polyline; all points must be interpolatable
    let line: Vec<[f64; 3]> = centerline.iter().map(|&p| to_voxel(p)).collect();
    for p in &line {
        if trilinear(&mag, grid, *p).is_none() {
            return Err(Error::InvalidParameter(format!(
                "centerline point {p:?} (voxels) outside the volume"
            )));
        }
    }
    let mean_spacing = grid.spacing.iter().sum::<f64>() / 3.0;
    let reach = (2.0 * radius_hint_mm / mean_spacing).ceil() as i64 + 2;

    let n_points = n_profiles.div_ceil(2);
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut total = 0.0;
    for s in 0..n_points {
        // arc-length-agnostic: even index spacing along the polyline
        let f = if n_points == 1 { 0.5 } else { s as f64 / (n_points - 1) as f64 };
        let pos = f * (line.len() - 1) as f64;
        let seg = (pos.floor() as usize).min(line.len() - 2);
        let t = pos - seg as f64;
        let p = [0, 1, 2].map(|a| line[seg][a] * (1.0 - t) + line[seg + 1][a] * t);
        let tangent = match normalize3([0, 1, 2].map(|a| line[seg + 1][a] - line[seg][a])) {
            Some(v) => v,
            None => continue,
        };
        // pick the world axis least aligned with the tangent as the seed
        let mut seed = [0.0; 3];
        let least = (0..3).min_by(|&i, &j| tangent[i].abs().total_cmp(&tangent[j].abs())).unwrap();
        seed[least] = 1.0;
        let n1 = normalize3(cross(tangent, seed)).unwrap();
        let n2 = normalize3(cross(tangent, n1)).unwrap();
        for normal in [n1, n2] {
            if used + skipped >= n_profiles {
                break;
            }
            let center = match trilinear(&mag, grid, p) {
                Some(v) => v,
                None => {
                    skipped += 1;
                    continue;
                }
            };
            if center <= floor || center <= 0.0 {
                skipped += 1;
                continue;
            }
            let sample = |t: i64| {
                trilinear(&mag, grid, [0, 1, 2].map(|a| p[a] + t as f64 * normal[a]))
            };
            let mut best = [0.0f64; 2]; // per side
            for (side, dir) in [1i64, -1].iter().enumerate() {
                let mut prev = center;
                for step in 1..=reach {
                    match sample(dir * step) {
                        Some(v) => {
                            best[side] = best[side].max((v - prev).abs());
                            prev = v;
                        }
                        None => break,
                    }
                }
            }
            total += ((best[0] + best[1]) / 2.0 / center).min(1.0);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidParameter(
            "no usable vessel profiles (all centers below the noise floor)".into(),
        ));
    }
    Ok(VesselSharpness { score: (total / used as f64).clamp(0.0, 1.0), profiles_used: used, profiles_skipped: skipped })
}

/// One evaluated reconstruction, serialized as a CSV row.
#[derive(Clone, Debug)]
pub struct MetricReport {
    pub variant: String,
    pub r_analog: f64,
    pub seed: u64,
    pub relative_error: f64,
    pub haarpsi: f64,
    pub vessel_sharpness: Option<f64>,
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "variant,r_analog,seed,relative_error,haarpsi,vessel_sharpness"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.variant,
            fmt_csv_float(self.r_analog),
            self.seed,
            fmt_csv_float(self.relative_error),
            fmt_csv_float(self.haarpsi),
            self.vessel_sharpness.map(fmt_csv_float).unwrap_or_default(),
        )
    }
}
