//! Band-limited digital shearlets on the centered frequency grid.
//!
//! Construction: a dyadic radial partition (Meyer-type polynomial
//! transitions, max-norm radius) times directional bumps in the shear
//! variable of each frequency cone (2D) or pyramid (3D). At scale j the
//! shear offsets are k in [-K_j, K_j] with K_j = ceil(2^(j/2)), i.e.
//! 2*K_j + 1 shears per cone and (2*K_j + 1)^2 per pyramid; parabolic
//! scaling is what drives the K_j growth. Radial and angular bump pairs
//! telescope so the squared filters sum to 1 away from cone seams; a final
//! global renormalization by 1/sqrt(sum of squares) makes the whole bank an
//! exact Parseval frame, including at the seams where neighboring cones
//! overlap.
//!
//! Filters are real, nonneg, centrally symmetric, and stored sparsely as
//! (flat frequency index, value) pairs over their support.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shears per cone at directional scale `j` (counting from 0).
pub fn shear_count(j: usize) -> usize {
    2 * (2f64.powf(j as f64 / 2.0).ceil() as usize) + 1
}

fn k_max(j: usize) -> i64 {
    2f64.powf(j as f64 / 2.0).ceil() as i64
}

/// Meyer auxiliary polynomial: C^3 ramp with nu(0)=0, nu(1)=1.
fn meyer_nu(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * t * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
    }
}

/// Smooth 0 -> 1 edge over [a, b]; rise^2 + fall^2 = 1 when paired with the
/// complementary cosine edge.
fn rise(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        0.0
    } else if t >= b {
        1.0
    } else {
        (FRAC_PI_2 * meyer_nu((t - a) / (b - a))).sin()
    }
}

/// Squared angular bump centered at shear k (of K) on the normalized shear
/// variable s in [-1, 1]; neighbors telescope to a sum of 1 on the cone.
fn angular_sq(s: f64, k: i64, k_cap: i64) -> f64 {
    let h = 1.0 / k_cap as f64;
    let u = s / h - k as f64;
    let r1 = rise(u + 1.0, 0.0, 1.0);
    let r0 = rise(u, 0.0, 1.0);
    (r1 * r1 - r0 * r0).max(0.0)
}

struct Subband {
    level: usize,
    idx: Vec<u32>,
    val: Vec<f64>,
}

/// A filter bank over one frequency grid (2D when dims[2] == 1).
pub struct ShearletBank {
    dims: [usize; 3],
    subbands: Vec<Subband>,
}

impl ShearletBank {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[cfg(test)]
    pub fn n_subbands(&self) -> usize {
        self.subbands.len()
    }

    /// Level tag per subband, in stack order (level 0 = low-pass, level j+1 =
    /// directional scale j).
    pub fn subband_levels(&self) -> Vec<usize> {
        self.subbands.iter().map(|s| s.level).collect()
    }

    /// `out = IFFT-input`: spectrum times the (real) subband filter.
    pub fn analyze_subband(&self, spectrum: &[Complex64], s: usize, out: &mut [Complex64]) {
        out.fill(Complex64::ZERO);
        let sb = &self.subbands[s];
        for (&i, &v) in sb.idx.iter().zip(&sb.val) {
            out[i as usize] = spectrum[i as usize] * v;
        }
    }

    /// Adjoint accumulation: `accum += filter_s .* coeff_spectrum`.
    pub fn accumulate_spectrum(&self, s: usize, coeff_spectrum: &[Complex64], accum: &mut [Complex64]) {
        let sb = &self.subbands[s];
        for (&i, &v) in sb.idx.iter().zip(&sb.val) {
            accum[i as usize] += coeff_spectrum[i as usize] * v;
        }
    }

    /// Sum of squared filter values per frequency; exactly 1 after
    /// construction (Parseval).
    #[cfg(test)]
    pub fn frame_field(&self) -> Vec<f64> {
        let n = self.dims[0] * self.dims[1] * self.dims[2];
        let mut t = vec![0.0; n];
        for sb in &self.subbands {
            for (&i, &v) in sb.idx.iter().zip(&sb.val) {
                t[i as usize] += v * v;
            }
        }
        t
    }

    /// Build the bank. `dims[2] == 1` selects the 2D cone-adapted system;
    /// otherwise the 3D pyramid-adapted system with three pyramids.
    pub fn build(dims: [usize; 3], n_scales: usize) -> Result<Self> {
        let two_d = dims[2] == 1;
        let n = dims[0] * dims[1] * dims[2];
        if n == 0 {
            return Err(Error::InvalidParameter("empty grid".into()));
        }
        let n_pyramids = if two_d { 2 } else { 3 };

        // Subband table: low-pass first, then per scale all pyramids/shears.
        let mut subbands = vec![Subband { level: 0, idx: Vec::new(), val: Vec::new() }];
        // base index of each (scale, pyramid) run of shear subbands
        let mut base = vec![vec![0usize; n_pyramids]; n_scales];
        for j in 0..n_scales {
            let per_cone = shear_count(j);
            let per_pyramid = if two_d { per_cone } else { per_cone * per_cone };
            for p in 0..n_pyramids {
                base[j][p] = subbands.len();
                for _ in 0..per_pyramid {
                    subbands.push(Subband { level: j + 1, idx: Vec::new(), val: Vec::new() });
                }
            }
        }

        // Radial knots on rho in [0, 1] (1 = max-norm Nyquist).
        let knots: Vec<f64> = (0..=n_scales).map(|j| 2f64.powi(j as i32 - n_scales as i32)).collect();
        let radial_rise = |rho: f64, j: usize| -> f64 {
            if j >= n_scales {
                0.0 // no roll-off above the finest scale; covers the corners
            } else {
                rise(rho, knots[j], knots[j + 1])
            }
        };

        let mut frame = vec![0.0f64; n];
        let centers = [dims[0] / 2, dims[1] / 2, dims[2] / 2];

        let mut flat = 0usize;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    // Normalized centered frequencies in [-1/2, 1/2).
                    let xi = [
                        (x as f64 - centers[0] as f64) / dims[0] as f64,
                        (y as f64 - centers[1] as f64) / dims[1] as f64,
                        if two_d { 0.0 } else { (z as f64 - centers[2] as f64) / dims[2] as f64 },
                    ];
                    let rho = if two_d {
                        2.0 * xi[0].abs().max(xi[1].abs())
                    } else {
                        2.0 * xi[0].abs().max(xi[1].abs()).max(xi[2].abs())
                    };

                    // Low-pass: W_phi^2 = 1 - R_0(rho)^2.
                    let r0 = radial_rise(rho, 0);
                    let low_sq = (1.0 - r0 * r0).max(0.0);
                    if low_sq > 0.0 {
                        let v = low_sq.sqrt();
                        subbands[0].idx.push(flat as u32);
                        subbands[0].val.push(v);
                        frame[flat] += low_sq;
                    }

                    for j in 0..n_scales {
                        let rj = radial_rise(rho, j);
                        let rj1 = radial_rise(rho, j + 1);
                        let rad_sq = (rj * rj - rj1 * rj1).max(0.0);
                        if rad_sq == 0.0 {
                            continue;
                        }
                        let rad = rad_sq.sqrt();
                        let kc = k_max(j);
                        for p in 0..n_pyramids {
                            // Shear variables relative to the pyramid's
                            // dominant axis; windows vanish outside
                            // |s| <= 1 + 1/K, which implements the cone
                            // restriction with a smooth seam overlap.
                            let dom = xi[p];
                            if dom == 0.0 {
                                continue;
                            }
                            let others: [usize; 2] = match (two_d, p) {
                                (true, 0) => [1, 1],
                                (true, _) => [0, 0],
                                (false, 0) => [1, 2],
                                (false, 1) => [0, 2],
                                (false, _) => [0, 1],
                            };
                            let s1 = xi[others[0]] / dom;
                            if two_d {
                                for k in -kc..=kc {
                                    let a = angular_sq(s1, k, kc);
                                    if a > 0.0 {
                                        let s_idx = base[j][p] + (k + kc) as usize;
                                        let v2 = rad_sq * a;
                                        subbands[s_idx].idx.push(flat as u32);
                                        subbands[s_idx].val.push(rad * a.sqrt());
                                        frame[flat] += v2;
                                    }
                                }
                            } else {
                                let s2 = xi[others[1]] / dom;
                                let per = shear_count(j);
                                for k1 in -kc..=kc {
                                    let a1 = angular_sq(s1, k1, kc);
                                    if a1 == 0.0 {
                                        continue;
                                    }
                                    for k2 in -kc..=kc {
                                        let a2 = angular_sq(s2, k2, kc);
                                        if a2 == 0.0 {
                                            continue;
                                        }
                                        let s_idx = base[j][p]
                                            + (k1 + kc) as usize * per
                                            + (k2 + kc) as usize;
                                        let v2 = rad_sq * a1 * a2;
                                        subbands[s_idx].idx.push(flat as u32);
                                        subbands[s_idx].val.push((rad_sq * a1 * a2).sqrt());
                                        frame[flat] += v2;
                                    }
                                }
                            }
                        }
                    }
                    flat += 1;
                }
            }
        }

        // Global renormalization to an exact Parseval frame. Every frequency
        // must already be covered; a hole would mean the windows are wrong.
        for (i, &t) in frame.iter().enumerate() {
            if t <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "shearlet window coverage hole at flat frequency index {i}"
                )));
            }
        }
        for sb in &mut subbands {
            for (pos, &i) in sb.idx.iter().enumerate() {
                sb.val[pos] /= frame[i as usize].sqrt();
            }
        }

        Ok(Self { dims, subbands })
    }
}
