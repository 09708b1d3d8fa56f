//! Radial phase-encoding (RPE) trajectories.
//!
//! The readout axis (kx) is Cartesian and fully sampled. In the (ky, kz)
//! phase plane, samples lie on radial lines through the origin: line l at
//! angle phi_l carries equispaced signed radial positions. Retrospective
//! undersampling removes whole lines. Coordinates are in units of the k-space
//! sample spacing (cycles per field of view), so a coordinate of n/2 sits at
//! the Nyquist edge of an n-point grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngularScheme {
    /// phi_l = l * pi / n_lines
    Uniform,
    /// phi_l = l * pi * (sqrt(5) - 1) / 2, reduced mod pi
    GoldenAngle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetroMode {
    /// Keep every `factor`-th line (indices 0, f, 2f, ...).
    Stride,
    /// Keep the first ceil(n/factor) lines.
    Prefix,
}

/// One radial phase-encoding line: an angle in [0, pi) and signed radial
/// positions along it.
#[derive(Clone, Debug)]
pub struct RpeLine {
    pub angle: f64,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n_read: usize,
    pub scheme: AngularScheme,
    pub lines: Vec<RpeLine>,
}

impl Trajectory {
    pub fn new(n_read: usize, scheme: AngularScheme, lines: Vec<RpeLine>) -> Result<Self> {
        if n_read < 2 {
            return Err(Error::InvalidParameter("n_read must be >= 2".into()));
        }
        if lines.is_empty() || lines.iter().any(|l| l.radii.is_empty()) {
            return Err(Error::InvalidParameter("trajectory must have non-empty lines".into()));
        }
        Ok(Self { n_read, scheme, lines })
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_read * self.lines.iter().map(|l| l.radii.len()).sum::<usize>()
    }

    /// Flat sample list: line-major, radial position next, readout fastest.
    /// Each sample is (kx, ky, kz) in k-space grid units.
    pub fn samples(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.n_samples());
        let half = (self.n_read / 2) as f64;
        for line in &self.lines {
            let (ca, sa) = (line.angle.cos(), line.angle.sin());
            for &r in &line.radii {
                let (ky, kz) = (r * ca, r * sa);
                for i in 0..self.n_read {
                    out.push([i as f64 - half, ky, kz]);
                }
            }
        }
        out
    }

    /// Largest |coordinate| per axis; used to validate against grid Nyquist
    /// bounds when an encoding operator is built.
    pub fn max_abs_coords(&self) -> [f64; 3] {
        let mut m = [0.0f64; 3];
        for s in self.samples() {
            for a in 0..3 {
                m[a] = m[a].max(s[a].abs());
            }
        }
        m
    }
}

/// Generate an RPE trajectory.
///
/// Radial positions are `i - floor(n_radial/2)` for `i in 0..n_radial`:
/// unit-spaced, centered, and always including 0 so the DC sample is
/// acquired on every line.
pub fn generate_rpe(
    n_read: usize,
    n_lines: usize,
    n_radial: usize,
    scheme: AngularScheme,
) -> Result<Trajectory> {
    if n_read < 4 {
        return Err(Error::InvalidParameter("n_read must be >= 4".into()));
    }
    if n_lines < 1 {
        return Err(Error::InvalidParameter("n_lines must be >= 1".into()));
    }
    if n_radial < 2 {
        return Err(Error::InvalidParameter("n_radial must be >= 2".into()));
    }
    let offset = (n_radial / 2) as f64;
    let radii: Vec<f64> = (0..n_radial).map(|i| i as f64 - offset).collect();
    let lines = (0..n_lines)
        .map(|l| {
            let angle = match scheme {
                AngularScheme::Uniform => l as f64 * PI / n_lines as f64,
                AngularScheme::GoldenAngle => {
                    (l as f64 * PI * (5.0f64.sqrt() - 1.0) / 2.0).rem_euclid(PI)
                }
            };
            RpeLine { angle, radii: radii.clone() }
        })
        .collect();
    Trajectory::new(n_read, scheme, lines)
}

/// Indices of the lines kept by retrospective undersampling; always
/// ceil(n_lines / factor) of them.
pub fn retained_line_indices(n_lines: usize, factor: usize, mode: RetroMode) -> Result<Vec<usize>> {
    if factor < 1 || factor > n_lines {
        return Err(Error::InvalidParameter(format!(
            "retro factor must be in 1..={n_lines}, got {factor}"
        )));
    }
    Ok(match mode {
        RetroMode::Stride => (0..n_lines).step_by(factor).collect(),
        RetroMode::Prefix => (0..n_lines.div_ceil(factor)).collect(),
    })
}

/// Retrospectively undersample by keeping a subset of whole lines.
pub fn retro_undersample(t: &Trajectory, factor: usize, mode: RetroMode) -> Result<Trajectory> {
    let keep = retained_line_indices(t.n_lines(), factor, mode)?;
    let lines = keep.iter().map(|&i| t.lines[i].clone()).collect();
    Trajectory::new(t.n_read, t.scheme, lines)
}

/// Radial-ramp density compensation, one weight per flat sample.
///
/// The raw weight is max(|r|, r_min) with r_min equal to half the radial
/// step, so the DC sample gets a positive floor; weights are constant along
/// the readout axis and normalized to mean 1 over all samples.
pub fn density_weights(t: &Trajectory) -> Vec<f64> {
    // Radial step: smallest positive gap between consecutive sorted radii on
    // any line; 1.0 if the trajectory is degenerate (single radius per line).
    let mut step = f64::INFINITY;
    for line in &t.lines {
        let mut sorted = line.radii.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in sorted.windows(2) {
            let d = w[1] - w[0];
            if d > 0.0 {
                step = step.min(d);
            }
        }
    }
    if !step.is_finite() {
        step = 1.0;
    }
    let r_min = 0.5 * step;

    let mut weights = Vec::with_capacity(t.n_samples());
    for line in &t.lines {
        for &r in &line.radii {
            let w = r.abs().max(r_min);
            for _ in 0..t.n_read {
                weights.push(w);
            }
        }
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    for w in &mut weights {
        *w /= mean;
    }
    weights
}

/// Nominal undersampling factor relative to a fully sampled Cartesian
/// acquisition with an `n_phase_full`^2 phase-encode plane.
pub fn nominal_undersampling(t: &Trajectory, n_phase_full: usize) -> f64 {
    let acquired: usize = t.lines.iter().map(|l| l.radii.len()).sum();
    (n_phase_full * n_phase_full) as f64 / acquired as f64
}

/// Nominal scan time after keeping `lines_kept` of `lines_total` lines:
/// acquisition time scales with the number of phase-encoding lines.
pub fn nominal_scan_time_minutes(base_minutes: f64, lines_kept: usize, lines_total: usize) -> f64 {
    base_minutes * lines_kept as f64 / lines_total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_angles_are_equispaced_and_distinct() {
        let t = generate_rpe(8, 2, 4, AngularScheme::Uniform).unwrap();
        assert!((t.lines[0].angle - 0.0).abs() < 1e-15);
        assert!((t.lines[1].angle - PI / 2.0).abs() < 1e-15);

        let t = generate_rpe(8, 64, 4, AngularScheme::Uniform).unwrap();
        for l in 0..64 {
            assert!((t.lines[l].angle - l as f64 * PI / 64.0).abs() < 1e-13);
        }
        for a in 0..64 {
            for b in (a + 1)..64 {
                assert!(t.lines[a].angle != t.lines[b].angle);
            }
        }
    }

    #[test]
    fn golden_angles_match_scalar_formula_and_stay_in_range() {
        let t = generate_rpe(8, 100, 4, AngularScheme::GoldenAngle).unwrap();
        for l in 0..100 {
            let expect = (l as f64 * PI * (5.0f64.sqrt() - 1.0) / 2.0).rem_euclid(PI);
            assert!((t.lines[l].angle - expect).abs() < 1e-12);
            assert!(t.lines[l].angle >= 0.0 && t.lines[l].angle < PI);
        }
    }

    #[test]
    fn radii_are_centered_unit_spaced_and_include_zero() {
        for n_radial in [2usize, 4, 5, 7, 64] {
            let t = generate_rpe(8, 3, n_radial, AngularScheme::Uniform).unwrap();
            for line in &t.lines {
                assert_eq!(line.radii.len(), n_radial);
                assert!(line.radii.iter().any(|&r| r == 0.0), "n_radial={n_radial}");
                for w in line.radii.windows(2) {
                    assert!((w[1] - w[0] - 1.0).abs() < 1e-15);
                }
                // Centered: extremes within [-(n/2), n/2).
                assert!(line.radii[0] >= -((n_radial / 2) as f64) - 1e-15);
                assert!(*line.radii.last().unwrap() <= n_radial as f64 / 2.0);
            }
        }
    }

    #[test]
    fn flat_sample_list_has_expected_length_and_readout_axis() {
        let t = generate_rpe(8, 3, 4, AngularScheme::Uniform).unwrap();
        let s = t.samples();
        assert_eq!(s.len(), 8 * 3 * 4);
        assert_eq!(s.len(), t.n_samples());
        // Readout fastest: kx runs -4..=3 within each radial run.
        for run in 0..(3 * 4) {
            for i in 0..8 {
                let p = s[run * 8 + i];
                assert_eq!(p[0], i as f64 - 4.0);
            }
        }
        // (ky, kz) constant along each readout run.
        for run in 0..(3 * 4) {
            for i in 1..8 {
                assert_eq!(s[run * 8 + i][1], s[run * 8][1]);
                assert_eq!(s[run * 8 + i][2], s[run * 8][2]);
            }
        }
    }

    #[test]
    fn stride_retro_64_by_6_keeps_11_lines() {
        let t = generate_rpe(8, 64, 4, AngularScheme::Uniform).unwrap();
        let kept = retained_line_indices(64, 6, RetroMode::Stride).unwrap();
        assert_eq!(kept, vec![0, 6, 12, 18, 24, 30, 36, 42, 48, 54, 60]);
        let u = retro_undersample(&t, 6, RetroMode::Stride).unwrap();
        assert_eq!(u.n_lines(), 11);
        assert_eq!(u.n_lines(), 64usize.div_ceil(6));
    }

    #[test]
    fn prefix_retro_keeps_leading_lines() {
        let kept = retained_line_indices(64, 6, RetroMode::Prefix).unwrap();
        assert_eq!(kept, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn retro_is_a_strict_subset_for_all_factors() {
        let t = generate_rpe(8, 17, 6, AngularScheme::GoldenAngle).unwrap();
        for factor in 1..=17 {
            for mode in [RetroMode::Stride, RetroMode::Prefix] {
                let u = retro_undersample(&t, factor, mode).unwrap();
                assert_eq!(u.n_lines(), 17usize.div_ceil(factor));
                for line in &u.lines {
                    let orig = t
                        .lines
                        .iter()
                        .find(|l| l.angle == line.angle)
                        .expect("undersampled line missing from base trajectory");
                    assert_eq!(orig.radii, line.radii);
                }
            }
        }
    }

    #[test]
    fn retro_rejects_bad_factors() {
        let t = generate_rpe(8, 8, 4, AngularScheme::Uniform).unwrap();
        assert!(retro_undersample(&t, 0, RetroMode::Stride).is_err());
        assert!(retro_undersample(&t, 9, RetroMode::Stride).is_err());
        assert!(retro_undersample(&t, 8, RetroMode::Stride).is_ok());
    }

    #[test]
    fn density_weights_hand_example() {
        // Single line, radii {-2, -1, 0, 1}: raw weights {2, 1, 0.5, 1},
        // mean 9/8, normalized {16/9, 8/9, 4/9, 8/9}.
        let t = Trajectory::new(
            4,
            AngularScheme::Uniform,
            vec![RpeLine { angle: 0.0, radii: vec![-2.0, -1.0, 0.0, 1.0] }],
        )
        .unwrap();
        let w = density_weights(&t);
        assert_eq!(w.len(), 16);
        let expect = [16.0 / 9.0, 8.0 / 9.0, 4.0 / 9.0, 8.0 / 9.0];
        for (ri, &e) in expect.iter().enumerate() {
            for i in 0..4 {
                assert!((w[ri * 4 + i] - e).abs() < 1e-12, "radial {ri} readout {i}");
            }
        }
        // Mean normalized to 1.
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_weights_min_at_dc_and_scale_invariance() {
        let t = generate_rpe(8, 5, 9, AngularScheme::GoldenAngle).unwrap();
        let w = density_weights(&t);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        // Locate a DC sample (r = 0) and confirm it carries the minimum.
        let s = t.samples();
        let dc = s.iter().position(|p| p[1] == 0.0 && p[2] == 0.0).unwrap();
        assert!((w[dc] - min).abs() < 1e-12);

        // Doubling all radii doubles the step too, leaving weights unchanged.
        let scaled_lines = t
            .lines
            .iter()
            .map(|l| RpeLine { angle: l.angle, radii: l.radii.iter().map(|r| 2.0 * r).collect() })
            .collect();
        let t2 = Trajectory::new(t.n_read, t.scheme, scaled_lines).unwrap();
        let w2 = density_weights(&t2);
        for (a, b) in w.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_equal_radii_give_unit_weights() {
        let t = Trajectory::new(
            4,
            AngularScheme::Uniform,
            vec![
                RpeLine { angle: 0.0, radii: vec![5.0, 5.0] },
                RpeLine { angle: 1.0, radii: vec![5.0, 5.0] },
            ],
        )
        .unwrap();
        for w in density_weights(&t) {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nominal_undersampling_example() {
        // 64 lines on a 256-point phase plane vs 256^2 full Cartesian -> 4.
        let t = generate_rpe(8, 64, 256, AngularScheme::Uniform).unwrap();
        let r = nominal_undersampling(&t, 256);
        assert!((r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scan_time_scales_with_kept_lines() {
        // 64-line base acquired in 12.6 min.
        let times: Vec<f64> = [1usize, 2, 4, 6]
            .iter()
            .map(|&f| nominal_scan_time_minutes(12.6, 64usize.div_ceil(f), 64))
            .collect();
        assert!((times[0] - 12.6).abs() < 1e-12);
        assert!((times[1] - 6.3).abs() < 1e-12);
        assert!((times[2] - 3.15).abs() < 1e-12); // reported as 3.2 after rounding
        assert!((times[3] - 12.6 * 11.0 / 64.0).abs() < 1e-12);
        // Strictly decreasing in the factor.
        assert!(times.windows(2).all(|w| w[1] < w[0]));
    }
}
