//! The batch commands: simulate, reconstruct, evaluate, sweep, export-slice.
//!
//! Every artifact lives flat in the manifest's output directory under a
//! predictable name, so commands find each other's outputs without any
//! registry. All writes are atomic (temp + rename) via the io layer, and
//! every step is deterministic for a fixed manifest: rerunning a command
//! reproduces its files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use csmri::encoding::{EncodingOperator, GriddingParams, KSpaceSamples, SensitivityMaps};
use csmri::error::{Error, Result};
use csmri::io::{self, KvFile};
use csmri::metrics;
use csmri::sampling::{self, RetroMode};
use csmri::simulation;
use csmri::solver::{self, AdmmConfig, Variant};
use csmri::transforms::default_scales;
use csmri::volume::ComplexVolume;

use crate::manifest::RunManifest;

// --- output-file naming -----------------------------------------------------

pub fn phantom_path(out: &Path) -> PathBuf {
    out.join("phantom.csvol")
}

pub fn centerlines_path(out: &Path) -> PathBuf {
    out.join("centerlines.txt")
}

pub fn spec_echo_path(out: &Path) -> PathBuf {
    out.join("phantom_spec.kv")
}

pub fn coil_path(out: &Path, c: usize) -> PathBuf {
    out.join(format!("coil_{c:02}.csvol"))
}

pub fn traj_name(factor: usize) -> String {
    format!("trajectory_f{factor}.cstraj")
}

pub fn traj_path(out: &Path, factor: usize) -> PathBuf {
    out.join(traj_name(factor))
}

pub fn kspace_path(out: &Path, factor: usize) -> PathBuf {
    out.join(format!("kspace_f{factor}.cskspc"))
}

pub fn recon_path(out: &Path, v: Variant, factor: usize) -> PathBuf {
    out.join(format!("recon_{v}_f{factor}.csvol"))
}

pub fn diag_path(out: &Path, v: Variant, factor: usize) -> PathBuf {
    out.join(format!("diag_{v}_f{factor}.csv"))
}

pub fn meta_path(out: &Path, v: Variant, factor: usize) -> PathBuf {
    out.join(format!("meta_{v}_f{factor}.kv"))
}

pub fn slice_path(out: &Path, v: Variant, factor: usize) -> PathBuf {
    out.join(format!("slice_{v}_f{factor}.pgm"))
}

pub fn results_path(out: &Path) -> PathBuf {
    out.join("results.csv")
}

fn fmt_r(r: f64) -> String {
    if (r - r.round()).abs() < 1e-9 {
        format!("{}", r.round() as i64)
    } else {
        format!("{r:.2}")
    }
}

// --- simulate ----------------------------------------------------------------

/// Phantom, coils, per-factor trajectories and k-space. The base trajectory
/// is acquired once (with noise); each retro factor keeps a line subset of
/// those same samples, mirroring retrospective undersampling of one scan.
pub fn cmd_simulate(m: &RunManifest) -> Result<()> {
    let grid = m.grid()?;
    let spec = m.phantom()?;
    fs::create_dir_all(&m.out).map_err(|e| Error::Io {
        path: m.out.display().to_string(),
        source: e,
    })?;

    let (truth, centerlines) = simulation::make_phantom(grid, &spec, m.noise_seed)?;
    io::write_csvol(&phantom_path(&m.out), &truth)?;
    simulation::write_centerlines(&centerlines_path(&m.out), &centerlines)?;
    io::write_atomic(&spec_echo_path(&m.out), spec.to_kv_text().as_bytes())?;

    let maps = simulation::make_coils(grid, m.coils, m.noise_seed.wrapping_add(1))?;
    for c in 0..maps.n_coils() {
        io::write_csvol(&coil_path(&m.out, c), maps.coil(c))?;
    }

    let base = sampling::generate_rpe(m.n_read, m.n_lines, m.n_radial, m.scheme)?;
    let e = EncodingOperator::new(maps, &base, GriddingParams::default(), None)?;
    let clean = e.forward(&truth)?;
    let sigma = simulation::noise_sigma_for_snr(&clean, m.snr_db);
    let y = simulation::simulate_acquisition(&truth, &e, sigma, m.noise_seed)?;

    let per_line = m.n_radial * m.n_read;
    for &f in &m.factors {
        let keep = sampling::retained_line_indices(m.n_lines, f, RetroMode::Stride)?;
        let sub = sampling::retro_undersample(&base, f, RetroMode::Stride)?;
        io::write_cstraj(&traj_path(&m.out, f), &sub)?;
        let coils: Vec<Vec<_>> = y
            .coils
            .iter()
            .map(|src| {
                keep.iter()
                    .flat_map(|&l| src[l * per_line..(l + 1) * per_line].iter().copied())
                    .collect()
            })
            .collect();
        io::write_cskspc(&kspace_path(&m.out, f), &traj_name(f), &coils)?;
        println!("factor {f} -> R {}", fmt_r(m.nominal_r(f)));
    }
    Ok(())
}

// --- reconstruct ---------------------------------------------------------------

/// Load the simulate outputs for one factor and build the measurement model.
fn load_operator(m: &RunManifest, factor: usize) -> Result<(EncodingOperator, KSpaceSamples)> {
    let grid = m.grid()?;
    let maps: Vec<ComplexVolume> =
        (0..m.coils).map(|c| io::read_csvol(&coil_path(&m.out, c))).collect::<Result<_>>()?;
    if let Some(first) = maps.first() {
        if first.grid != grid {
            return Err(Error::ShapeMismatch(format!(
                "coil files are {:?}, manifest grid is {:?}",
                first.grid.dims, grid.dims
            )));
        }
    }
    let maps = SensitivityMaps::new(maps)?;

    let t = io::read_cstraj(&traj_path(&m.out, factor))?;
    let kf = io::read_cskspc(&kspace_path(&m.out, factor))?;
    if kf.trajectory_ref != traj_name(factor) {
        return Err(Error::Parse {
            path: kspace_path(&m.out, factor).display().to_string(),
            msg: format!(
                "references trajectory `{}`, expected `{}`",
                kf.trajectory_ref,
                traj_name(factor)
            ),
        });
    }
    let density = sampling::density_weights(&t);
    let e = EncodingOperator::new(maps, &t, GriddingParams::default(), Some(density))?;
    Ok((e, KSpaceSamples::new(kf.coils)?))
}

/// Ground truth is a simulation-only extra: used when present, never required.
fn load_truth(m: &RunManifest) -> Result<Option<ComplexVolume>> {
    let p = phantom_path(&m.out);
    if p.is_file() {
        Ok(Some(io::read_csvol(&p)?))
    } else {
        Ok(None)
    }
}

/// Scale count actually used by reconstruct for the multiscale variants
/// (None for TV and itSENSE), mirroring the solver's dispatch.
fn resolved_scales(v: Variant, cfg: &AdmmConfig, dims: [usize; 3]) -> Option<usize> {
    match v {
        Variant::Shear3d | Variant::WaveCs => {
            Some(cfg.n_scales.unwrap_or_else(|| default_scales(dims[0].min(dims[1]).min(dims[2]))))
        }
        Variant::Shear2d => {
            Some(cfg.n_scales.unwrap_or_else(|| default_scales(dims[1].min(dims[2]))))
        }
        Variant::Tv | Variant::ItSense => None,
    }
}

/// Everything needed to rerun or audit one reconstruction.
fn meta_kv_text(m: &RunManifest, v: Variant, factor: usize, cfg: &AdmmConfig) -> Result<String> {
    let mut s = String::new();
    s.push_str(&format!("variant = {v}\n"));
    s.push_str(&format!("factor = {factor}\n"));
    s.push_str(&format!("nominal_r = {}\n", m.nominal_r(factor)));
    if v == Variant::ItSense {
        s.push_str(&format!("cg_iters = {}\n", 2 * cfg.max_outer));
        s.push_str(&format!("cg_tol = {}\n", cfg.inner_tol));
        return Ok(s);
    }
    s.push_str(&format!("beta = {}\n", cfg.beta));
    s.push_str(&format!("mu = {}\n", cfg.mu));
    s.push_str(&format!("nu_rel = {}\n", cfg.nu_rel));
    s.push_str(&format!("max_outer = {}\n", cfg.max_outer));
    s.push_str(&format!("freeze_after = {}\n", cfg.freeze_after));
    s.push_str(&format!("reweight = {}\n", v.uses_reweighting()));
    s.push_str(&format!("inner_iters = {}\n", cfg.inner_iters));
    s.push_str(&format!("inner_tol = {}\n", cfg.inner_tol));
    let levels = match resolved_scales(v, cfg, m.dims) {
        Some(scales) => {
            s.push_str(&format!("n_scales = {scales}\n"));
            scales + 1
        }
        None => 1,
    };
    let lambda: Vec<String> =
        cfg.resolved_lambda(levels)?.iter().map(|l| l.to_string()).collect();
    s.push_str(&format!("lambda_per_level = {}\n", lambda.join(" ")));
    Ok(s)
}

pub fn cmd_reconstruct(m: &RunManifest, v: Variant, factor: usize) -> Result<()> {
    let started = Instant::now();
    let (e, y) = load_operator(m, factor)?;
    let cfg = m.solver()?;
    let truth = load_truth(m)?;
    let res = solver::reconstruct_variant(v, &y, &e, &cfg, truth.as_ref())?;
    io::write_csvol(&recon_path(&m.out, v, factor), &res.volume)?;
    io::write_atomic(
        &diag_path(&m.out, v, factor),
        solver::diagnostics_csv(&res.diagnostics).as_bytes(),
    )?;
    io::write_atomic(&meta_path(&m.out, v, factor), meta_kv_text(m, v, factor, &cfg)?.as_bytes())?;
    println!(
        "reconstruct {v} f{factor}: {} iterations in {:.1} s",
        res.diagnostics.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

// --- evaluate -----------------------------------------------------------------

fn export_center_slice(path: &Path, vol: &ComplexVolume) -> Result<()> {
    let [nx, ny, nz] = vol.grid.dims;
    let x = nx / 2;
    let mut mags = Vec::with_capacity(ny * nz);
    for y in 0..ny {
        for z in 0..nz {
            mags.push(vol.at(x, y, z).norm());
        }
    }
    let peak = mags.iter().cloned().fold(0.0f64, f64::max);
    let pixels: Vec<u8> = if peak > 0.0 {
        mags.iter().map(|&v| (255.0 * v / peak).round() as u8).collect()
    } else {
        vec![0; ny * nz]
    };
    io::write_pgm(path, nz, ny, &pixels)
}

/// Mean vessel sharpness over the phantom's tubes, when centerline and
/// spec-echo files are around to define them. Tubes whose profiles all fall
/// below the noise floor are skipped; no usable tube means no score.
fn vessel_score(m: &RunManifest, vol: &ComplexVolume) -> Option<f64> {
    let cl_path = centerlines_path(&m.out);
    let spec_path = spec_echo_path(&m.out);
    if !cl_path.is_file() || !spec_path.is_file() {
        return None;
    }
    let centerlines = simulation::read_centerlines(&cl_path).ok()?;
    let spec = KvFile::load(&spec_path).ok().and_then(|kv| {
        csmri::simulation::PhantomSpec::from_kv(&kv).ok()
    })?;
    if centerlines.len() != spec.tubes.len() {
        return None;
    }
    let mut scores = Vec::new();
    for (line, tube) in centerlines.iter().zip(&spec.tubes) {
        if let Ok(vs) = metrics::vessel_sharpness(vol, line, tube.radius_mm, 32) {
            scores.push(vs.score);
        }
    }
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

/// Metrics for every (variant, factor) against the designated reference —
/// itSENSE at the lowest factor — plus ground-truth columns when the phantom
/// volume exists. Also exports center slices of each reconstruction.
pub fn cmd_evaluate(m: &RunManifest) -> Result<()> {
    let min_f = *m.factors.iter().min().expect("manifest has factors");
    let reference = io::read_csvol(&recon_path(&m.out, Variant::ItSense, min_f))?;
    let truth = load_truth(m)?;

    let mut csv = String::from("variant,factor,r_nominal,rel_err_ref,haarpsi_ref,vessel_sharpness");
    if truth.is_some() {
        csv.push_str(",rel_err_truth,haarpsi_truth");
    }
    csv.push('\n');

    for &v in &m.variants {
        for &f in &m.factors {
            let rec = io::read_csvol(&recon_path(&m.out, v, f))?;
            let rel = metrics::relative_error(&rec, &reference)?;
            let hp = metrics::haarpsi(&rec, &reference, 0)?;
            let vs = vessel_score(m, &rec);
            csv.push_str(&format!(
                "{v},{f},{},{},{},{}",
                io::fmt_csv_float(m.nominal_r(f)),
                io::fmt_csv_float(rel),
                io::fmt_csv_float(hp),
                io::fmt_csv_float(vs.unwrap_or(f64::NAN)),
            ));
            if let Some(t) = &truth {
                csv.push_str(&format!(
                    ",{},{}",
                    io::fmt_csv_float(metrics::relative_error(&rec, t)?),
                    io::fmt_csv_float(metrics::haarpsi(&rec, t, 0)?),
                ));
            }
            csv.push('\n');
            export_center_slice(&slice_path(&m.out, v, f), &rec)?;
        }
    }
    if let Some(t) = &truth {
        export_center_slice(&m.out.join("slice_truth.pgm"), t)?;
    }
    io::write_atomic(&results_path(&m.out), csv.as_bytes())?;
    println!(
        "evaluate: {} rows -> {}",
        m.variants.len() * m.factors.len(),
        results_path(&m.out).display()
    );
    Ok(())
}

// --- sweep / export-slice -------------------------------------------------------

/// simulate + every (variant, factor) reconstruction + evaluate.
pub fn cmd_sweep(m: &RunManifest) -> Result<()> {
    cmd_simulate(m)?;
    for &v in &m.variants {
        for &f in &m.factors {
            cmd_reconstruct(m, v, f)?;
        }
    }
    cmd_evaluate(m)
}

pub fn cmd_export_slice(m: &RunManifest, v: Variant, factor: usize) -> Result<()> {
    let rec = io::read_csvol(&recon_path(&m.out, v, factor))?;
    let path = slice_path(&m.out, v, factor);
    export_center_slice(&path, &rec)?;
    println!("export-slice: {}", path.display());
    Ok(())
}
