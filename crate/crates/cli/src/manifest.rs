//! Run manifests: one key-value file drives the whole pipeline.
//!
//! Every key has a default matching the desk-scale study configuration, so
//! an empty manifest is a valid (if slow) run. Relative paths — the phantom
//! spec, the solver config, and the output directory — resolve against the
//! manifest file's own directory, so a run directory can be moved wholesale.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use csmri::error::{Error, Result};
use csmri::io::KvFile;
use csmri::sampling::AngularScheme;
use csmri::simulation::{PhantomSpec, DESK_COILS, DESK_DIM, DESK_SNR_DB, DESK_SPACING_MM};
use csmri::solver::{AdmmConfig, Variant};
use csmri::volume::Grid3;

#[derive(Clone, Debug)]
pub struct RunManifest {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub coils: usize,
    /// Seeds the k-space noise; the coil jitter stream uses `noise_seed + 1`.
    pub noise_seed: u64,
    pub snr_db: f64,
    pub n_read: usize,
    pub n_lines: usize,
    pub n_radial: usize,
    pub scheme: AngularScheme,
    pub factors: Vec<usize>,
    pub variants: Vec<Variant>,
    pub phantom_spec: Option<PathBuf>,
    pub solver_config: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunManifest {
    /// Recognized keys: dims (1 or 3 ints), spacing_mm, coils, noise_seed,
    /// snr_db, n_read, n_lines, n_radial, scheme (uniform|golden), factors,
    /// variants, phantom_spec, solver_config, out.
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KvFile::load(path)?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };

        let dims = match kv.get("dims") {
            None => [DESK_DIM; 3],
            Some(_) => match kv.parse_list::<usize>("dims")?[..] {
                [n] => [n; 3],
                [a, b, c] => [a, b, c],
                ref other => {
                    return Err(Error::Parse {
                        path: kv.path.clone(),
                        msg: format!("dims wants 1 or 3 integers, got {}", other.len()),
                    })
                }
            },
        };
        let n_read = kv.parse_or("n_read", dims[0])?;
        let n_radial = kv.parse_or("n_radial", dims[1].min(dims[2]))?;
        let scheme = match kv.get("scheme").unwrap_or("golden") {
            "golden" => AngularScheme::GoldenAngle,
            "uniform" => AngularScheme::Uniform,
            other => {
                return Err(Error::Parse {
                    path: kv.path.clone(),
                    msg: format!("scheme must be `golden` or `uniform`, got `{other}`"),
                })
            }
        };

        let factors = match kv.get("factors") {
            None => vec![1, 2, 4, 6],
            Some(_) => kv.parse_list::<usize>("factors")?,
        };
        if factors.is_empty() {
            return Err(Error::InvalidParameter("manifest needs at least one factor".into()));
        }
        if factors.contains(&0) {
            return Err(Error::InvalidParameter("retro factors must be >= 1".into()));
        }

        let variants = match kv.get("variants") {
            None => Variant::ALL.to_vec(),
            Some(list) => list
                .split_whitespace()
                .map(Variant::from_str)
                .collect::<Result<Vec<_>>>()?,
        };
        if variants.is_empty() {
            return Err(Error::InvalidParameter("manifest needs at least one variant".into()));
        }

        let resolve_existing = |key: &str| -> Result<Option<PathBuf>> {
            match kv.get(key) {
                None => Ok(None),
                Some(v) => {
                    let p = dir.join(v);
                    if !p.is_file() {
                        return Err(Error::InvalidParameter(format!(
                            "{key} file not found: {}",
                            p.display()
                        )));
                    }
                    Ok(Some(p))
                }
            }
        };

        let m = Self {
            dims,
            spacing_mm: kv.parse_or("spacing_mm", DESK_SPACING_MM)?,
            coils: kv.parse_or("coils", DESK_COILS)?,
            noise_seed: kv.parse_or("noise_seed", 7u64)?,
            snr_db: kv.parse_or("snr_db", DESK_SNR_DB)?,
            n_read,
            n_lines: kv.parse_or("n_lines", 16usize)?,
            n_radial,
            scheme,
            factors,
            variants,
            phantom_spec: resolve_existing("phantom_spec")?,
            solver_config: resolve_existing("solver_config")?,
            out: dir.join(kv.get("out").unwrap_or("out")),
        };
        m.grid()?;
        Ok(m)
    }

    pub fn grid(&self) -> Result<Grid3> {
        Grid3::new(self.dims, [self.spacing_mm; 3])
    }

    pub fn phantom(&self) -> Result<PhantomSpec> {
        match &self.phantom_spec {
            None => Ok(PhantomSpec::default_desk()),
            Some(p) => PhantomSpec::from_kv(&KvFile::load(p)?),
        }
    }

    pub fn solver(&self) -> Result<AdmmConfig> {
        match &self.solver_config {
            None => Ok(AdmmConfig::default()),
            Some(p) => AdmmConfig::from_kv(&KvFile::load(p)?),
        }
    }

    /// Nominal undersampling of the base trajectory relative to full
    /// Cartesian phase encoding of this grid.
    pub fn base_r(&self) -> f64 {
        (self.dims[1] * self.dims[2]) as f64 / (self.n_lines * self.n_radial) as f64
    }

    /// Reported R for one retro factor (base R x factor).
    pub fn nominal_r(&self, factor: usize) -> f64 {
        self.base_r() * factor as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn load_text(text: &str) -> Result<RunManifest> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.kv");
        fs::write(&path, text).unwrap();
        RunManifest::load(&path)
    }

    #[test]
    fn empty_manifest_gets_desk_defaults() {
        let m = load_text("").unwrap();
        assert_eq!(m.dims, [64, 64, 64]);
        assert_eq!(m.spacing_mm, 1.5);
        assert_eq!(m.coils, 8);
        assert_eq!(m.n_read, 64);
        assert_eq!(m.n_lines, 16);
        assert_eq!(m.n_radial, 64);
        assert_eq!(m.scheme, AngularScheme::GoldenAngle);
        assert_eq!(m.factors, vec![1, 2, 4, 6]);
        assert_eq!(m.variants, Variant::ALL.to_vec());
        assert!(m.phantom_spec.is_none() && m.solver_config.is_none());
        assert!((m.base_r() - 4.0).abs() < 1e-12);
        assert!((m.nominal_r(6) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn explicit_keys_override_defaults() {
        let m = load_text(
            "dims = 32\nspacing_mm = 2.0\ncoils = 4\nnoise_seed = 11\nsnr_db = 40\n\
             n_lines = 8\nn_radial = 32\nscheme = uniform\nfactors = 1 4\n\
             variants = TV itSENSE\nout = results\n",
        )
        .unwrap();
        assert_eq!(m.dims, [32, 32, 32]);
        assert_eq!(m.coils, 4);
        assert_eq!(m.noise_seed, 11);
        assert_eq!(m.scheme, AngularScheme::Uniform);
        assert_eq!(m.factors, vec![1, 4]);
        assert_eq!(m.variants, vec![Variant::Tv, Variant::ItSense]);
        assert!(m.out.ends_with("results"));
        assert!((m.base_r() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_factor_variant_and_scheme() {
        assert!(load_text("factors = 0 2").is_err());
        assert!(load_text("factors =").is_err());
        assert!(load_text("variants = FancyCS").is_err());
        assert!(load_text("scheme = spiral").is_err());
        assert!(load_text("dims = 8 8").is_err());
    }

    #[test]
    fn referenced_paths_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.kv");
        fs::write(&path, "phantom_spec = missing.kv\n").unwrap();
        assert!(RunManifest::load(&path).is_err());

        fs::write(dir.path().join("p.kv"), "background = 0.1\n").unwrap();
        fs::write(&path, "phantom_spec = p.kv\n").unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.phantom().unwrap().background, 0.1);
    }
}
