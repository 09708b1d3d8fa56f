//! On-disk formats.
//!
//! All formats open with a short ASCII header (one field per line) terminated
//! by a `data` line; binary payloads follow as little-endian f64 words.
//! Complex data is interleaved (re, im) pairs, volumes are x-fastest.
//! Writes go to a sibling temp file first and are renamed into place, so
//! readers never observe partial files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sampling::{AngularScheme, RpeLine, Trajectory};
use crate::volume::{ComplexVolume, Grid3};

/// Write `bytes` atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(&display, e))?;
        }
    }
    let mut tmp = PathBuf::from(path);
    let mut name = tmp.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp.{}", std::process::id()));
    tmp.set_file_name(name);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(|e| Error::io(&display, e))
}

fn push_f64s(buf: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f64s(bytes: &[u8], path: &str) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::parse(path, "binary payload is not a whole number of f64 words"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Split a raw file into header lines (up to the `data` line) and payload.
fn split_header<'a>(raw: &'a [u8], path: &str) -> Result<(Vec<&'a str>, &'a [u8])> {
    let mut lines = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        let end = raw[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .ok_or_else(|| Error::parse(path, "missing `data` line"))?;
        let line = std::str::from_utf8(&raw[pos..end])
            .map_err(|_| Error::parse(path, "non-UTF8 header"))?
            .trim();
        pos = end + 1;
        if line == "data" {
            return Ok((lines, &raw[pos..]));
        }
        lines.push(line);
    }
    Err(Error::parse(path, "missing `data` line"))
}

/// Look up a whitespace-separated header field by key.
fn header_field<'a>(lines: &[&'a str], key: &str, path: &str) -> Result<&'a str> {
    for l in lines {
        if let Some(rest) = l.strip_prefix(key) {
            if rest.starts_with(char::is_whitespace) {
                return Ok(rest.trim());
            }
        }
    }
    Err(Error::parse(path, format!("missing header field `{key}`")))
}

fn parse_usizes(s: &str, n: usize, path: &str, what: &str) -> Result<Vec<usize>> {
    let vals: Vec<usize> = s.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    if vals.len() != n {
        return Err(Error::parse(path, format!("expected {n} integers for {what}")));
    }
    Ok(vals)
}

fn parse_f64s(s: &str, n: usize, path: &str, what: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    if vals.len() != n {
        return Err(Error::parse(path, format!("expected {n} floats for {what}")));
    }
    Ok(vals)
}

// ---------------------------------------------------------------------------
// CSVOL1: complex volumes
// ---------------------------------------------------------------------------

pub fn write_csvol(path: &Path, v: &ComplexVolume) -> Result<()> {
    let [nx, ny, nz] = v.grid.dims;
    let [sx, sy, sz] = v.grid.spacing;
    let mut buf = Vec::with_capacity(v.data.len() * 16 + 128);
    buf.extend_from_slice(
        format!("CSVOL1\ndims {nx} {ny} {nz}\nspacing {sx} {sy} {sz}\ndtype c64\ndata\n")
            .as_bytes(),
    );
    push_f64s(&mut buf, v.data.iter().flat_map(|c| [c.re, c.im]));
    write_atomic(path, &buf)
}

pub fn read_csvol(path: &Path) -> Result<ComplexVolume> {
    let display = path.display().to_string();
    let raw = fs::read(path).map_err(|e| Error::io(&display, e))?;
    let (lines, payload) = split_header(&raw, &display)?;
    if lines.first() != Some(&"CSVOL1") {
        return Err(Error::parse(&display, "bad magic, expected CSVOL1"));
    }
    let dims = parse_usizes(header_field(&lines, "dims", &display)?, 3, &display, "dims")?;
    let spacing = parse_f64s(header_field(&lines, "spacing", &display)?, 3, &display, "spacing")?;
    let dtype = header_field(&lines, "dtype", &display)?;
    if dtype != "c64" {
        return Err(Error::parse(&display, format!("unsupported dtype `{dtype}`")));
    }
    let grid = Grid3::new([dims[0], dims[1], dims[2]], [spacing[0], spacing[1], spacing[2]])?;
    let words = read_f64s(payload, &display)?;
    if words.len() != 2 * grid.n() {
        return Err(Error::parse(
            &display,
            format!("payload has {} words, expected {}", words.len(), 2 * grid.n()),
        ));
    }
    let data = words.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexVolume::from_vec(grid, data)
}

// ---------------------------------------------------------------------------
// CSTRAJ1: trajectories
// ---------------------------------------------------------------------------

pub fn write_cstraj(path: &Path, t: &Trajectory) -> Result<()> {
    let scheme = match t.scheme {
        AngularScheme::Uniform => "uniform",
        AngularScheme::GoldenAngle => "golden",
    };
    let samples = t.samples();
    let mut buf = Vec::with_capacity(samples.len() * 24 + 128);
    buf.extend_from_slice(
        format!(
            "CSTRAJ1\nn_read {}\nn_lines {}\nscheme {}\nn_samples {}\ndata\n",
            t.n_read,
            t.lines.len(),
            scheme,
            samples.len()
        )
        .as_bytes(),
    );
    push_f64s(&mut buf, samples.iter().flat_map(|s| s.iter().copied()));
    write_atomic(path, &buf)
}

/// Read a trajectory, recovering the per-line structure (angle, signed radii)
/// from the flat sample list. The flat layout is line-major with a constant
/// number of radial positions per line and the readout axis fastest.
pub fn read_cstraj(path: &Path) -> Result<Trajectory> {
    let display = path.display().to_string();
    let raw = fs::read(path).map_err(|e| Error::io(&display, e))?;
    let (lines, payload) = split_header(&raw, &display)?;
    if lines.first() != Some(&"CSTRAJ1") {
        return Err(Error::parse(&display, "bad magic, expected CSTRAJ1"));
    }
    let n_read = parse_usizes(header_field(&lines, "n_read", &display)?, 1, &display, "n_read")?[0];
    let n_lines =
        parse_usizes(header_field(&lines, "n_lines", &display)?, 1, &display, "n_lines")?[0];
    let scheme = match header_field(&lines, "scheme", &display)? {
        "uniform" => AngularScheme::Uniform,
        "golden" => AngularScheme::GoldenAngle,
        other => return Err(Error::parse(&display, format!("unknown scheme `{other}`"))),
    };
    let n_samples =
        parse_usizes(header_field(&lines, "n_samples", &display)?, 1, &display, "n_samples")?[0];
    let words = read_f64s(payload, &display)?;
    if words.len() != 3 * n_samples {
        return Err(Error::parse(&display, "payload length does not match n_samples"));
    }
    if n_lines == 0 || n_read == 0 || n_samples % (n_lines * n_read) != 0 {
        return Err(Error::parse(&display, "sample count does not factor into lines and readouts"));
    }
    let n_radial = n_samples / (n_lines * n_read);

    let mut out_lines = Vec::with_capacity(n_lines);
    for li in 0..n_lines {
        // One (ky, kz) pair per radial run; readout is fastest.
        let mut pairs = Vec::with_capacity(n_radial);
        for ri in 0..n_radial {
            let s = 3 * ((li * n_radial + ri) * n_read);
            pairs.push((words[s + 1], words[s + 2]));
        }
        // Fix the line angle from the largest-|r| run, then sign each radius.
        let (mut angle, mut best) = (0.0f64, 0.0f64);
        for &(ky, kz) in &pairs {
            let r = ky.hypot(kz);
            if r > best {
                best = r;
                angle = kz.atan2(ky).rem_euclid(std::f64::consts::PI);
            }
        }
        let (ca, sa) = (angle.cos(), angle.sin());
        let radii = pairs
            .iter()
            .map(|&(ky, kz)| {
                let r = ky.hypot(kz);
                if ky * ca + kz * sa < 0.0 {
                    -r
                } else {
                    r
                }
            })
            .collect();
        out_lines.push(RpeLine { angle, radii });
    }
    Trajectory::new(n_read, scheme, out_lines)
}

// ---------------------------------------------------------------------------
// CSKSP1: k-space samples
// ---------------------------------------------------------------------------

/// Per-coil k-space sample vectors tied to a trajectory by sample order.
#[derive(Clone, Debug)]
pub struct KSpaceFile {
    pub trajectory_ref: String,
    /// coil-major: `coils[c][s]`
    pub coils: Vec<Vec<Complex64>>,
}

pub fn write_cskspc(path: &Path, trajectory_ref: &str, coils: &[Vec<Complex64>]) -> Result<()> {
    let n_coils = coils.len();
    let n_samples = coils.first().map_or(0, Vec::len);
    if coils.iter().any(|c| c.len() != n_samples) {
        return Err(Error::ShapeMismatch("coil sample vectors differ in length".into()));
    }
    let mut buf = Vec::with_capacity(n_coils * n_samples * 16 + 128);
    buf.extend_from_slice(
        format!(
            "CSKSP1\nn_coils {n_coils}\nn_samples {n_samples}\ntrajectory {trajectory_ref}\ndtype c64\ndata\n"
        )
        .as_bytes(),
    );
    for coil in coils {
        push_f64s(&mut buf, coil.iter().flat_map(|c| [c.re, c.im]));
    }
    write_atomic(path, &buf)
}

pub fn read_cskspc(path: &Path) -> Result<KSpaceFile> {
    let display = path.display().to_string();
    let raw = fs::read(path).map_err(|e| Error::io(&display, e))?;
    let (lines, payload) = split_header(&raw, &display)?;
    if lines.first() != Some(&"CSKSP1") {
        return Err(Error::parse(&display, "bad magic, expected CSKSP1"));
    }
    let n_coils = parse_usizes(header_field(&lines, "n_coils", &display)?, 1, &display, "n_coils")?[0];
    let n_samples =
        parse_usizes(header_field(&lines, "n_samples", &display)?, 1, &display, "n_samples")?[0];
    let trajectory_ref = header_field(&lines, "trajectory", &display)?.to_string();
    let words = read_f64s(payload, &display)?;
    if words.len() != 2 * n_coils * n_samples {
        return Err(Error::parse(&display, "payload length does not match header counts"));
    }
    let coils = (0..n_coils)
        .map(|c| {
            words[2 * c * n_samples..2 * (c + 1) * n_samples]
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect()
        })
        .collect();
    Ok(KSpaceFile { trajectory_ref, coils })
}

// ---------------------------------------------------------------------------
// PGM (binary P5) slice export
// ---------------------------------------------------------------------------

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::ShapeMismatch(format!(
            "pgm pixel count {} != {width}x{height}",
            pixels.len()
        )));
    }
    let mut buf = Vec::with_capacity(pixels.len() + 32);
    buf.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
    buf.extend_from_slice(pixels);
    write_atomic(path, &buf)
}

/// Read a binary P5 graymap written by [`write_pgm`] (or any maxval-255 P5
/// with `#` comments in the header). Returns (width, height, pixels).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let display = path.display().to_string();
    let raw = fs::read(path).map_err(|e| Error::io(&display, e))?;
    let mut pos = 0;
    let mut token = |raw: &[u8]| -> Result<String> {
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(&display, "truncated header"));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };
    if token(&raw)? != "P5" {
        return Err(Error::parse(&display, "not a binary P5 graymap"));
    }
    let width: usize =
        token(&raw)?.parse().map_err(|_| Error::parse(&display, "bad width"))?;
    let height: usize =
        token(&raw)?.parse().map_err(|_| Error::parse(&display, "bad height"))?;
    let maxval = token(&raw)?;
    if maxval != "255" {
        return Err(Error::parse(&display, format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if raw.len() < pos || raw.len() - pos != width * height {
        return Err(Error::parse(
            &display,
            format!("raster has {} bytes, expected {}", raw.len().saturating_sub(pos), width * height),
        ));
    }
    Ok((width, height, raw[pos..].to_vec()))
}

// ---------------------------------------------------------------------------
// Key-value text files (solver config, phantom spec, manifest)
// ---------------------------------------------------------------------------

/// Ordered key-value file: `key = value` lines, `#` comments, repeated keys
/// allowed (used for phantom shape lists).
#[derive(Clone, Debug, Default)]
pub struct KvFile {
    pub path: String,
    pub entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse_str(text: &str, path: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (ln, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, format!("line {}: expected `key = value`", ln + 1))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { path: path.to_string(), entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
        Self::parse_str(&text, &display)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_all(&self, key: &str) -> Vec<&str> {
        self.entries.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect()
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::parse(&self.path, format!("missing required key `{key}`")))
    }

    pub fn parse_req<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?
            .parse()
            .map_err(|_| Error::parse(&self.path, format!("key `{key}` has an invalid value")))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::parse(&self.path, format!("key `{key}` has an invalid value"))),
        }
    }

    /// Whitespace-separated list value.
    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        raw.split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| {
                    Error::parse(&self.path, format!("key `{key}`: invalid list item `{t}`"))
                })
            })
            .collect()
    }
}

/// Fixed scientific float formatting for CSV outputs; deterministic across
/// runs and platforms.
pub fn fmt_csv_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else {
        "nan".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{generate_rpe, AngularScheme};

    #[test]
    fn csvol_roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csvol");
        let grid = Grid3::new([4, 5, 6], [1.5, 2.0, 2.5]).unwrap();
        let mut v = ComplexVolume::zeros(grid);
        for (i, c) in v.data.iter_mut().enumerate() {
            *c = Complex64::new(i as f64 * 0.1 - 3.0, -(i as f64) * 0.05);
        }
        write_csvol(&path, &v).unwrap();
        let r = read_csvol(&path).unwrap();
        assert_eq!(r.grid, v.grid);
        assert_eq!(r.data, v.data);
    }

    #[test]
    fn cstraj_roundtrip_recovers_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cstraj");
        let t = generate_rpe(8, 5, 6, AngularScheme::GoldenAngle).unwrap();
        write_cstraj(&path, &t).unwrap();
        let r = read_cstraj(&path).unwrap();
        assert_eq!(r.n_read, t.n_read);
        assert_eq!(r.lines.len(), t.lines.len());
        // Line structure is re-derived from the flat payload via atan2/hypot,
        // so the roundtrip is ulp-accurate rather than bitwise.
        for (a, b) in r.samples().iter().zip(t.samples()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
        for (a, b) in r.lines.iter().zip(&t.lines) {
            assert!((a.angle - b.angle).abs() < 1e-12);
            for (ra, rb) in a.radii.iter().zip(&b.radii) {
                assert!((ra - rb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cskspc_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.cskspc");
        let coils = vec![
            vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)],
            vec![Complex64::new(0.0, -1.0), Complex64::new(3.5, 0.0)],
        ];
        write_cskspc(&path, "t.cstraj", &coils).unwrap();
        let r = read_cskspc(&path).unwrap();
        assert_eq!(r.trajectory_ref, "t.cstraj");
        assert_eq!(r.coils, coils);
    }

    #[test]
    fn kv_file_parsing_and_lookup() {
        let text = "# comment\na = 1\nlist = 1 2 3\nshape = 0.5 0.25 # trailing\nshape = 1.0 2.0\n";
        let kv = KvFile::parse_str(text, "test").unwrap();
        assert_eq!(kv.parse_req::<i32>("a").unwrap(), 1);
        assert_eq!(kv.parse_list::<i32>("list").unwrap(), vec![1, 2, 3]);
        assert_eq!(kv.get_all("shape"), vec!["0.5 0.25", "1.0 2.0"]);
        assert_eq!(kv.parse_or::<i32>("missing", 7).unwrap(), 7);
        assert!(kv.parse_req::<i32>("missing").is_err());
        assert!(KvFile::parse_str("no equals sign", "test").is_err());
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No temp litter left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn pgm_header_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pgm");
        write_pgm(&path, 3, 2, &[0, 64, 128, 192, 255, 7]).unwrap();
        let raw = fs::read(&path).unwrap();
        assert!(raw.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&raw[raw.len() - 6..], &[0, 64, 128, 192, 255, 7]);
        assert!(write_pgm(&path, 2, 2, &[0; 3]).is_err());

        let (w, h, px) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, vec![0, 64, 128, 192, 255, 7]);
    }

    #[test]
    fn pgm_reader_handles_comments_and_rejects_bad_rasters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut raw = b"P5\n# made elsewhere\n2 2\n255\n".to_vec();
        raw.extend_from_slice(&[9, 8, 7, 6]);
        fs::write(&path, &raw).unwrap();
        let (w, h, px) = read_pgm(&path).unwrap();
        assert_eq!((w, h, px), (2, 2, vec![9, 8, 7, 6]));

        fs::write(&path, b"P5\n2 2\n255\n\x01\x02\x03").unwrap();
        assert!(read_pgm(&path).is_err());
        fs::write(&path, b"P2\n1 1\n255\n0").unwrap();
        assert!(read_pgm(&path).is_err());
    }
}
