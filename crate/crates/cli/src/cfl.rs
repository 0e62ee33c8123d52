//! The cfl array format: a text header `<name>.hdr` listing 16 dimensions and
//! a payload `<name>.cfl` of little-endian single-precision (re, im) pairs in
//! column-major order.

use std::fs;
use std::path::{Path, PathBuf};

use nlop::{Cplx, MdArray};

use crate::error::{CliError, Result};

pub const DIMS: usize = 16;
pub const BATCH_DIM: usize = 15;

/// Strips a `.cfl` or `.hdr` extension, giving the common base name.
pub fn base_name(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("cfl") | Some("hdr") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn header_path(path: &Path) -> PathBuf {
    with_ext(&base_name(path), "hdr")
}

pub fn data_path(path: &Path) -> PathBuf {
    with_ext(&base_name(path), "cfl")
}

/// Parses a header. The dimensions follow a `# Dimensions` line, or are the
/// first non-comment line when there is none.
pub fn parse_header(text: &str) -> std::result::Result<[usize; DIMS], String> {
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let line = match lines.iter().position(|l| *l == "# Dimensions") {
        Some(i) => lines.get(i + 1).copied(),
        None => lines.iter().copied().find(|l| !l.is_empty() && !l.starts_with('#')),
    }
    .ok_or("no dimension line")?;
    let parsed: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| format!("bad dimension `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    if parsed.is_empty() || parsed.len() > DIMS {
        return Err(format!("{} dimensions listed, expected 1 to {DIMS}", parsed.len()));
    }
    let mut dims = [1; DIMS];
    dims[..parsed.len()].copy_from_slice(&parsed);
    if dims.contains(&0) {
        return Err("zero-sized dimension".into());
    }
    Ok(dims)
}

pub fn format_header(dims: &[usize]) -> String {
    let mut s = String::from("# Dimensions\n");
    for k in 0..DIMS {
        s.push_str(&dims.get(k).copied().unwrap_or(1).to_string());
        s.push(' ');
    }
    s.push('\n');
    s
}

pub fn read_dims(path: &Path) -> Result<[usize; DIMS]> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| CliError::io(&hdr, e))?;
    parse_header(&text).map_err(|msg| CliError::Corrupt { path: hdr, msg })
}

/// Reads an array with all 16 dimensions.
pub fn read_cfl(path: &Path) -> Result<MdArray<f32>> {
    let dims = read_dims(path)?;
    let cfl = data_path(path);
    let bytes = fs::read(&cfl).map_err(|e| CliError::io(&cfl, e))?;
    let n: usize = dims.iter().product();
    if bytes.len() != 8 * n {
        return Err(CliError::Corrupt {
            path: cfl,
            msg: format!("payload has {} bytes, header implies {}", bytes.len(), 8 * n),
        });
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let data = bytes.chunks_exact(8).map(|c| Cplx::new(f(&c[..4]), f(&c[4..]))).collect();
    Ok(MdArray::from_vec(&dims, data)?)
}

/// Writes `a`, padding its dimensions with ones to 16.
pub fn write_cfl(path: &Path, a: &MdArray<f32>) -> Result<()> {
    if a.rank() > DIMS {
        return Err(CliError::Usage(format!("rank {} exceeds {DIMS}", a.rank())));
    }
    let hdr = header_path(path);
    fs::write(&hdr, format_header(a.dims())).map_err(|e| CliError::io(&hdr, e))?;
    let mut bytes = Vec::with_capacity(8 * a.len());
    for z in a.as_slice() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    let cfl = data_path(path);
    fs::write(&cfl, bytes).map_err(|e| CliError::io(&cfl, e))
}
