//! Binary file formats: FPM1 feature maps and CMP1 model checkpoints.
//!
//! FPM1: `"FPM1"`, then little-endian `u32` version (1), grid_h, grid_w and
//! dim, then `grid_h * grid_w * dim` `f32` values in patch-major order.
//!
//! CMP1: `"CMP1"`, then `u32` dim_in, dim_feat, n_classes_max and
//! active_classes, then the encoder weight, encoder bias, head weight and
//! head bias blocks as little-endian `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams};
use crate::patchgraph::FeatureMap;

pub const FPM1_MAGIC: &[u8; 4] = b"FPM1";
pub const FPM1_VERSION: u32 = 1;
pub const FPM1_EXTENSION: &str = "fpm1";
pub const CMP1_MAGIC: &[u8; 4] = b"CMP1";

const FPM1_HEADER_LEN: usize = 20;

pub fn encode_fpm1(fm: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(FPM1_HEADER_LEN + 4 * fm.as_slice().len());
    out.extend_from_slice(FPM1_MAGIC);
    for v in [FPM1_VERSION, fm.grid_h() as u32, fm.grid_w() as u32, fm.dim() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &x in fm.as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl Cursor<'_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            file: self.file.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(self.pos, format!("truncated: missing {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?.to_vec();
        if got != magic {
            let message = format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(magic)
            );
            return Err(self.err(0, message));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let need = count
            .checked_mul(4)
            .ok_or_else(|| self.err(start, "payload size overflows"))?;
        let raw = self.take(need, what)?;
        let mut out = Vec::with_capacity(count);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(self.err(start + 4 * i, format!("non-finite value in {what}")));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

/// Parses FPM1 bytes; `file` only labels errors.
pub fn decode_fpm1(bytes: &[u8], file: &Path) -> Result<FeatureMap> {
    let mut c = Cursor { bytes, pos: 0, file };
    c.magic(FPM1_MAGIC)?;
    let version = c.u32("version")?;
    if version != FPM1_VERSION {
        return Err(c.err(4, format!("unsupported version {version}")));
    }
    let h = c.u32("grid_h")? as usize;
    let w = c.u32("grid_w")? as usize;
    let dim = c.u32("dim")? as usize;
    if h.saturating_mul(w) < 2 || dim == 0 {
        return Err(c.err(8, format!("invalid shape {h}x{w}x{dim}")));
    }
    let count = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(dim))
        .ok_or_else(|| c.err(8, "shape overflows"))?;
    let expected = FPM1_HEADER_LEN as u64 + 4 * count as u64;
    if bytes.len() as u64 != expected {
        return Err(c.err(
            bytes.len().min(FPM1_HEADER_LEN),
            format!("payload length mismatch: file has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let data = c.f32s(count, "payload")?;
    c.finish()?;
    FeatureMap::new(h, w, dim, data).map_err(|e| c.err(FPM1_HEADER_LEN, e.to_string()))
}

pub fn write_fpm1(path: &Path, fm: &FeatureMap) -> Result<()> {
    fs::write(path, encode_fpm1(fm))?;
    Ok(())
}

pub fn read_fpm1(path: &Path) -> Result<FeatureMap> {
    let bytes = fs::read(path)?;
    decode_fpm1(&bytes, path)
}

/// A single FPM1 file, or every `*.fpm1` file of a directory in name order.
pub fn fpm1_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == FPM1_EXTENSION))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn encode_cmp1(p: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * p.num_params());
    out.extend_from_slice(CMP1_MAGIC);
    let d = p.dims;
    for v in [d.dim_in, d.dim_feat, d.n_classes_max, p.active_classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for x in p.flatten() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_cmp1(bytes: &[u8], file: &Path) -> Result<ModelParams> {
    let mut c = Cursor { bytes, pos: 0, file };
    c.magic(CMP1_MAGIC)?;
    let dims = ModelDims {
        dim_in: c.u32("dim_in")? as usize,
        dim_feat: c.u32("dim_feat")? as usize,
        n_classes_max: c.u32("n_classes_max")? as usize,
    };
    let active = c.u32("active_classes")? as usize;
    if dims.dim_in == 0 || dims.dim_feat == 0 || dims.n_classes_max == 0 || active > dims.n_classes_max {
        return Err(c.err(4, "invalid dimensions"));
    }
    let mut p = ModelParams::zeros(dims);
    p.active_classes = active;
    let flat = c.f32s(p.num_params(), "parameters")?;
    c.finish()?;
    p.assign_flat(&flat)?;
    Ok(p)
}

pub fn write_cmp1(path: &Path, p: &ModelParams) -> Result<()> {
    fs::write(path, encode_cmp1(p))?;
    Ok(())
}

pub fn read_cmp1(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    decode_cmp1(&bytes, path)
}
