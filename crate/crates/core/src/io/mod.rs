//! File codecs. All binary formats are little-endian on write.
//!
//! | format | content |
//! |--------|---------|
//! | PFM    | float maps (normals, uv, depth, error maps); invalid pixels are NaN |
//! | PGM    | 8-bit masks, nonzero = valid |
//! | OBJ    | triangle meshes with optional per-vertex uv |
//! | PLY    | ascii point clouds with normals and optional labels |
//! | P3DM   | morphable model assets |
//! | JSON   | face/camera parameters, landmark pairs |

mod json;
mod obj;
mod p3dm;
mod pfm;
mod pgm;
mod ply;

pub use json::{load_camera, load_face_params, load_json, save_camera, save_face_params, save_json};
pub use obj::{load_mesh, parse_obj, save_mesh, write_obj, Mesh};
pub use p3dm::{decode_model, encode_model, load_model, save_model, MAGIC as P3DM_MAGIC};
pub use pfm::{decode_pfm, encode_pfm, load_map, save_map};
pub use pgm::{decode_pgm, encode_pgm, load_mask, save_mask};
pub use ply::{load_pointcloud, parse_ply, save_pointcloud, write_ply};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor over a byte buffer that reports the byte offset of
/// any truncation.
pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                field: field.into(),
                offset: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, count: usize, field: &str) -> Result<Vec<f32>> {
        let n = count.checked_mul(4).ok_or_else(|| Error::dim(field, "addressable size", count))?;
        let raw = self.take(n, field)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn u32s(&mut self, count: usize, field: &str) -> Result<Vec<u32>> {
        let n = count.checked_mul(4).ok_or_else(|| Error::dim(field, "addressable size", count))?;
        let raw = self.take(n, field)?;
        Ok(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    /// Next whitespace-delimited ASCII token, skipping `#` comments.
    pub fn token(&mut self, field: &str) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Truncated {
                field: field.into(),
                offset: start,
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::MalformedHeader {
            field: field.into(),
            detail: format!("non-ascii token at byte {start}"),
        })
    }

    /// Consumes the single whitespace byte that ends a binary header.
    pub fn header_end(&mut self, field: &str) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(Error::MalformedHeader {
                field: field.into(),
                detail: format!("expected whitespace at byte {}", self.pos),
            }),
            None => Err(Error::Truncated {
                field: field.into(),
                offset: self.pos,
            }),
        }
    }

    pub fn parse<T: std::str::FromStr>(&mut self, field: &str) -> Result<T> {
        let at = self.pos;
        let tok = self.token(field)?;
        tok.parse().map_err(|_| Error::MalformedHeader {
            field: field.into(),
            detail: format!("cannot parse {tok:?} near byte {at}"),
        })
    }
}
