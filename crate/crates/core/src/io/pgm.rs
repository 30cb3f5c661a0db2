use std::path::Path;

use super::pfm::with_path;
use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::map::MapImage;

/// Binary PGM (P5), maxval 255, top row first. Valid pixels are written
/// as 255.
pub fn encode_pgm(mask: &MapImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.valid.iter().map(|&v| if v { 255u8 } else { 0 }));
    out
}

/// Decodes a P5 mask; any nonzero sample is valid.
pub fn decode_pgm(bytes: &[u8]) -> Result<MapImage> {
    let mut r = Reader::new(bytes);
    let magic = r.token("pgm magic")?;
    if magic != "P5" {
        return Err(Error::MalformedHeader {
            field: "pgm magic".into(),
            detail: format!("expected P5, got {magic:?}"),
        });
    }
    let width: usize = r.parse("pgm width")?;
    let height: usize = r.parse("pgm height")?;
    let maxval: u32 = r.parse("pgm maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedHeader {
            field: "pgm maxval".into(),
            detail: format!("unsupported maxval {maxval}"),
        });
    }
    r.header_end("pgm header")?;
    let raw = r.take(width * height, "pgm data")?;
    let valid = raw.iter().map(|&b| b != 0).collect();
    Ok(MapImage::from_mask(width, height, valid))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MapImage> {
    let path = path.as_ref();
    decode_pgm(&read_file(path)?).map_err(|e| with_path(path, e))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &MapImage) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_255_is_all_valid() {
        let mut b = b"P5\n3 2\n255\n".to_vec();
        b.extend([255u8; 6]);
        let m = decode_pgm(&b).unwrap();
        assert!(m.valid.iter().all(|&v| v));
    }

    #[test]
    fn all_zero_is_all_invalid() {
        let mut b = b"P5\n# comment\n3 2\n255\n".to_vec();
        b.extend([0u8; 6]);
        let m = decode_pgm(&b).unwrap();
        assert_eq!(m.count_valid(), 0);
    }

    #[test]
    fn checkerboard_round_trip() {
        let valid: Vec<bool> = (0..64).map(|i| (i % 8 + i / 8) % 2 == 0).collect();
        let m = MapImage::from_mask(8, 8, valid);
        let bytes = encode_pgm(&m);
        let back = decode_pgm(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_pgm(&back), bytes);
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0"), Err(Error::MalformedHeader { .. })));
    }
}
