use std::path::Path;

use super::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::map::MapImage;

/// Encodes a map as little-endian PFM. One channel writes `Pf`, two or
/// three channels write `PF` (a 2-channel map gets a zero third channel).
/// Invalid pixels are written as NaN in every channel.
pub fn encode_pfm(map: &MapImage) -> Result<Vec<u8>> {
    let (tag, out_ch) = match map.channels {
        1 => ("Pf", 1),
        2 | 3 => ("PF", 3),
        c => return Err(Error::dim("map channels", "1, 2 or 3", c)),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(map.width * map.height * out_ch * 4);
    for y in (0..map.height).rev() {
        for x in 0..map.width {
            let idx = map.index(x, y);
            let px = map.pixel(idx);
            for c in 0..out_ch {
                let v = if !map.valid[idx] {
                    f32::NAN
                } else if c < map.channels {
                    px[c]
                } else {
                    0.0
                };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Decodes a PFM of either endianness. A pixel is valid when every channel
/// is finite.
pub fn decode_pfm(bytes: &[u8]) -> Result<MapImage> {
    let mut r = Reader::new(bytes);
    let channels = match r.token("pfm magic")? {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(Error::MalformedHeader {
                field: "pfm magic".into(),
                detail: format!("expected PF or Pf, got {other:?}"),
            })
        }
    };
    let width: usize = r.parse("pfm width")?;
    let height: usize = r.parse("pfm height")?;
    let scale: f64 = r.parse("pfm scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader {
            field: "pfm scale".into(),
            detail: "scale must be a nonzero finite number".into(),
        });
    }
    r.header_end("pfm header")?;
    let little = scale < 0.0;
    let count = width * height * channels;
    let raw = r.take(count * 4, "pfm data")?;
    let mut map = MapImage::new(width, height, channels);
    for (k, c) in raw.chunks_exact(4).enumerate() {
        let b: [u8; 4] = c.try_into().unwrap();
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let file_px = k / channels;
        let (fx, fy) = (file_px % width, file_px / width);
        let idx = map.index(fx, height - 1 - fy);
        map.data[idx * channels + k % channels] = v;
    }
    for i in 0..width * height {
        map.valid[i] = map.pixel(i).iter().all(|v| v.is_finite());
    }
    Ok(map)
}

pub fn load_map(path: impl AsRef<Path>) -> Result<MapImage> {
    let path = path.as_ref();
    decode_pfm(&read_file(path)?).map_err(|e| with_path(path, e))
}

pub fn save_map(path: impl AsRef<Path>, map: &MapImage) -> Result<()> {
    write_file(path.as_ref(), &encode_pfm(map)?)
}

pub(crate) fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Format {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_bytes() {
        let mut m = MapImage::new(1, 1, 1);
        m.data[0] = 0.5;
        m.valid[0] = true;
        let bytes = encode_pfm(&m).unwrap();
        let mut expect = b"Pf\n1 1\n-1.0\n".to_vec();
        expect.extend_from_slice(&[0x00, 0x00, 0x00, 0x3f]);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn big_endian_and_bottom_up_rows() {
        // 1x2 map, positive scale = big endian; first stored row is the bottom
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_be_bytes());
        bytes.extend_from_slice(&2.0f32.to_be_bytes());
        let m = decode_pfm(&bytes).unwrap();
        assert_eq!(m.data, vec![2.0, 1.0]);
    }

    #[test]
    fn truncated_data_reports_offset() {
        let mut bytes = b"PF\n2 2\n-1.0\n".to_vec();
        bytes.extend_from_slice(&[0u8; 10]);
        match decode_pfm(&bytes) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, bytes.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_marks_invalid_pixels() {
        let mut m = MapImage::new(2, 1, 3);
        m.pixel_mut(0).copy_from_slice(&[0.0, 0.0, -1.0]);
        m.valid[0] = true;
        let back = decode_pfm(&encode_pfm(&m).unwrap()).unwrap();
        assert_eq!(back.valid, vec![true, false]);
        assert_eq!(back.pixel(0), &[0.0, 0.0, -1.0]);
    }

    #[test]
    fn two_channel_maps_pad_a_zero_channel() {
        let mut m = MapImage::new(1, 1, 2);
        m.pixel_mut(0).copy_from_slice(&[0.25, 0.75]);
        m.valid[0] = true;
        let back = decode_pfm(&encode_pfm(&m).unwrap()).unwrap();
        assert_eq!(back.channels, 3);
        assert_eq!(back.pixel(0), &[0.25, 0.75, 0.0]);
        assert_eq!(back.truncate_channels(2).unwrap().pixel(0), &[0.25, 0.75]);
    }
}
