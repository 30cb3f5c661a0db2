use crate::error::{Error, Result};

/// Dense float image with a per-pixel validity mask. Row-major, row 0 at
/// the top, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct MapImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub valid: Vec<bool>,
}

impl MapImage {
    /// All-invalid map filled with NaN.
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        MapImage {
            width,
            height,
            channels,
            data: vec![f32::NAN; width * height * channels],
            valid: vec![false; width * height],
        }
    }

    /// Boolean mask map; valid pixels carry 1.0, others 0.0.
    pub fn from_mask(width: usize, height: usize, valid: Vec<bool>) -> Self {
        let data = valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        MapImage {
            width,
            height,
            channels: 1,
            data,
            valid,
        }
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, idx: usize) -> &mut [f32] {
        &mut self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn same_size(&self, other: &MapImage, field: &str) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::dim(
                field,
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }

    /// Keeps the first `channels` channels (e.g. a uv map stored as a
    /// 3-channel PFM).
    pub fn truncate_channels(&self, channels: usize) -> Result<MapImage> {
        if channels == 0 || channels > self.channels {
            return Err(Error::dim("channels", format!("1..={}", self.channels), channels));
        }
        let data = self
            .data
            .chunks(self.channels)
            .flat_map(|px| px[..channels].iter().copied())
            .collect();
        Ok(MapImage {
            channels,
            data,
            ..self.clone()
        })
    }

    /// Pixel-wise validity intersection, keeping this map's data.
    pub fn masked(&self, mask: &MapImage) -> Result<MapImage> {
        self.same_size(mask, "mask")?;
        let mut out = self.clone();
        for (v, m) in out.valid.iter_mut().zip(&mask.valid) {
            *v &= *m;
        }
        Ok(out)
    }
}
