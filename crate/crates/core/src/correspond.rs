//! Per-vertex 2D targets from a predicted uv map: for every model vertex,
//! the valid pixel whose predicted uv is closest to the vertex's template
//! uv, gated by a uv-distance threshold.

use crate::error::{Error, Result};
use crate::map::MapImage;
use crate::model::MorphableModel;
use crate::Vec2;

/// Default uv-distance gate.
pub const DEFAULT_DELTA_UV: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    pixel: u32,
    u: f64,
    v: f64,
}

/// Uniform grid over uv space listing valid pixels by their predicted uv.
/// Out-of-range uv values are binned into the nearest border cell.
#[derive(Debug, Clone)]
pub struct UvIndex {
    pub cell_resolution: usize,
    width: usize,
    cell_start: Vec<u32>,
    entries: Vec<Entry>,
}

/// Nearest valid pixel to a uv query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvMatch {
    /// Row-major pixel index.
    pub pixel: usize,
    pub distance: f64,
}

impl UvIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_width(&self) -> usize {
        self.width
    }

    fn cell_of(&self, x: f64) -> usize {
        let r = self.cell_resolution;
        ((x * r as f64).floor().max(0.0) as usize).min(r - 1)
    }

    fn cell(&self, cx: usize, cy: usize) -> &[Entry] {
        let c = cy * self.cell_resolution + cx;
        &self.entries[self.cell_start[c] as usize..self.cell_start[c + 1] as usize]
    }

    /// Entries per cell, row-major over cells.
    pub fn cell_counts(&self) -> Vec<usize> {
        self.cell_start.windows(2).map(|w| (w[1] - w[0]) as usize).collect()
    }

    /// Exact nearest neighbour; ties go to the smallest pixel index.
    pub fn nearest(&self, query: &Vec2) -> UvMatch {
        let r = self.cell_resolution;
        let cs = 1.0 / r as f64;
        let (qx, qy) = (self.cell_of(query.x), self.cell_of(query.y));
        let mut best = (f64::INFINITY, u32::MAX);
        for ring in 0..=r {
            let lo_x = qx.saturating_sub(ring);
            let hi_x = (qx + ring).min(r - 1);
            let lo_y = qy.saturating_sub(ring);
            let hi_y = (qy + ring).min(r - 1);
            for cy in lo_y..=hi_y {
                for cx in lo_x..=hi_x {
                    let on_ring = cx + ring == qx || cx == qx + ring || cy + ring == qy || cy == qy + ring;
                    if !on_ring {
                        continue;
                    }
                    for e in self.cell(cx, cy) {
                        let d2 = sq_dist(query, e);
                        if d2 < best.0 || (d2 == best.0 && e.pixel < best.1) {
                            best = (d2, e.pixel);
                        }
                    }
                }
            }
            if lo_x == 0 && lo_y == 0 && hi_x == r - 1 && hi_y == r - 1 {
                break;
            }
            // every unsearched entry lies outside the searched block
            let mut bound = f64::INFINITY;
            if lo_x > 0 {
                bound = bound.min(query.x - lo_x as f64 * cs);
            }
            if hi_x < r - 1 {
                bound = bound.min((hi_x + 1) as f64 * cs - query.x);
            }
            if lo_y > 0 {
                bound = bound.min(query.y - lo_y as f64 * cs);
            }
            if hi_y < r - 1 {
                bound = bound.min((hi_y + 1) as f64 * cs - query.y);
            }
            if bound > 0.0 && bound * bound > best.0 {
                break;
            }
        }
        UvMatch {
            pixel: best.1 as usize,
            distance: best.0.sqrt(),
        }
    }

    /// Reference scan over every entry.
    pub fn nearest_exhaustive(&self, query: &Vec2) -> UvMatch {
        let mut best = (f64::INFINITY, u32::MAX);
        for e in &self.entries {
            let d2 = sq_dist(query, e);
            if d2 < best.0 || (d2 == best.0 && e.pixel < best.1) {
                best = (d2, e.pixel);
            }
        }
        UvMatch {
            pixel: best.1 as usize,
            distance: best.0.sqrt(),
        }
    }
}

#[inline]
fn sq_dist(q: &Vec2, e: &Entry) -> f64 {
    let du = q.x - e.u;
    let dv = q.y - e.v;
    du * du + dv * dv
}

/// Indexes every pixel valid in both `uv_map` and `mask`.
pub fn build_uv_index(uv_map: &MapImage, mask: &MapImage) -> Result<UvIndex> {
    if uv_map.channels != 2 {
        return Err(Error::dim("uv_map channels", 2, uv_map.channels));
    }
    uv_map.same_size(mask, "mask")?;
    let pixels: Vec<Entry> = (0..uv_map.num_pixels())
        .filter(|&i| uv_map.valid[i] && mask.valid[i])
        .filter_map(|i| {
            let px = uv_map.pixel(i);
            let (u, v) = (px[0] as f64, px[1] as f64);
            (u.is_finite() && v.is_finite()).then_some(Entry { pixel: i as u32, u, v })
        })
        .collect();
    if pixels.is_empty() {
        return Err(Error::EmptyMask);
    }
    let r = (((pixels.len() as f64).sqrt() / 4.0).ceil() as usize).max(1);
    let mut index = UvIndex {
        cell_resolution: r,
        width: uv_map.width,
        cell_start: vec![0; r * r + 1],
        entries: Vec::new(),
    };
    let cells: Vec<usize> = pixels.iter().map(|e| index.cell_of(e.v) * r + index.cell_of(e.u)).collect();
    for &c in &cells {
        index.cell_start[c + 1] += 1;
    }
    for c in 0..r * r {
        index.cell_start[c + 1] += index.cell_start[c];
    }
    let mut fill = index.cell_start.clone();
    let mut entries = vec![pixels[0]; pixels.len()];
    for (e, &c) in pixels.iter().zip(&cells) {
        entries[fill[c] as usize] = *e;
        fill[c] += 1;
    }
    index.entries = entries;
    Ok(index)
}

/// Per-vertex pixel target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Pixel-centre coordinates of the matched pixel.
    pub target_pixel: Vec2,
    pub uv_distance: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub items: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn accepted_count(&self) -> usize {
        self.items.iter().filter(|c| c.accepted).count()
    }

    /// CSV dump: `vertex_id,px,py,uv_dist,accepted`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex_id,px,py,uv_dist,accepted\n");
        for (i, c) in self.items.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{}\n",
                c.target_pixel.x, c.target_pixel.y, c.uv_distance, c.accepted as u8
            ));
        }
        s
    }
}

/// Global uv argmin for every vertex of `model`.
pub fn find_correspondences(model: &MorphableModel, index: &UvIndex, delta_uv: f64) -> CorrespondenceSet {
    let w = index.image_width();
    let items = model
        .vertex_uv
        .iter()
        .map(|uv| {
            let m = index.nearest(uv);
            let (x, y) = (m.pixel % w, m.pixel / w);
            Correspondence {
                target_pixel: Vec2::new(x as f64 + 0.5, y as f64 + 0.5),
                uv_distance: m.distance,
                accepted: m.distance < delta_uv,
            }
        })
        .collect();
    CorrespondenceSet { items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uv_map(width: usize, height: usize, values: &[[f32; 2]]) -> MapImage {
        let mut m = MapImage::new(width, height, 2);
        for (i, v) in values.iter().enumerate() {
            m.pixel_mut(i).copy_from_slice(v);
            m.valid[i] = true;
        }
        m
    }

    fn full_mask(w: usize, h: usize) -> MapImage {
        MapImage::from_mask(w, h, vec![true; w * h])
    }

    #[test]
    fn corners_land_in_separate_cells() {
        let m = uv_map(2, 2, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let idx = build_uv_index(&m, &full_mask(2, 2)).unwrap();
        assert_eq!(idx.len(), 4);
        // ceil(sqrt(4) / 4) = 1
        assert_eq!(idx.cell_resolution, 1);
        assert_eq!(idx.cell_counts(), vec![4]);
    }

    #[test]
    fn all_invalid_mask_is_rejected() {
        let m = uv_map(2, 2, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let mask = MapImage::from_mask(2, 2, vec![false; 4]);
        assert!(matches!(build_uv_index(&m, &mask), Err(Error::EmptyMask)));
        let bad = MapImage::from_mask(3, 2, vec![true; 6]);
        assert!(matches!(build_uv_index(&m, &bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn index_matches_exhaustive_scan_on_large_random_map() {
        let (w, h) = (512, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = MapImage::new(w, h, 2);
        for i in 0..w * h {
            if rng.gen_bool(0.7) {
                m.pixel_mut(i).copy_from_slice(&[rng.gen::<f32>(), rng.gen::<f32>()]);
                m.valid[i] = true;
            }
        }
        let idx = build_uv_index(&m, &full_mask(w, h)).unwrap();
        assert_eq!(idx.cell_counts().iter().sum::<usize>(), m.count_valid());
        for _ in 0..1000 {
            let q = Vec2::new(rng.gen_range(-0.05..1.05), rng.gen_range(-0.05..1.05));
            assert_eq!(idx.nearest(&q), idx.nearest_exhaustive(&q));
        }
    }

    #[test]
    fn ties_resolve_to_lowest_pixel_index() {
        // quantized uv values produce many exact ties
        let (w, h) = (40, 40);
        let mut m = MapImage::new(w, h, 2);
        for i in 0..w * h {
            let v = ((i * 7919) % 11) as f32 / 10.0;
            let u = ((i * 104729) % 5) as f32 / 4.0;
            m.pixel_mut(i).copy_from_slice(&[u, v]);
            m.valid[i] = true;
        }
        let idx = build_uv_index(&m, &full_mask(w, h)).unwrap();
        for q in [Vec2::new(0.5, 0.5), Vec2::new(0.0, 0.0), Vec2::new(0.125, 0.35), Vec2::new(1.0, 0.95)] {
            assert_eq!(idx.nearest(&q), idx.nearest_exhaustive(&q));
        }
    }

    #[test]
    fn exact_hit_is_accepted_and_zero_threshold_rejects_all() {
        let mut model = crate::raster::tests::quad_model();
        model.vertex_uv = vec![Vec2::new(0.25, 0.75); 4];
        let m = uv_map(2, 2, &[[0.1, 0.1], [0.25, 0.75], [0.9, 0.2], [0.5, 0.5]]);
        let idx = build_uv_index(&m, &full_mask(2, 2)).unwrap();
        let c = find_correspondences(&model, &idx, DEFAULT_DELTA_UV);
        assert_eq!(c.items[0].target_pixel, Vec2::new(1.5, 0.5));
        assert_eq!(c.items[0].uv_distance, 0.0);
        assert!(c.items[0].accepted);
        let none = find_correspondences(&model, &idx, 0.0);
        assert_eq!(none.accepted_count(), 0);
    }
}
