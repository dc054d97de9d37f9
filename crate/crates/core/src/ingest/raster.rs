use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("image must have non-zero width and height"));
        }
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::contract(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(3 * width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let stride = 3 * self.width as usize;
        &self.pixels[y as usize * stride..(y as usize + 1) * stride]
    }

    /// Copies the rectangle `[x, x+w) × [y, y+h)`; it must lie inside the image.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 || x.checked_add(w).is_none_or(|r| r > self.width)
            || y.checked_add(h).is_none_or(|b| b > self.height)
        {
            return Err(Error::contract(format!(
                "crop {x},{y} {w}x{h} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(3 * w as usize * h as usize);
        for row in y..y + h {
            let r = self.row(row);
            pixels.extend_from_slice(&r[3 * x as usize..3 * (x + w) as usize]);
        }
        Self::new(w, h, pixels)
    }

    fn rows(&self, start: u32, end: u32) -> Self {
        let stride = 3 * self.width as usize;
        Self {
            width: self.width,
            height: end - start,
            pixels: self.pixels[start as usize * stride..end as usize * stride].to_vec(),
        }
    }

    /// A row is uniform when every channel of every pixel lies within `tol`
    /// of that channel's mean over the row.
    pub fn row_is_uniform(&self, y: u32, tol: u8) -> bool {
        let row = self.row(y);
        let n = self.width as f64;
        let mut mean = [0.0f64; 3];
        for px in row.chunks_exact(3) {
            for c in 0..3 {
                mean[c] += px[c] as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        row.chunks_exact(3)
            .all(|px| (0..3).all(|c| (px[c] as f64 - mean[c]).abs() <= tol as f64))
    }
}

/// Splits a vertically stacked descriptive image at runs of at least
/// `min_gap_rows` near-uniform rows.
///
/// Shorter uniform runs stay inside their segment. A fully uniform image
/// (taller than the gap) yields no segments.
pub fn split_descriptive_image(img: &RasterImage, min_gap_rows: u32, uniformity_tol: u8) -> Vec<RasterImage> {
    let min_gap = min_gap_rows.max(1);
    let uniform: Vec<bool> = (0..img.height).map(|y| img.row_is_uniform(y, uniformity_tol)).collect();

    let mut separator = vec![false; uniform.len()];
    let mut y = 0usize;
    while y < uniform.len() {
        if uniform[y] {
            let start = y;
            while y < uniform.len() && uniform[y] {
                y += 1;
            }
            if (y - start) as u32 >= min_gap {
                separator[start..y].iter_mut().for_each(|s| *s = true);
            }
        } else {
            y += 1;
        }
    }

    let mut segments = Vec::new();
    let mut y = 0usize;
    while y < separator.len() {
        if separator[y] {
            y += 1;
            continue;
        }
        let start = y;
        while y < separator.len() && !separator[y] {
            y += 1;
        }
        segments.push(img.rows(start as u32, y as u32));
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(x: u32, y: u32) -> [u8; 3] {
        let v = ((x * 37 + y * 11) % 200) as u8;
        [v, 255 - v, (x % 50) as u8 * 3]
    }

    #[test]
    fn two_blocks_with_white_gap() {
        let img = RasterImage::from_fn(60, 240, |x, y| {
            if (100..140).contains(&y) {
                [255, 255, 255]
            } else {
                textured(x, y)
            }
        })
        .unwrap();
        let segs = split_descriptive_image(&img, 16, 4);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].height(), 100);
        assert_eq!(segs[1].height(), 100);
        assert_eq!(segs[0].row(0), img.row(0));
        assert_eq!(segs[1].row(0), img.row(140));
    }

    #[test]
    fn solid_content_is_identity_and_white_is_empty() {
        let img = RasterImage::from_fn(30, 50, textured).unwrap();
        let segs = split_descriptive_image(&img, 8, 4);
        assert_eq!(segs, vec![img]);

        let white = RasterImage::filled(30, 50, [255, 255, 255]).unwrap();
        assert!(split_descriptive_image(&white, 8, 4).is_empty());
    }

    #[test]
    fn short_gaps_stay_inside_segments() {
        let img = RasterImage::from_fn(20, 60, |x, y| {
            if (20..25).contains(&y) {
                [250, 250, 250]
            } else {
                textured(x, y)
            }
        })
        .unwrap();
        assert_eq!(split_descriptive_image(&img, 16, 4).len(), 1);
    }

    #[test]
    fn crop_bounds() {
        let img = RasterImage::from_fn(10, 10, textured).unwrap();
        let c = img.crop(2, 3, 4, 5).unwrap();
        assert_eq!((c.width(), c.height()), (4, 5));
        assert_eq!(c.pixel(0, 0), img.pixel(2, 3));
        assert!(img.crop(8, 0, 4, 2).is_err());
        assert!(img.crop(0, 0, 0, 2).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 11]).is_err());
    }

    proptest! {
        #[test]
        fn segments_never_contain_a_full_gap(
            layout in prop::collection::vec((any::<bool>(), 1u32..30), 1..8),
            min_gap in 2u32..12,
        ) {
            let mut kinds = Vec::new();
            for (blank, len) in &layout {
                kinds.extend(std::iter::repeat_n(*blank, *len as usize));
            }
            let h = kinds.len() as u32;
            let img = RasterImage::from_fn(16, h, |x, y| {
                if kinds[y as usize] { [255, 255, 255] } else { textured(x, y) }
            }).unwrap();
            let segs = split_descriptive_image(&img, min_gap, 3);
            let total: u32 = segs.iter().map(|s| s.height()).sum();
            prop_assert!(total <= h);
            for s in &segs {
                let mut run = 0;
                for y in 0..s.height() {
                    run = if s.row_is_uniform(y, 3) { run + 1 } else { 0 };
                    prop_assert!(run < min_gap);
                }
            }
        }
    }
}
