use serde::{Deserialize, Serialize};

use super::raster::RasterImage;

/// 64-bit average hash of an 8×8 grayscale thumbnail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn hamming(self, other: PerceptualHash) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl std::fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Average hash: luma (0.299R + 0.587G + 0.114B), area-average downsample
/// to 8×8, bit set iff the cell is at least the mean of all 64 cells.
/// Bits are packed row-major, most significant bit first.
///
/// Everything runs in integers: luma is scaled by 1000 and cell boundaries
/// are scaled by 8 so every pixel/cell overlap is a whole number. All cells
/// then share the same area and comparing sums is exact.
pub fn average_hash(img: &RasterImage) -> PerceptualHash {
    let (w, h) = (img.width() as u64, img.height() as u64);
    let mut cells = [0u128; 64];

    for y in 0..h {
        let (y0, y1) = (8 * y, 8 * y + 8);
        let row = img.row(y as u32);
        for x in 0..w {
            let (x0, x1) = (8 * x, 8 * x + 8);
            let px = &row[3 * x as usize..3 * x as usize + 3];
            let luma = 299 * px[0] as u128 + 587 * px[1] as u128 + 114 * px[2] as u128;
            // cell cy covers [cy*h, (cy+1)*h) in scaled rows
            for cy in (y0 / h)..=((y1 - 1) / h).min(7) {
                let oy = overlap(y0, y1, cy * h, (cy + 1) * h);
                if oy == 0 {
                    continue;
                }
                for cx in (x0 / w)..=((x1 - 1) / w).min(7) {
                    let ox = overlap(x0, x1, cx * w, (cx + 1) * w);
                    cells[(cy * 8 + cx) as usize] += luma * (ox * oy) as u128;
                }
            }
        }
    }

    let total: u128 = cells.iter().sum();
    let mut bits = 0u64;
    for (i, &c) in cells.iter().enumerate() {
        if 64 * c >= total {
            bits |= 1u64 << (63 - i);
        }
    }
    PerceptualHash(bits)
}

fn overlap(a0: u64, a1: u64, b0: u64, b1: u64) -> u64 {
    a1.min(b1).saturating_sub(a0.max(b0))
}

/// Greedy first-seen-wins deduplication over precomputed hashes. Returns kept indices.
pub fn dedup_hashes(hashes: &[PerceptualHash], hamming_threshold: u32) -> Vec<usize> {
    let mut kept: Vec<(usize, PerceptualHash)> = Vec::new();
    for (i, &h) in hashes.iter().enumerate() {
        if kept.iter().all(|(_, k)| k.hamming(h) > hamming_threshold) {
            kept.push((i, h));
        }
    }
    kept.into_iter().map(|(i, _)| i).collect()
}

pub fn dedup(images: &[RasterImage], hamming_threshold: u32) -> Vec<usize> {
    let hashes: Vec<_> = images.iter().map(average_hash).collect();
    dedup_hashes(&hashes, hamming_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_gray_sets_every_bit() {
        let img = RasterImage::filled(37, 23, [128, 128, 128]).unwrap();
        assert_eq!(average_hash(&img), PerceptualHash(u64::MAX));
    }

    #[test]
    fn half_black_half_white() {
        let img = RasterImage::from_fn(64, 40, |x, _| if x < 32 { [0; 3] } else { [255; 3] }).unwrap();
        assert_eq!(average_hash(&img), PerceptualHash(0x0F0F_0F0F_0F0F_0F0F));
        // odd sizes split cells fractionally but keep the pattern
        let img = RasterImage::from_fn(16, 9, |x, _| if x < 8 { [0; 3] } else { [255; 3] }).unwrap();
        assert_eq!(average_hash(&img), PerceptualHash(0x0F0F_0F0F_0F0F_0F0F));
    }

    #[test]
    fn tiny_images_upsample() {
        let img = RasterImage::from_fn(2, 1, |x, _| if x == 0 { [0; 3] } else { [255; 3] }).unwrap();
        assert_eq!(average_hash(&img), PerceptualHash(0x0F0F_0F0F_0F0F_0F0F));
    }

    #[test]
    fn dedup_examples() {
        let a = PerceptualHash(0xDEAD_BEEF_0000_0000);
        let b = PerceptualHash(0x0123_4567_89AB_CDEF);
        assert_eq!(dedup_hashes(&[a, a, b], 0), vec![0, 2]);
        assert_eq!(dedup_hashes(&[a, b], 0), vec![0, 1]);
        let a_prime = PerceptualHash(a.0 ^ 0b1011);
        assert_eq!(a.hamming(a_prime), 3);
        assert_eq!(dedup_hashes(&[a, a_prime], 4), vec![0]);
        assert_eq!(dedup_hashes(&[a, a_prime], 2), vec![0, 1]);
    }

    #[test]
    fn dedup_on_images() {
        let a = RasterImage::from_fn(16, 16, |x, y| [(x * 16) as u8, (y * 16) as u8, 0]).unwrap();
        let b = RasterImage::from_fn(16, 16, |x, y| [(y * 16) as u8, (x * 16) as u8, 90]).unwrap();
        assert_eq!(dedup(&[a.clone(), b, a], 0), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn self_distance_zero_and_dedup_idempotent(
            raw in prop::collection::vec(any::<u64>(), 0..30),
            threshold in 0u32..20,
        ) {
            let hashes: Vec<_> = raw.iter().map(|&v| PerceptualHash(v)).collect();
            for h in &hashes {
                prop_assert_eq!(h.hamming(*h), 0);
            }
            let once = dedup_hashes(&hashes, threshold);
            let kept: Vec<_> = once.iter().map(|&i| hashes[i]).collect();
            let twice = dedup_hashes(&kept, threshold);
            prop_assert_eq!(twice, (0..kept.len()).collect::<Vec<_>>());
        }

        #[test]
        fn brightness_shift_keeps_hash(
            seed in prop::collection::vec(20u8..235, 64),
            shift in -10i16..=10,
        ) {
            let base = RasterImage::from_fn(32, 32, |x, y| {
                let v = seed[((y / 4) * 8 + x / 4) as usize];
                [v, v, v]
            }).unwrap();
            let shifted = RasterImage::from_fn(32, 32, |x, y| {
                let p = base.pixel(x, y);
                let v = (p[0] as i16 + shift) as u8;
                [v, v, v]
            }).unwrap();
            prop_assert_eq!(average_hash(&base), average_hash(&shifted));
        }
    }
}
