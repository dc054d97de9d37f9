use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::ingest::RasterImage;
use crate::model::{AttributeTag, CategoryHierarchy};
use crate::vecindex::shard_hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluginKind {
    Detector,
    Classifier,
    Tagger,
    Embedder,
}

impl fmt::Display for PluginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PluginKind::Detector => "detector",
            PluginKind::Classifier => "classifier",
            PluginKind::Tagger => "tagger",
            PluginKind::Embedder => "embedder",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub sub_category: String,
    pub confidence: f64,
}

pub trait Detector: Send + Sync {
    fn detect(&self, image: &RasterImage) -> Result<Vec<BoundingBox>>;
}

pub trait Classifier: Send + Sync {
    fn classify(&self, crop: &RasterImage) -> Result<Classification>;
}

pub trait Tagger: Send + Sync {
    fn tag(&self, crop: &RasterImage) -> Result<BTreeSet<AttributeTag>>;
}

pub trait Embedder: Send + Sync {
    /// Output dimension; every vector returned by `embed` has it.
    fn dim(&self) -> usize;
    fn embed(&self, crop: &RasterImage) -> Result<Vec<f32>>;
}

/// One plugin of each kind.
pub struct PluginSet {
    pub detector: Box<dyn Detector>,
    pub classifier: Box<dyn Classifier>,
    pub tagger: Box<dyn Tagger>,
    pub embedder: Box<dyn Embedder>,
}

impl fmt::Debug for PluginSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PluginSet").field("embedder_dim", &self.embedder.dim()).finish_non_exhaustive()
    }
}

// Synthetic OOTD images: each garment is a horizontal band of solid color on
// a white background, with bands separated by white rows. The red channel
// encodes the sub-category's position in the hierarchy, green and blue carry
// a per-garment shade.

const BACKGROUND: [u8; 3] = [255, 255, 255];
const PALETTE_BASE: u8 = 16;
const PALETTE_STEP: u8 = 7;
pub const BAND_WIDTH: u32 = 48;
pub const BAND_HEIGHT: u32 = 24;
pub const BAND_GAP: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticGarment {
    pub sub_category: String,
    pub shade: u8,
}

fn palette_code(hierarchy: &CategoryHierarchy, sub: &str) -> Result<u8> {
    let idx = hierarchy
        .sub_categories()
        .position(|(s, _)| s == sub)
        .ok_or_else(|| Error::UnknownSubCategory(sub.to_string()))?;
    u8::try_from(idx)
        .ok()
        .and_then(|i| i.checked_mul(PALETTE_STEP))
        .and_then(|v| v.checked_add(PALETTE_BASE))
        .filter(|v| *v < 255)
        .ok_or_else(|| Error::contract(format!("sub-category '{sub}' has no palette code")))
}

fn decode_palette<'h>(hierarchy: &'h CategoryHierarchy, red: u8) -> Option<&'h str> {
    let off = red.checked_sub(PALETTE_BASE)?;
    if off % PALETTE_STEP != 0 {
        return None;
    }
    hierarchy.sub_categories().nth((off / PALETTE_STEP) as usize).map(|(s, _)| s)
}

/// Renders garments top to bottom as colored bands.
pub fn render_synthetic_ootd(garments: &[SyntheticGarment], hierarchy: &CategoryHierarchy) -> Result<RasterImage> {
    if garments.is_empty() {
        return Err(Error::contract("a synthetic ootd needs at least one garment"));
    }
    let colors: Vec<[u8; 3]> = garments
        .iter()
        .map(|g| Ok([palette_code(hierarchy, &g.sub_category)?, g.shade, g.shade.wrapping_mul(37)]))
        .collect::<Result<_>>()?;
    let height = BAND_GAP + garments.len() as u32 * (BAND_HEIGHT + BAND_GAP);
    RasterImage::from_fn(BAND_WIDTH, height, |x, y| {
        let band = y.checked_sub(BAND_GAP).map(|r| (r / (BAND_HEIGHT + BAND_GAP), r % (BAND_HEIGHT + BAND_GAP)));
        match band {
            Some((i, r)) if r < BAND_HEIGHT && (i as usize) < colors.len() => {
                let [r0, g, b] = colors[i as usize];
                // faint horizontal texture so crops are not flat
                [r0, g.wrapping_add((x % 4) as u8), b]
            }
            _ => BACKGROUND,
        }
    })
}

fn is_background(p: [u8; 3]) -> bool {
    p == BACKGROUND
}

/// Most frequent decodable red value among non-background pixels.
fn dominant_sub<'h>(hierarchy: &'h CategoryHierarchy, img: &RasterImage) -> Option<(&'h str, f64)> {
    let mut counts = [0usize; 256];
    let mut total = 0usize;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.pixel(x, y);
            if !is_background(p) {
                counts[p[0] as usize] += 1;
                total += 1;
            }
        }
    }
    let (red, n) = counts.iter().enumerate().filter(|(r, _)| decode_palette(hierarchy, *r as u8).is_some()).max_by_key(|(r, n)| (**n, std::cmp::Reverse(*r)))?;
    if *n == 0 {
        return None;
    }
    Some((decode_palette(hierarchy, red as u8)?, *n as f64 / total as f64))
}

/// Finds maximal runs of non-background rows and boxes their column extent.
pub struct BandDetector {
    pub hierarchy: CategoryHierarchy,
    pub confidence: f64,
}

impl Detector for BandDetector {
    fn detect(&self, image: &RasterImage) -> Result<Vec<BoundingBox>> {
        let mut out = Vec::new();
        let mut y = 0;
        while y < image.height() {
            if image.row_is_uniform(y, 0) && is_background(image.pixel(0, y)) {
                y += 1;
                continue;
            }
            let start = y;
            while y < image.height() && !(image.row_is_uniform(y, 0) && is_background(image.pixel(0, y))) {
                y += 1;
            }
            let h = y - start;
            let band = image.crop(0, start, image.width(), h)?;
            let cols: Vec<u32> =
                (0..image.width()).filter(|&x| (0..h).any(|r| !is_background(band.pixel(x, r)))).collect();
            let (x0, x1) = (cols[0], *cols.last().unwrap_or(&cols[0]));
            let Some((sub, _)) = dominant_sub(&self.hierarchy, &band) else { continue };
            let sc = self.hierarchy.require_super(sub)?;
            out.push(BoundingBox::new(x0, start, x1 - x0 + 1, h, sc, self.confidence, (image.width(), image.height()))?);
        }
        Ok(out)
    }
}

/// Reads the sub-category from the palette. With `label_noise` > 0 a
/// deterministic pseudo-random fraction of crops gets a random label.
pub struct PaletteClassifier {
    pub hierarchy: CategoryHierarchy,
    pub label_noise: f64,
    pub seed: u64,
}

fn image_hash(img: &RasterImage, seed: u64) -> u64 {
    let mut h = shard_hash(seed ^ ((img.width() as u64) << 32 | img.height() as u64));
    for chunk in img.pixels().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = shard_hash(h ^ u64::from_le_bytes(word));
    }
    h
}

impl Classifier for PaletteClassifier {
    fn classify(&self, crop: &RasterImage) -> Result<Classification> {
        let (sub, share) = dominant_sub(&self.hierarchy, crop)
            .ok_or_else(|| Error::contract("no garment pixels in crop"))?;
        if self.label_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(image_hash(crop, self.seed));
            if rng.random::<f64>() < self.label_noise {
                let subs: Vec<&str> = self.hierarchy.sub_categories().map(|(s, _)| s).collect();
                let pick = subs[rng.random_range(0..subs.len())];
                return Ok(Classification { sub_category: pick.to_string(), confidence: 0.5 });
            }
        }
        Ok(Classification { sub_category: sub.to_string(), confidence: share })
    }
}

const COLOR_NAMES: [&str; 8] = ["black", "white", "gray", "red", "blue", "green", "beige", "navy"];

/// Color from the shade and a solid pattern.
pub struct PaletteTagger;

impl Tagger for PaletteTagger {
    fn tag(&self, crop: &RasterImage) -> Result<BTreeSet<AttributeTag>> {
        let p = (0..crop.height())
            .flat_map(|y| (0..crop.width()).map(move |x| (x, y)))
            .map(|(x, y)| crop.pixel(x, y))
            .find(|p| !is_background(*p))
            .ok_or_else(|| Error::contract("no garment pixels in crop"))?;
        Ok([AttributeTag::new("color", COLOR_NAMES[(p[1] / 32) as usize]), AttributeTag::new("pattern", "solid")].into())
    }
}

/// Seeded Gaussian projection of per-cell mean colors to a unit vector.
pub struct ProjectionEmbedder {
    dim: usize,
    grid: u32,
    projection: Vec<f64>,
}

impl ProjectionEmbedder {
    pub fn new(dim: usize, grid: u32, seed: u64) -> Result<Self> {
        if dim == 0 || grid == 0 {
            return Err(Error::contract("embedder needs a positive dimension and grid"));
        }
        let features = (grid * grid * 3) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * features)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        Ok(Self { dim, grid, projection })
    }

    fn features(&self, img: &RasterImage) -> Vec<f64> {
        let g = self.grid;
        let mut sums = vec![0.0; (g * g * 3) as usize];
        let mut counts = vec![0usize; (g * g) as usize];
        for y in 0..img.height() {
            for x in 0..img.width() {
                let cell = ((y * g / img.height()) * g + x * g / img.width()) as usize;
                let p = img.pixel(x, y);
                for c in 0..3 {
                    sums[cell * 3 + c] += p[c] as f64 / 255.0;
                }
                counts[cell] += 1;
            }
        }
        // centered so a uniform gray crop is not the same direction as every other
        sums.iter().enumerate().map(|(i, s)| s / counts[i / 3].max(1) as f64 - 0.5).collect()
    }
}

impl Embedder for ProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, crop: &RasterImage) -> Result<Vec<f32>> {
        let f = self.features(crop);
        let v: Vec<f64> = self.projection.chunks(f.len()).map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::contract("crop embeds to a zero vector"));
        }
        Ok(v.iter().map(|x| (x / norm) as f32).collect())
    }
}

/// Deterministic stand-ins for the four models, driven by the synthetic palette.
pub fn stub_plugins(seed: u64, hierarchy: &CategoryHierarchy) -> Result<PluginSet> {
    Ok(PluginSet {
        detector: Box::new(BandDetector { hierarchy: hierarchy.clone(), confidence: 0.9 }),
        classifier: Box::new(PaletteClassifier { hierarchy: hierarchy.clone(), label_noise: 0.0, seed }),
        tagger: Box::new(PaletteTagger),
        embedder: Box::new(ProjectionEmbedder::new(128, 4, seed)?),
    })
}
