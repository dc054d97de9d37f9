use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CategoryHierarchy, SuperCategory};

/// Detector output in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub super_category: SuperCategory,
    pub confidence: f64,
}

impl BoundingBox {
    /// Checks positive size, containment in a `width × height` image and a
    /// confidence in [0, 1].
    pub fn new(
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        super_category: SuperCategory,
        confidence: f64,
        (width, height): (u32, u32),
    ) -> Result<Self> {
        let b = Self { x, y, w, h, super_category, confidence };
        b.check((width, height))?;
        Ok(b)
    }

    pub fn whole_image(super_category: SuperCategory, confidence: f64, (width, height): (u32, u32)) -> Result<Self> {
        Self::new(0, 0, width, height, super_category, confidence, (width, height))
    }

    pub fn check(&self, (width, height): (u32, u32)) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::contract(format!("box {self:?} has zero size")));
        }
        let inside = self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height);
        if !inside {
            return Err(Error::contract(format!("box {self:?} leaves the {width}x{height} image")));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::contract(format!("box confidence {} is outside [0, 1]", self.confidence)));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn intersection(&self, other: &BoundingBox) -> u64 {
        let x0 = self.x.max(other.x) as u64;
        let y0 = self.y.max(other.y) as u64;
        let x1 = (self.x as u64 + self.w as u64).min(other.x as u64 + other.w as u64);
        let y1 = (self.y as u64 + self.h as u64).min(other.y as u64 + other.h as u64);
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    /// Dress and top/bottom boxes overlapping by more than this IoU conflict.
    pub iou_threshold: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.3 }
    }
}

/// A box that survived post-processing with its classifier label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeptBox {
    pub bbox: BoundingBox,
    pub sub_category: String,
    /// Index into the detector output; `None` for the whole-image fallback.
    pub detection: Option<usize>,
}

/// Applies the detection rules in order:
///
/// 1. drop boxes whose classifier label belongs to another super-category;
/// 2. for each dress (most confident first) overlapping top/bottom boxes
///    above the IoU threshold, keep the dress if its confidence is at least
///    the best of them and drop them, otherwise drop the dress;
/// 3. if nothing is left, return one whole-image box labelled by
///    `whole_image`, which is only called in that case.
pub fn postprocess_detections(
    boxes: &[BoundingBox],
    labels: &[String],
    hierarchy: &CategoryHierarchy,
    cfg: &PostprocessConfig,
    image_size: (u32, u32),
    whole_image: impl FnOnce() -> Result<(String, f64)>,
) -> Result<Vec<KeptBox>> {
    if boxes.len() != labels.len() {
        return Err(Error::contract(format!("{} boxes but {} classifier labels", boxes.len(), labels.len())));
    }
    let mut kept: Vec<bool> = boxes
        .iter()
        .zip(labels)
        .map(|(b, l)| hierarchy.super_of(l) == Some(b.super_category))
        .collect();

    let mut dresses: Vec<usize> = (0..boxes.len()).filter(|&i| kept[i] && boxes[i].super_category == SuperCategory::Dress).collect();
    dresses.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence).then(a.cmp(&b)));
    for d in dresses {
        if !kept[d] {
            continue;
        }
        let rivals: Vec<usize> = (0..boxes.len())
            .filter(|&i| {
                kept[i]
                    && matches!(boxes[i].super_category, SuperCategory::Top | SuperCategory::Bottom)
                    && boxes[d].iou(&boxes[i]) > cfg.iou_threshold
            })
            .collect();
        let Some(best) = rivals.iter().map(|&i| boxes[i].confidence).max_by(f64::total_cmp) else { continue };
        if boxes[d].confidence >= best {
            rivals.iter().for_each(|&i| kept[i] = false);
        } else {
            kept[d] = false;
        }
    }

    let out: Vec<KeptBox> = (0..boxes.len())
        .filter(|&i| kept[i])
        .map(|i| KeptBox { bbox: boxes[i], sub_category: labels[i].clone(), detection: Some(i) })
        .collect();
    if !out.is_empty() {
        return Ok(out);
    }
    let (label, confidence) = whole_image()?;
    let sc = hierarchy.require_super(&label)?;
    let bbox = BoundingBox::whole_image(sc, confidence.clamp(0.0, 1.0), image_size)?;
    Ok(vec![KeptBox { bbox, sub_category: label, detection: None }])
}
