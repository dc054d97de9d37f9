use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Trainable image embeddings standing in for a CNN's output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: BTreeMap<u64, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("embedding dimension must be positive"));
        }
        Ok(Self { dim, rows: BTreeMap::new() })
    }

    /// Gaussian rows with variance 1/dim, so norms start near 1.
    pub fn random<R: Rng>(ids: impl IntoIterator<Item = u64>, dim: usize, rng: &mut R) -> Result<Self> {
        let mut table = Self::new(dim)?;
        let scale = 1.0 / (dim as f64).sqrt();
        for id in ids {
            let row = (0..dim).map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                scale * e
            }).collect::<Vec<f64>>();
            table.rows.insert(id, row);
        }
        Ok(table)
    }

    pub fn insert(&mut self, id: u64, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: row.len() });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract(format!("row {id} has non-finite entries")));
        }
        self.rows.insert(id, row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&[f64]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    pub fn row(&self, id: u64) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::contract(format!("image {id} is not in the embedding table")))
    }

    pub fn rows(&self) -> &BTreeMap<u64, Vec<f64>> {
        &self.rows
    }

    pub fn row_mut(&mut self, id: u64) -> Option<&mut Vec<f64>> {
        self.rows.get_mut(&id)
    }

    /// `row -= lr * grad` for every row in `grads`.
    pub fn apply_gradient(&mut self, grads: &BTreeMap<u64, Vec<f64>>, lr: f64) -> Result<()> {
        for (id, g) in grads {
            let row = self
                .rows
                .get_mut(id)
                .ok_or_else(|| Error::contract(format!("gradient for unknown row {id}")))?;
            for (x, gx) in row.iter_mut().zip(g) {
                *x -= lr * gx;
            }
        }
        Ok(())
    }

    /// Rows as f32 vectors, e.g. for an index build.
    pub fn to_f32(&self) -> BTreeMap<u64, Vec<f32>> {
        self.rows.iter().map(|(id, r)| (*id, r.iter().map(|&x| x as f32).collect())).collect()
    }
}

/// Image-to-class assignment with an optional data source per image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelSet {
    class_of: BTreeMap<u64, u32>,
    source_of: BTreeMap<u64, String>,
    members: BTreeMap<u32, Vec<u64>>,
}

pub const DEFAULT_SOURCE: &str = "default";

impl LabelSet {
    pub fn new(entries: impl IntoIterator<Item = (u64, u32, Option<String>)>) -> Result<Self> {
        let mut set = Self::default();
        for (image, class, source) in entries {
            if set.class_of.insert(image, class).is_some() {
                return Err(Error::Schema(format!("image {image} is labeled twice")));
            }
            set.source_of.insert(image, source.unwrap_or_else(|| DEFAULT_SOURCE.to_string()));
            set.members.entry(class).or_default().push(image);
        }
        for (class, images) in &mut set.members {
            images.sort_unstable();
            let sources: BTreeSet<&str> = images.iter().map(|i| set.source_of[i].as_str()).collect();
            if sources.len() > 1 {
                return Err(Error::Schema(format!("class {class} spans sources {sources:?}")));
            }
        }
        Ok(set)
    }

    pub fn class_of(&self, image: u64) -> Option<u32> {
        self.class_of.get(&image).copied()
    }

    pub fn source_of(&self, image: u64) -> Option<&str> {
        self.source_of.get(&image).map(String::as_str)
    }

    pub fn class_source(&self, class: u32) -> Option<&str> {
        self.members.get(&class).and_then(|m| self.source_of(m[0]))
    }

    pub fn images_of(&self, class: u32) -> &[u64] {
        self.members.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.members.keys().copied()
    }

    /// Classes with at least two images, i.e. those that can form a positive pair.
    pub fn pairable_classes(&self) -> Vec<u32> {
        self.members.iter().filter(|(_, m)| m.len() >= 2).map(|(c, _)| *c).collect()
    }

    pub fn images(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.class_of.iter().map(|(i, c)| (*i, *c))
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }
}

/// Reads `image_id,class_id[,source]` with a header row.
pub fn read_labels(path: &Path) -> Result<LabelSet> {
    let text = std::fs::read_to_string(path)?;
    parse_labels(&text, &path.display().to_string())
}

pub fn parse_labels(text: &str, origin: &str) -> Result<LabelSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(origin, 1, e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "image_id" || cols[1] != "class_id" || (cols.len() == 3 && cols[2] != "source") || cols.len() > 3 {
        return Err(Error::parse(origin, 1, format!("expected header image_id,class_id[,source], found {}", cols.join(","))));
    }
    let mut entries = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let image = rec[0].parse::<u64>().map_err(|e| Error::parse(origin, line, format!("image_id: {e}")))?;
        let class = rec[1].parse::<u32>().map_err(|e| Error::parse(origin, line, format!("class_id: {e}")))?;
        let source = rec.get(2).filter(|s| !s.is_empty()).map(str::to_string);
        entries.push((image, class, source));
    }
    LabelSet::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_csv() {
        let text = "image_id,class_id,source\n1,0,mall-a\n2,0,mall-a\n3,1,\n";
        let set = parse_labels(text, "labels.csv").unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.images_of(0), &[1, 2]);
        assert_eq!(set.class_source(1), Some(DEFAULT_SOURCE));
        assert_eq!(set.pairable_classes(), vec![0]);

        let err = parse_labels("image_id,class_id\n1,x\n", "l.csv").unwrap_err();
        assert!(err.to_string().starts_with("l.csv:2:"), "{err}");
        assert!(parse_labels("id,class\n", "l.csv").is_err());
        assert!(parse_labels("image_id,class_id,source\n1,0,a\n2,0,b\n", "l.csv").is_err());
        assert!(parse_labels("image_id,class_id\n1,0\n1,1\n", "l.csv").is_err());
    }

    #[test]
    fn table_contracts() {
        let mut t = EmbeddingTable::new(2).unwrap();
        assert!(t.insert(1, vec![1.0]).is_err());
        assert!(t.insert(1, vec![f64::NAN, 0.0]).is_err());
        t.insert(1, vec![1.0, 2.0]).unwrap();
        t.apply_gradient(&[(1, vec![1.0, -1.0])].into(), 0.5).unwrap();
        assert_eq!(t.get(1).unwrap(), &[0.5, 2.5]);
        assert!(t.apply_gradient(&[(9, vec![0.0, 0.0])].into(), 1.0).is_err());
    }
}
