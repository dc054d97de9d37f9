//! Binary index snapshot: `ITOOHNSW` magic, a format version, params, ids,
//! vectors and adjacency, all little-endian.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::hnsw::{HnswIndex, HnswParams};
use crate::error::{Error, Result};
use crate::ingest::write_atomically;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"ITOOHNSW";
pub const SNAPSHOT_VERSION: u32 = 1;
const NO_ENTRY: u32 = u32::MAX;

impl HnswIndex {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_u32::<LE>(SNAPSHOT_VERSION)?;
        w.write_u32::<LE>(self.params.m as u32)?;
        w.write_u32::<LE>(self.params.ef_construction as u32)?;
        w.write_u32::<LE>(self.params.ef_search as u32)?;
        w.write_u64::<LE>(self.params.seed)?;
        w.write_u32::<LE>(self.dim as u32)?;
        w.write_u64::<LE>(self.ids.len() as u64)?;
        w.write_u32::<LE>(self.entry_point.unwrap_or(NO_ENTRY))?;
        for &id in &self.ids {
            w.write_u64::<LE>(id)?;
        }
        for &x in &self.vectors {
            w.write_f32::<LE>(x)?;
        }
        for layers in &self.links {
            w.write_u32::<LE>(layers.len() as u32)?;
            for nbrs in layers {
                w.write_u32::<LE>(nbrs.len() as u32)?;
                for &n in nbrs {
                    w.write_u32::<LE>(n)?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomically(path, |w| self.write_to(w))
    }

    /// Reads a snapshot and runs the full validator before returning it.
    pub fn read_from<R: Read>(r: &mut R, origin: &str) -> Result<Self> {
        let bad = |msg: String| Error::Schema(format!("{origin}: {msg}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(bad("not an index snapshot".into()));
        }
        let version = r.read_u32::<LE>().map_err(|_| bad("truncated header".into()))?;
        if version != SNAPSHOT_VERSION {
            return Err(bad(format!("unsupported snapshot version {version}")));
        }
        let index = read_body(r).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => bad("truncated snapshot".into()),
            other => other,
        })?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after snapshot".into()));
        }
        let problems = index.validate();
        if !problems.is_empty() {
            return Err(bad(format!("invalid index: {}", problems.join("; "))));
        }
        Ok(index)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r, &path.display().to_string())
    }
}

fn read_body<R: Read>(r: &mut R) -> Result<HnswIndex> {
    let params = HnswParams {
        m: r.read_u32::<LE>()? as usize,
        ef_construction: r.read_u32::<LE>()? as usize,
        ef_search: r.read_u32::<LE>()? as usize,
        seed: r.read_u64::<LE>()?,
    };
    let dim = r.read_u32::<LE>()? as usize;
    let n = r.read_u64::<LE>()? as usize;
    let entry = r.read_u32::<LE>()?;
    // guard allocations against corrupt counts
    const LIMIT: usize = 1 << 28;
    if n > LIMIT || dim > 1 << 16 || n.saturating_mul(dim) > LIMIT {
        return Err(Error::Schema(format!("implausible snapshot size {n}×{dim}")));
    }
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(r.read_u64::<LE>()?);
    }
    let mut vectors = vec![0f32; n * dim];
    r.read_f32_into::<LE>(&mut vectors)?;
    let mut links = Vec::with_capacity(n);
    for _ in 0..n {
        let layers = r.read_u32::<LE>()? as usize;
        if layers > 64 {
            return Err(Error::Schema(format!("implausible layer count {layers}")));
        }
        let mut node = Vec::with_capacity(layers);
        for layer in 0..layers {
            let deg = r.read_u32::<LE>()? as usize;
            if deg > params.max_degree(layer) {
                return Err(Error::Schema(format!("degree {deg} exceeds bound on layer {layer}")));
            }
            let mut nbrs = vec![0u32; deg];
            r.read_u32_into::<LE>(&mut nbrs)?;
            node.push(nbrs);
        }
        links.push(node);
    }
    Ok(HnswIndex {
        params,
        dim,
        ids,
        vectors,
        links,
        entry_point: (entry != NO_ENTRY).then_some(entry),
    })
}
