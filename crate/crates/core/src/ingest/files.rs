//! On-disk formats: the binary embedding file, the interaction CSV log and
//! the JSON-lines metadata file.
//!
//! Embedding file layout (little-endian):
//!
//! ```text
//! magic    b"ITOOVEC1"
//! u32      vector_dim
//! u64      record_count
//! record*  u64 id, vector_dim × f32
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InteractionEvent, InteractionKind, ItemMeta, OotdPost, UserId, UserProfile};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"ITOOVEC1";
pub const INTERACTION_HEADER: [&str; 4] = ["timestamp_iso8601", "user_id", "kind", "target_id"];

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub vectors: BTreeMap<u64, Vec<f32>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: u64, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

pub fn read_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    let file = File::open(path)?;
    read_embeddings_from(BufReader::new(file), path, expected_dim)
}

/// Parses an embedding stream. Errors report the byte offset where parsing stopped.
pub fn read_embeddings_from<R: Read>(reader: R, origin: &Path, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    let mut r = CountingReader { inner: reader, offset: 0 };
    let bad = |r: &CountingReader<R>, msg: String| Error::parse(origin, r.offset, msg);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| bad(&r, format!("header: {e}")))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::parse(origin, 0, "bad magic, expected ITOOVEC1"));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(|e| bad(&r, format!("header: {e}")))? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(|e| bad(&r, format!("header: {e}")))?;
    if let Some(want) = expected_dim {
        if dim != want {
            return Err(Error::Schema(format!(
                "{}: declared vector_dim {dim}, configured {want}",
                origin.display()
            )));
        }
    }

    let mut set = EmbeddingSet::new(dim);
    for n in 0..count {
        let id = r
            .read_u64::<LittleEndian>()
            .map_err(|e| bad(&r, format!("record {n}: {e}")))?;
        let mut v = vec![0f32; dim];
        r.read_f32_into::<LittleEndian>(&mut v)
            .map_err(|e| bad(&r, format!("record {n} (id {id}) truncated: {e}")))?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Schema(format!("{}: record {id} has non-finite values", origin.display())));
        }
        if set.vectors.insert(id, v).is_some() {
            return Err(bad(&r, format!("duplicate id {id}")));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad(&r, format!("trailing bytes after {count} records")));
    }
    Ok(set)
}

pub fn write_embeddings_to<W: Write>(mut w: W, set: &EmbeddingSet) -> Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_u32::<LittleEndian>(set.dim as u32)?;
    w.write_u64::<LittleEndian>(set.vectors.len() as u64)?;
    for (id, v) in &set.vectors {
        if v.len() != set.dim {
            return Err(Error::DimensionMismatch { expected: set.dim, found: v.len() });
        }
        w.write_u64::<LittleEndian>(*id)?;
        for x in v {
            w.write_f32::<LittleEndian>(*x)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    write_atomically(path, |w| write_embeddings_to(w, set))
}

pub(crate) fn write_atomically(path: &Path, body: impl FnOnce(&mut BufWriter<&File>) -> Result<()>) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(&file);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::contract(format!("bad timestamp '{s}': {e}")))
}

pub fn read_interactions(path: &Path) -> Result<Vec<InteractionEvent>> {
    read_interactions_from(File::open(path)?, path)
}

pub fn read_interactions_from<R: Read>(reader: R, origin: &Path) -> Result<Vec<InteractionEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .clone();
    if headers.iter().map(str::trim).ne(INTERACTION_HEADER) {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header '{}'", INTERACTION_HEADER.join(",")),
        ));
    }
    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(origin, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let at = |e: Error| Error::parse(origin, line, e.to_string());
        let ts = parse_timestamp(&record[0]).map_err(at)?;
        let kind: InteractionKind = record[2].parse().map_err(at)?;
        let event = InteractionEvent::new(ts, UserId::new(record[1].trim()), kind, &record[3]).map_err(at)?;
        events.push(event);
    }
    Ok(events)
}

fn interaction_row(e: &InteractionEvent) -> [String; 4] {
    [
        format_timestamp(&e.timestamp),
        e.user_id.to_string(),
        e.kind.to_string(),
        e.target.to_string(),
    ]
}

pub fn write_interactions_to<W: Write>(w: W, events: &[InteractionEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(INTERACTION_HEADER).map_err(io::Error::from)?;
    for e in events {
        wtr.write_record(interaction_row(e)).map_err(io::Error::from)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Appends one event to a log file (creating it with a header if needed) and
/// syncs before returning.
pub fn append_interaction(path: &Path, event: &InteractionEvent) -> Result<()> {
    append_interactions(path, std::slice::from_ref(event))
}

/// Appends events in order with a single sync at the end.
pub fn append_interactions(path: &Path, events: &[InteractionEvent]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(&file);
        if fresh {
            wtr.write_record(INTERACTION_HEADER).map_err(io::Error::from)?;
        }
        for event in events {
            wtr.write_record(interaction_row(event)).map_err(io::Error::from)?;
        }
        wtr.flush()?;
    }
    file.sync_data()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetadataRecord {
    Item(ItemMeta),
    Ootd(OotdPost),
    User(UserProfile),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub items: Vec<ItemMeta>,
    pub ootds: Vec<OotdPost>,
    pub users: Vec<UserProfile>,
}

impl Metadata {
    pub fn push(&mut self, record: MetadataRecord) {
        match record {
            MetadataRecord::Item(i) => self.items.push(i),
            MetadataRecord::Ootd(o) => self.ootds.push(o),
            MetadataRecord::User(u) => self.users.push(u),
        }
    }
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    read_metadata_from(BufReader::new(File::open(path)?), path)
}

pub fn read_metadata_from<R: BufRead>(reader: R, origin: &Path) -> Result<Metadata> {
    let mut meta = Metadata::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx as u64 + 1;
        let record: MetadataRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let record = match record {
            MetadataRecord::Ootd(o) => MetadataRecord::Ootd(
                o.normalized().map_err(|e| Error::parse(origin, lineno, e.to_string()))?,
            ),
            MetadataRecord::User(u) => MetadataRecord::User(
                u.normalized().map_err(|e| Error::parse(origin, lineno, e.to_string()))?,
            ),
            item => item,
        };
        meta.push(record);
    }
    Ok(meta)
}

pub fn append_metadata(path: &Path, records: &[MetadataRecord]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    {
        let mut w = BufWriter::new(&file);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    file.sync_data()?;
    Ok(())
}
