//! Binary sketch file.
//!
//! ```text
//! "DSK1" | u32 version | u32 section count
//! directory: (u32 id, u64 offset, u64 length) per section
//! payloads
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! All integers are little-endian. Metadata, schema, vocabulary, sample
//! indices and baseline statistics are JSON; parameters and sample rows are
//! binary.

use std::collections::BTreeMap;

use bitvec::prelude::*;
use crc::{Crc, CRC_64_XZ};

use super::{BaselineStats, DeepSketch, SketchError, SketchMetadata};
use crate::datastore::{Column, ColumnData, ColumnKind, SampleSet, SampleTables, SchemaCatalog, Table};
use crate::featurizer::EncodingVocabulary;
use crate::mscn::{MscnParams, MscnShape};

pub const MAGIC: &[u8; 4] = b"DSK1";
pub const FORMAT_VERSION: u32 = 1;

const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const HEADER_LEN: usize = 12;
const DIR_ENTRY_LEN: usize = 20;

mod section {
    pub const METADATA: u32 = 1;
    pub const SCHEMA: u32 = 2;
    pub const VOCABULARY: u32 = 3;
    pub const PARAMS: u32 = 4;
    pub const SAMPLE_INDEX: u32 = 5;
    pub const SAMPLE_ROWS: u32 = 6;
    pub const BASELINES: u32 = 7;
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("sketch sections serialize")
}

pub fn encode(sketch: &DeepSketch) -> Vec<u8> {
    let sections: Vec<(u32, Vec<u8>)> = vec![
        (section::METADATA, json(&sketch.metadata)),
        (section::SCHEMA, json(&sketch.schema)),
        (section::VOCABULARY, json(&sketch.vocab)),
        (section::PARAMS, encode_params(&sketch.params)),
        (section::SAMPLE_INDEX, json(&sketch.sample_index)),
        (section::SAMPLE_ROWS, encode_samples(&sketch.samples)),
        (section::BASELINES, json(&sketch.baselines)),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    let mut offset = (HEADER_LEN + DIR_ENTRY_LEN * sections.len()) as u64;
    for (id, payload) in &sections {
        out.extend_from_slice(&id.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        offset += payload.len() as u64;
    }
    for (_, payload) in &sections {
        out.extend_from_slice(payload);
    }
    let crc = CHECKSUM.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<DeepSketch, SketchError> {
    if bytes.len() < MAGIC.len() {
        return Err(SketchError::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(SketchError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 8 {
        return Err(SketchError::TruncatedFile);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if CHECKSUM.checksum(body) != stored {
        return Err(SketchError::ChecksumMismatch);
    }
    let mut header = Reader::new(&body[4..]);
    let version = header.u32()?;
    if version != FORMAT_VERSION {
        return Err(SketchError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let count = header.u32()? as usize;
    let mut sections = BTreeMap::new();
    for _ in 0..count {
        let id = header.u32()?;
        let offset = header.u64()? as usize;
        let len = header.u64()? as usize;
        let end = offset.checked_add(len).ok_or(SketchError::TruncatedFile)?;
        if end > body.len() {
            return Err(SketchError::TruncatedFile);
        }
        sections.insert(id, &body[offset..end]);
    }
    let get = |id: u32, name: &str| {
        sections
            .get(&id)
            .copied()
            .ok_or_else(|| SketchError::Corrupt(format!("missing {name} section")))
    };
    let from_json = |id: u32, name: &str| -> Result<serde_json::Value, SketchError> {
        serde_json::from_slice(get(id, name)?).map_err(|e| SketchError::Corrupt(format!("{name}: {e}")))
    };
    let typed = |id: u32, name: &str| from_json(id, name).map(|v| (v, name.to_string()));
    fn parse<T: serde::de::DeserializeOwned>((v, name): (serde_json::Value, String)) -> Result<T, SketchError> {
        serde_json::from_value(v).map_err(|e| SketchError::Corrupt(format!("{name}: {e}")))
    }

    let metadata: SketchMetadata = parse(typed(section::METADATA, "metadata")?)?;
    let schema: SchemaCatalog = parse(typed(section::SCHEMA, "schema")?)?;
    let schema = SchemaCatalog::new(schema.tables, schema.fk_edges)?;
    let vocab: EncodingVocabulary = parse(typed(section::VOCABULARY, "vocabulary")?)?;
    let sample_index: SampleSet = parse(typed(section::SAMPLE_INDEX, "sample index")?)?;
    let baselines: BaselineStats = parse(typed(section::BASELINES, "baselines")?)?;
    let params = decode_params(get(section::PARAMS, "params")?)?;
    let samples = decode_samples(get(section::SAMPLE_ROWS, "sample rows")?, &schema)?;
    DeepSketch::from_parts(metadata, schema, vocab, params, sample_index, samples, baselines)
}

fn encode_params(params: &MscnParams<f32>) -> Vec<u8> {
    let shape = params.shape();
    let mut out = Vec::with_capacity(16 + 4 * shape.parameter_count());
    for d in [shape.table_dim, shape.join_dim, shape.predicate_dim, shape.hidden] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in params.slices() {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_params(bytes: &[u8]) -> Result<MscnParams<f32>, SketchError> {
    let mut r = Reader::new(bytes);
    let shape = MscnShape {
        table_dim: r.u32()? as usize,
        join_dim: r.u32()? as usize,
        predicate_dim: r.u32()? as usize,
        hidden: r.u32()? as usize,
    };
    let n = shape.parameter_count();
    let raw = r.take(n.checked_mul(4).ok_or(SketchError::TruncatedFile)?)?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    r.finish("params")?;
    MscnParams::from_flat(shape, &values).map_err(|e| SketchError::Corrupt(e.to_string()))
}

fn kind_tag(kind: ColumnKind) -> u8 {
    match kind {
        ColumnKind::Integer => 0,
        ColumnKind::Float => 1,
        ColumnKind::Date => 2,
    }
}

fn encode_samples(samples: &SampleTables) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(samples.size() as u32).to_le_bytes());
    let tables: Vec<&Table> = samples.tables().collect();
    out.extend_from_slice(&(tables.len() as u32).to_le_bytes());
    for t in tables {
        put_str(&mut out, t.name());
        out.extend_from_slice(&(t.row_count() as u32).to_le_bytes());
        out.extend_from_slice(&(t.columns().len() as u32).to_le_bytes());
        for c in t.columns() {
            put_str(&mut out, c.name());
            out.push(kind_tag(c.kind()));
            match c.null_mask() {
                None => out.push(0),
                Some(mask) => {
                    out.push(1);
                    let mut bytes = vec![0u8; t.row_count().div_ceil(8)];
                    for i in mask.iter_ones() {
                        bytes[i / 8] |= 1 << (i % 8);
                    }
                    out.extend_from_slice(&bytes);
                }
            }
            match c.data() {
                ColumnData::Int(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ColumnData::Float(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ColumnData::Date(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
    }
    out
}

fn decode_samples(bytes: &[u8], schema: &SchemaCatalog) -> Result<SampleTables, SketchError> {
    let corrupt = |m: String| SketchError::Corrupt(format!("sample rows: {m}"));
    let mut r = Reader::new(bytes);
    let size = r.u32()? as usize;
    let count = r.u32()?;
    let mut tables = Vec::new();
    for _ in 0..count {
        let name = r.str()?;
        let def = schema
            .table(&name)
            .ok_or_else(|| corrupt(format!("unknown table {name}")))?
            .clone();
        let rows = r.u32()? as usize;
        let ncols = r.u32()? as usize;
        if ncols != def.columns.len() {
            return Err(corrupt(format!("{name} has {ncols} columns")));
        }
        let mut columns = Vec::with_capacity(ncols);
        for cdef in &def.columns {
            let cname = r.str()?;
            let tag = r.u8()?;
            if cname != cdef.name || tag != kind_tag(cdef.kind) {
                return Err(corrupt(format!("column {cname} does not match the schema")));
            }
            let nulls = match r.u8()? {
                0 => None,
                1 => {
                    let raw = r.take(rows.div_ceil(8))?;
                    let mut bits = BitVec::repeat(false, rows);
                    for i in 0..rows {
                        bits.set(i, raw[i / 8] >> (i % 8) & 1 == 1);
                    }
                    Some(bits)
                }
                t => return Err(corrupt(format!("bad null flag {t}"))),
            };
            let data = match cdef.kind {
                ColumnKind::Integer => ColumnData::Int(
                    r.take(rows * 8)?
                        .chunks_exact(8)
                        .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
                ColumnKind::Float => ColumnData::Float(
                    r.take(rows * 8)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
                ColumnKind::Date => ColumnData::Date(
                    r.take(rows * 4)?
                        .chunks_exact(4)
                        .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ),
            };
            columns.push(Column::new(cdef.clone(), data, nulls)?);
        }
        tables.push(Table::new(def, columns)?);
    }
    r.finish("sample rows")?;
    Ok(SampleTables::from_tables(size, tables)?)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SketchError> {
        if n > self.bytes.len() {
            return Err(SketchError::TruncatedFile);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, SketchError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SketchError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, SketchError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String, SketchError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| SketchError::Corrupt("invalid utf-8 name".into()))
    }

    fn finish(&self, what: &str) -> Result<(), SketchError> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(SketchError::Corrupt(format!(
                "{} trailing bytes in {what}",
                self.bytes.len()
            )))
        }
    }
}
