//! BFH1 action-table files.
//!
//! Little-endian layout:
//!
//! | field        | type        |
//! |--------------|-------------|
//! | magic        | `b"BFH1"`   |
//! | version      | `u16` = 1   |
//! | horizon      | `u32`       |
//! | prior        | 4 × `f64`   |
//! | bayes number | `f64`       |
//! | payload len  | `u64`       |
//! | payload      | packed codes|
//! | crc32        | `u32`       |
//!
//! Codes are 2 bits each, first state of a byte in the low bits, layers in
//! ascending order and each layer padded to a whole byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::beta::PriorSpec;
use crate::dp::{layer_offsets, table_payload_len, ActionTable};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BFH1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 4 + 2 + 4 + 4 * 8 + 8 + 8;

fn header_bytes(horizon: u32, prior: &PriorSpec, bayes_number: f64, payload_len: u64) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN as usize);
    h.extend_from_slice(&MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    h.extend_from_slice(&horizon.to_le_bytes());
    for v in prior.as_array() {
        h.extend_from_slice(&v.to_le_bytes());
    }
    h.extend_from_slice(&bayes_number.to_le_bytes());
    h.extend_from_slice(&payload_len.to_le_bytes());
    h
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Header {
    pub horizon: u32,
    pub prior: PriorSpec,
    pub bayes_number: f64,
    pub payload_len: u64,
}

fn parse_header(buf: &[u8]) -> Result<Header> {
    if buf.len() < HEADER_LEN as usize {
        return Err(Error::Format("file truncated inside the header".into()));
    }
    if buf[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &buf[..4])));
    }
    let u16_at = |o: usize| u16::from_le_bytes(buf[o..o + 2].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let horizon = u32_at(6);
    let prior = PriorSpec::new(f64_at(10), f64_at(18), f64_at(26), f64_at(34))
        .map_err(|e| Error::Format(format!("invalid prior in header: {e}")))?;
    let header = Header { horizon, prior, bayes_number: f64_at(42), payload_len: u64_at(50) };
    let expected = table_payload_len(horizon);
    if header.payload_len != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match horizon {horizon} ({expected} expected)",
            header.payload_len
        )));
    }
    Ok(header)
}

pub fn save_table(table: &ActionTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header_bytes(table.horizon, &table.prior, table.bayes_number, table.payload.len() as u64))?;
    w.write_all(&table.payload)?;
    w.write_all(&crc32fast::hash(&table.payload).to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<ActionTable> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let header = parse_header(&bytes)?;
    let start = HEADER_LEN as usize;
    let end = start + header.payload_len as usize;
    if bytes.len() < end + 4 {
        return Err(Error::Format(format!("file truncated: {} bytes, {} expected", bytes.len(), end + 4)));
    }
    if bytes.len() > end + 4 {
        return Err(Error::Format("trailing bytes after checksum".into()));
    }
    let payload = &bytes[start..end];
    let stored = u32::from_le_bytes(bytes[end..end + 4].try_into().unwrap());
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::Format(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    let table = ActionTable::from_parts(header.horizon, header.prior, header.bayes_number, payload.to_vec())?;
    table.validate()?;
    Ok(table)
}

/// Writes a table layer by layer in any order, then seals the header and
/// checksum. Used by the streaming solver.
pub(crate) struct TableWriter {
    file: File,
    offsets: Vec<usize>,
    horizon: u32,
    prior: PriorSpec,
    crcs: Vec<Option<crc32fast::Hasher>>,
}

impl TableWriter {
    pub(crate) fn create(path: &Path, horizon: u32, prior: &PriorSpec) -> Result<Self> {
        let mut file = File::create(path)?;
        let offsets = layer_offsets(horizon);
        let payload_len = offsets[horizon as usize + 1] as u64;
        file.write_all(&header_bytes(horizon, prior, f64::NAN, payload_len))?;
        let mut w = Self { file, offsets, horizon, prior: *prior, crcs: vec![None; horizon as usize + 1] };
        // terminal layer: no actions
        let zeros = vec![0u8; w.layer_len(horizon)];
        w.write_layer(horizon, &zeros)?;
        Ok(w)
    }

    fn layer_len(&self, t: u32) -> usize {
        self.offsets[t as usize + 1] - self.offsets[t as usize]
    }

    pub(crate) fn write_layer(&mut self, t: u32, bytes: &[u8]) -> Result<()> {
        debug_assert_eq!(bytes.len(), self.layer_len(t));
        self.file.seek(SeekFrom::Start(HEADER_LEN + self.offsets[t as usize] as u64))?;
        self.file.write_all(bytes)?;
        let mut h = crc32fast::Hasher::new();
        h.update(bytes);
        self.crcs[t as usize] = Some(h);
        Ok(())
    }

    pub(crate) fn finish(mut self, bayes_number: f64) -> Result<()> {
        let mut crc = crc32fast::Hasher::new();
        for (t, h) in self.crcs.iter().enumerate() {
            let h = h.as_ref().ok_or_else(|| Error::Format(format!("layer {t} was never written")))?;
            crc.combine(h);
        }
        let payload_len = self.offsets[self.horizon as usize + 1] as u64;
        self.file.seek(SeekFrom::Start(HEADER_LEN + payload_len))?;
        self.file.write_all(&crc.finalize().to_le_bytes())?;
        self.file.seek(SeekFrom::Start(0))?;
        self.file.write_all(&header_bytes(self.horizon, &self.prior, bayes_number, payload_len))?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads single layers of a table file without loading the whole payload.
/// The checksum is not verified; use [`load_table`] for untrusted files.
pub(crate) struct TableLayerReader {
    file: BufReader<File>,
    offsets: Vec<usize>,
    pub(crate) header: Header,
}

impl TableLayerReader {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let mut head = vec![0u8; HEADER_LEN as usize];
        file.read_exact(&mut head).map_err(|_| Error::Format("file truncated inside the header".into()))?;
        let header = parse_header(&head)?;
        let len = file.metadata()?.len();
        if len != HEADER_LEN + header.payload_len + 4 {
            return Err(Error::Format(format!("file has {len} bytes, header promises more")));
        }
        Ok(Self { file: BufReader::new(file), offsets: layer_offsets(header.horizon), header })
    }

    pub(crate) fn read_layer(&mut self, t: u32, buf: &mut Vec<u8>) -> Result<()> {
        let (lo, hi) = (self.offsets[t as usize], self.offsets[t as usize + 1]);
        buf.clear();
        buf.resize(hi - lo, 0);
        self.file.seek(SeekFrom::Start(HEADER_LEN + lo as u64))?;
        self.file.read_exact(buf)?;
        Ok(())
    }
}
