//! Metadata blocks and the tables built from them.
//!
//! A metadata block is a 2-byte header (bit 15: stored raw, low 15 bits:
//! on-disk length) followed by at most 8 KiB of payload. Tables are chains
//! of such blocks laid end to end.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use crate::codec::{self, CompressionId};
use crate::error::{Error, Result};
use crate::ondisk::{self, FragmentEntry, MetaRef, Superblock, FRAGMENT_ENTRY_SIZE, METADATA_SIZE};
use crate::storage::BlockSource;

const RAW_FLAG: u16 = 0x8000;
const FRAGMENTS_PER_BLOCK: u64 = (METADATA_SIZE / FRAGMENT_ENTRY_SIZE) as u64;
const IDS_PER_BLOCK: u64 = (METADATA_SIZE / 4) as u64;
pub const DEFAULT_CACHE_BLOCKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaBlock {
    pub payload: Vec<u8>,
    /// Bytes occupied on disk, header included.
    pub disk_size: u64,
    pub was_compressed: bool,
}

/// Reads and (if needed) inflates the metadata block at `abs_offset`.
pub fn read_meta_block(
    source: &BlockSource,
    compression: CompressionId,
    abs_offset: u64,
) -> Result<MetaBlock> {
    let truncated = |_| Error::TruncatedBlock { offset: abs_offset };
    let head = source.read_at(abs_offset, 2).map_err(truncated)?;
    let word = u16::from_le_bytes([head[0], head[1]]);
    let size = word & !RAW_FLAG;
    if size == 0 || usize::from(size) > METADATA_SIZE {
        return Err(Error::OversizeBlock {
            offset: abs_offset,
            size,
        });
    }
    let data = source
        .read_at(abs_offset + 2, usize::from(size))
        .map_err(truncated)?;
    let was_compressed = word & RAW_FLAG == 0;
    let payload = if was_compressed {
        codec::decompress(compression, &data, METADATA_SIZE)?
    } else {
        data
    };
    Ok(MetaBlock {
        payload,
        disk_size: 2 + u64::from(size),
        was_compressed,
    })
}

/// A metadata table: where its first block sits and the offset its chain
/// must not reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Table {
    pub start: u64,
    pub end: u64,
}

/// Metadata block reader with a small LRU of decompressed blocks.
///
/// The cache sits behind a mutex so a shared reader can serve several
/// threads; results never depend on what is cached.
pub struct MetaReader {
    source: BlockSource,
    compression: CompressionId,
    cache: Mutex<VecDeque<(u64, Arc<MetaBlock>)>>,
    capacity: usize,
}

impl MetaReader {
    pub fn new(source: BlockSource, compression: CompressionId) -> Self {
        Self::with_capacity(source, compression, DEFAULT_CACHE_BLOCKS)
    }

    pub fn with_capacity(source: BlockSource, compression: CompressionId, capacity: usize) -> Self {
        MetaReader {
            source,
            compression,
            cache: Mutex::new(VecDeque::with_capacity(capacity)),
            capacity,
        }
    }

    pub fn source(&self) -> &BlockSource {
        &self.source
    }

    pub fn into_source(self) -> BlockSource {
        self.source
    }

    pub fn compression(&self) -> CompressionId {
        self.compression
    }

    pub fn block(&self, abs_offset: u64) -> Result<Arc<MetaBlock>> {
        {
            let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(i) = cache.iter().position(|(off, _)| *off == abs_offset) {
                let hit = cache.remove(i).unwrap();
                let block = Arc::clone(&hit.1);
                cache.push_front(hit);
                return Ok(block);
            }
        }
        let block = Arc::new(read_meta_block(&self.source, self.compression, abs_offset)?);
        if self.capacity > 0 {
            let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
            if cache.len() >= self.capacity {
                cache.pop_back();
            }
            cache.push_front((abs_offset, Arc::clone(&block)));
        }
        Ok(block)
    }

    pub fn cached_blocks(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    /// Reads `length` logical bytes starting at `at`, following the block
    /// chain as far as needed.
    pub fn read_span(&self, table: Table, at: MetaRef, length: u64) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        if length == 0 {
            return Ok(out);
        }
        let short = || Error::TruncatedTable { wanted: length };
        let mut abs = table.start.checked_add(at.block_start).ok_or_else(short)?;
        let mut skip = usize::from(at.intra_offset);
        while (out.len() as u64) < length {
            if abs >= table.end {
                return Err(short());
            }
            let block = self.block(abs)?;
            let avail = block.payload.get(skip..).ok_or_else(short)?;
            let want = (length - out.len() as u64).min(avail.len() as u64) as usize;
            out.extend_from_slice(&avail[..want]);
            skip = 0;
            abs += block.disk_size;
        }
        Ok(out)
    }

    /// Decompresses every block of `table`, returning the concatenated
    /// payload and, for each block, `(offset relative to table start,
    /// payload position of its first byte)`.
    pub fn read_whole(&self, table: Table) -> Result<(Vec<u8>, Vec<(u64, usize)>)> {
        let mut out = Vec::new();
        let mut marks = Vec::new();
        let mut abs = table.start;
        while abs < table.end {
            let block = self.block(abs)?;
            marks.push((abs - table.start, out.len()));
            out.extend_from_slice(&block.payload);
            abs += block.disk_size;
        }
        if abs != table.end {
            return Err(Error::TruncatedTable {
                wanted: table.end - table.start,
            });
        }
        Ok((out, marks))
    }
}

/// Free-function form of [`MetaReader::read_span`].
pub fn read_table_span(reader: &MetaReader, table: Table, at: MetaRef, length: u64) -> Result<Vec<u8>> {
    reader.read_span(table, at, length)
}

/// Reads an indirect lookup table: `count` fixed-size records stored in
/// metadata blocks whose absolute offsets are listed at `index_start`.
fn read_indexed_table(
    reader: &MetaReader,
    index_start: u64,
    count: u64,
    record_size: usize,
    per_block: u64,
    name: &'static str,
) -> Result<Vec<u8>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let source = reader.source();
    let blocks = count.div_ceil(per_block);
    let index_len = blocks * 8;
    if index_start
        .checked_add(index_len)
        .is_none_or(|end| end > source.total_size())
    {
        return Err(Error::TruncatedTable { wanted: index_len });
    }
    let index = source.read_at(index_start, index_len as usize)?;
    let wanted = count * record_size as u64;
    let mut out = Vec::new();
    for word in index.chunks_exact(8) {
        let at = u64::from_le_bytes(word.try_into().unwrap());
        let block = read_meta_block(source, reader.compression(), at)?;
        out.extend_from_slice(&block.payload);
    }
    if (out.len() as u64) < wanted {
        return Err(Error::EntryCountMismatch {
            table: name,
            expected: count,
            found: out.len() as u64 / record_size as u64,
        });
    }
    out.truncate(wanted as usize);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FragmentTable {
    pub entries: Vec<FragmentEntry>,
}

impl FragmentTable {
    pub fn get(&self, index: u32) -> Result<&FragmentEntry> {
        self.entries
            .get(index as usize)
            .ok_or(Error::FragmentIndexOutOfRange {
                index,
                count: self.entries.len() as u32,
            })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_fragment_table(reader: &MetaReader, sb: &Superblock) -> Result<FragmentTable> {
    let count = u64::from(sb.fragment_count);
    let raw = read_indexed_table(
        reader,
        sb.fragment_table_start,
        count,
        FRAGMENT_ENTRY_SIZE,
        FRAGMENTS_PER_BLOCK,
        "fragment",
    )?;
    let total = reader.source().total_size();
    let entries = raw
        .chunks_exact(FRAGMENT_ENTRY_SIZE)
        .enumerate()
        .map(|(i, rec)| {
            let e = ondisk::parse_fragment_entry(rec, 0).unwrap();
            if e.start >= total || e.on_disk_size() > sb.block_size {
                Err(Error::BadFragmentEntry { index: i as u32 })
            } else {
                Ok(e)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FragmentTable { entries })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdTable {
    pub ids: Vec<u32>,
}

impl IdTable {
    pub fn resolve(&self, index: u16) -> Result<u32> {
        self.ids.get(usize::from(index)).copied().ok_or(Error::IndexOutOfRange {
            index: u32::from(index),
            len: self.ids.len() as u32,
        })
    }
}

pub fn load_id_table(reader: &MetaReader, sb: &Superblock) -> Result<IdTable> {
    let raw = read_indexed_table(
        reader,
        sb.id_table_start,
        u64::from(sb.id_count),
        4,
        IDS_PER_BLOCK,
        "id",
    )?;
    Ok(IdTable {
        ids: raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    })
}
