//! File content: full data blocks followed by an optional tail stored in a
//! shared fragment block.

use crate::codec;
use crate::error::{Error, Result};
use crate::metadata::{FragmentTable, MetaReader};
use crate::ondisk::{FileLayout, BLOCK_SIZE_MASK, BLOCK_UNCOMPRESSED};

fn corrupt(msg: String) -> Error {
    Error::CorruptData(msg)
}

/// Reads one stored block (data or fragment) of `disk_len` bytes at `at`.
fn load_block(
    reader: &MetaReader,
    block_size: u32,
    at: u64,
    size_word: u32,
) -> Result<Vec<u8>> {
    let disk_len = size_word & BLOCK_SIZE_MASK;
    if disk_len > block_size {
        return Err(corrupt(format!("block at {at} claims {disk_len} bytes on disk")));
    }
    let raw = reader
        .source()
        .read_at(at, disk_len as usize)
        .map_err(|_| corrupt(format!("block at {at} runs past the image end")))?;
    if size_word & BLOCK_UNCOMPRESSED != 0 {
        Ok(raw)
    } else {
        codec::decompress(reader.compression(), &raw, block_size as usize)
    }
}

/// Returns bytes `[start, start + len)` of the file described by `layout`.
/// The caller guarantees `start + len <= layout.file_size`.
pub(crate) fn read_range(
    reader: &MetaReader,
    block_size: u32,
    fragments: &FragmentTable,
    layout: &FileLayout<'_>,
    start: u64,
    len: u64,
) -> Result<Vec<u8>> {
    debug_assert!(start + len <= layout.file_size);
    let mut out = Vec::new();
    if len == 0 {
        return Ok(out);
    }
    let bs = u64::from(block_size);
    let end = start + len;
    let first = start / bs;
    let last = (end - 1) / bs;
    let nblocks = layout.block_sizes.len() as u64;

    // Disk position of the first block we need.
    let mut disk = layout.blocks_start;
    for &word in &layout.block_sizes[..first.min(nblocks) as usize] {
        disk = disk
            .checked_add(u64::from(word & BLOCK_SIZE_MASK))
            .ok_or_else(|| corrupt("block list overflows".into()))?;
    }

    for b in first..=last {
        let block_pos = b * bs;
        let expected = (layout.file_size - block_pos).min(bs);
        let data = if b < nblocks {
            let word = layout.block_sizes[b as usize];
            let data = if word == 0 {
                vec![0; expected as usize]
            } else {
                load_block(reader, block_size, disk, word)?
            };
            disk += u64::from(word & BLOCK_SIZE_MASK);
            data
        } else {
            if !layout.has_fragment() {
                return Err(corrupt("file extends past its block list".into()));
            }
            let entry = fragments.get(layout.frag_index)?;
            let frag = load_block(reader, block_size, entry.start, entry.size_word)?;
            let from = layout.frag_offset as usize;
            frag.get(from..from + expected as usize)
                .ok_or_else(|| {
                    corrupt(format!(
                        "tail of {expected} bytes at offset {from} exceeds fragment {} ({} bytes)",
                        layout.frag_index,
                        frag.len()
                    ))
                })?
                .to_vec()
        };
        if data.len() as u64 != expected {
            return Err(corrupt(format!(
                "block {b} inflated to {} bytes, expected {expected}",
                data.len()
            )));
        }
        let lo = start.max(block_pos) - block_pos;
        let hi = end.min(block_pos + expected) - block_pos;
        out.extend_from_slice(&data[lo as usize..hi as usize]);
    }
    Ok(out)
}
