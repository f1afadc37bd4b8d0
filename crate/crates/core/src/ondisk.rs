//! SquashFS 4.0 on-disk structures.
//!
//! Every integer is little-endian and assembled from individual bytes, so
//! decoding never depends on the alignment of the input slice.

use crate::codec::CompressionId;
use crate::error::{Error, Result};

pub const SUPERBLOCK_SIZE: usize = 96;
pub const MAGIC: u32 = 0x7371_7368;
pub const METADATA_SIZE: usize = 8192;
pub const MIN_BLOCK_SIZE: u32 = 4096;
pub const MAX_BLOCK_SIZE: u32 = 1 << 20;
/// Sentinel for optional table offsets (xattr, export).
pub const ABSENT: u64 = u64::MAX;
/// Fragment index of a file that has no tail fragment.
pub const NO_FRAGMENT: u32 = u32::MAX;
/// Data block / fragment size words: bit 24 marks raw storage.
pub const BLOCK_UNCOMPRESSED: u32 = 1 << 24;
pub const BLOCK_SIZE_MASK: u32 = BLOCK_UNCOMPRESSED - 1;
pub const DIR_HEADER_SIZE: usize = 12;
pub const DIR_ENTRY_SIZE: usize = 8;
pub const MAX_DIR_HEADER_ENTRIES: u32 = 256;

/// Bounds-checked little-endian cursor over a byte slice.
#[derive(Debug, Clone)]
pub(crate) struct LeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> LeReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], pos: usize) -> Self {
        LeReader { bytes, pos }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let end = self.pos.checked_add(N)?;
        let chunk = self.bytes.get(self.pos..end)?;
        self.pos = end;
        let mut out = [0u8; N];
        out.copy_from_slice(chunk);
        Some(out)
    }

    pub(crate) fn u16(&mut self) -> Option<u16> {
        self.take::<2>().map(u16::from_le_bytes)
    }

    pub(crate) fn i16(&mut self) -> Option<i16> {
        self.take::<2>().map(i16::from_le_bytes)
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    pub(crate) fn u64(&mut self) -> Option<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let chunk = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(chunk)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len().saturating_sub(self.pos)
    }
}

/// Superblock flag bits, in bit order.
pub const FLAG_NAMES: [(u16, &str); 12] = [
    (0x0001, "Uncompressed inodes"),
    (0x0002, "Uncompressed data"),
    (0x0004, "Check"),
    (0x0008, "Uncompressed fragments"),
    (0x0010, "No fragments"),
    (0x0020, "Always use fragments"),
    (0x0040, "Duplicates"),
    (0x0080, "Exportable"),
    (0x0100, "Uncompressed xattrs"),
    (0x0200, "No xattrs"),
    (0x0400, "Compressor options"),
    (0x0800, "Uncompressed ids"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superblock {
    pub magic: u32,
    pub inode_count: u32,
    pub mkfs_time: u32,
    pub block_size: u32,
    pub fragment_count: u32,
    pub compression: CompressionId,
    pub block_log: u16,
    pub flags: u16,
    pub id_count: u16,
    pub version_major: u16,
    pub version_minor: u16,
    pub root_inode_ref: MetaRef,
    pub bytes_used: u64,
    pub id_table_start: u64,
    pub xattr_id_table_start: u64,
    pub inode_table_start: u64,
    pub directory_table_start: u64,
    pub fragment_table_start: u64,
    pub export_table_start: u64,
}

impl Superblock {
    pub fn flag_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        FLAG_NAMES
            .iter()
            .filter(move |(bit, _)| self.flags & bit != 0)
            .map(|(_, name)| *name)
    }

    pub fn has_xattrs(&self) -> bool {
        self.xattr_id_table_start != ABSENT
    }

    pub fn is_exportable(&self) -> bool {
        self.export_table_start != ABSENT
    }
}

/// Decodes and validates the 96-byte superblock.
pub fn parse_superblock(bytes: &[u8]) -> Result<Superblock> {
    let mut r = LeReader::new(bytes, 0);
    let magic = r.u32().ok_or(Error::CorruptSuperblock("truncated"))?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < SUPERBLOCK_SIZE {
        return Err(Error::CorruptSuperblock("truncated"));
    }
    // Length checked above; the unwraps below cannot fail.
    let inode_count = r.u32().unwrap();
    let mkfs_time = r.u32().unwrap();
    let block_size = r.u32().unwrap();
    let fragment_count = r.u32().unwrap();
    let compression = CompressionId::from_raw(r.u16().unwrap());
    let block_log = r.u16().unwrap();
    let flags = r.u16().unwrap();
    let id_count = r.u16().unwrap();
    let version_major = r.u16().unwrap();
    let version_minor = r.u16().unwrap();
    let root_raw = r.u64().unwrap();
    let sb = Superblock {
        magic,
        inode_count,
        mkfs_time,
        block_size,
        fragment_count,
        compression,
        block_log,
        flags,
        id_count,
        version_major,
        version_minor,
        root_inode_ref: MetaRef::from_raw(root_raw)?,
        bytes_used: r.u64().unwrap(),
        id_table_start: r.u64().unwrap(),
        xattr_id_table_start: r.u64().unwrap(),
        inode_table_start: r.u64().unwrap(),
        directory_table_start: r.u64().unwrap(),
        fragment_table_start: r.u64().unwrap(),
        export_table_start: r.u64().unwrap(),
    };

    if sb.version_major != 4 || sb.version_minor != 0 {
        return Err(Error::UnsupportedVersion {
            major: sb.version_major,
            minor: sb.version_minor,
        });
    }
    if !(MIN_BLOCK_SIZE..=MAX_BLOCK_SIZE).contains(&sb.block_size)
        || sb.block_log >= 32
        || 1u32 << sb.block_log != sb.block_size
    {
        return Err(Error::CorruptSuperblock("block size does not match block log"));
    }
    if sb.inode_table_start >= sb.directory_table_start {
        return Err(Error::CorruptSuperblock("inode table does not precede directory table"));
    }
    if sb.inode_count == 0 {
        return Err(Error::CorruptSuperblock("no inodes"));
    }
    Ok(sb)
}

/// Location of a record inside a metadata table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MetaRef {
    /// Byte offset of the metadata block, relative to the owning table.
    pub block_start: u64,
    /// Offset inside the decompressed block.
    pub intra_offset: u16,
}

impl MetaRef {
    pub fn new(block_start: u64, intra_offset: u16) -> Result<Self> {
        if usize::from(intra_offset) >= METADATA_SIZE || block_start >> 48 != 0 {
            return Err(Error::InvalidRef((block_start << 16) | u64::from(intra_offset)));
        }
        Ok(MetaRef {
            block_start,
            intra_offset,
        })
    }

    pub fn from_raw(raw: u64) -> Result<Self> {
        MetaRef::new(raw >> 16, (raw & 0xffff) as u16)
    }

    pub fn raw(self) -> u64 {
        (self.block_start << 16) | u64::from(self.intra_offset)
    }
}

/// See [`MetaRef::from_raw`].
pub fn decode_meta_ref(raw: u64) -> Result<MetaRef> {
    MetaRef::from_raw(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InodeType {
    Directory,
    File,
    Symlink,
    BlockDevice,
    CharDevice,
    Fifo,
    Socket,
    ExtDirectory,
    ExtFile,
    ExtSymlink,
    ExtBlockDevice,
    ExtCharDevice,
    ExtFifo,
    ExtSocket,
}

impl InodeType {
    pub fn from_raw(raw: u16) -> Result<Self> {
        use InodeType::*;
        Ok(match raw {
            1 => Directory,
            2 => File,
            3 => Symlink,
            4 => BlockDevice,
            5 => CharDevice,
            6 => Fifo,
            7 => Socket,
            8 => ExtDirectory,
            9 => ExtFile,
            10 => ExtSymlink,
            11 => ExtBlockDevice,
            12 => ExtCharDevice,
            13 => ExtFifo,
            14 => ExtSocket,
            other => return Err(Error::UnknownInodeType(other)),
        })
    }

    pub fn raw(self) -> u16 {
        use InodeType::*;
        match self {
            Directory => 1,
            File => 2,
            Symlink => 3,
            BlockDevice => 4,
            CharDevice => 5,
            Fifo => 6,
            Socket => 7,
            ExtDirectory => 8,
            ExtFile => 9,
            ExtSymlink => 10,
            ExtBlockDevice => 11,
            ExtCharDevice => 12,
            ExtFifo => 13,
            ExtSocket => 14,
        }
    }

    /// The basic counterpart, as used in directory entries.
    pub fn basic(self) -> Self {
        use InodeType::*;
        match self {
            ExtDirectory => Directory,
            ExtFile => File,
            ExtSymlink => Symlink,
            ExtBlockDevice => BlockDevice,
            ExtCharDevice => CharDevice,
            ExtFifo => Fifo,
            ExtSocket => Socket,
            basic => basic,
        }
    }

    pub fn is_dir(self) -> bool {
        self.basic() == InodeType::Directory
    }

    pub fn is_file(self) -> bool {
        self.basic() == InodeType::File
    }

    pub fn is_symlink(self) -> bool {
        self.basic() == InodeType::Symlink
    }

    pub fn label(self) -> &'static str {
        use InodeType::*;
        match self {
            Directory => "Basic Directory",
            File => "Basic File",
            Symlink => "Basic Symlink",
            BlockDevice => "Basic Block Device",
            CharDevice => "Basic Character Device",
            Fifo => "Basic FIFO",
            Socket => "Basic Socket",
            ExtDirectory => "Extended Directory",
            ExtFile => "Extended File",
            ExtSymlink => "Extended Symlink",
            ExtBlockDevice => "Extended Block Device",
            ExtCharDevice => "Extended Character Device",
            ExtFifo => "Extended FIFO",
            ExtSocket => "Extended Socket",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InodeHeader {
    pub inode_type: InodeType,
    pub permissions: u16,
    pub uid_idx: u16,
    pub gid_idx: u16,
    pub mtime: u32,
    pub inode_number: u32,
}

pub const INODE_HEADER_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirIndex {
    pub index: u32,
    pub start_block: u32,
    pub name: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InodeKind {
    BasicDirectory {
        start_block: u32,
        nlink: u32,
        file_size: u16,
        block_offset: u16,
        parent_inode: u32,
    },
    ExtendedDirectory {
        nlink: u32,
        file_size: u32,
        start_block: u32,
        parent_inode: u32,
        block_offset: u16,
        xattr_idx: u32,
        index: Vec<DirIndex>,
    },
    BasicFile {
        start_block: u32,
        frag_index: u32,
        frag_offset: u32,
        file_size: u32,
        block_sizes: Vec<u32>,
    },
    ExtendedFile {
        start_block: u64,
        file_size: u64,
        sparse: u64,
        nlink: u32,
        frag_index: u32,
        frag_offset: u32,
        xattr_idx: u32,
        block_sizes: Vec<u32>,
    },
    BasicSymlink {
        nlink: u32,
        target: Vec<u8>,
    },
    /// Devices, fifos, sockets and extended symlinks: listable, not readable.
    /// `body` holds the type-specific bytes following the common header.
    Other {
        body: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inode {
    pub header: InodeHeader,
    pub kind: InodeKind,
}

/// Uniform view of a regular file inode's data layout.
#[derive(Debug, Clone, Copy)]
pub struct FileLayout<'a> {
    pub blocks_start: u64,
    pub file_size: u64,
    pub frag_index: u32,
    pub frag_offset: u32,
    pub block_sizes: &'a [u32],
}

impl FileLayout<'_> {
    pub fn has_fragment(&self) -> bool {
        self.frag_index != NO_FRAGMENT
    }
}

/// Directory listing location of a directory inode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirLayout {
    pub start_block: u32,
    pub block_offset: u16,
    pub file_size: u32,
    pub parent_inode: u32,
    pub nlink: u32,
}

impl Inode {
    pub fn inode_type(&self) -> InodeType {
        self.header.inode_type
    }

    pub fn is_dir(&self) -> bool {
        matches!(
            self.kind,
            InodeKind::BasicDirectory { .. } | InodeKind::ExtendedDirectory { .. }
        )
    }

    pub fn is_file(&self) -> bool {
        matches!(self.kind, InodeKind::BasicFile { .. } | InodeKind::ExtendedFile { .. })
    }

    pub fn is_symlink(&self) -> bool {
        matches!(self.kind, InodeKind::BasicSymlink { .. })
    }

    pub fn file_layout(&self) -> Option<FileLayout<'_>> {
        match &self.kind {
            InodeKind::BasicFile {
                start_block,
                frag_index,
                frag_offset,
                file_size,
                block_sizes,
            } => Some(FileLayout {
                blocks_start: u64::from(*start_block),
                file_size: u64::from(*file_size),
                frag_index: *frag_index,
                frag_offset: *frag_offset,
                block_sizes,
            }),
            InodeKind::ExtendedFile {
                start_block,
                file_size,
                frag_index,
                frag_offset,
                block_sizes,
                ..
            } => Some(FileLayout {
                blocks_start: *start_block,
                file_size: *file_size,
                frag_index: *frag_index,
                frag_offset: *frag_offset,
                block_sizes,
            }),
            _ => None,
        }
    }

    pub fn dir_layout(&self) -> Option<DirLayout> {
        match self.kind {
            InodeKind::BasicDirectory {
                start_block,
                nlink,
                file_size,
                block_offset,
                parent_inode,
            } => Some(DirLayout {
                start_block,
                block_offset,
                file_size: u32::from(file_size),
                parent_inode,
                nlink,
            }),
            InodeKind::ExtendedDirectory {
                nlink,
                file_size,
                start_block,
                parent_inode,
                block_offset,
                ..
            } => Some(DirLayout {
                start_block,
                block_offset,
                file_size,
                parent_inode,
                nlink,
            }),
            _ => None,
        }
    }

    pub fn symlink_target(&self) -> Option<&[u8]> {
        match &self.kind {
            InodeKind::BasicSymlink { target, .. } => Some(target),
            _ => None,
        }
    }
}

fn block_count(file_size: u64, block_size: u32, frag_index: u32) -> u64 {
    let bs = u64::from(block_size);
    if frag_index == NO_FRAGMENT {
        file_size.div_ceil(bs)
    } else {
        file_size / bs
    }
}

fn read_block_list(r: &mut LeReader<'_>, count: u64, start: usize) -> Result<Vec<u32>> {
    // Check against what is actually there before allocating anything.
    if count.saturating_mul(4) > r.remaining() as u64 {
        return Err(Error::BadBlockList { offset: start });
    }
    Ok((0..count).map(|_| r.u32().unwrap()).collect())
}

/// Decodes the inode at `offset` of a decompressed inode table.
///
/// Returns the inode and the number of bytes it occupies, so callers can
/// step to the next one. `block_size` is needed to size file block lists.
pub fn parse_inode(table: &[u8], offset: usize, block_size: u32) -> Result<(Inode, usize)> {
    let truncated = || Error::TruncatedInode { offset };
    let mut r = LeReader::new(table, offset);
    let raw_type = r.u16().ok_or_else(truncated)?;
    let inode_type = InodeType::from_raw(raw_type)?;
    let permissions = r.u16().ok_or_else(truncated)?;
    let uid_idx = r.u16().ok_or_else(truncated)?;
    let gid_idx = r.u16().ok_or_else(truncated)?;
    let mtime = r.u32().ok_or_else(truncated)?;
    let inode_number = r.u32().ok_or_else(truncated)?;
    let header = InodeHeader {
        inode_type,
        permissions,
        uid_idx,
        gid_idx,
        mtime,
        inode_number,
    };

    let kind = match inode_type {
        InodeType::Directory => InodeKind::BasicDirectory {
            start_block: r.u32().ok_or_else(truncated)?,
            nlink: r.u32().ok_or_else(truncated)?,
            file_size: r.u16().ok_or_else(truncated)?,
            block_offset: r.u16().ok_or_else(truncated)?,
            parent_inode: r.u32().ok_or_else(truncated)?,
        },
        InodeType::ExtDirectory => {
            let nlink = r.u32().ok_or_else(truncated)?;
            let file_size = r.u32().ok_or_else(truncated)?;
            let start_block = r.u32().ok_or_else(truncated)?;
            let parent_inode = r.u32().ok_or_else(truncated)?;
            let index_count = r.u16().ok_or_else(truncated)?;
            let block_offset = r.u16().ok_or_else(truncated)?;
            let xattr_idx = r.u32().ok_or_else(truncated)?;
            let mut index = Vec::new();
            for _ in 0..index_count {
                let idx = r.u32().ok_or_else(truncated)?;
                let start = r.u32().ok_or_else(truncated)?;
                let name_len = r.u32().ok_or_else(truncated)?;
                let name_len = usize::try_from(name_len)
                    .ok()
                    .and_then(|n| n.checked_add(1))
                    .ok_or_else(truncated)?;
                let name = r.bytes(name_len).ok_or_else(truncated)?;
                index.push(DirIndex {
                    index: idx,
                    start_block: start,
                    name: name.to_vec(),
                });
            }
            InodeKind::ExtendedDirectory {
                nlink,
                file_size,
                start_block,
                parent_inode,
                block_offset,
                xattr_idx,
                index,
            }
        }
        InodeType::File => {
            let start_block = r.u32().ok_or_else(truncated)?;
            let frag_index = r.u32().ok_or_else(truncated)?;
            let frag_offset = r.u32().ok_or_else(truncated)?;
            let file_size = r.u32().ok_or_else(truncated)?;
            let count = block_count(u64::from(file_size), block_size, frag_index);
            InodeKind::BasicFile {
                start_block,
                frag_index,
                frag_offset,
                file_size,
                block_sizes: read_block_list(&mut r, count, offset)?,
            }
        }
        InodeType::ExtFile => {
            let start_block = r.u64().ok_or_else(truncated)?;
            let file_size = r.u64().ok_or_else(truncated)?;
            let sparse = r.u64().ok_or_else(truncated)?;
            let nlink = r.u32().ok_or_else(truncated)?;
            let frag_index = r.u32().ok_or_else(truncated)?;
            let frag_offset = r.u32().ok_or_else(truncated)?;
            let xattr_idx = r.u32().ok_or_else(truncated)?;
            let count = block_count(file_size, block_size, frag_index);
            InodeKind::ExtendedFile {
                start_block,
                file_size,
                sparse,
                nlink,
                frag_index,
                frag_offset,
                xattr_idx,
                block_sizes: read_block_list(&mut r, count, offset)?,
            }
        }
        InodeType::Symlink | InodeType::ExtSymlink => {
            let body_start = r.pos();
            let nlink = r.u32().ok_or_else(truncated)?;
            let target_size = r.u32().ok_or_else(truncated)?;
            let target = r
                .bytes(usize::try_from(target_size).map_err(|_| truncated())?)
                .ok_or_else(truncated)?;
            if inode_type == InodeType::Symlink {
                InodeKind::BasicSymlink {
                    nlink,
                    target: target.to_vec(),
                }
            } else {
                r.u32().ok_or_else(truncated)?;
                InodeKind::Other {
                    body: table[body_start..r.pos()].to_vec(),
                }
            }
        }
        other => {
            let body_len = match other {
                InodeType::BlockDevice | InodeType::CharDevice => 8,
                InodeType::ExtBlockDevice | InodeType::ExtCharDevice => 12,
                InodeType::Fifo | InodeType::Socket => 4,
                _ => 8, // extended fifo / socket: nlink + xattr
            };
            InodeKind::Other {
                body: r.bytes(body_len).ok_or_else(truncated)?.to_vec(),
            }
        }
    };
    Ok((Inode { header, kind }, r.pos() - offset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirHeader {
    /// True entry count (the stored value plus one).
    pub count: u32,
    pub start: u32,
    pub inode_number: u32,
}

pub fn parse_dir_header(bytes: &[u8], offset: usize) -> Result<(DirHeader, usize)> {
    let mut r = LeReader::new(bytes, offset);
    let err = || Error::TruncatedHeader { offset };
    let stored = r.u32().ok_or_else(err)?;
    let header = DirHeader {
        count: stored.wrapping_add(1),
        start: r.u32().ok_or_else(err)?,
        inode_number: r.u32().ok_or_else(err)?,
    };
    Ok((header, DIR_HEADER_SIZE))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirEntry {
    pub offset: u16,
    pub inode_delta: i16,
    pub entry_type: InodeType,
    pub name: Vec<u8>,
}

pub fn parse_dir_entry(bytes: &[u8], offset: usize) -> Result<(DirEntry, usize)> {
    let mut r = LeReader::new(bytes, offset);
    let err = || Error::TruncatedEntry { offset };
    let inode_offset = r.u16().ok_or_else(err)?;
    let inode_delta = r.i16().ok_or_else(err)?;
    let entry_type = InodeType::from_raw(r.u16().ok_or_else(err)?)?;
    let name_len = usize::from(r.u16().ok_or_else(err)?) + 1;
    let name = r.bytes(name_len).ok_or_else(err)?;
    if name.iter().any(|&b| b == b'/' || b == 0) || name == b"." || name == b".." {
        return Err(Error::InvalidName(String::from_utf8_lossy(name).into_owned()));
    }
    let entry = DirEntry {
        offset: inode_offset,
        inode_delta,
        entry_type,
        name: name.to_vec(),
    };
    Ok((entry, DIR_ENTRY_SIZE + name_len))
}

pub const FRAGMENT_ENTRY_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentEntry {
    pub start: u64,
    pub size_word: u32,
}

impl FragmentEntry {
    pub fn on_disk_size(&self) -> u32 {
        self.size_word & BLOCK_SIZE_MASK
    }

    pub fn is_compressed(&self) -> bool {
        self.size_word & BLOCK_UNCOMPRESSED == 0
    }
}

pub fn parse_fragment_entry(bytes: &[u8], offset: usize) -> Option<FragmentEntry> {
    let mut r = LeReader::new(bytes, offset);
    let start = r.u64()?;
    let size_word = r.u32()?;
    r.u32()?;
    Some(FragmentEntry { start, size_word })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    // Field-by-field serializers, test-only, used to check that parsing
    // consumes exactly what was written.

    pub(crate) fn put_header(out: &mut Vec<u8>, h: &InodeHeader) {
        out.extend(h.inode_type.raw().to_le_bytes());
        out.extend(h.permissions.to_le_bytes());
        out.extend(h.uid_idx.to_le_bytes());
        out.extend(h.gid_idx.to_le_bytes());
        out.extend(h.mtime.to_le_bytes());
        out.extend(h.inode_number.to_le_bytes());
    }

    pub(crate) fn serialize_inode(inode: &Inode) -> Vec<u8> {
        let mut out = Vec::new();
        put_header(&mut out, &inode.header);
        match &inode.kind {
            InodeKind::BasicDirectory {
                start_block,
                nlink,
                file_size,
                block_offset,
                parent_inode,
            } => {
                out.extend(start_block.to_le_bytes());
                out.extend(nlink.to_le_bytes());
                out.extend(file_size.to_le_bytes());
                out.extend(block_offset.to_le_bytes());
                out.extend(parent_inode.to_le_bytes());
            }
            InodeKind::ExtendedDirectory {
                nlink,
                file_size,
                start_block,
                parent_inode,
                block_offset,
                xattr_idx,
                index,
            } => {
                out.extend(nlink.to_le_bytes());
                out.extend(file_size.to_le_bytes());
                out.extend(start_block.to_le_bytes());
                out.extend(parent_inode.to_le_bytes());
                out.extend((index.len() as u16).to_le_bytes());
                out.extend(block_offset.to_le_bytes());
                out.extend(xattr_idx.to_le_bytes());
                for i in index {
                    out.extend(i.index.to_le_bytes());
                    out.extend(i.start_block.to_le_bytes());
                    out.extend((i.name.len() as u32 - 1).to_le_bytes());
                    out.extend(&i.name);
                }
            }
            InodeKind::BasicFile {
                start_block,
                frag_index,
                frag_offset,
                file_size,
                block_sizes,
            } => {
                out.extend(start_block.to_le_bytes());
                out.extend(frag_index.to_le_bytes());
                out.extend(frag_offset.to_le_bytes());
                out.extend(file_size.to_le_bytes());
                block_sizes.iter().for_each(|b| out.extend(b.to_le_bytes()));
            }
            InodeKind::ExtendedFile {
                start_block,
                file_size,
                sparse,
                nlink,
                frag_index,
                frag_offset,
                xattr_idx,
                block_sizes,
            } => {
                out.extend(start_block.to_le_bytes());
                out.extend(file_size.to_le_bytes());
                out.extend(sparse.to_le_bytes());
                out.extend(nlink.to_le_bytes());
                out.extend(frag_index.to_le_bytes());
                out.extend(frag_offset.to_le_bytes());
                out.extend(xattr_idx.to_le_bytes());
                block_sizes.iter().for_each(|b| out.extend(b.to_le_bytes()));
            }
            InodeKind::BasicSymlink { nlink, target } => {
                out.extend(nlink.to_le_bytes());
                out.extend((target.len() as u32).to_le_bytes());
                out.extend(target);
            }
            InodeKind::Other { body } => out.extend(body),
        }
        out
    }

    pub(crate) fn serialize_dir_header(h: &DirHeader) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((h.count - 1).to_le_bytes());
        out.extend(h.start.to_le_bytes());
        out.extend(h.inode_number.to_le_bytes());
        out
    }

    pub(crate) fn serialize_dir_entry(e: &DirEntry) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(e.offset.to_le_bytes());
        out.extend(e.inode_delta.to_le_bytes());
        out.extend(e.entry_type.raw().to_le_bytes());
        out.extend((e.name.len() as u16 - 1).to_le_bytes());
        out.extend(&e.name);
        out
    }

    /// The superblock mksquashfs wrote for the three-entry example tree
    /// (empty dir, 12-byte text file, symlink): values as dumped by the
    /// original inspection tool.
    pub(crate) fn example_superblock_bytes() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend(MAGIC.to_le_bytes());
        b.extend(4u32.to_le_bytes()); // inodes
        b.extend(1_596_548_774u32.to_le_bytes()); // 2020-08-04 13:46:14 UTC
        b.extend(131_072u32.to_le_bytes());
        b.extend(1u32.to_le_bytes()); // fragments
        b.extend(1u16.to_le_bytes()); // zlib
        b.extend(17u16.to_le_bytes());
        b.extend(0xc0u16.to_le_bytes());
        b.extend(1u16.to_le_bytes()); // ids
        b.extend(4u16.to_le_bytes());
        b.extend(0u16.to_le_bytes());
        b.extend(0x60u64.to_le_bytes());
        b.extend(312u64.to_le_bytes());
        b.extend(0x130u64.to_le_bytes());
        b.extend(ABSENT.to_le_bytes());
        b.extend(0x6cu64.to_le_bytes());
        b.extend(0xbcu64.to_le_bytes());
        b.extend(0x105u64.to_le_bytes());
        b.extend(0x122u64.to_le_bytes());
        assert_eq!(b.len(), SUPERBLOCK_SIZE);
        b
    }

    #[test]
    fn example_superblock_fields() {
        let sb = parse_superblock(&example_superblock_bytes()).unwrap();
        assert_eq!(sb.inode_count, 4);
        assert_eq!(sb.fragment_count, 1);
        assert_eq!(sb.block_log, 17);
        assert_eq!(sb.block_size, 131_072);
        assert_eq!(sb.compression, CompressionId::Zlib);
        assert_eq!(sb.root_inode_ref, MetaRef { block_start: 0, intra_offset: 0x60 });
        assert_eq!(sb.bytes_used, 312);
        assert_eq!(sb.inode_table_start, 0x6c);
        assert_eq!(sb.directory_table_start, 0xbc);
        assert_eq!(sb.fragment_table_start, 0x105);
        assert_eq!(sb.export_table_start, 0x122);
        assert_eq!(sb.id_table_start, 0x130);
        assert!(!sb.has_xattrs());
        assert_eq!(sb.flags, 0xc0);
        assert_eq!(sb.flag_names().collect::<Vec<_>>(), ["Duplicates", "Exportable"]);
    }

    #[test]
    fn superblock_rejections() {
        let good = example_superblock_bytes();

        let mut b = good.clone();
        b[..4].fill(0);
        assert!(matches!(parse_superblock(&b), Err(Error::BadMagic(0))));

        let mut b = good.clone();
        b[28..30].copy_from_slice(&3u16.to_le_bytes());
        assert!(matches!(
            parse_superblock(&b),
            Err(Error::UnsupportedVersion { major: 3, minor: 0 })
        ));

        let mut b = good.clone();
        b[22..24].copy_from_slice(&16u16.to_le_bytes());
        assert!(matches!(parse_superblock(&b), Err(Error::CorruptSuperblock(_))));

        let mut b = good.clone();
        b[12..16].copy_from_slice(&2048u32.to_le_bytes());
        b[22..24].copy_from_slice(&11u16.to_le_bytes());
        assert!(matches!(parse_superblock(&b), Err(Error::CorruptSuperblock(_))));

        let mut b = good.clone();
        b[64..72].copy_from_slice(&0x200u64.to_le_bytes());
        assert!(matches!(parse_superblock(&b), Err(Error::CorruptSuperblock(_))));

        assert!(matches!(parse_superblock(&good[..50]), Err(Error::CorruptSuperblock(_))));
        assert!(matches!(parse_superblock(&good[..2]), Err(Error::CorruptSuperblock(_))));
    }

    #[test]
    fn meta_ref_decoding() {
        assert_eq!(decode_meta_ref(0x60).unwrap(), MetaRef { block_start: 0, intra_offset: 0x60 });
        assert_eq!(decode_meta_ref(0).unwrap(), MetaRef::default());
        assert!(matches!(decode_meta_ref(0x1_0000_2000), Err(Error::InvalidRef(_))));
        let r = decode_meta_ref(0x0123_4567_1fff).unwrap();
        assert_eq!(r.block_start, 0x0123_4567);
        assert_eq!(r.intra_offset, 0x1fff);
        assert_eq!(r.raw(), 0x0123_4567_1fff);
    }

    fn hdr(t: InodeType, n: u32) -> InodeHeader {
        InodeHeader {
            inode_type: t,
            permissions: 0o775,
            uid_idx: 0,
            gid_idx: 0,
            mtime: 1_596_548_501,
            inode_number: n,
        }
    }

    #[test]
    fn example_inodes() {
        // The four inodes of the example tree, packed the way mksquashfs packs them.
        let dir = Inode {
            header: hdr(InodeType::Directory, 1),
            kind: InodeKind::BasicDirectory {
                start_block: 0,
                nlink: 2,
                file_size: 3,
                block_offset: 0,
                parent_inode: 4,
            },
        };
        let file = Inode {
            header: hdr(InodeType::File, 2),
            kind: InodeKind::BasicFile {
                start_block: 0,
                frag_index: 0,
                frag_offset: 0,
                file_size: 12,
                block_sizes: vec![],
            },
        };
        let link = Inode {
            header: hdr(InodeType::Symlink, 3),
            kind: InodeKind::BasicSymlink {
                nlink: 1,
                target: b"file.txt".to_vec(),
            },
        };
        let root = Inode {
            header: hdr(InodeType::Directory, 4),
            kind: InodeKind::BasicDirectory {
                start_block: 0,
                nlink: 3,
                file_size: 63,
                block_offset: 0,
                parent_inode: 5,
            },
        };
        let mut table = Vec::new();
        for i in [&dir, &file, &link, &root] {
            table.extend(serialize_inode(i));
        }
        let mut pos = 0;
        let mut parsed = Vec::new();
        while pos < table.len() {
            let (inode, used) = parse_inode(&table, pos, 131_072).unwrap();
            pos += used;
            parsed.push(inode);
        }
        assert_eq!(parsed, [dir, file, link.clone(), root]);
        // the root sits at offset 0x60, matching the superblock reference
        assert_eq!(parse_inode(&table, 0x60, 131_072).unwrap().0.header.inode_number, 4);
        assert_eq!(link.symlink_target().unwrap(), b"file.txt");
    }

    #[test]
    fn inode_errors() {
        let mut t = Vec::new();
        put_header(&mut t, &hdr(InodeType::Directory, 1));
        assert!(matches!(parse_inode(&t, 0, 4096), Err(Error::TruncatedInode { .. })));
        assert!(matches!(parse_inode(&t[..7], 0, 4096), Err(Error::TruncatedInode { .. })));

        let mut t = Vec::new();
        put_header(&mut t, &hdr(InodeType::File, 1));
        t[0..2].copy_from_slice(&15u16.to_le_bytes());
        assert!(matches!(parse_inode(&t, 0, 4096), Err(Error::UnknownInodeType(15))));

        // a 3-block file whose block list is cut short
        let mut t = Vec::new();
        put_header(&mut t, &hdr(InodeType::File, 1));
        for v in [96u32, NO_FRAGMENT, 0, 3 * 4096] {
            t.extend(v.to_le_bytes());
        }
        t.extend(100u32.to_le_bytes());
        t.extend(100u32.to_le_bytes());
        assert!(matches!(parse_inode(&t, 0, 4096), Err(Error::BadBlockList { .. })));
        t.extend(100u32.to_le_bytes());
        let (inode, used) = parse_inode(&t, 0, 4096).unwrap();
        assert_eq!(used, t.len());
        assert_eq!(inode.file_layout().unwrap().block_sizes.len(), 3);
    }

    #[test]
    fn block_list_length_rule() {
        // without fragment: ceil; with fragment: floor
        assert_eq!(block_count(0, 4096, NO_FRAGMENT), 0);
        assert_eq!(block_count(1, 4096, NO_FRAGMENT), 1);
        assert_eq!(block_count(8192, 4096, NO_FRAGMENT), 2);
        assert_eq!(block_count(8193, 4096, NO_FRAGMENT), 3);
        assert_eq!(block_count(100, 4096, 0), 0);
        assert_eq!(block_count(8193, 4096, 7), 2);
    }

    #[test]
    fn dir_header_and_entries() {
        let h = DirHeader { count: 3, start: 0, inode_number: 1 };
        let bytes = serialize_dir_header(&h);
        assert_eq!(&bytes[..4], &[2, 0, 0, 0]);
        assert_eq!(parse_dir_header(&bytes, 0).unwrap(), (h, 12));
        assert_eq!(parse_dir_header(&[0; 12], 0).unwrap().0.count, 1);
        assert!(matches!(parse_dir_header(&[0; 11], 0), Err(Error::TruncatedHeader { .. })));

        let names: [(&[u8], InodeType, i16); 3] = [
            (b"dir_example", InodeType::Directory, 0),
            (b"file.txt", InodeType::File, 1),
            (b"slink", InodeType::Symlink, 2),
        ];
        let mut listing = bytes.clone();
        for (i, (name, t, d)) in names.iter().enumerate() {
            listing.extend(serialize_dir_entry(&DirEntry {
                offset: 32 * i as u16,
                inode_delta: *d,
                entry_type: *t,
                name: name.to_vec(),
            }));
        }
        assert_eq!(listing.len() + 3, 63);
        let mut pos = 12;
        let mut seen = Vec::new();
        while pos < listing.len() {
            let (e, used) = parse_dir_entry(&listing, pos).unwrap();
            assert_eq!(used, 8 + e.name.len());
            pos += used;
            seen.push((e.name, e.entry_type));
        }
        assert_eq!(seen[0], (b"dir_example".to_vec(), InodeType::Directory));
        assert_eq!(seen[2], (b"slink".to_vec(), InodeType::Symlink));

        let one = serialize_dir_entry(&DirEntry {
            offset: 0,
            inode_delta: 0,
            entry_type: InodeType::File,
            name: b"a".to_vec(),
        });
        assert_eq!(&one[6..8], &[0, 0]);
        assert!(matches!(parse_dir_entry(&one[..8], 0), Err(Error::TruncatedEntry { .. })));
        assert!(matches!(parse_dir_entry(&one[..5], 0), Err(Error::TruncatedEntry { .. })));
        let mut slash = one.clone();
        slash[8] = b'/';
        assert!(matches!(parse_dir_entry(&slash, 0), Err(Error::InvalidName(_))));
    }

    #[test]
    fn fragment_entry_bits() {
        let mut b = Vec::new();
        b.extend(0x60u64.to_le_bytes());
        b.extend((BLOCK_UNCOMPRESSED | 12).to_le_bytes());
        b.extend(0u32.to_le_bytes());
        let e = parse_fragment_entry(&b, 0).unwrap();
        assert_eq!(e.start, 0x60);
        assert_eq!(e.on_disk_size(), 12);
        assert!(!e.is_compressed());
        assert!(parse_fragment_entry(&b[..15], 0).is_none());
    }

    fn arb_name() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(any::<u8>().prop_filter("no / or NUL", |b| *b != b'/' && *b != 0), 1..40)
            .prop_filter("not dot names", |n| n != b"." && n != b"..")
    }

    fn arb_type() -> impl Strategy<Value = InodeType> {
        (1u16..=14).prop_map(|t| InodeType::from_raw(t).unwrap())
    }

    prop_compose! {
        fn arb_header()(t in arb_type(), p in any::<u16>(), u in any::<u16>(), g in any::<u16>(),
                        m in any::<u32>(), n in any::<u32>()) -> InodeHeader {
            InodeHeader { inode_type: t, permissions: p, uid_idx: u, gid_idx: g, mtime: m, inode_number: n }
        }
    }

    fn arb_inode(block_size: u32) -> impl Strategy<Value = Inode> {
        let bs = u64::from(block_size);
        prop_oneof![
            (arb_header(), any::<u32>(), any::<u32>(), any::<u16>(), 0u16..8192, any::<u32>()).prop_map(
                |(mut h, sb, nl, fs, bo, pi)| {
                    h.inode_type = InodeType::Directory;
                    Inode { header: h, kind: InodeKind::BasicDirectory {
                        start_block: sb, nlink: nl, file_size: fs, block_offset: bo, parent_inode: pi } }
                }),
            (arb_header(), any::<u32>(), proptest::option::of(any::<u32>()), 0u32..(bs as u32 * 20),
             any::<u32>(), any::<u32>()).prop_map(move |(mut h, start, frag, size, off, seed)| {
                h.inode_type = InodeType::File;
                let frag_index = frag.unwrap_or(NO_FRAGMENT);
                let n = block_count(u64::from(size), block_size, frag_index);
                let block_sizes = (0..n as u32).map(|i| seed.wrapping_mul(i + 1) & 0x01ff_ffff).collect();
                Inode { header: h, kind: InodeKind::BasicFile {
                    start_block: start, frag_index, frag_offset: off, file_size: size, block_sizes } }
            }),
            (arb_header(), any::<u64>(), 0u64..(bs * 20), any::<u64>(), any::<u32>(),
             proptest::option::of(any::<u32>()), any::<u32>(), any::<u32>()).prop_map(
                move |(mut h, start, size, sparse, nlink, frag, off, xattr)| {
                    h.inode_type = InodeType::ExtFile;
                    let frag_index = frag.unwrap_or(NO_FRAGMENT);
                    let n = block_count(size, block_size, frag_index);
                    Inode { header: h, kind: InodeKind::ExtendedFile {
                        start_block: start, file_size: size, sparse, nlink, frag_index,
                        frag_offset: off, xattr_idx: xattr, block_sizes: vec![7; n as usize] } }
                }),
            (arb_header(), any::<u32>(), proptest::collection::vec(any::<u8>(), 0..300)).prop_map(
                |(mut h, nlink, target)| {
                    h.inode_type = InodeType::Symlink;
                    Inode { header: h, kind: InodeKind::BasicSymlink { nlink, target } }
                }),
            (arb_header(), any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>(), any::<u16>(),
             any::<u32>(), proptest::collection::vec((any::<u32>(), any::<u32>(), arb_name()), 0..4)).prop_map(
                |(mut h, nlink, fs, sb, pi, bo, xa, idx)| {
                    h.inode_type = InodeType::ExtDirectory;
                    let index = idx.into_iter().map(|(index, start_block, name)| DirIndex { index, start_block, name }).collect();
                    Inode { header: h, kind: InodeKind::ExtendedDirectory {
                        nlink, file_size: fs, start_block: sb, parent_inode: pi, block_offset: bo, xattr_idx: xa, index } }
                }),
            (arb_header(), prop_oneof![Just(InodeType::Fifo), Just(InodeType::CharDevice),
                                       Just(InodeType::ExtSocket), Just(InodeType::ExtBlockDevice)],
             proptest::collection::vec(any::<u8>(), 12)).prop_map(|(mut h, t, raw)| {
                h.inode_type = t;
                let len = match t { InodeType::Fifo => 4, InodeType::CharDevice | InodeType::ExtSocket => 8, _ => 12 };
                Inode { header: h, kind: InodeKind::Other { body: raw[..len].to_vec() } }
            }),
        ]
    }

    proptest! {
        #[test]
        fn inode_round_trip(inode in arb_inode(4096), trailing in proptest::collection::vec(any::<u8>(), 0..8)) {
            let mut bytes = serialize_inode(&inode);
            let len = bytes.len();
            bytes.extend(trailing);
            let (parsed, used) = parse_inode(&bytes, 0, 4096).unwrap();
            prop_assert_eq!(used, len);
            prop_assert_eq!(serialize_inode(&parsed), &bytes[..len]);
            prop_assert_eq!(parsed, inode);
        }

        #[test]
        fn dir_records_round_trip(count in 1u32..=256, start in any::<u32>(), ino in any::<u32>(),
                                  off in any::<u16>(), delta in any::<i16>(), t in 1u16..=7, name in arb_name()) {
            let h = DirHeader { count, start, inode_number: ino };
            let hb = serialize_dir_header(&h);
            prop_assert_eq!(parse_dir_header(&hb, 0).unwrap(), (h, hb.len()));
            let e = DirEntry { offset: off, inode_delta: delta, entry_type: InodeType::from_raw(t).unwrap(), name };
            let eb = serialize_dir_entry(&e);
            let (parsed, used) = parse_dir_entry(&eb, 0).unwrap();
            prop_assert_eq!(used, eb.len());
            prop_assert_eq!(serialize_dir_entry(&parsed), eb);
        }

        /// Staging the same bytes at an odd position of a scratch buffer must
        /// not change any decoded value.
        #[test]
        fn parsing_is_position_independent(inode in arb_inode(4096), pad in 1usize..16, name in arb_name()) {
            let pad = pad | 1;
            let mut plain = serialize_inode(&inode);
            plain.extend(serialize_dir_header(&DirHeader { count: 2, start: 9, inode_number: 3 }));
            plain.extend(serialize_dir_entry(&DirEntry { offset: 5, inode_delta: -1, entry_type: InodeType::File, name }));
            let mut scratch = vec![0xa5u8; pad];
            scratch.extend(&plain);
            scratch.push(0x5a);

            let (a, n) = parse_inode(&plain, 0, 4096).unwrap();
            let (b, m) = parse_inode(&scratch, pad, 4096).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(n, m);
            prop_assert_eq!(parse_dir_header(&plain, n).unwrap(), parse_dir_header(&scratch, pad + n).unwrap());
            prop_assert_eq!(parse_dir_entry(&plain, n + 12).unwrap(), parse_dir_entry(&scratch, pad + n + 12).unwrap());

            let sb = example_superblock_bytes();
            let mut sb_scratch = vec![0u8; pad];
            sb_scratch.extend(&sb);
            prop_assert_eq!(parse_superblock(&sb).unwrap(), parse_superblock(&sb_scratch[pad..]).unwrap());
        }
    }
}
