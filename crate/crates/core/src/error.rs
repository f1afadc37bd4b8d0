use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the reader can report.
///
/// Variants are grouped by the layer that raises them. [`Error::class`]
/// folds them into the coarse categories used for CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // storage
    #[error("{}: no such file", .0.display())]
    ImageNotFound(PathBuf),
    #[error("{}: permission denied", .0.display())]
    PermissionDenied(PathBuf),
    #[error("{}: image is empty", .0.display())]
    EmptyFile(PathBuf),
    #[error("read of {length} bytes at offset {offset} exceeds image size {total_size}")]
    OutOfBounds {
        offset: u64,
        length: u64,
        total_size: u64,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    // on-disk decoding
    #[error("bad magic 0x{0:08x}, not a SquashFS image")]
    BadMagic(u32),
    #[error("unsupported SquashFS version {major}.{minor}")]
    UnsupportedVersion { major: u16, minor: u16 },
    #[error("corrupt superblock: {0}")]
    CorruptSuperblock(&'static str),
    #[error("invalid metadata reference 0x{0:x}")]
    InvalidRef(u64),
    #[error("unknown inode type {0}")]
    UnknownInodeType(u16),
    #[error("inode truncated at table offset {offset}")]
    TruncatedInode { offset: usize },
    #[error("block list of inode at table offset {offset} runs past the table end")]
    BadBlockList { offset: usize },
    #[error("directory header truncated at offset {offset}")]
    TruncatedHeader { offset: usize },
    #[error("directory entry truncated at offset {offset}")]
    TruncatedEntry { offset: usize },
    #[error("invalid directory entry name {0:?}")]
    InvalidName(String),

    // codec
    #[error("unsupported compression: {0}")]
    UnsupportedCompression(&'static str),
    #[error("corrupt compressed stream: {0}")]
    CorruptStream(String),
    #[error("decompressed data exceeds {limit} bytes")]
    OutputOverflow { limit: usize },

    // metadata
    #[error("metadata block at {offset} is truncated")]
    TruncatedBlock { offset: u64 },
    #[error("metadata block at {offset} declares invalid size {size}")]
    OversizeBlock { offset: u64, size: u16 },
    #[error("table data ends before {wanted} bytes could be read")]
    TruncatedTable { wanted: u64 },
    #[error("{table} table holds {found} entries, superblock declares {expected}")]
    EntryCountMismatch {
        table: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("fragment entry {index} is invalid")]
    BadFragmentEntry { index: u32 },
    #[error("index {index} out of range for table of {len} entries")]
    IndexOutOfRange { index: u32, len: u32 },

    // vfs
    #[error("{0}: not found")]
    NotFound(String),
    #[error("{0}: not a directory")]
    NotADirectory(String),
    #[error("{0}: is a directory")]
    IsADirectory(String),
    #[error("{0}: not a regular file")]
    NotARegularFile(String),
    #[error("{0}: too many levels of symbolic links")]
    SymlinkLoop(String),
    #[error("corrupt directory: {0}")]
    CorruptDirectory(String),
    #[error("corrupt file data: {0}")]
    CorruptData(String),
    #[error("fragment index {index} out of range ({count} fragments)")]
    FragmentIndexOutOfRange { index: u32, count: u32 },
    #[error("offset {offset} is past the end of a {size}-byte file")]
    OffsetPastEnd { offset: u64, size: u64 },

    #[error("inode {index}: {source}")]
    AtInode {
        index: u32,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse failure categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The image could not be opened or is not a usable SquashFS image.
    Probe,
    /// A path inside the image does not lead where the caller asked.
    Lookup,
    /// The image claims to be SquashFS but its contents are inconsistent.
    Corruption,
    /// Host i/o or caller misuse.
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            ImageNotFound(_) | PermissionDenied(_) | EmptyFile(_) | BadMagic(_)
            | UnsupportedVersion { .. } | UnsupportedCompression(_) | CorruptSuperblock(_) => {
                ErrorClass::Probe
            }
            NotFound(_) | NotADirectory(_) | IsADirectory(_) | NotARegularFile(_)
            | SymlinkLoop(_) => ErrorClass::Lookup,
            Io(_) | OffsetPastEnd { .. } => ErrorClass::Other,
            AtInode { source, .. } => source.class(),
            _ => ErrorClass::Corruption,
        }
    }
}
