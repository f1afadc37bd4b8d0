//! Filesystem driver API over a mounted image.
//!
//! [`probe`] validates an image and returns a [`MountContext`]; everything
//! else (`ls`, `size`, `read_file`, `opendir`/`readdir`/`closedir`,
//! `close`) hangs off that context. Paths are `/`-separated and always
//! resolved from the root.

use std::collections::VecDeque;
use std::fmt;
use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::filedata;
use crate::metadata::{self, FragmentTable, IdTable, MetaReader, Table};
use crate::ondisk::{
    self, DirHeader, Inode, InodeType, MetaRef, Superblock, MAX_DIR_HEADER_ENTRIES, SUPERBLOCK_SIZE,
};
use crate::storage::BlockSource;

/// Symlink substitutions allowed while resolving one path.
pub const MAX_SYMLINK_DEPTH: u32 = 40;

/// Per-thread accounting of mounts and directory streams, so tests can
/// check that every open is matched by a release.
pub mod lifecycle {
    use std::cell::Cell;

    thread_local! {
        static COUNTS: Cell<Lifecycle> = const { Cell::new(Lifecycle {
            mounts_opened: 0, mounts_closed: 0, streams_opened: 0, streams_closed: 0,
        }) };
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct Lifecycle {
        pub mounts_opened: u64,
        pub mounts_closed: u64,
        pub streams_opened: u64,
        pub streams_closed: u64,
    }

    impl Lifecycle {
        pub fn live_mounts(&self) -> u64 {
            self.mounts_opened - self.mounts_closed
        }

        pub fn live_streams(&self) -> u64 {
            self.streams_opened - self.streams_closed
        }
    }

    /// Counters for the calling thread.
    pub fn snapshot() -> Lifecycle {
        COUNTS.with(Cell::get)
    }

    pub(crate) fn bump(f: impl FnOnce(&mut Lifecycle)) {
        COUNTS.with(|c| {
            let mut v = c.get();
            f(&mut v);
            c.set(v);
        });
    }
}

/// Everything a mounted image needs, loaded once by [`probe`].
pub struct MountContext {
    meta: MetaReader,
    sb: Superblock,
    fragments: FragmentTable,
    ids: IdTable,
    root: Inode,
    inode_table: Table,
    dir_table: Table,
}

impl fmt::Debug for MountContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MountContext")
            .field("source", self.meta.source())
            .field("inode_count", &self.sb.inode_count)
            .finish()
    }
}

fn read_superblock(source: &BlockSource) -> Result<Superblock> {
    let n = source.total_size().min(SUPERBLOCK_SIZE as u64) as usize;
    let bytes = source.read_at(0, n)?;
    if bytes.len() < 4 {
        return Err(Error::BadMagic(0));
    }
    ondisk::parse_superblock(&bytes)
}

/// Checks that `source` holds a usable SquashFS image and loads its tables.
pub fn probe(source: BlockSource) -> Result<MountContext> {
    let sb = read_superblock(&source)?;
    if !sb.compression.is_supported() {
        return Err(Error::UnsupportedCompression(sb.compression.name()));
    }
    if sb.bytes_used > source.total_size() {
        return Err(Error::CorruptSuperblock("image is shorter than bytes_used"));
    }
    if sb.directory_table_start >= sb.bytes_used
        || sb.fragment_table_start > sb.bytes_used
        || sb.id_table_start >= sb.bytes_used
    {
        return Err(Error::CorruptSuperblock("table offset beyond bytes_used"));
    }

    let meta = MetaReader::new(source, sb.compression);
    let fragments = metadata::load_fragment_table(&meta, &sb)?;
    let ids = metadata::load_id_table(&meta, &sb)?;
    let inode_table = Table {
        start: sb.inode_table_start,
        end: sb.directory_table_start,
    };
    let dir_table = Table {
        start: sb.directory_table_start,
        end: sb.bytes_used,
    };
    let mut ctx = MountContext {
        meta,
        root: Inode {
            header: ondisk::InodeHeader {
                inode_type: InodeType::Directory,
                permissions: 0,
                uid_idx: 0,
                gid_idx: 0,
                mtime: 0,
                inode_number: 0,
            },
            kind: ondisk::InodeKind::Other { body: Vec::new() },
        },
        sb,
        fragments,
        ids,
        inode_table,
        dir_table,
    };
    let root = ctx.inode_at(ctx.sb.root_inode_ref)?;
    if !root.is_dir() {
        return Err(Error::CorruptSuperblock("root inode is not a directory"));
    }
    ctx.root = root;
    lifecycle::bump(|l| l.mounts_opened += 1);
    Ok(ctx)
}

impl Drop for MountContext {
    fn drop(&mut self) {
        // Contexts that never finished probing were never counted.
        if self.root.is_dir() {
            lifecycle::bump(|l| l.mounts_closed += 1);
        }
    }
}

/// A path resolved to an inode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedNode {
    pub inode: Inode,
    pub inode_ref: MetaRef,
    /// Components of the symlink-free path that leads to `inode`.
    pub components: Vec<Vec<u8>>,
    pub symlink_depth_used: u32,
}

impl ResolvedNode {
    pub fn canonical_path(&self) -> String {
        if self.components.is_empty() {
            return "/".to_owned();
        }
        self.components
            .iter()
            .map(|c| format!("/{}", String::from_utf8_lossy(c)))
            .collect()
    }
}

/// One directory record as delivered by [`DirStream`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dirent {
    pub name: Vec<u8>,
    pub entry_type: InodeType,
    pub inode_ref: MetaRef,
    pub inode_number: u32,
}

impl Dirent {
    pub fn name_lossy(&self) -> String {
        String::from_utf8_lossy(&self.name).into_owned()
    }
}

/// Iterator over the records of one directory, in on-disk order.
pub struct DirStream<'a> {
    _mount: PhantomData<&'a MountContext>,
    listing: Vec<u8>,
    pos: usize,
    header: Option<DirHeader>,
    left_in_header: u32,
    emitted: usize,
    done: bool,
}

impl fmt::Debug for DirStream<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirStream")
            .field("listing_len", &self.listing.len())
            .field("pos", &self.pos)
            .field("emitted", &self.emitted)
            .finish()
    }
}

impl<'a> DirStream<'a> {
    fn new(ctx: &'a MountContext, dir: &Inode) -> Result<Self> {
        let layout = dir
            .dir_layout()
            .ok_or_else(|| Error::NotADirectory(format!("inode {}", dir.header.inode_number)))?;
        let len = layout
            .file_size
            .checked_sub(3)
            .ok_or_else(|| Error::CorruptDirectory(format!("directory size {}", layout.file_size)))?;
        let at = MetaRef::new(u64::from(layout.start_block), layout.block_offset)?;
        let listing = ctx.meta.read_span(ctx.dir_table, at, u64::from(len))?;
        lifecycle::bump(|l| l.streams_opened += 1);
        Ok(DirStream {
            _mount: PhantomData,
            listing,
            pos: 0,
            header: None,
            left_in_header: 0,
            emitted: 0,
            done: false,
        })
    }

    /// Next record, or `None` once the directory is exhausted.
    pub fn readdir(&mut self) -> Result<Option<Dirent>> {
        if self.done {
            return Ok(None);
        }
        let res = self.next_record();
        if !matches!(res, Ok(Some(_))) {
            self.done = true;
        }
        res
    }

    fn next_record(&mut self) -> Result<Option<Dirent>> {
        let bad = |e: Error| Error::CorruptDirectory(e.to_string());
        if self.left_in_header == 0 {
            if self.pos >= self.listing.len() {
                return Ok(None);
            }
            let (h, used) = ondisk::parse_dir_header(&self.listing, self.pos).map_err(bad)?;
            if h.count == 0 || h.count > MAX_DIR_HEADER_ENTRIES {
                return Err(Error::CorruptDirectory(format!("header with {} entries", h.count)));
            }
            self.pos += used;
            self.left_in_header = h.count;
            self.header = Some(h);
        }
        let h = self.header.expect("header precedes entries");
        let (e, used) = ondisk::parse_dir_entry(&self.listing, self.pos).map_err(bad)?;
        self.pos += used;
        self.left_in_header -= 1;
        self.emitted += 1;
        let inode_number = u32::try_from(i64::from(h.inode_number) + i64::from(e.inode_delta))
            .ok()
            .filter(|n| *n != 0)
            .ok_or_else(|| Error::CorruptDirectory("inode number out of range".into()))?;
        Ok(Some(Dirent {
            inode_ref: MetaRef::new(u64::from(h.start), e.offset).map_err(bad)?,
            name: e.name,
            entry_type: e.entry_type,
            inode_number,
        }))
    }

    /// Number of records delivered so far.
    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Releases the stream.
    pub fn closedir(self) {}
}

impl Drop for DirStream<'_> {
    fn drop(&mut self) {
        lifecycle::bump(|l| l.streams_closed += 1);
    }
}

impl Iterator for DirStream<'_> {
    type Item = Result<Dirent>;

    fn next(&mut self) -> Option<Self::Item> {
        self.readdir().transpose()
    }
}

fn split_path(path: &[u8]) -> VecDeque<Vec<u8>> {
    path.split(|&b| b == b'/')
        .filter(|c| !c.is_empty())
        .map(<[u8]>::to_vec)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListKind {
    Dir,
    Symlink,
    File { size: u64 },
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListEntry {
    pub name: String,
    pub kind: ListKind,
}

/// A rendered directory listing with file and directory counters.
/// Symlinks and special files count as files.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Listing {
    pub entries: Vec<ListEntry>,
    pub files: usize,
    pub dirs: usize,
}

impl fmt::Display for Listing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            match e.kind {
                ListKind::Dir => writeln!(f, "            {}/", e.name)?,
                ListKind::Symlink => writeln!(f, "    <SYM>   {}", e.name)?,
                ListKind::File { size } => writeln!(f, " {size:>8}   {}", e.name)?,
                ListKind::Other => writeln!(f, " {:>8}   {}", 0, e.name)?,
            }
        }
        writeln!(f)?;
        writeln!(f, "{} file(s), {} dir(s)", self.files, self.dirs)
    }
}

impl MountContext {
    pub fn superblock(&self) -> &Superblock {
        &self.sb
    }

    pub fn fragments(&self) -> &FragmentTable {
        &self.fragments
    }

    pub fn ids(&self) -> &IdTable {
        &self.ids
    }

    pub fn root(&self) -> &Inode {
        &self.root
    }

    pub fn source(&self) -> &BlockSource {
        self.meta.source()
    }

    pub fn inode_table(&self) -> Table {
        self.inode_table
    }

    pub fn directory_table(&self) -> Table {
        self.dir_table
    }

    pub fn meta(&self) -> &MetaReader {
        &self.meta
    }

    /// Fetches the inode at `at`, reading on into following metadata
    /// blocks when the record straddles a boundary.
    pub fn inode_at(&self, at: MetaRef) -> Result<Inode> {
        let table = self.inode_table;
        let mut abs = table
            .start
            .checked_add(at.block_start)
            .filter(|a| *a < table.end)
            .ok_or(Error::InvalidRef(at.raw()))?;
        let first = self.meta.block(abs)?;
        let mut buf = first
            .payload
            .get(usize::from(at.intra_offset)..)
            .ok_or(Error::InvalidRef(at.raw()))?
            .to_vec();
        abs += first.disk_size;
        loop {
            match ondisk::parse_inode(&buf, 0, self.sb.block_size) {
                Ok((inode, _)) => return Ok(inode),
                Err(e @ (Error::TruncatedInode { .. } | Error::BadBlockList { .. })) => {
                    if abs >= table.end {
                        return Err(e);
                    }
                    let next = self.meta.block(abs)?;
                    buf.extend_from_slice(&next.payload);
                    abs += next.disk_size;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Decodes the whole inode table in on-disk order, returning each
    /// inode with its reference and serialized length.
    pub fn read_inode_table(&self) -> Result<Vec<(MetaRef, Inode, usize)>> {
        let (bytes, marks) = self.meta.read_whole(self.inode_table)?;
        let mut out = Vec::new();
        let mut pos = 0;
        for index in 1..=self.sb.inode_count {
            let at_inode = |source| Error::AtInode {
                index,
                source: Box::new(source),
            };
            let (inode, used) =
                ondisk::parse_inode(&bytes, pos, self.sb.block_size).map_err(at_inode)?;
            let mark = marks
                .iter()
                .rev()
                .find(|(_, payload_pos)| *payload_pos <= pos)
                .expect("first mark is at 0");
            let at = MetaRef::new(mark.0, (pos - mark.1) as u16).map_err(at_inode)?;
            out.push((at, inode, used));
            pos += used;
        }
        Ok(out)
    }

    fn walk(&self, path: &str, follow_final: bool) -> Result<ResolvedNode> {
        if path.is_empty() {
            return Err(Error::NotFound(String::new()));
        }
        let trailing_slash = path.len() > 1 && path.ends_with('/');
        let follow_final = follow_final || trailing_slash;
        let mut queue = split_path(path.as_bytes());
        let mut stack: Vec<(Vec<u8>, MetaRef, Inode)> = Vec::new();
        let mut depth = 0;

        while let Some(comp) = queue.pop_front() {
            if comp == b"." {
                continue;
            }
            if comp == b".." {
                stack.pop();
                continue;
            }
            let dir = stack.last().map_or(&self.root, |(_, _, inode)| inode);
            if !dir.is_dir() {
                return Err(Error::NotADirectory(path.to_owned()));
            }
            let entry = self.lookup(dir, &comp)?.ok_or_else(|| Error::NotFound(path.to_owned()))?;
            let inode = self.inode_at(entry.inode_ref)?;
            if inode.is_symlink() && (!queue.is_empty() || follow_final) {
                depth += 1;
                if depth > MAX_SYMLINK_DEPTH {
                    return Err(Error::SymlinkLoop(path.to_owned()));
                }
                let target = inode.symlink_target().unwrap_or_default();
                if target.is_empty() {
                    return Err(Error::NotFound(path.to_owned()));
                }
                if target.starts_with(b"/") {
                    stack.clear();
                }
                for c in split_path(target).into_iter().rev() {
                    queue.push_front(c);
                }
                continue;
            }
            stack.push((comp, entry.inode_ref, inode));
        }

        let (inode_ref, inode) = stack
            .last()
            .map(|(_, r, i)| (*r, i.clone()))
            .unwrap_or_else(|| (self.sb.root_inode_ref, self.root.clone()));
        if trailing_slash && !inode.is_dir() {
            return Err(Error::NotADirectory(path.to_owned()));
        }
        Ok(ResolvedNode {
            inode,
            inode_ref,
            components: stack.into_iter().map(|(name, _, _)| name).collect(),
            symlink_depth_used: depth,
        })
    }

    fn lookup(&self, dir: &Inode, name: &[u8]) -> Result<Option<Dirent>> {
        for entry in DirStream::new(self, dir)? {
            let entry = entry?;
            if entry.name == name {
                return Ok(Some(entry));
            }
        }
        Ok(None)
    }

    /// Resolves `path`, following symlinks (including a final one).
    pub fn resolve_path(&self, path: &str) -> Result<ResolvedNode> {
        self.walk(path, true)
    }

    /// Resolves `path` without following a symlink in the final component.
    pub fn resolve_path_nofollow(&self, path: &str) -> Result<ResolvedNode> {
        self.walk(path, false)
    }

    pub fn opendir(&self, path: &str) -> Result<DirStream<'_>> {
        let node = self.resolve_path(path)?;
        if !node.inode.is_dir() {
            return Err(Error::NotADirectory(path.to_owned()));
        }
        DirStream::new(self, &node.inode)
    }

    /// Opens a stream on an already fetched directory inode.
    pub fn opendir_inode(&self, dir: &Inode) -> Result<DirStream<'_>> {
        DirStream::new(self, dir)
    }

    fn file_node(&self, path: &str) -> Result<ResolvedNode> {
        let node = self.resolve_path(path)?;
        if node.inode.is_dir() {
            return Err(Error::IsADirectory(path.to_owned()));
        }
        if !node.inode.is_file() {
            return Err(Error::NotARegularFile(path.to_owned()));
        }
        Ok(node)
    }

    /// Uncompressed size of the file at `path` (symlinks followed).
    pub fn size(&self, path: &str) -> Result<u64> {
        let node = self.file_node(path)?;
        Ok(node.inode.file_layout().expect("regular file").file_size)
    }

    /// Reads up to `length` bytes (everything when `None`) starting at
    /// `start`, stopping at end of file.
    pub fn read_file(&self, path: &str, start: u64, length: Option<u64>) -> Result<Vec<u8>> {
        let node = self.file_node(path)?;
        self.read_inode_data(&node.inode, start, length)
    }

    pub fn read_inode_data(&self, inode: &Inode, start: u64, length: Option<u64>) -> Result<Vec<u8>> {
        let layout = inode
            .file_layout()
            .ok_or_else(|| Error::NotARegularFile(format!("inode {}", inode.header.inode_number)))?;
        if start > layout.file_size {
            return Err(Error::OffsetPastEnd {
                offset: start,
                size: layout.file_size,
            });
        }
        let avail = layout.file_size - start;
        let len = length.map_or(avail, |l| l.min(avail));
        filedata::read_range(&self.meta, self.sb.block_size, &self.fragments, &layout, start, len)
    }

    /// Lists a directory the way the bootloader's generic `ls` does:
    /// directories get a trailing `/`, symlinks a `<SYM>` tag.
    pub fn ls(&self, path: &str) -> Result<Listing> {
        let mut listing = Listing::default();
        for entry in self.opendir(path)? {
            let entry = entry?;
            let kind = match entry.entry_type.basic() {
                InodeType::Directory => ListKind::Dir,
                InodeType::Symlink => ListKind::Symlink,
                InodeType::File => {
                    let inode = self.inode_at(entry.inode_ref)?;
                    let size = inode
                        .file_layout()
                        .ok_or_else(|| Error::CorruptDirectory(format!(
                            "{} is listed as a file but its inode is not",
                            entry.name_lossy()
                        )))?
                        .file_size;
                    ListKind::File { size }
                }
                _ => ListKind::Other,
            };
            if kind == ListKind::Dir {
                listing.dirs += 1;
            } else {
                listing.files += 1;
            }
            listing.entries.push(ListEntry {
                name: entry.name_lossy(),
                kind,
            });
        }
        Ok(listing)
    }

    /// Unmounts: drops caches and releases the source.
    pub fn close(self) {}
}
