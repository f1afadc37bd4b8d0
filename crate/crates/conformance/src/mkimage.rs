//! Reference image builder producing the same layout as `mksquashfs -comp gzip`.
//!
//! Section order: superblock, data and fragment blocks, inode table,
//! directory table, fragment table, export table, id table, then zero
//! padding to 4 KiB. Inodes are numbered depth-first with every directory
//! numbered after its contents, so the root always comes last.
//!
//! Nothing here is shared with the reader under test; all encoding is
//! written out by hand against the format description.

use std::collections::HashMap;
use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::tree::{Dir, Entry, Meta, Node, Tree};

const META_SIZE: usize = 8192;
const META_RAW: u16 = 0x8000;
const BLOCK_RAW: u32 = 1 << 24;
const NO_FRAGMENT: u32 = u32::MAX;
const NO_XATTR: u32 = u32::MAX;
const ABSENT: u64 = u64::MAX;
const PAD: usize = 4096;

const FLAG_UNCOMPRESSED_INODES: u16 = 0x0001;
const FLAG_UNCOMPRESSED_DATA: u16 = 0x0002;
const FLAG_UNCOMPRESSED_FRAGMENTS: u16 = 0x0008;
const FLAG_NO_FRAGMENTS: u16 = 0x0010;
const FLAG_ALWAYS_FRAGMENTS: u16 = 0x0020;
const FLAG_DUPLICATES: u16 = 0x0040;
const FLAG_EXPORTABLE: u16 = 0x0080;

const T_DIR: u16 = 1;
const T_FILE: u16 = 2;
const T_SYMLINK: u16 = 3;
const T_FIFO: u16 = 6;
const T_LDIR: u16 = 8;
const T_LFILE: u16 = 9;

/// Layout switches, named after the matching `mksquashfs` options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefOptions {
    pub block_size: u32,
    pub mkfs_time: u32,
    pub no_inode_compression: bool,
    pub no_data_compression: bool,
    pub no_fragment_compression: bool,
    pub no_fragments: bool,
    pub always_use_fragments: bool,
    pub no_exports: bool,
}

impl Default for RefOptions {
    fn default() -> Self {
        RefOptions {
            block_size: 131_072,
            mkfs_time: 0,
            no_inode_compression: false,
            no_data_compression: false,
            no_fragment_compression: false,
            no_fragments: false,
            always_use_fragments: false,
            no_exports: false,
        }
    }
}

fn zlib(bytes: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::best());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

fn put16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Packs a byte stream into metadata blocks.
struct MetaWriter {
    out: Vec<u8>,
    cur: Vec<u8>,
    compress: bool,
    block_starts: Vec<u32>,
    written: usize,
}

impl MetaWriter {
    fn new(compress: bool) -> Self {
        MetaWriter {
            out: Vec::new(),
            cur: Vec::new(),
            compress,
            block_starts: Vec::new(),
            written: 0,
        }
    }

    /// (block start relative to the table, offset inside the block)
    fn pos(&self) -> (u32, u16) {
        (self.out.len() as u32, self.cur.len() as u16)
    }

    /// On-table start of the block holding uncompressed position `at`.
    fn block_start_of(&self, at: usize) -> u32 {
        let n = at / META_SIZE;
        self.block_starts.get(n).copied().unwrap_or(self.out.len() as u32)
    }

    fn write(&mut self, bytes: &[u8]) {
        self.cur.extend_from_slice(bytes);
        self.written += bytes.len();
        while self.cur.len() >= META_SIZE {
            let rest = self.cur.split_off(META_SIZE);
            let block = std::mem::replace(&mut self.cur, rest);
            self.flush(&block);
        }
    }

    fn flush(&mut self, block: &[u8]) {
        self.block_starts.push(self.out.len() as u32);
        let packed = zlib(block);
        if self.compress && packed.len() < block.len() {
            put16(&mut self.out, packed.len() as u16);
            self.out.extend_from_slice(&packed);
        } else {
            put16(&mut self.out, block.len() as u16 | META_RAW);
            self.out.extend_from_slice(block);
        }
    }

    /// Closes the last block; returns the bytes and each block's start.
    fn finish(mut self) -> (Vec<u8>, Vec<u32>) {
        if !self.cur.is_empty() {
            let block = std::mem::take(&mut self.cur);
            self.flush(&block);
        }
        (self.out, self.block_starts)
    }
}

#[derive(Debug, Clone)]
struct FileData {
    start: u64,
    blocks: Vec<u32>,
    frag_index: u32,
    frag_offset: u32,
    sparse: u64,
}

struct ChildRef {
    name: Vec<u8>,
    kind: u16,
    block: u32,
    offset: u16,
    number: u32,
}

struct Builder<'t> {
    opts: RefOptions,
    img: Vec<u8>,
    frag_buf: Vec<u8>,
    frag_entries: Vec<(u64, u32)>,
    seen: HashMap<&'t [u8], FileData>,
    ids: Vec<u32>,
    inodes: MetaWriter,
    dirs: MetaWriter,
    /// Inode reference per inode number (index 0 is inode 1).
    refs: Vec<u64>,
}

fn subtree_inodes(dir: &Dir) -> u32 {
    1 + dir
        .entries
        .values()
        .map(|e| match &e.node {
            Node::Dir(d) => subtree_inodes(d),
            _ => 1,
        })
        .sum::<u32>()
}

impl<'t> Builder<'t> {
    fn id_index(&mut self, id: u32) -> u16 {
        let at = self.ids.iter().position(|&x| x == id).unwrap_or_else(|| {
            self.ids.push(id);
            self.ids.len() - 1
        });
        at as u16
    }

    fn write_data_block(&mut self, chunk: &[u8]) -> u32 {
        if chunk.iter().all(|&b| b == 0) {
            return 0;
        }
        let packed = zlib(chunk);
        if !self.opts.no_data_compression && packed.len() < chunk.len() {
            self.img.extend_from_slice(&packed);
            packed.len() as u32
        } else {
            self.img.extend_from_slice(chunk);
            chunk.len() as u32 | BLOCK_RAW
        }
    }

    fn flush_fragment(&mut self) {
        if self.frag_buf.is_empty() {
            return;
        }
        let buf = std::mem::take(&mut self.frag_buf);
        let start = self.img.len() as u64;
        let packed = zlib(&buf);
        let word = if !self.opts.no_fragment_compression && packed.len() < buf.len() {
            self.img.extend_from_slice(&packed);
            packed.len() as u32
        } else {
            self.img.extend_from_slice(&buf);
            buf.len() as u32 | BLOCK_RAW
        };
        self.frag_entries.push((start, word));
    }

    fn add_fragment(&mut self, tail: &[u8]) -> (u32, u32) {
        if self.frag_buf.len() + tail.len() > self.opts.block_size as usize {
            self.flush_fragment();
        }
        let at = (self.frag_entries.len() as u32, self.frag_buf.len() as u32);
        self.frag_buf.extend_from_slice(tail);
        at
    }

    fn write_file_data(&mut self, content: &'t [u8]) -> FileData {
        if content.is_empty() {
            return FileData {
                start: 0,
                blocks: Vec::new(),
                frag_index: NO_FRAGMENT,
                frag_offset: 0,
                sparse: 0,
            };
        }
        if let Some(d) = self.seen.get(content) {
            return d.clone();
        }
        let bs = self.opts.block_size as usize;
        let use_fragment = !self.opts.no_fragments
            && content.len() % bs != 0
            && (content.len() < bs || self.opts.always_use_fragments);
        let full = if use_fragment { content.len() / bs } else { content.len().div_ceil(bs) };
        let start = if full > 0 { self.img.len() as u64 } else { 0 };
        let mut blocks = Vec::with_capacity(full);
        let mut sparse = 0;
        for chunk in content.chunks(bs).take(full) {
            let word = self.write_data_block(chunk);
            if word == 0 {
                sparse += chunk.len() as u64;
            }
            blocks.push(word);
        }
        let (frag_index, frag_offset) = if use_fragment {
            self.add_fragment(&content[full * bs..])
        } else {
            (NO_FRAGMENT, 0)
        };
        let data = FileData {
            start,
            blocks,
            frag_index,
            frag_offset,
            sparse,
        };
        self.seen.insert(content, data.clone());
        data
    }

    fn inode_header(&mut self, kind: u16, meta: Meta, number: u32) -> Vec<u8> {
        let uid = self.id_index(meta.uid);
        let gid = self.id_index(meta.gid);
        let mut out = Vec::new();
        put16(&mut out, kind);
        put16(&mut out, meta.mode & 0o7777);
        put16(&mut out, uid);
        put16(&mut out, gid);
        put32(&mut out, meta.mtime);
        put32(&mut out, number);
        out
    }

    fn emit_inode(&mut self, number: u32, bytes: &[u8]) -> (u32, u16) {
        let (block, offset) = self.inodes.pos();
        self.inodes.write(bytes);
        self.refs[number as usize - 1] = (u64::from(block) << 16) | u64::from(offset);
        (block, offset)
    }

    fn write_leaf(&mut self, entry: &'t Entry, number: u32) -> (u16, u32, u16) {
        let (kind, body) = match &entry.node {
            Node::File(content) => {
                let d = self.write_file_data(content);
                let size = content.len() as u64;
                let mut b = Vec::new();
                if d.sparse > 0 || size > u64::from(u32::MAX) || d.start > u64::from(u32::MAX) {
                    put64(&mut b, d.start);
                    put64(&mut b, size);
                    put64(&mut b, d.sparse);
                    put32(&mut b, 1);
                    put32(&mut b, d.frag_index);
                    put32(&mut b, d.frag_offset);
                    put32(&mut b, NO_XATTR);
                    d.blocks.iter().for_each(|&w| put32(&mut b, w));
                    (T_LFILE, b)
                } else {
                    put32(&mut b, d.start as u32);
                    put32(&mut b, d.frag_index);
                    put32(&mut b, d.frag_offset);
                    put32(&mut b, size as u32);
                    d.blocks.iter().for_each(|&w| put32(&mut b, w));
                    (T_FILE, b)
                }
            }
            Node::Symlink(target) => {
                let mut b = Vec::new();
                put32(&mut b, 1);
                put32(&mut b, target.len() as u32);
                b.extend_from_slice(target);
                (T_SYMLINK, b)
            }
            Node::Fifo => {
                let mut b = Vec::new();
                put32(&mut b, 1);
                (T_FIFO, b)
            }
            Node::Dir(_) => unreachable!("directories are written by write_dir"),
        };
        let mut bytes = self.inode_header(kind, entry.meta, number);
        bytes.extend_from_slice(&body);
        let (block, offset) = self.emit_inode(number, &bytes);
        let basic = if kind == T_LFILE { T_FILE } else { kind };
        (basic, block, offset)
    }

    /// Writes `dir`'s subtree; returns the directory's own inode number.
    fn write_dir(&mut self, dir: &'t Dir, meta: Meta, first: u32, parent: u32) -> u32 {
        let own = first + subtree_inodes(dir) - 1;
        let mut next = first;
        let mut children = Vec::with_capacity(dir.entries.len());
        let mut subdirs = 0;
        for (name, entry) in &dir.entries {
            let (number, kind, block, offset) = match &entry.node {
                Node::Dir(d) => {
                    subdirs += 1;
                    let n = self.write_dir(d, entry.meta, next, own);
                    let r = self.refs[n as usize - 1];
                    next = n + 1;
                    (n, T_DIR, (r >> 16) as u32, r as u16)
                }
                _ => {
                    let n = next;
                    next += 1;
                    let (kind, block, offset) = self.write_leaf(entry, n);
                    (n, kind, block, offset)
                }
            };
            children.push(ChildRef {
                name: name.clone(),
                kind,
                block,
                offset,
                number,
            });
        }
        debug_assert_eq!(next, own);

        let (listing_block, listing_offset) = self.dirs.pos();
        let (listing_len, index) = self.write_listing(&children);
        let file_size = listing_len as u64 + 3;
        let nlink = 2 + subdirs;
        let mut body = Vec::new();
        let kind = if index.is_empty() && file_size <= 0xffff {
            put32(&mut body, listing_block);
            put32(&mut body, nlink);
            put16(&mut body, file_size as u16);
            put16(&mut body, listing_offset);
            put32(&mut body, parent);
            T_DIR
        } else {
            put32(&mut body, nlink);
            put32(&mut body, file_size as u32);
            put32(&mut body, listing_block);
            put32(&mut body, parent);
            put16(&mut body, index.len() as u16);
            put16(&mut body, listing_offset);
            put32(&mut body, NO_XATTR);
            for (at, start, name) in &index {
                put32(&mut body, *at);
                put32(&mut body, *start);
                put32(&mut body, name.len() as u32 - 1);
                body.extend_from_slice(name);
            }
            T_LDIR
        };
        let mut bytes = self.inode_header(kind, meta, own);
        bytes.extend_from_slice(&body);
        self.emit_inode(own, &bytes);
        own
    }

    /// Writes one directory listing. A new header starts at 256 entries,
    /// when the inode block changes, when the inode number delta leaves
    /// the i16 range, and when the listing crosses into a new metadata
    /// block (which also gets an index entry).
    fn write_listing(&mut self, children: &[ChildRef]) -> (usize, Vec<(u32, u32, Vec<u8>)>) {
        let base = self.dirs.written;
        let mut at = base;
        let mut groups = Vec::new();
        let mut i = 0;
        while i < children.len() {
            let header_at = at;
            at += 12;
            let first = &children[i];
            let mut j = i;
            while j < children.len() {
                let c = &children[j];
                let delta = i64::from(c.number) - i64::from(first.number);
                let fits = j - i < 256
                    && c.block == first.block
                    && i16::try_from(delta).is_ok()
                    && (j == i || at / META_SIZE == header_at / META_SIZE);
                if !fits {
                    break;
                }
                at += 8 + c.name.len();
                j += 1;
            }
            groups.push((i, j, header_at));
            i = j;
        }

        let mut index = Vec::new();
        let mut prev_block = base / META_SIZE;
        for &(i, j, header_at) in &groups {
            if header_at / META_SIZE != prev_block {
                prev_block = header_at / META_SIZE;
                index.push(((header_at - base) as u32, 0, children[i].name.clone()));
            }
            let first = &children[i];
            let mut rec = Vec::new();
            put32(&mut rec, (j - i - 1) as u32);
            put32(&mut rec, first.block);
            put32(&mut rec, first.number);
            for c in &children[i..j] {
                put16(&mut rec, c.offset);
                put16(&mut rec, (c.number as i64 - first.number as i64) as i16 as u16);
                put16(&mut rec, c.kind);
                put16(&mut rec, c.name.len() as u16 - 1);
                rec.extend_from_slice(&c.name);
            }
            self.dirs.write(&rec);
        }
        for entry in &mut index {
            entry.1 = self.dirs.block_start_of(base + entry.0 as usize);
        }
        (self.dirs.written - base, index)
    }
}

/// Appends a table of fixed-size records plus its block index; returns the
/// table start (the index position).
fn write_indexed_table(img: &mut Vec<u8>, records: &[u8], compress: bool) -> u64 {
    let mut w = MetaWriter::new(compress);
    w.write(records);
    let (bytes, starts) = w.finish();
    let base = img.len() as u64;
    img.extend_from_slice(&bytes);
    let table_start = img.len() as u64;
    for s in starts {
        put64(img, base + u64::from(s));
    }
    table_start
}

/// Builds a complete image of `tree`.
pub fn build(tree: &Tree, opts: &RefOptions) -> Vec<u8> {
    assert!(opts.block_size.is_power_of_two() && (4096..=1 << 20).contains(&opts.block_size));
    let inode_count = subtree_inodes(&tree.root);
    let mut b = Builder {
        opts: *opts,
        img: vec![0; 96],
        frag_buf: Vec::new(),
        frag_entries: Vec::new(),
        seen: HashMap::new(),
        ids: Vec::new(),
        inodes: MetaWriter::new(!opts.no_inode_compression),
        dirs: MetaWriter::new(!opts.no_inode_compression),
        refs: vec![0; inode_count as usize],
    };
    let root = b.write_dir(&tree.root, tree.root_meta, 1, inode_count + 1);
    assert_eq!(root, inode_count);
    b.flush_fragment();
    let root_ref = b.refs[root as usize - 1];

    let Builder {
        mut img,
        frag_entries,
        ids,
        inodes,
        dirs,
        refs,
        ..
    } = b;
    let inode_table_start = img.len() as u64;
    img.extend_from_slice(&inodes.finish().0);
    let directory_table_start = img.len() as u64;
    img.extend_from_slice(&dirs.finish().0);

    let mut frag_records = Vec::new();
    for (start, word) in &frag_entries {
        put64(&mut frag_records, *start);
        put32(&mut frag_records, *word);
        put32(&mut frag_records, 0);
    }
    let fragment_table_start = write_indexed_table(&mut img, &frag_records, !opts.no_fragment_compression);

    let export_table_start = if opts.no_exports {
        ABSENT
    } else {
        let mut recs = Vec::new();
        refs.iter().for_each(|&r| put64(&mut recs, r));
        write_indexed_table(&mut img, &recs, !opts.no_inode_compression)
    };

    let mut id_records = Vec::new();
    ids.iter().for_each(|&id| put32(&mut id_records, id));
    let id_table_start = write_indexed_table(&mut img, &id_records, true);
    let bytes_used = img.len() as u64;

    let mut flags = FLAG_DUPLICATES;
    if opts.no_inode_compression {
        flags |= FLAG_UNCOMPRESSED_INODES;
    }
    if opts.no_data_compression {
        flags |= FLAG_UNCOMPRESSED_DATA;
    }
    if opts.no_fragment_compression {
        flags |= FLAG_UNCOMPRESSED_FRAGMENTS;
    }
    if opts.no_fragments {
        flags |= FLAG_NO_FRAGMENTS;
    }
    if opts.always_use_fragments {
        flags |= FLAG_ALWAYS_FRAGMENTS;
    }
    if !opts.no_exports {
        flags |= FLAG_EXPORTABLE;
    }

    let mut sb = Vec::with_capacity(96);
    put32(&mut sb, 0x7371_7368);
    put32(&mut sb, inode_count);
    put32(&mut sb, opts.mkfs_time);
    put32(&mut sb, opts.block_size);
    put32(&mut sb, frag_entries.len() as u32);
    put16(&mut sb, 1);
    put16(&mut sb, opts.block_size.trailing_zeros() as u16);
    put16(&mut sb, flags);
    put16(&mut sb, ids.len() as u16);
    put16(&mut sb, 4);
    put16(&mut sb, 0);
    put64(&mut sb, root_ref);
    put64(&mut sb, bytes_used);
    put64(&mut sb, id_table_start);
    put64(&mut sb, ABSENT);
    put64(&mut sb, inode_table_start);
    put64(&mut sb, directory_table_start);
    put64(&mut sb, fragment_table_start);
    put64(&mut sb, export_table_start);
    img[..96].copy_from_slice(&sb);

    img.resize(img.len().next_multiple_of(PAD), 0);
    img
}
