//! Human-readable dumps of an image's superblock, inode table and
//! directory table, plus single-entry extraction.

use std::borrow::Cow;
use std::fmt::Write as _;

use chrono::{DateTime, Local, Utc};

use crate::error::{Error, Result};
use crate::ondisk::{Inode, InodeKind};
use crate::vfs::MountContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Superblock,
    InodeTable,
    DirectoryTable,
    Entry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DumpOptions {
    /// Render timestamps in the local timezone instead of UTC.
    pub local_time: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpReport {
    pub section: Section,
    /// Rendered output. Raw file bytes for [`Section::Entry`] on a file.
    pub content: Vec<u8>,
}

impl DumpReport {
    fn text(section: Section, text: String) -> Self {
        DumpReport {
            section,
            content: text.into_bytes(),
        }
    }

    pub fn as_text(&self) -> Cow<'_, str> {
        String::from_utf8_lossy(&self.content)
    }
}

fn timestamp(secs: u32, opts: DumpOptions) -> String {
    let utc = DateTime::<Utc>::from_timestamp(i64::from(secs), 0).expect("u32 seconds are in range");
    if opts.local_time {
        utc.with_timezone(&Local).format("%a %Y-%m-%d %H:%M:%S %Z").to_string()
    } else {
        utc.format("%a %Y-%m-%d %H:%M:%S UTC").to_string()
    }
}

fn block_size_label(bs: u32) -> String {
    if bs >= 1 << 20 && bs % (1 << 20) == 0 {
        format!("{bs} ({} MiB)", bs >> 20)
    } else {
        format!("{bs} ({} KiB)", bs >> 10)
    }
}

pub fn dump_superblock(ctx: &MountContext, opts: DumpOptions) -> DumpReport {
    let sb = ctx.superblock();
    let mut s = String::new();
    let magic: String = sb.magic.to_be_bytes().iter().map(|&b| char::from(b)).collect();
    let _ = writeln!(s, "--- SUPER BLOCK INFORMATION ---");
    let _ = writeln!(s, "Magic number: {magic}");
    let _ = writeln!(s, "Number of inodes: {}", sb.inode_count);
    let _ = writeln!(s, "Filesystem creation date: {}", timestamp(sb.mkfs_time, opts));
    let _ = writeln!(s, "Block size: {}", block_size_label(sb.block_size));
    let _ = writeln!(s, "Number of fragments: {}", sb.fragment_count);
    let _ = writeln!(s, "Number of ids: {}", sb.id_count);
    let _ = writeln!(s, "Block log: {}", sb.block_log);
    let _ = writeln!(s, "Compression type: {}", sb.compression);
    let _ = writeln!(s, "Super Block Flags: 0x{:x}", sb.flags);
    let _ = writeln!(s, "Major/Minor numbers: {}/{}", sb.version_major, sb.version_minor);
    let _ = writeln!(s, "Root inode: 0x{:x}", sb.root_inode_ref.raw());
    let _ = writeln!(s, "Bytes used: {}", sb.bytes_used);
    let _ = writeln!(s, "Id table start: 0x{:x}", sb.id_table_start);
    let _ = writeln!(s, "(xattr) Id table start: 0x{:x}", sb.xattr_id_table_start);
    let _ = writeln!(s, "Inode table start: 0x{:x}", sb.inode_table_start);
    let _ = writeln!(s, "Directory table start: 0x{:x}", sb.directory_table_start);
    let _ = writeln!(s, "Fragment table start: 0x{:x}", sb.fragment_table_start);
    let _ = writeln!(s, "Lookup table start: 0x{:x}", sb.export_table_start);
    let _ = writeln!(s, "--- SUPER BLOCK FLAGS ---");
    for name in sb.flag_names() {
        let _ = writeln!(s, "{name}");
    }
    DumpReport::text(Section::Superblock, s)
}

fn render_inode(s: &mut String, inode: &Inode, opts: DumpOptions) {
    let h = &inode.header;
    let _ = writeln!(s, "Permissions: 0x{:04x}", h.permissions);
    let _ = writeln!(s, "UID index: 0x{:04x}", h.uid_idx);
    let _ = writeln!(s, "GID index: 0x{:04x}", h.gid_idx);
    let _ = writeln!(s, "Modified time: {}", timestamp(h.mtime, opts));
    let _ = writeln!(s, "Inode number: {}", h.inode_number);
    let _ = writeln!(s, "Inode type: {}", h.inode_type.label());
    match &inode.kind {
        InodeKind::BasicDirectory { .. } | InodeKind::ExtendedDirectory { .. } => {
            let d = inode.dir_layout().expect("directory");
            let _ = writeln!(s, "Start block: 0x{:08x}", d.start_block);
            let _ = writeln!(s, "Hard links: {}", d.nlink);
            let _ = writeln!(s, "File size: {}", d.file_size);
            let _ = writeln!(s, "Block offset: 0x{:04x}", d.block_offset);
            let _ = writeln!(s, "Parent inode number: {}", d.parent_inode);
            if let InodeKind::ExtendedDirectory { index, xattr_idx, .. } = &inode.kind {
                let _ = writeln!(s, "Index count: {}", index.len());
                let _ = writeln!(s, "Xattr index: 0x{xattr_idx:08x}");
            }
        }
        InodeKind::BasicFile { .. } | InodeKind::ExtendedFile { .. } => {
            let f = inode.file_layout().expect("file");
            let _ = writeln!(s, "Start block: 0x{:08x}", f.blocks_start);
            let _ = writeln!(s, "Fragment block index: 0x{:08x}", f.frag_index);
            let _ = writeln!(s, "Fragment block offset: 0x{:08x}", f.frag_offset);
            let _ = writeln!(s, "(Uncompressed) File size: {}", f.file_size);
            if let InodeKind::ExtendedFile { sparse, nlink, xattr_idx, .. } = &inode.kind {
                let _ = writeln!(s, "Hard links: {nlink}");
                let _ = writeln!(s, "Sparse bytes: {sparse}");
                let _ = writeln!(s, "Xattr index: 0x{xattr_idx:08x}");
            }
        }
        InodeKind::BasicSymlink { nlink, target } => {
            let _ = writeln!(s, "Hard links: {nlink}");
            let _ = writeln!(s, "Symlink size: {}", target.len());
            let _ = writeln!(s, "Target path: {}", String::from_utf8_lossy(target));
        }
        InodeKind::Other { body } => {
            if let Some(n) = body.get(..4) {
                let nlink = u32::from_le_bytes(n.try_into().unwrap());
                let _ = writeln!(s, "Hard links: {nlink}");
            }
        }
    }
    s.push('\n');
}

pub fn dump_inode_table(ctx: &MountContext, opts: DumpOptions) -> Result<DumpReport> {
    let inodes = ctx.read_inode_table()?;
    let total = inodes.len();
    let mut s = String::from("--- --- ---\n");
    for (i, (_, inode, _)) in inodes.iter().enumerate() {
        let _ = writeln!(s, "{{Inode {}/{}}}", i + 1, total);
        let _ = writeln!(s, "--- --- ---");
        render_inode(&mut s, inode, opts);
    }
    Ok(DumpReport::text(Section::InodeTable, s))
}

const MAX_DIR_DEPTH: usize = 2048;

struct DirRecord {
    name: Option<String>,
    inode: Inode,
}

fn collect_dirs(ctx: &MountContext, dir: &Inode, out: &mut Vec<DirRecord>, depth: usize) -> Result<()> {
    // A path of single-character components fits in PATH_MAX at this depth.
    if depth > MAX_DIR_DEPTH {
        return Err(Error::CorruptDirectory("directory cycle".into()));
    }
    for entry in ctx.opendir_inode(dir)? {
        let entry = entry?;
        if !entry.entry_type.is_dir() {
            continue;
        }
        let inode = ctx.inode_at(entry.inode_ref)?;
        if !inode.is_dir() {
            return Err(Error::CorruptDirectory(format!(
                "{} is listed as a directory but its inode is not",
                entry.name_lossy()
            )));
        }
        collect_dirs(ctx, &inode, out, depth + 1)?;
        out.push(DirRecord {
            name: Some(entry.name_lossy()),
            inode,
        });
    }
    Ok(())
}

/// Directories in directory-table order, each with its entries numbered.
pub fn dump_directory_table(ctx: &MountContext) -> Result<DumpReport> {
    let mut dirs = Vec::new();
    collect_dirs(ctx, ctx.root(), &mut dirs, 0)?;
    dirs.push(DirRecord {
        name: None,
        inode: ctx.root().clone(),
    });
    dirs.sort_by_key(|d| {
        let l = d.inode.dir_layout().expect("directory");
        (l.start_block, l.block_offset, d.inode.header.inode_number)
    });

    let mut s = String::new();
    let mut n = 0;
    for d in &dirs {
        let names = ctx
            .opendir_inode(&d.inode)?
            .map(|e| e.map(|e| e.name_lossy()))
            .collect::<Result<Vec<_>>>()?;
        match &d.name {
            None => {
                let _ = writeln!(s, "Root directory");
            }
            Some(name) => {
                n += 1;
                let _ = writeln!(s, "Directory {n}");
                let _ = writeln!(s, "Name: {name}");
                if names.is_empty() {
                    let _ = writeln!(s, "Empty directory.");
                }
            }
        }
        for (i, name) in names.iter().enumerate() {
            let _ = writeln!(s, "{}) {name}", i + 1);
        }
        s.push('\n');
    }
    Ok(DumpReport::text(Section::DirectoryTable, s))
}

/// A trailing `/` dumps a directory listing; otherwise the file's bytes.
pub fn dump_entry(ctx: &MountContext, path: &str) -> Result<DumpReport> {
    if path.ends_with('/') {
        let listing = ctx.ls(path)?;
        Ok(DumpReport::text(Section::Entry, listing.to_string()))
    } else {
        Ok(DumpReport {
            section: Section::Entry,
            content: ctx.read_file(path, 0, None)?,
        })
    }
}

