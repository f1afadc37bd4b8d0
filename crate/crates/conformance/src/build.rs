//! Image builders: the system `mksquashfs`, the in-crate reference builder
//! and the `backhand` writer.

use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;

use backhand::compression::Compressor;
use backhand::{FilesystemCompressor, FilesystemWriter, NodeHeader};
use tempfile::TempDir;

use crate::error::{Error, Result};
use crate::mkimage::{self, RefOptions};
use crate::tree::{Dir, Node, Tree};

/// `mksquashfs` options exercised by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuildFlag {
    NoInodeCompression,
    NoDataCompression,
    NoFragmentCompression,
    NoFragments,
    AlwaysUseFragments,
    NoExports,
}

impl BuildFlag {
    pub const ALL: [BuildFlag; 6] = [
        BuildFlag::NoInodeCompression,
        BuildFlag::NoDataCompression,
        BuildFlag::NoFragmentCompression,
        BuildFlag::NoFragments,
        BuildFlag::AlwaysUseFragments,
        BuildFlag::NoExports,
    ];

    pub fn arg(self) -> &'static str {
        match self {
            BuildFlag::NoInodeCompression => "-noI",
            BuildFlag::NoDataCompression => "-noD",
            BuildFlag::NoFragmentCompression => "-noF",
            BuildFlag::NoFragments => "-no-fragments",
            BuildFlag::AlwaysUseFragments => "-always-use-fragments",
            BuildFlag::NoExports => "-no-exports",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOptions {
    pub flags: Vec<BuildFlag>,
    pub block_size: u32,
    pub mkfs_time: u32,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            flags: Vec::new(),
            block_size: 131_072,
            // 2020-08-04 13:46:14 UTC
            mkfs_time: 1_596_548_774,
        }
    }
}

impl BuildOptions {
    pub fn with_flags(flags: &[BuildFlag]) -> Self {
        BuildOptions {
            flags: flags.to_vec(),
            ..Default::default()
        }
    }

    fn has(&self, f: BuildFlag) -> bool {
        self.flags.contains(&f)
    }

    pub fn reference(&self) -> RefOptions {
        RefOptions {
            block_size: self.block_size,
            mkfs_time: self.mkfs_time,
            no_inode_compression: self.has(BuildFlag::NoInodeCompression),
            no_data_compression: self.has(BuildFlag::NoDataCompression),
            no_fragment_compression: self.has(BuildFlag::NoFragmentCompression),
            no_fragments: self.has(BuildFlag::NoFragments),
            always_use_fragments: self.has(BuildFlag::AlwaysUseFragments),
            no_exports: self.has(BuildFlag::NoExports),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builder {
    /// `mksquashfs` from squashfs-tools.
    Mksquashfs,
    /// [`mkimage::build`]; same layout as `mksquashfs`, always available.
    Reference,
    /// The `backhand` crate's writer. Its inode numbering and table layout
    /// differ from `mksquashfs` and it ignores [`BuildFlag`]s.
    Backhand,
}

impl fmt::Display for Builder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Builder::Mksquashfs => "mksquashfs",
            Builder::Reference => "reference",
            Builder::Backhand => "backhand",
        })
    }
}

pub fn tool_available(tool: &str) -> bool {
    Command::new(tool)
        .arg("-version")
        .output()
        .is_ok_and(|o| o.status.success() || !o.stdout.is_empty())
}

impl Builder {
    /// Honours `SQFS_BUILDER` (`mksquashfs`, `reference`, `backhand`);
    /// otherwise `mksquashfs` when installed, else the reference builder.
    pub fn detect() -> Builder {
        match std::env::var("SQFS_BUILDER").as_deref() {
            Ok("mksquashfs") => Builder::Mksquashfs,
            Ok("reference") => Builder::Reference,
            Ok("backhand") => Builder::Backhand,
            _ if tool_available("mksquashfs") => Builder::Mksquashfs,
            _ => Builder::Reference,
        }
    }

    /// Whether images follow the `mksquashfs` layout (inode numbering,
    /// table order, honoured flags).
    pub fn mksquashfs_layout(self) -> bool {
        matches!(self, Builder::Mksquashfs | Builder::Reference)
    }
}

/// An image plus the tree it was built from, in a private temp directory
/// that is deleted on drop.
#[derive(Debug)]
pub struct BuiltImage {
    pub image: PathBuf,
    pub tree: Tree,
    pub builder: Builder,
    pub options: BuildOptions,
    dir: TempDir,
}

impl BuiltImage {
    pub fn workdir(&self) -> &Path {
        self.dir.path()
    }

    pub fn bytes(&self) -> Result<Vec<u8>> {
        Ok(fs::read(&self.image)?)
    }
}

/// Builds `tree` into an image with `builder`.
pub fn build_image(tree: &Tree, options: &BuildOptions, builder: Builder) -> Result<BuiltImage> {
    let dir = tempfile::tempdir()?;
    let image = dir.path().join("image.sqfs");
    match builder {
        Builder::Mksquashfs => run_mksquashfs(tree, options, dir.path(), &image)?,
        Builder::Reference => fs::write(&image, mkimage::build(tree, &options.reference()))?,
        Builder::Backhand => fs::write(&image, build_backhand(tree, options)?)?,
    }
    Ok(BuiltImage {
        image,
        tree: tree.clone(),
        builder,
        options: options.clone(),
        dir,
    })
}

fn run_mksquashfs(tree: &Tree, options: &BuildOptions, work: &Path, image: &Path) -> Result<()> {
    if !tool_available("mksquashfs") {
        return Err(Error::ToolMissing("mksquashfs"));
    }
    let src = work.join("source-dir");
    fs::create_dir(&src)?;
    tree.materialize(&src)?;
    let out = Command::new("mksquashfs")
        .arg(&src)
        .arg(image)
        .args(["-comp", "gzip", "-noappend", "-no-progress", "-no-xattrs", "-quiet"])
        .args(["-b", &options.block_size.to_string()])
        .args(["-mkfs-time", &options.mkfs_time.to_string()])
        .args(options.flags.iter().map(|f| f.arg()))
        .output()?;
    // Sources are only needed while building.
    fs::remove_dir_all(&src)?;
    if !out.status.success() {
        return Err(Error::BuilderFailed {
            tool: "mksquashfs",
            detail: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
        });
    }
    Ok(())
}

fn build_backhand(tree: &Tree, options: &BuildOptions) -> Result<Vec<u8>> {
    let failed = |e: backhand::BackhandError| Error::BuilderFailed {
        tool: "backhand",
        detail: e.to_string(),
    };
    let mut fs = FilesystemWriter::default();
    fs.set_block_size(options.block_size);
    fs.set_time(options.mkfs_time);
    fs.set_compressor(FilesystemCompressor::new(Compressor::Gzip, None).map_err(failed)?);
    fs.set_root_mode(tree.root_meta.mode);
    fs.set_root_uid(tree.root_meta.uid);
    fs.set_root_gid(tree.root_meta.gid);

    fn add<'c>(fs: &mut FilesystemWriter<'_, '_, 'c>, dir: &'c Dir, prefix: &str) -> Result<(), backhand::BackhandError> {
        for (name, e) in &dir.entries {
            let path = format!("{prefix}/{}", String::from_utf8_lossy(name));
            let h = NodeHeader::new(e.meta.mode, e.meta.uid, e.meta.gid, e.meta.mtime);
            match &e.node {
                Node::Dir(d) => {
                    fs.push_dir(&path, h)?;
                    add(fs, d, &path)?;
                }
                Node::File(c) => fs.push_file(Cursor::new(c.as_slice()), &path, h)?,
                Node::Symlink(t) => fs.push_symlink(String::from_utf8_lossy(t).into_owned(), &path, h)?,
                Node::Fifo => fs.push_fifo(&path, h)?,
            }
        }
        Ok(())
    }
    add(&mut fs, &tree.root, "").map_err(failed)?;
    let mut out = Cursor::new(Vec::new());
    fs.write(&mut out).map_err(failed)?;
    Ok(out.into_inner())
}
