//! Checks everything the reader extracts against the source tree and an
//! independent reader.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::process::Command;

use backhand::{FilesystemReader, InnerNode};
use sqfs::vfs::{self, MountContext};

use crate::build::tool_available;
use crate::error::{Error, Result};
use crate::tree::{Lookup, Node, Tree};

/// Second opinion on file contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    /// `unsquashfs -cat`.
    Unsquashfs,
    /// The `backhand` crate's reader.
    Backhand,
}

impl Oracle {
    pub fn detect() -> Oracle {
        if tool_available("unsquashfs") {
            Oracle::Unsquashfs
        } else {
            Oracle::Backhand
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Oracle::Unsquashfs => "unsquashfs",
            Oracle::Backhand => "backhand",
        }
    }

    /// Contents of each of `paths` as the oracle reads them.
    pub fn extract(self, image: &Path, paths: &[&str]) -> Result<HashMap<String, Vec<u8>>> {
        match self {
            Oracle::Unsquashfs => paths
                .iter()
                .map(|p| {
                    let out = Command::new("unsquashfs").arg("-cat").arg(image).arg(p).output()?;
                    if !out.status.success() {
                        return Err(Error::Oracle {
                            path: (*p).to_owned(),
                            detail: String::from_utf8_lossy(&out.stderr).trim().to_owned(),
                        });
                    }
                    Ok(((*p).to_owned(), out.stdout))
                })
                .collect(),
            Oracle::Backhand => {
                let oracle_err = |path: &str, e: &dyn std::fmt::Display| Error::Oracle {
                    path: path.to_owned(),
                    detail: e.to_string(),
                };
                let fs = FilesystemReader::from_reader(BufReader::new(File::open(image)?))
                    .map_err(|e| oracle_err("/", &e))?;
                let wanted: std::collections::HashSet<&str> = paths.iter().copied().collect();
                let mut out = HashMap::new();
                for node in fs.files() {
                    let path = node.fullpath.to_string_lossy().into_owned();
                    if let (InnerNode::File(f), true) = (&node.inner, wanted.contains(path.as_str())) {
                        let mut buf = Vec::new();
                        fs.file(f)
                            .reader()
                            .read_to_end(&mut buf)
                            .map_err(|e| oracle_err(&path, &e))?;
                        out.insert(path, buf);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub oracle: &'static str,
    pub files_checked: usize,
    pub bytes_checked: u64,
    pub links_checked: usize,
    pub dirs_checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn into_result(self) -> Result<VerifyReport> {
        if self.mismatches.is_empty() {
            Ok(self)
        } else {
            Err(Error::Mismatch(self.mismatches))
        }
    }

    fn flag(&mut self, path: &str, reason: impl Into<String>) {
        self.mismatches.push(Mismatch {
            path: path.to_owned(),
            reason: reason.into(),
        });
    }
}

fn check_file(ctx: &MountContext, report: &mut VerifyReport, path: &str, expected: &[u8]) {
    match ctx.size(path) {
        Ok(n) if n == expected.len() as u64 => {}
        Ok(n) => report.flag(path, format!("size {n}, expected {}", expected.len())),
        Err(e) => report.flag(path, format!("size: {e}")),
    }
    match ctx.read_file(path, 0, None) {
        Ok(data) if data == expected => {}
        Ok(data) => report.flag(path, format!("content differs ({} bytes read)", data.len())),
        Err(e) => report.flag(path, format!("read: {e}")),
    }
}

/// Extracts every file and symlink of `tree` from `image` and compares
/// against the tree and against [`Oracle::detect`].
pub fn verify_extraction(image: &Path, tree: &Tree) -> Result<VerifyReport> {
    verify_with(image, tree, Oracle::detect())
}

pub fn verify_with(image: &Path, tree: &Tree, oracle: Oracle) -> Result<VerifyReport> {
    let ctx = vfs::probe(sqfs::open_image(image)?)?;
    let mut report = VerifyReport {
        oracle: oracle.name(),
        ..Default::default()
    };

    let files = tree.files();
    let paths: Vec<&str> = files.iter().map(|(p, _)| p.as_str()).collect();
    let from_oracle = oracle.extract(image, &paths)?;
    for (path, content) in &files {
        check_file(&ctx, &mut report, path, content);
        match from_oracle.get(path) {
            Some(o) if o == content => {}
            Some(_) => report.flag(path, format!("{} output differs from the source", oracle.name())),
            None => report.flag(path, format!("{} did not produce the file", oracle.name())),
        }
        report.files_checked += 1;
        report.bytes_checked += content.len() as u64;
    }

    for (path, _) in tree.symlinks() {
        report.links_checked += 1;
        let got = ctx.resolve_path(&path);
        match (tree.lookup(&path), got) {
            (Lookup::File(c), Ok(_)) => check_file(&ctx, &mut report, &path, c),
            (Lookup::Dir(_), Ok(n)) if n.inode.is_dir() => {}
            (Lookup::Fifo, Ok(n)) if !n.inode.is_dir() && !n.inode.is_file() => {}
            (Lookup::NotFound, Err(sqfs::Error::NotFound(_))) => {}
            (Lookup::NotADirectory, Err(sqfs::Error::NotADirectory(_))) => {}
            (Lookup::Loop, Err(sqfs::Error::SymlinkLoop(_))) => {}
            (want, got) => report.flag(&path, format!("expected {want:?}, resolved to {got:?}")),
        }
    }

    let mut dirs = vec![("/".to_owned(), &tree.root)];
    for (p, e) in tree.walk() {
        if let Node::Dir(d) = &e.node {
            dirs.push((p, d));
        }
    }
    for (path, dir) in dirs {
        report.dirs_checked += 1;
        match ctx.ls(&path) {
            Ok(listing) => {
                let names: Vec<String> = listing.entries.iter().map(|e| e.name.clone()).collect();
                let want: Vec<String> =
                    dir.entries.keys().map(|k| String::from_utf8_lossy(k).into_owned()).collect();
                if names != want {
                    report.flag(&path, format!("listing {names:?}, expected {want:?}"));
                }
            }
            Err(e) => report.flag(&path, format!("ls: {e}")),
        }
    }
    ctx.close();
    Ok(report)
}
