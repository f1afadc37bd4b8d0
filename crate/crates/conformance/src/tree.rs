//! In-memory directory tree used as builder input and extraction oracle.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::os::unix::ffi::OsStrExt;
use std::os::unix::fs::{MetadataExt, PermissionsExt};
use std::path::Path;
use std::time::{Duration, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meta {
    /// Permission bits only (`0o7777` mask).
    pub mode: u16,
    pub uid: u32,
    pub gid: u32,
    pub mtime: u32,
}

impl Meta {
    pub const fn new(mode: u16, mtime: u32) -> Self {
        Meta {
            mode,
            uid: 0,
            gid: 0,
            mtime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dir {
    /// Children keyed by name; byte order matches the on-disk sort.
    pub entries: BTreeMap<Vec<u8>, Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Dir(Dir),
    File(Vec<u8>),
    Symlink(Vec<u8>),
    Fifo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub meta: Meta,
    pub node: Node,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub root_meta: Meta,
    pub root: Dir,
}

/// What a path lookup in the model ends at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup<'a> {
    Dir(&'a Dir),
    File(&'a [u8]),
    Fifo,
    NotFound,
    NotADirectory,
    Loop,
}

/// Symlink substitutions tolerated by [`Tree::lookup`].
pub const MODEL_SYMLINK_LIMIT: u32 = 40;

impl Tree {
    pub fn new(root_meta: Meta) -> Self {
        Tree {
            root_meta,
            root: Dir::default(),
        }
    }

    /// Inserts `entry` at `path`, creating missing parents with `root_meta`.
    pub fn insert(&mut self, path: &str, entry: Entry) {
        let parts: Vec<&str> = path.split('/').filter(|c| !c.is_empty()).collect();
        let (last, parents) = parts.split_last().expect("path has a final component");
        let mut dir = &mut self.root;
        for p in parents {
            let e = dir.entries.entry(p.as_bytes().to_vec()).or_insert_with(|| Entry {
                meta: self.root_meta,
                node: Node::Dir(Dir::default()),
            });
            dir = match &mut e.node {
                Node::Dir(d) => d,
                _ => panic!("{p} in {path} is not a directory"),
            };
        }
        dir.entries.insert(last.as_bytes().to_vec(), entry);
    }

    pub fn add_dir(&mut self, path: &str, meta: Meta) {
        self.insert(path, Entry { meta, node: Node::Dir(Dir::default()) });
    }

    pub fn add_file(&mut self, path: &str, meta: Meta, content: impl Into<Vec<u8>>) {
        self.insert(path, Entry { meta, node: Node::File(content.into()) });
    }

    pub fn add_symlink(&mut self, path: &str, meta: Meta, target: &str) {
        self.insert(path, Entry { meta, node: Node::Symlink(target.as_bytes().to_vec()) });
    }

    /// Every entry as `(absolute path, entry)`, parents before children.
    pub fn walk(&self) -> Vec<(String, &Entry)> {
        fn go<'a>(dir: &'a Dir, prefix: &str, out: &mut Vec<(String, &'a Entry)>) {
            for (name, e) in &dir.entries {
                let path = format!("{prefix}/{}", String::from_utf8_lossy(name));
                out.push((path.clone(), e));
                if let Node::Dir(d) = &e.node {
                    go(d, &path, out);
                }
            }
        }
        let mut out = Vec::new();
        go(&self.root, "", &mut out);
        out
    }

    pub fn files(&self) -> Vec<(String, &[u8])> {
        self.walk()
            .into_iter()
            .filter_map(|(p, e)| match &e.node {
                Node::File(c) => Some((p, c.as_slice())),
                _ => None,
            })
            .collect()
    }

    pub fn symlinks(&self) -> Vec<(String, &[u8])> {
        self.walk()
            .into_iter()
            .filter_map(|(p, e)| match &e.node {
                Node::Symlink(t) => Some((p, t.as_slice())),
                _ => None,
            })
            .collect()
    }

    pub fn inode_count(&self) -> usize {
        self.walk().len() + 1
    }

    pub fn total_file_bytes(&self) -> u64 {
        self.files().iter().map(|(_, c)| c.len() as u64).sum()
    }

    /// Resolves `path` against the model, following every symlink.
    pub fn lookup(&self, path: &str) -> Lookup<'_> {
        let mut queue: Vec<Vec<u8>> = split(path.as_bytes());
        queue.reverse();
        let mut stack: Vec<&Dir> = Vec::new();
        let mut hops = 0;
        let mut current: Option<&Entry> = None;
        while let Some(comp) = queue.pop() {
            if let Some(e) = current.take() {
                match &e.node {
                    Node::Dir(d) => stack.push(d),
                    _ => return Lookup::NotADirectory,
                }
            }
            if comp == b"." {
                continue;
            }
            if comp == b".." {
                stack.pop();
                continue;
            }
            let dir = stack.last().copied().unwrap_or(&self.root);
            let Some(e) = dir.entries.get(&comp) else {
                return Lookup::NotFound;
            };
            if let Node::Symlink(target) = &e.node {
                hops += 1;
                if hops > MODEL_SYMLINK_LIMIT {
                    return Lookup::Loop;
                }
                if target.starts_with(b"/") {
                    stack.clear();
                }
                let mut parts = split(target);
                parts.reverse();
                queue.extend(parts);
                continue;
            }
            current = Some(e);
        }
        match current {
            None => Lookup::Dir(stack.last().copied().unwrap_or(&self.root)),
            Some(e) => match &e.node {
                Node::Dir(d) => Lookup::Dir(d),
                Node::File(c) => Lookup::File(c),
                Node::Fifo => Lookup::Fifo,
                Node::Symlink(_) => unreachable!("symlinks are always substituted"),
            },
        }
    }

    /// Writes the tree below `dest`, which must exist and be empty.
    pub fn materialize(&self, dest: &Path) -> io::Result<()> {
        fn go(dir: &Dir, at: &Path) -> io::Result<()> {
            for (name, e) in &dir.entries {
                let p = at.join(std::ffi::OsStr::from_bytes(name));
                match &e.node {
                    Node::Dir(d) => {
                        fs::create_dir(&p)?;
                        go(d, &p)?;
                    }
                    Node::File(c) => fs::write(&p, c)?,
                    Node::Symlink(t) => std::os::unix::fs::symlink(std::ffi::OsStr::from_bytes(t), &p)?,
                    Node::Fifo => make_fifo(&p)?,
                }
                match e.node {
                    Node::Symlink(_) => {}
                    // Opening a fifo would block until a writer shows up.
                    Node::Fifo => fs::set_permissions(&p, fs::Permissions::from_mode(u32::from(e.meta.mode)))?,
                    _ => apply_meta(&p, e.meta)?,
                }
            }
            Ok(())
        }
        go(&self.root, dest)?;
        apply_meta(dest, self.root_meta)
    }

    /// Reads a directory from disk. Ownership is taken from the files.
    pub fn from_dir(src: &Path) -> io::Result<Tree> {
        fn go(at: &Path) -> io::Result<Dir> {
            let mut dir = Dir::default();
            for de in fs::read_dir(at)? {
                let de = de?;
                let md = fs::symlink_metadata(de.path())?;
                let ft = md.file_type();
                let node = if ft.is_dir() {
                    Node::Dir(go(&de.path())?)
                } else if ft.is_symlink() {
                    Node::Symlink(fs::read_link(de.path())?.as_os_str().as_bytes().to_vec())
                } else if ft.is_file() {
                    Node::File(fs::read(de.path())?)
                } else {
                    Node::Fifo
                };
                dir.entries.insert(de.file_name().as_bytes().to_vec(), Entry { meta: meta_of(&md), node });
            }
            Ok(dir)
        }
        Ok(Tree {
            root_meta: meta_of(&fs::metadata(src)?),
            root: go(src)?,
        })
    }
}

fn split(path: &[u8]) -> Vec<Vec<u8>> {
    path.split(|&b| b == b'/').filter(|c| !c.is_empty()).map(<[u8]>::to_vec).collect()
}

fn meta_of(md: &fs::Metadata) -> Meta {
    Meta {
        mode: (md.mode() & 0o7777) as u16,
        uid: md.uid(),
        gid: md.gid(),
        mtime: md.mtime().clamp(0, i64::from(u32::MAX)) as u32,
    }
}

fn apply_meta(p: &Path, meta: Meta) -> io::Result<()> {
    fs::File::open(p)?.set_modified(UNIX_EPOCH + Duration::from_secs(u64::from(meta.mtime)))?;
    fs::set_permissions(p, fs::Permissions::from_mode(u32::from(meta.mode)))
}

fn make_fifo(p: &Path) -> io::Result<()> {
    let c = std::ffi::CString::new(p.as_os_str().as_bytes())?;
    // SAFETY: `c` is a valid NUL-terminated path for the duration of the call.
    if unsafe { libc::mkfifo(c.as_ptr(), 0o644) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}
