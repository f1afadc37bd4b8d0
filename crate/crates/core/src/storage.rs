//! Random-access byte source over a filesystem image.

use std::fmt;
use std::fs::File;
use std::io;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

enum Backing {
    File(File),
    Memory(Arc<[u8]>),
}

/// An immutable, fixed-size byte source.
///
/// Reads are positional (`pread` on files) so a shared reference can be used
/// from several threads at once.
pub struct BlockSource {
    backing: Backing,
    total_size: u64,
    identity: String,
}

impl fmt::Debug for BlockSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockSource")
            .field("identity", &self.identity)
            .field("total_size", &self.total_size)
            .finish()
    }
}

/// Opens a regular file as an image source.
pub fn open_image(path: impl AsRef<Path>) -> Result<BlockSource> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::ImageNotFound(path.to_owned()),
        io::ErrorKind::PermissionDenied => Error::PermissionDenied(path.to_owned()),
        _ => Error::Io(e),
    })?;
    let meta = file.metadata()?;
    if !meta.is_file() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("{}: not a regular file", path.display()),
        )));
    }
    if meta.len() == 0 {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(BlockSource {
        backing: Backing::File(file),
        total_size: meta.len(),
        identity: path.display().to_string(),
    })
}

impl BlockSource {
    /// Wraps an in-memory image.
    pub fn from_bytes(identity: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        let bytes: Arc<[u8]> = bytes.into().into();
        BlockSource {
            total_size: bytes.len() as u64,
            backing: Backing::Memory(bytes),
            identity: identity.into(),
        }
    }

    /// A second handle onto the same bytes.
    pub fn try_clone(&self) -> Result<BlockSource> {
        let backing = match &self.backing {
            Backing::File(f) => Backing::File(f.try_clone()?),
            Backing::Memory(m) => Backing::Memory(Arc::clone(m)),
        };
        Ok(BlockSource {
            backing,
            total_size: self.total_size,
            identity: self.identity.clone(),
        })
    }

    pub fn total_size(&self) -> u64 {
        self.total_size
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    fn check_bounds(&self, offset: u64, length: u64) -> Result<()> {
        match offset.checked_add(length) {
            Some(end) if end <= self.total_size => Ok(()),
            _ => Err(Error::OutOfBounds {
                offset,
                length,
                total_size: self.total_size,
            }),
        }
    }

    /// Fills `buf` from absolute position `offset`.
    pub fn read_exact_at(&self, offset: u64, buf: &mut [u8]) -> Result<()> {
        self.check_bounds(offset, buf.len() as u64)?;
        match &self.backing {
            Backing::Memory(bytes) => {
                let start = offset as usize;
                buf.copy_from_slice(&bytes[start..start + buf.len()]);
            }
            Backing::File(file) => pread_exact(file, offset, buf)?,
        }
        Ok(())
    }

    /// Returns exactly `length` bytes starting at `offset`.
    pub fn read_at(&self, offset: u64, length: usize) -> Result<Vec<u8>> {
        self.check_bounds(offset, length as u64)?;
        let mut buf = vec![0; length];
        self.read_exact_at(offset, &mut buf)?;
        Ok(buf)
    }
}

#[cfg(unix)]
fn pread_exact(file: &File, offset: u64, buf: &mut [u8]) -> io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn pread_exact(file: &File, mut offset: u64, mut buf: &mut [u8]) -> io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset) {
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn temp_image(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn missing_file_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let err = open_image(dir.path().join("nope.sqfs")).unwrap_err();
        assert!(matches!(err, Error::ImageNotFound(_)), "{err:?}");
    }

    #[test]
    fn empty_file_is_rejected() {
        let f = temp_image(&[]);
        assert!(matches!(open_image(f.path()), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn file_source_reports_size_and_reads() {
        let f = temp_image(b"hsqs0123456789");
        let src = open_image(f.path()).unwrap();
        assert_eq!(src.total_size(), 14);
        assert_eq!(src.read_at(0, 4).unwrap(), b"hsqs");
        assert_eq!(src.read_at(10, 4).unwrap(), b"6789");
        assert!(src.identity().ends_with(&*f.path().file_name().unwrap().to_string_lossy()));
    }

    #[test]
    fn zero_length_and_boundary_reads() {
        let src = BlockSource::from_bytes("mem", vec![1, 2, 3]);
        assert!(src.read_at(0, 0).unwrap().is_empty());
        assert!(src.read_at(3, 0).unwrap().is_empty());
        assert!(matches!(src.read_at(3, 1), Err(Error::OutOfBounds { .. })));
        assert!(matches!(src.read_at(u64::MAX, 2), Err(Error::OutOfBounds { .. })));
    }

    proptest! {
        #[test]
        fn split_reads_concatenate(data in proptest::collection::vec(any::<u8>(), 0..512),
                                   a in 0usize..512, b in 0usize..512) {
            let n = a.min(data.len());
            let m = b.min(data.len() - n);
            let f = temp_image(&data);
            let file_src = if data.is_empty() { None } else { Some(open_image(f.path()).unwrap()) };
            let mem_src = BlockSource::from_bytes("mem", data.clone());
            for src in file_src.iter().chain(std::iter::once(&mem_src)) {
                let mut joined = src.read_at(0, n).unwrap();
                joined.extend(src.read_at(n as u64, m).unwrap());
                prop_assert_eq!(&joined, &src.read_at(0, n + m).unwrap());
                prop_assert_eq!(src.read_at(0, n).unwrap(), src.read_at(0, n).unwrap());
            }
        }
    }
}
