//! One-shot buffer-to-buffer decompression.

use std::fmt;

use flate2::{Decompress, FlushDecompress, Status};

use crate::error::{Error, Result};

/// Compressor id stored in the superblock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressionId {
    /// Id 1. mksquashfs calls it "gzip" but the streams are raw zlib.
    Zlib,
    Lzma,
    Lzo,
    Xz,
    Lz4,
    Zstd,
    Unknown(u16),
}

impl CompressionId {
    pub fn from_raw(id: u16) -> Self {
        match id {
            1 => CompressionId::Zlib,
            2 => CompressionId::Lzma,
            3 => CompressionId::Lzo,
            4 => CompressionId::Xz,
            5 => CompressionId::Lz4,
            6 => CompressionId::Zstd,
            other => CompressionId::Unknown(other),
        }
    }

    pub fn raw(self) -> u16 {
        match self {
            CompressionId::Zlib => 1,
            CompressionId::Lzma => 2,
            CompressionId::Lzo => 3,
            CompressionId::Xz => 4,
            CompressionId::Lz4 => 5,
            CompressionId::Zstd => 6,
            CompressionId::Unknown(id) => id,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CompressionId::Zlib => "zlib",
            CompressionId::Lzma => "lzma",
            CompressionId::Lzo => "lzo",
            CompressionId::Xz => "xz",
            CompressionId::Lz4 => "lz4",
            CompressionId::Zstd => "zstd",
            CompressionId::Unknown(_) => "unknown",
        }
    }

    pub fn is_supported(self) -> bool {
        self == CompressionId::Zlib
    }
}

impl fmt::Display for CompressionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_ascii_uppercase())
    }
}

/// Inflates `input` completely, refusing to produce more than `max_output` bytes.
pub fn decompress(id: CompressionId, input: &[u8], max_output: usize) -> Result<Vec<u8>> {
    if !id.is_supported() {
        return Err(Error::UnsupportedCompression(id.name()));
    }
    if input.is_empty() {
        return Err(Error::CorruptStream("empty input".into()));
    }
    inflate_zlib(input, max_output)
}

fn inflate_zlib(input: &[u8], max_output: usize) -> Result<Vec<u8>> {
    let mut inflater = Decompress::new(true);
    // One spare byte lets an oversized stream show itself instead of
    // looking like a truncated one.
    let mut out = Vec::with_capacity(max_output + 1);
    loop {
        let consumed = inflater.total_in() as usize;
        let status = inflater
            .decompress_vec(&input[consumed..], &mut out, FlushDecompress::Finish)
            .map_err(|e| Error::CorruptStream(e.to_string()))?;
        if out.len() > max_output {
            return Err(Error::OutputOverflow { limit: max_output });
        }
        match status {
            Status::StreamEnd => return Ok(out),
            _ if inflater.total_in() as usize == input.len() => {
                return Err(Error::CorruptStream("stream ends prematurely".into()))
            }
            _ if out.len() == out.capacity() => {
                return Err(Error::OutputOverflow { limit: max_output })
            }
            Status::Ok | Status::BufError => {
                if inflater.total_in() as usize == consumed {
                    return Err(Error::CorruptStream("inflater made no progress".into()));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::ZlibEncoder;
    use flate2::Compression;
    use proptest::prelude::*;
    use std::io::Write;

    fn deflate(data: &[u8]) -> Vec<u8> {
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::best());
        enc.write_all(data).unwrap();
        enc.finish().unwrap()
    }

    #[test]
    fn hello_world_stream() {
        let packed = deflate(b"Hello world\n");
        let out = decompress(CompressionId::Zlib, &packed, 8192).unwrap();
        assert_eq!(out.len(), 12);
        assert_eq!(out, b"Hello world\n");
    }

    #[test]
    fn empty_input_is_corrupt() {
        assert!(matches!(
            decompress(CompressionId::Zlib, &[], 10),
            Err(Error::CorruptStream(_))
        ));
    }

    #[test]
    fn garbage_and_truncation_are_corrupt() {
        assert!(matches!(
            decompress(CompressionId::Zlib, b"definitely not zlib", 100),
            Err(Error::CorruptStream(_))
        ));
        let packed = deflate(&[7u8; 4000]);
        assert!(matches!(
            decompress(CompressionId::Zlib, &packed[..packed.len() - 3], 8192),
            Err(Error::CorruptStream(_))
        ));
    }

    #[test]
    fn overflow_is_detected() {
        let packed = deflate(&[0u8; 8193]);
        assert!(matches!(
            decompress(CompressionId::Zlib, &packed, 8192),
            Err(Error::OutputOverflow { limit: 8192 })
        ));
        assert_eq!(decompress(CompressionId::Zlib, &packed, 8193).unwrap().len(), 8193);
    }

    #[test]
    fn other_codecs_are_named_and_refused() {
        for (raw, name) in [(2, "lzma"), (3, "lzo"), (4, "xz"), (5, "lz4"), (6, "zstd")] {
            let id = CompressionId::from_raw(raw);
            assert_eq!(id.raw(), raw);
            match decompress(id, &[1, 2, 3], 10) {
                Err(Error::UnsupportedCompression(n)) => assert_eq!(n, name),
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(CompressionId::Zlib.to_string(), "ZLIB");
    }

    #[test]
    fn random_64k_round_trip() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let payload: Vec<u8> = (0..64 * 1024)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 24) as u8
            })
            .collect();
        let out = decompress(CompressionId::Zlib, &deflate(&payload), 64 * 1024).unwrap();
        assert_eq!(out, payload);
    }

    proptest! {
        #[test]
        fn inflate_inverts_deflate(data in proptest::collection::vec(any::<u8>(), 0..131072usize)) {
            let out = decompress(CompressionId::Zlib, &deflate(&data), 131072).unwrap();
            prop_assert_eq!(out, data);
        }
    }
}
