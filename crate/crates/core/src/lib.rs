//! Read-only SquashFS 4.0 reader.
//!
//! Layers, bottom up: [`storage`] (random-access image bytes), [`ondisk`]
//! (structure decoding), [`codec`] (zlib), [`metadata`] (metadata blocks and
//! lookup tables), [`vfs`] (the probe/ls/size/read/opendir driver API) and
//! [`dump`] (human-readable section dumps). [`cli`] ties them to the `sqfs`
//! command.

pub mod cli;
pub mod codec;
pub mod dump;
pub mod error;
mod filedata;
pub mod metadata;
pub mod ondisk;
pub mod storage;
pub mod vfs;

pub use error::{Error, ErrorClass, Result};
pub use storage::{open_image, BlockSource};
pub use vfs::{probe, DirStream, Listing, MountContext, ResolvedNode};
