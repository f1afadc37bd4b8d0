use std::io;

use crate::verify::Mismatch;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0} is not installed")]
    ToolMissing(&'static str),
    #[error("{tool} failed: {detail}")]
    BuilderFailed { tool: &'static str, detail: String },
    #[error("oracle failed on {path}: {detail}")]
    Oracle { path: String, detail: String },
    #[error("{} extraction mismatch(es), first: {}", .0.len(), .0.first().map_or("", |m| m.path.as_str()))]
    Mismatch(Vec<Mismatch>),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Reader(#[from] sqfs::Error),
}
