//! Conformance harness for the `sqfs` reader: deterministic corpora, image
//! builders (`mksquashfs`, an in-crate reference builder, `backhand`) and
//! extraction checks against an independent reader.

pub mod build;
pub mod corpus;
mod error;
pub mod mkimage;
pub mod tree;
pub mod verify;

pub use build::{build_image, BuildFlag, BuildOptions, BuiltImage, Builder};
pub use corpus::{CorpusSpec, SizeClass, SymlinkPlan};
pub use error::{Error, Result};
pub use tree::{Meta, Tree};
pub use verify::{verify_extraction, Mismatch, Oracle, VerifyReport};

/// Generates `spec`'s tree and builds it.
pub fn build_corpus(spec: &CorpusSpec, options: &BuildOptions, builder: Builder) -> Result<BuiltImage> {
    build_image(&spec.generate(), options, builder)
}
