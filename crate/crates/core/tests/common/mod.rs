#![allow(dead_code)]

use std::path::PathBuf;

use sqfs::vfs::{self, MountContext};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn mount(name: &str) -> MountContext {
    vfs::probe(sqfs::open_image(fixture(name)).unwrap()).unwrap()
}

/// Contents of `/data/blob` in `tree.sqfs`.
pub fn blob() -> Vec<u8> {
    (0..300_000usize).map(|i| (i * 31 + i / 7) as u8).collect()
}

pub const README: &[u8] = b"squashfs fixture\n";

/// Every regular file in `tree.sqfs` with its contents.
pub fn tree_files() -> Vec<(&'static str, Vec<u8>)> {
    vec![
        ("/docs/readme.txt", README.to_vec()),
        ("/data/blob", blob()),
        ("/data/zeros", vec![0; 262_144]),
        ("/data/empty.bin", Vec::new()),
        ("/deep/a/b/c/leaf.txt", b"leaf\n".to_vec()),
    ]
}
