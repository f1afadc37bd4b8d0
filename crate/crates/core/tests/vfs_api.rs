mod common;

use common::{blob, mount, tree_files, README};
use proptest::prelude::*;
use sqfs::vfs::{self, lifecycle, ListKind, MountContext, MAX_SYMLINK_DEPTH};
use sqfs::{BlockSource, Error, ErrorClass};

fn walk_dirs(ctx: &MountContext) -> Vec<String> {
    let mut out = vec!["/".to_owned()];
    let mut i = 0;
    while i < out.len() {
        let dir = out[i].clone();
        for e in ctx.opendir(&dir).unwrap() {
            let e = e.unwrap();
            if e.entry_type.is_dir() {
                out.push(format!("{dir}{}/", e.name_lossy()));
            }
        }
        i += 1;
    }
    out
}

#[test]
fn probe_reads_superblock_and_root() {
    let ctx = mount("tree.sqfs");
    let sb = ctx.superblock();
    assert_eq!(sb.magic, 0x7371_7368);
    assert_eq!(sb.block_size, 1 << sb.block_log);
    assert!(ctx.root().is_dir());
    assert_eq!(ctx.root().header.inode_number, sb.inode_count);
    ctx.close();
}

#[test]
fn probe_rejects_other_formats() {
    for bytes in [vec![0u8; 4096], b"sqsh".repeat(64), vec![0x7f, b'E', b'L', b'F']] {
        let r = vfs::probe(BlockSource::from_bytes("junk", bytes));
        assert!(matches!(r, Err(Error::BadMagic(_))), "{:?}", r.err());
    }
    let r = vfs::probe(BlockSource::from_bytes("short", b"sq".to_vec()));
    assert!(matches!(r, Err(ref e) if e.class() == ErrorClass::Probe));
}

#[test]
fn probe_rejects_bad_version_and_block_log() {
    let image = std::fs::read(common::fixture("source-dir.sqfs")).unwrap();
    let mut v3 = image.clone();
    v3[28..30].copy_from_slice(&3u16.to_le_bytes());
    let r = vfs::probe(BlockSource::from_bytes("v3", v3));
    assert!(matches!(r, Err(Error::UnsupportedVersion { major: 3, .. })));

    let mut log = image.clone();
    log[22..24].copy_from_slice(&16u16.to_le_bytes());
    assert!(matches!(vfs::probe(BlockSource::from_bytes("log", log)), Err(Error::CorruptSuperblock(_))));

    let mut xz = image;
    xz[20..22].copy_from_slice(&4u16.to_le_bytes());
    let r = vfs::probe(BlockSource::from_bytes("xz", xz));
    assert!(matches!(r, Err(Error::UnsupportedCompression(_))));
}

#[test]
fn files_read_back_exactly() {
    let ctx = mount("tree.sqfs");
    for (path, want) in tree_files() {
        assert_eq!(ctx.size(path).unwrap(), want.len() as u64, "{path}");
        assert_eq!(ctx.read_file(path, 0, None).unwrap(), want, "{path}");
    }
    ctx.close();
}

#[test]
fn reads_are_clamped_at_eof() {
    let ctx = mount("tree.sqfs");
    let blob = blob();
    assert_eq!(ctx.read_file("/data/blob", 299_990, Some(100)).unwrap(), blob[299_990..]);
    assert!(ctx.read_file("/data/blob", 300_000, Some(1)).unwrap().is_empty());
    let r = ctx.read_file("/data/blob", 300_001, None);
    assert!(matches!(r, Err(Error::OffsetPastEnd { offset: 300_001, size: 300_000 })));
    ctx.close();
}

#[test]
fn symlinks_resolve_like_a_unix_path_walk() {
    let ctx = mount("tree.sqfs");
    for path in ["/links/abs", "/links/rel", "/links/dirlink/readme.txt", "/docs/../links/rel", "/./docs/readme.txt"] {
        assert_eq!(ctx.read_file(path, 0, None).unwrap(), README, "{path}");
        assert_eq!(ctx.resolve_path(path).unwrap().canonical_path(), "/docs/readme.txt");
    }
    assert_eq!(ctx.resolve_path("/links/dirlink/").unwrap().canonical_path(), "/docs");
    assert!(matches!(ctx.resolve_path("/links/dangling"), Err(Error::NotFound(_))));
    assert!(matches!(ctx.resolve_path("/links/loop_a"), Err(Error::SymlinkLoop(_))));
    assert!(matches!(ctx.resolve_path("/links/abs/"), Err(Error::NotADirectory(_))));
    assert!(matches!(ctx.resolve_path("/docs/readme.txt/x"), Err(Error::NotADirectory(_))));
    assert!(matches!(ctx.resolve_path("/nope"), Err(Error::NotFound(_))));
    let link = ctx.resolve_path_nofollow("/links/rel").unwrap();
    assert_eq!(link.inode.symlink_target(), Some(&b"../docs/readme.txt"[..]));
    assert!(ctx.resolve_path("/links/rel").unwrap().symlink_depth_used <= MAX_SYMLINK_DEPTH);
    ctx.close();
}

#[test]
fn directories_and_special_paths() {
    let ctx = mount("tree.sqfs");
    assert!(matches!(ctx.read_file("/docs", 0, None), Err(Error::IsADirectory(_))));
    assert!(matches!(ctx.size("/docs/"), Err(Error::IsADirectory(_))));
    assert!(matches!(ctx.opendir("/docs/readme.txt"), Err(Error::NotADirectory(_))));
    assert_eq!(ctx.resolve_path("/..").unwrap().canonical_path(), "/");
    assert!(matches!(ctx.resolve_path(""), Err(Error::NotFound(_))));
    assert_eq!(ctx.opendir("/empty/").unwrap().count(), 0);
    ctx.close();
}

#[test]
fn ls_counts_links_as_files() {
    let ctx = mount("tree.sqfs");
    let root = ctx.ls("/").unwrap();
    let names: Vec<&str> = root.entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["data", "deep", "docs", "empty", "links"]);
    assert_eq!((root.files, root.dirs), (0, 5));

    let links = ctx.ls("/links").unwrap();
    assert!(links.entries.iter().all(|e| e.kind == ListKind::Symlink));
    assert_eq!((links.files, links.dirs), (6, 0));

    let data = ctx.ls("/data/").unwrap().to_string();
    assert_eq!(
        data,
        "   300000   blob\n        0   empty.bin\n   262144   zeros\n\n3 file(s), 0 dir(s)\n"
    );
    ctx.close();
}

#[test]
fn readdir_agrees_with_resolve() {
    let ctx = mount("tree.sqfs");
    let mut seen = 0;
    for dir in walk_dirs(&ctx) {
        let mut stream = ctx.opendir(&dir).unwrap();
        let mut names = Vec::new();
        while let Some(e) = stream.readdir().unwrap() {
            let node = ctx.resolve_path_nofollow(&format!("{dir}{}", e.name_lossy())).unwrap();
            assert_eq!(node.inode.header.inode_number, e.inode_number);
            assert_eq!(node.inode_ref, e.inode_ref);
            names.push(e.name);
        }
        assert_eq!(stream.emitted(), names.len());
        assert!(names.windows(2).all(|w| w[0] < w[1]), "{dir} not sorted");
        seen += names.len();
        stream.closedir();
    }
    assert_eq!(seen as u32 + 1, ctx.superblock().inode_count);
    ctx.close();
}

#[test]
fn canonical_path_is_a_fixpoint() {
    let ctx = mount("tree.sqfs");
    for path in ["/links/abs", "/links/rel", "/links/dirlink", "/deep/a/b/../b/c/leaf.txt", "/"] {
        let first = ctx.resolve_path(path).unwrap();
        let again = ctx.resolve_path(&first.canonical_path()).unwrap();
        assert_eq!(first.inode, again.inode, "{path}");
        assert_eq!(first.canonical_path(), again.canonical_path());
    }
    ctx.close();
}

#[test]
fn lifecycle_is_balanced() {
    let before = lifecycle::snapshot();
    {
        let ctx = mount("tree.sqfs");
        let s = ctx.opendir("/").unwrap();
        let t = ctx.opendir("/data").unwrap();
        assert_eq!(lifecycle::snapshot().live_streams() - before.live_streams(), 2);
        s.closedir();
        drop(t);
        ctx.ls("/links").unwrap();
        ctx.close();
    }
    let after = lifecycle::snapshot();
    assert_eq!(after.live_mounts(), before.live_mounts());
    assert_eq!(after.live_streams(), before.live_streams());
    assert_eq!(after.mounts_opened - before.mounts_opened, 1);
}

#[test]
fn failed_probe_is_not_counted() {
    let before = lifecycle::snapshot();
    let _ = vfs::probe(BlockSource::from_bytes("junk", vec![0u8; 96]));
    assert_eq!(lifecycle::snapshot(), before);
}

#[test]
fn contexts_are_shareable_across_threads() {
    let ctx = mount("tree.sqfs");
    std::thread::scope(|s| {
        for _ in 0..4 {
            s.spawn(|| {
                for (path, want) in tree_files() {
                    assert_eq!(ctx.read_file(path, 0, None).unwrap(), want);
                }
            });
        }
    });
    ctx.close();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunked_reads_concatenate(k in 0u64..=300_000) {
        let ctx = mount("tree.sqfs");
        let mut joined = ctx.read_file("/data/blob", 0, Some(k)).unwrap();
        joined.extend(ctx.read_file("/data/blob", k, None).unwrap());
        prop_assert_eq!(joined, blob());
        ctx.close();
    }

    #[test]
    fn windowed_reads_match_slices(start in 0u64..262_144, len in 0u64..200_000) {
        let ctx = mount("tree.sqfs");
        let got = ctx.read_file("/data/zeros", start, Some(len)).unwrap();
        prop_assert_eq!(got.len() as u64, len.min(262_144 - start));
        prop_assert!(got.iter().all(|&b| b == 0));
        ctx.close();
    }

    #[test]
    fn non_squashfs_bytes_never_probe(mut bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        if bytes.len() >= 4 && bytes[..4] == *b"hsqs" {
            bytes[0] = b'x';
        }
        prop_assert!(vfs::probe(BlockSource::from_bytes("random", bytes)).is_err());
    }

    #[test]
    fn damaged_images_fail_cleanly(at in 96usize..4096, value in any::<u8>()) {
        let mut image = std::fs::read(common::fixture("source-dir.sqfs")).unwrap();
        image[at] = value;
        if let Ok(ctx) = vfs::probe(BlockSource::from_bytes("damaged", image)) {
            for path in ["/", "/dir_example", "/file.txt", "/slink"] {
                let _ = ctx.ls(path);
                let _ = ctx.read_file(path, 0, None);
            }
            ctx.close();
        }
    }
}
