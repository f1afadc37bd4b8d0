mod common;

use common::{mount, README};
use sqfs::dump::{self, DumpOptions, Section};
use sqfs::ondisk::{self, InodeKind};

fn field<'t>(text: &'t str, key: &str) -> &'t str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no {key} line"))
}

#[test]
fn superblock_fields_mirror_the_parsed_superblock() {
    for name in ["source-dir.sqfs", "tree.sqfs"] {
        let ctx = mount(name);
        let sb = ctx.superblock().clone();
        let text = dump::dump_superblock(&ctx, DumpOptions::default()).as_text().into_owned();
        assert!(text.starts_with("--- SUPER BLOCK INFORMATION ---\nMagic number: sqsh\n"));
        assert_eq!(field(&text, "Number of inodes"), sb.inode_count.to_string());
        assert_eq!(field(&text, "Number of fragments"), sb.fragment_count.to_string());
        assert_eq!(field(&text, "Number of ids"), sb.id_count.to_string());
        assert_eq!(field(&text, "Block log"), sb.block_log.to_string());
        assert_eq!(field(&text, "Block size"), "131072 (128 KiB)");
        assert_eq!(field(&text, "Compression type"), "ZLIB");
        assert_eq!(field(&text, "Super Block Flags"), format!("0x{:x}", sb.flags));
        assert_eq!(field(&text, "Major/Minor numbers"), "4/0");
        assert_eq!(field(&text, "Root inode"), format!("0x{:x}", sb.root_inode_ref.raw()));
        assert_eq!(field(&text, "Bytes used"), sb.bytes_used.to_string());
        assert_eq!(field(&text, "Id table start"), format!("0x{:x}", sb.id_table_start));
        assert_eq!(field(&text, "(xattr) Id table start"), "0xffffffffffffffff");
        assert_eq!(field(&text, "Inode table start"), format!("0x{:x}", sb.inode_table_start));
        assert_eq!(field(&text, "Directory table start"), format!("0x{:x}", sb.directory_table_start));
        assert_eq!(field(&text, "Fragment table start"), format!("0x{:x}", sb.fragment_table_start));
        assert_eq!(field(&text, "Lookup table start"), format!("0x{:x}", sb.export_table_start));
        assert!(text.ends_with("--- SUPER BLOCK FLAGS ---\nDuplicates\nExportable\n"));
        ctx.close();
    }
}

#[test]
fn creation_date_is_utc() {
    let ctx = mount("source-dir.sqfs");
    let text = dump::dump_superblock(&ctx, DumpOptions::default()).as_text().into_owned();
    assert_eq!(field(&text, "Filesystem creation date"), "Tue 2020-08-04 13:46:14 UTC");
    ctx.close();
}

#[test]
fn dumps_are_deterministic() {
    let ctx = mount("tree.sqfs");
    let opts = DumpOptions::default();
    let a = dump::dump_inode_table(&ctx, opts).unwrap();
    let b = dump::dump_inode_table(&ctx, opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(dump::dump_directory_table(&ctx).unwrap(), dump::dump_directory_table(&ctx).unwrap());
    ctx.close();
}

#[test]
fn inode_dump_has_one_section_per_inode() {
    let ctx = mount("tree.sqfs");
    let count = ctx.superblock().inode_count;
    let report = dump::dump_inode_table(&ctx, DumpOptions::default()).unwrap();
    assert_eq!(report.section, Section::InodeTable);
    let text = report.as_text();
    let headers: Vec<&str> = text.lines().filter(|l| l.starts_with("{Inode ")).collect();
    assert_eq!(headers.len() as u32, count);
    for (i, h) in headers.iter().enumerate() {
        assert_eq!(*h, format!("{{Inode {}/{count}}}", i + 1));
    }
    assert!(text.contains("Inode type: Basic Symlink\nHard links: 1\nSymlink size: 18\nTarget path: ../docs/readme.txt\n"));
    ctx.close();
}

#[test]
fn inode_table_is_ascending_and_ends_with_root() {
    for name in ["source-dir.sqfs", "tree.sqfs"] {
        let ctx = mount(name);
        let sb = ctx.superblock().clone();
        let (table, _) = ctx.meta().read_whole(ctx.inode_table()).unwrap();
        let mut at = 0;
        let mut numbers = Vec::new();
        let mut last = None;
        while at < table.len() {
            let (inode, used) = ondisk::parse_inode(&table, at, sb.block_size).unwrap();
            numbers.push(inode.header.inode_number);
            if let InodeKind::BasicDirectory { file_size, nlink, .. } = inode.kind {
                if nlink == 2 && file_size == 3 {
                    assert_eq!(ctx.opendir_inode(&inode).unwrap().count(), 0);
                }
            }
            last = Some(inode);
            at += used;
        }
        let expected: Vec<u32> = (1..=sb.inode_count).collect();
        assert_eq!(numbers, expected, "{name}");
        assert_eq!(last.as_ref(), Some(ctx.root()));
        let listed = ctx.read_inode_table().unwrap();
        assert_eq!(listed.len() as u32, sb.inode_count);
        ctx.close();
    }
}

#[test]
fn empty_directory_has_size_three() {
    let ctx = mount("tree.sqfs");
    let layout = ctx.resolve_path("/empty").unwrap().inode.dir_layout().unwrap();
    assert_eq!(layout.file_size, 3);
    assert_eq!(layout.nlink, 2);
    ctx.close();
}

#[test]
fn directory_dump_follows_image_order() {
    let ctx = mount("source-dir.sqfs");
    let text = dump::dump_directory_table(&ctx).unwrap().as_text().into_owned();
    assert_eq!(
        text,
        "Directory 1\nName: dir_example\nEmpty directory.\n\nRoot directory\n1) dir_example\n2) file.txt\n3) slink\n\n"
    );
    ctx.close();

    let ctx = mount("tree.sqfs");
    let text = dump::dump_directory_table(&ctx).unwrap().as_text().into_owned();
    let names: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("Name: ")).collect();
    assert_eq!(names, ["data", "c", "b", "a", "deep", "docs", "empty", "links"]);
    assert!(text.contains("Name: links\n1) abs\n2) dangling\n3) dirlink\n4) loop_a\n5) loop_b\n6) rel\n"));
    assert!(text.ends_with("Root directory\n1) data\n2) deep\n3) docs\n4) empty\n5) links\n\n"));
    ctx.close();
}

#[test]
fn entry_dump_returns_bytes_or_listing() {
    let ctx = mount("tree.sqfs");
    let file = dump::dump_entry(&ctx, "/links/rel").unwrap();
    assert_eq!(file.section, Section::Entry);
    assert_eq!(file.content, README);
    let dir = dump::dump_entry(&ctx, "/docs/").unwrap();
    assert_eq!(dir.as_text(), "       17   readme.txt\n\n1 file(s), 0 dir(s)\n");
    assert!(dump::dump_entry(&ctx, "/docs/readme.txt/").is_err());
    ctx.close();
}
