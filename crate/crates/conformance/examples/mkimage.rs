//! Builds an image with the reference builder:
//! `mkimage <source-dir|@source-dir-tree|@board-rootfs> <image> [-noI] [-noD] [-noF]
//!  [-no-fragments] [-always-use-fragments] [-no-exports] [-b SIZE]`

use std::path::Path;
use std::process::ExitCode;

use sqfs_conformance::{corpus, mkimage, BuildFlag, BuildOptions, Tree};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: mkimage <source-dir> <image> [mksquashfs flags]");
        return ExitCode::from(2);
    }
    let mut opts = BuildOptions::default();
    let mut it = args[2..].iter();
    while let Some(a) = it.next() {
        if a == "-b" {
            opts.block_size = it.next().and_then(|v| v.parse().ok()).expect("-b needs a size");
            continue;
        }
        match BuildFlag::ALL.iter().find(|f| f.arg() == a) {
            Some(f) => opts.flags.push(*f),
            None => {
                eprintln!("unknown option {a}");
                return ExitCode::from(2);
            }
        }
    }
    let tree = match args[0].as_str() {
        "@source-dir-tree" => corpus::source_dir_tree(),
        "@board-rootfs" => corpus::board_rootfs_tree(1),
        src => match Tree::from_dir(Path::new(src)) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("{src}: {e}");
                return ExitCode::FAILURE;
            }
        },
    };
    let image = mkimage::build(&tree, &opts.reference());
    if let Err(e) = std::fs::write(&args[1], image) {
        eprintln!("{}: {e}", args[1]);
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
