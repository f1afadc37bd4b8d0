//! Deterministic corpora and the fixed trees used by the acceptance suite.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tree::{Meta, Tree};

/// Where a file's bytes end up inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    /// Whole blocks only.
    DataOnly,
    /// Shorter than one block, so a tail in a fragment.
    FragmentOnly,
    /// Whole blocks plus a partial tail.
    Mixed,
    /// Whole blocks, some of them all zeros.
    Sparse,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymlinkPlan {
    pub valid: usize,
    pub dangling: usize,
    /// Two-link cycles.
    pub loops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub depth: usize,
    pub fan_out: usize,
    pub files: usize,
    /// Upper bound on the summed size of all files.
    pub max_bytes: u64,
    pub block_size: u32,
    pub sizes: Vec<SizeClass>,
    pub symlinks: SymlinkPlan,
}

impl CorpusSpec {
    /// 100 files across a depth-4 tree, at most 16 MiB in total.
    pub fn seeded(seed: u64) -> Self {
        CorpusSpec {
            seed,
            depth: 4,
            fan_out: 3,
            files: 100,
            max_bytes: 16 << 20,
            block_size: 131_072,
            sizes: vec![
                SizeClass::FragmentOnly,
                SizeClass::DataOnly,
                SizeClass::Mixed,
                SizeClass::FragmentOnly,
                SizeClass::Sparse,
                SizeClass::Empty,
            ],
            symlinks: SymlinkPlan {
                valid: 6,
                dangling: 2,
                loops: 1,
            },
        }
    }

    pub fn empty(seed: u64) -> Self {
        CorpusSpec {
            depth: 0,
            files: 0,
            symlinks: SymlinkPlan {
                valid: 0,
                dangling: 0,
                loops: 0,
            },
            ..CorpusSpec::seeded(seed)
        }
    }

    fn size_for(&self, class: SizeClass, rng: &mut ChaCha8Rng) -> usize {
        let bs = self.block_size as usize;
        match class {
            SizeClass::DataOnly => bs * rng.random_range(1..=3),
            SizeClass::FragmentOnly => rng.random_range(1..bs),
            SizeClass::Mixed => bs * rng.random_range(1..=2) + rng.random_range(1..bs),
            SizeClass::Sparse => bs * rng.random_range(2..=4),
            SizeClass::Empty => 0,
        }
    }

    /// Generates the tree. Equal `CorpusSpec`s give equal trees.
    pub fn generate(&self) -> Tree {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let base_time = 1_600_000_000 + (self.seed % 1000) as u32 * 3600;
        let mut tree = Tree::new(Meta::new(0o755, base_time));

        let mut dirs = vec![String::new()];
        let mut frontier = vec![String::new()];
        for level in 1..=self.depth {
            let mut next = Vec::new();
            for parent in &frontier {
                for i in 0..rng.random_range(1..=self.fan_out) {
                    let path = format!("{parent}/d{level}_{i}");
                    tree.add_dir(&path, Meta::new(0o755, base_time + rng.random_range(0..86_400)));
                    next.push(path.clone());
                    dirs.push(path);
                }
            }
            frontier = next;
        }

        let mut budget = self.max_bytes as usize;
        let mut written: Vec<(String, Vec<u8>)> = Vec::new();
        for k in 0..self.files {
            let dir = &dirs[rng.random_range(0..dirs.len())];
            let class = self.sizes[k % self.sizes.len()];
            let content = if k % 10 == 9 && !written.is_empty() {
                // Duplicate of an earlier file.
                written[rng.random_range(0..written.len())].1.clone()
            } else {
                let mut size = self.size_for(class, &mut rng);
                if size > budget {
                    size = budget.min(rng.random_range(0..4096));
                }
                random_content(&mut rng, size, class, self.block_size as usize)
            };
            if content.len() > budget {
                continue;
            }
            budget -= content.len();
            let path = format!("{dir}/f{k:03}");
            let meta = Meta::new(if k % 7 == 0 { 0o600 } else { 0o644 }, base_time + rng.random_range(0..86_400));
            tree.add_file(&path, meta, content.clone());
            written.push((path, content));
        }

        let link_meta = Meta::new(0o777, base_time);
        for i in 0..self.symlinks.valid {
            if written.is_empty() {
                break;
            }
            let (target, _) = &written[rng.random_range(0..written.len())];
            let (target_dir, target_name) = target.rsplit_once('/').unwrap();
            // Alternate absolute targets with targets relative to the link.
            if i % 2 == 0 {
                tree.add_symlink(&format!("/link{i}"), link_meta, target);
            } else {
                tree.add_symlink(&format!("{target_dir}/link{i}"), link_meta, target_name);
            }
        }
        for i in 0..self.symlinks.dangling {
            let dir = &dirs[rng.random_range(0..dirs.len())];
            tree.add_symlink(&format!("{dir}/dangling{i}"), link_meta, &format!("missing{i}"));
        }
        for i in 0..self.symlinks.loops {
            tree.add_symlink(&format!("/loop{i}_a"), link_meta, &format!("loop{i}_b"));
            tree.add_symlink(&format!("/loop{i}_b"), link_meta, &format!("/loop{i}_a"));
        }
        tree
    }
}

fn random_content(rng: &mut ChaCha8Rng, size: usize, class: SizeClass, bs: usize) -> Vec<u8> {
    let mut out = vec![0u8; size];
    if rng.random_bool(0.5) {
        rng.fill_bytes(&mut out);
    } else {
        // Compressible: short random words repeated.
        let words: Vec<Vec<u8>> = (0..16)
            .map(|_| (0..rng.random_range(2..9)).map(|_| rng.random_range(b'a'..=b'z')).collect())
            .collect();
        let mut at = 0;
        while at < size {
            let w = &words[rng.random_range(0..words.len())];
            let n = w.len().min(size - at);
            out[at..at + n].copy_from_slice(&w[..n]);
            at += n;
            if at < size {
                out[at] = b' ';
                at += 1;
            }
        }
    }
    if class == SizeClass::Sparse {
        // Zero the first block and every other one after it.
        for chunk in out.chunks_mut(bs).step_by(2) {
            chunk.fill(0);
        }
    }
    out
}

/// 2020-08-04 13:46:14 UTC.
pub const EXAMPLE_MKFS_TIME: u32 = 1_596_548_774;

/// An empty directory, a 12-byte text file and a symlink to it.
pub fn source_dir_tree() -> Tree {
    let mut t = Tree::new(Meta::new(0o775, 1_596_548_748));
    t.add_dir("/dir_example", Meta::new(0o775, 1_596_548_501));
    t.add_file("/file.txt", Meta::new(0o664, 1_596_548_537), b"Hello world\n".to_vec());
    t.add_symlink("/slink", Meta::new(0o777, 1_596_548_748), "file.txt");
    t
}

/// Files of 2, 0.5 and 2.5 blocks.
pub fn three_size_tree(block_size: u32, seed: u64) -> Tree {
    let bs = block_size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tree::new(Meta::new(0o755, EXAMPLE_MKFS_TIME));
    for (name, len) in [("data_only", 2 * bs), ("fragment_only", bs / 2), ("mixed", 2 * bs + bs / 2)] {
        let mut c = vec![0; len];
        rng.fill_bytes(&mut c);
        t.add_file(&format!("/{name}"), Meta::new(0o644, EXAMPLE_MKFS_TIME), c);
    }
    t
}

/// Size of the kernel image in the board boot example.
pub const ZIMAGE_SIZE: usize = 6_091_376;

/// A root filesystem shaped like a small embedded board's: sixteen top
/// level directories plus `lib32 -> lib` and `linuxrc -> bin/busybox`.
pub fn board_rootfs_tree(seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = Meta::new(0o755, EXAMPLE_MKFS_TIME);
    let mut t = Tree::new(dir);
    for name in [
        "bin", "boot", "dev", "etc", "lib", "media", "mnt", "opt", "proc", "root", "run", "sbin", "sys", "tmp",
        "usr", "var",
    ] {
        t.add_dir(&format!("/{name}"), dir);
    }
    let mut busybox = vec![0; 700_000];
    rng.fill_bytes(&mut busybox);
    t.add_file("/bin/busybox", Meta::new(0o755, EXAMPLE_MKFS_TIME), busybox);
    let mut zimage = vec![0; ZIMAGE_SIZE];
    rng.fill_bytes(&mut zimage);
    t.add_file("/boot/zImage", Meta::new(0o644, EXAMPLE_MKFS_TIME), zimage);
    t.add_file("/boot/am335x-boneblack-wireless.dtb", Meta::new(0o644, EXAMPLE_MKFS_TIME), vec![0xd0; 63_000]);
    t.add_file("/etc/hostname", Meta::new(0o644, EXAMPLE_MKFS_TIME), b"beaglebone\n".to_vec());
    t.add_symlink("/lib32", Meta::new(0o777, EXAMPLE_MKFS_TIME), "lib");
    t.add_symlink("/linuxrc", Meta::new(0o777, EXAMPLE_MKFS_TIME), "bin/busybox");
    t
}
