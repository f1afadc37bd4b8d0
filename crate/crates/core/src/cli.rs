//! The `sqfs` command line: section dumps, entry extraction, `ls` and `load`.

use std::io::Write;
use std::path::PathBuf;

use crate::dump::{self, DumpOptions, Section};
use crate::error::{Error, ErrorClass};
use crate::storage::open_image;
use crate::vfs::{self, MountContext};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PROBE: i32 = 3;
pub const EXIT_LOOKUP: i32 = 4;
pub const EXIT_CORRUPT: i32 = 5;

pub const USAGE: &str = "\
usage: sqfs -h
       sqfs [-s] [-i] [-d] [--local-time] <fs-image>
       sqfs -e <fs-image> /path/to/dir/
       sqfs -e <fs-image> /path/to/file
       sqfs ls <fs-image> [/path/to/dir]
       sqfs load <fs-image> /path/to/file -o <out> [--bytes N [--pos P]]

Inspect and extract the contents of a SquashFS image.

Options:
       -h: print this message and exit
       -s: dump the superblock
       -i: dump the inode table
       -d: dump the directory table
       -e: dump one file's contents, or list a directory
           (directory paths end with '/')
       --local-time: show timestamps in the local timezone

Commands:
       ls:   list a directory (default '/')
       load: copy a file to <out>; --bytes limits the length
             (0 means to the end), --pos sets the start offset
             and requires --bytes

Numbers may be decimal or 0x-prefixed hex.
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Help,
    /// One or more section dumps, printed superblock first.
    Dump(Vec<Section>),
    Extract,
    Ls,
    Load,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliInvocation {
    pub mode: Mode,
    pub image: Option<PathBuf>,
    pub target_path: Option<String>,
    pub output: Option<PathBuf>,
    pub pos: Option<u64>,
    pub bytes: Option<u64>,
    pub local_time: bool,
}

impl CliInvocation {
    fn new(mode: Mode) -> Self {
        CliInvocation {
            mode,
            image: None,
            target_path: None,
            output: None,
            pos: None,
            bytes: None,
            local_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

fn parse_number(flag: &str, v: Option<&String>) -> Result<u64, UsageError> {
    let v = v.ok_or_else(|| usage(format!("{flag} needs a value")))?;
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| usage(format!("{flag}: '{v}' is not a number")))
}

fn parse_load(args: &[String]) -> Result<CliInvocation, UsageError> {
    let mut inv = CliInvocation::new(Mode::Load);
    let mut positional = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "-o" | "--output" => {
                let v = it.next().ok_or_else(|| usage("-o needs a value"))?;
                inv.output = Some(PathBuf::from(v));
            }
            "--bytes" => inv.bytes = Some(parse_number(a, it.next())?),
            "--pos" => inv.pos = Some(parse_number(a, it.next())?),
            s if s.starts_with('-') && s.len() > 1 => return Err(usage(format!("unknown option '{s}'"))),
            _ => positional.push(a.clone()),
        }
    }
    let [image, path] = <[String; 2]>::try_from(positional)
        .map_err(|_| usage("load takes an image and a file path"))?;
    if inv.output.is_none() {
        return Err(usage("load requires -o <out>"));
    }
    if inv.pos.is_some() && inv.bytes.is_none() {
        return Err(usage("'pos' requires 'bytes'"));
    }
    inv.image = Some(PathBuf::from(image));
    inv.target_path = Some(path);
    Ok(inv)
}

fn parse_ls(args: &[String]) -> Result<CliInvocation, UsageError> {
    if let Some(bad) = args.iter().find(|a| a.starts_with('-') && a.len() > 1) {
        return Err(usage(format!("unknown option '{bad}'")));
    }
    let mut inv = CliInvocation::new(Mode::Ls);
    match args {
        [image] => {
            inv.image = Some(PathBuf::from(image));
            inv.target_path = Some("/".into());
        }
        [image, path] => {
            inv.image = Some(PathBuf::from(image));
            inv.target_path = Some(path.clone());
        }
        _ => return Err(usage("ls takes an image and an optional path")),
    }
    Ok(inv)
}

/// Parses the arguments following the program name.
pub fn parse_args(args: &[String]) -> Result<CliInvocation, UsageError> {
    match args.first().map(String::as_str) {
        None => return Err(usage("missing arguments")),
        Some("ls") => return parse_ls(&args[1..]),
        Some("load") => return parse_load(&args[1..]),
        _ => {}
    }
    if args.iter().any(|a| a == "-h" || a == "--help") {
        return Ok(CliInvocation::new(Mode::Help));
    }

    let mut sections = Vec::new();
    let mut extract = false;
    let mut local_time = false;
    let mut positional = Vec::new();
    for a in args {
        match a.as_str() {
            "-s" => sections.push(Section::Superblock),
            "-i" => sections.push(Section::InodeTable),
            "-d" => sections.push(Section::DirectoryTable),
            "-e" => extract = true,
            "--local-time" => local_time = true,
            s if s.starts_with('-') && s.len() > 1 => return Err(usage(format!("unknown option '{s}'"))),
            _ => positional.push(a.clone()),
        }
    }

    let mut inv;
    if extract {
        if !sections.is_empty() {
            return Err(usage("-e cannot be combined with -s, -i or -d"));
        }
        let [image, path] = <[String; 2]>::try_from(positional)
            .map_err(|_| usage("-e takes an image and a path"))?;
        inv = CliInvocation::new(Mode::Extract);
        inv.image = Some(PathBuf::from(image));
        inv.target_path = Some(path);
    } else {
        if sections.is_empty() {
            return Err(usage("nothing to do: give -s, -i, -d or -e"));
        }
        let [image] = <[String; 1]>::try_from(positional)
            .map_err(|_| usage("expected exactly one image"))?;
        sections.sort_by_key(|s| *s as u8);
        sections.dedup();
        inv = CliInvocation::new(Mode::Dump(sections));
        inv.image = Some(PathBuf::from(image));
    }
    inv.local_time = local_time;
    Ok(inv)
}

fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Probe => EXIT_PROBE,
        ErrorClass::Lookup => EXIT_LOOKUP,
        ErrorClass::Corruption => EXIT_CORRUPT,
        ErrorClass::Other => EXIT_OTHER,
    }
}

#[derive(Debug)]
enum RunError {
    Fs(Error),
    Output(std::io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Fs(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Output(e)
    }
}

fn dispatch(ctx: &MountContext, inv: &CliInvocation, stdout: &mut dyn Write) -> Result<(), RunError> {
    let opts = DumpOptions {
        local_time: inv.local_time,
    };
    let target = inv.target_path.as_deref().unwrap_or("/");
    match &inv.mode {
        Mode::Help => unreachable!("handled before probing"),
        Mode::Dump(sections) => {
            for section in sections {
                let report = match section {
                    Section::Superblock => dump::dump_superblock(ctx, opts),
                    Section::InodeTable => dump::dump_inode_table(ctx, opts)?,
                    Section::DirectoryTable => dump::dump_directory_table(ctx)?,
                    Section::Entry => unreachable!("not a dump flag"),
                };
                stdout.write_all(&report.content)?;
            }
        }
        Mode::Extract => {
            let report = dump::dump_entry(ctx, target)?;
            stdout.write_all(&report.content)?;
        }
        Mode::Ls => write!(stdout, "{}", ctx.ls(target)?)?,
        Mode::Load => {
            let length = inv.bytes.filter(|&b| b != 0);
            let data = ctx.read_file(target, inv.pos.unwrap_or(0), length)?;
            let out = inv.output.as_ref().expect("load has an output");
            std::fs::write(out, &data)?;
            writeln!(stdout, "{} bytes read", data.len())?;
        }
    }
    Ok(())
}

/// Executes a parsed invocation and returns the process exit status.
pub fn run(inv: &CliInvocation, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if inv.mode == Mode::Help {
        let _ = stdout.write_all(USAGE.as_bytes());
        return EXIT_OK;
    }
    let image = inv.image.as_ref().expect("parsed invocations carry an image");
    let ctx = match open_image(image).and_then(vfs::probe) {
        Ok(ctx) => ctx,
        Err(e) => {
            let _ = writeln!(stderr, "sqfs: {}: {e}", image.display());
            return EXIT_PROBE;
        }
    };
    let result = dispatch(&ctx, inv, stdout);
    ctx.close();
    match result {
        Ok(()) => EXIT_OK,
        Err(RunError::Fs(e)) => {
            let _ = writeln!(stderr, "sqfs: {e}");
            exit_code(&e)
        }
        Err(RunError::Output(e)) => {
            let _ = writeln!(stderr, "sqfs: write failed: {e}");
            EXIT_OTHER
        }
    }
}

/// Parses `args` and runs; usage errors print the usage text.
pub fn main_with_args(args: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match parse_args(args) {
        Ok(inv) => run(&inv, stdout, stderr),
        Err(e) => {
            let _ = writeln!(stderr, "sqfs: {e}\n");
            let _ = stderr.write_all(USAGE.as_bytes());
            EXIT_USAGE
        }
    }
}
