use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use latent_srl::data::{read_jsonl, read_props, write_jsonl, write_props};
use latent_srl::types::SrlAnnotation;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Jsonl,
    Props,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "props" | "conll" => Ok(Format::Props),
            other => Err(format!("unknown format `{other}`, expected jsonl or props")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Props => "props",
        })
    }
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

pub fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn require_file(path: &Path, format: Format) -> Result<()> {
    if format == Format::Props && is_stdio(path) {
        bail!("the props format requires a file path, not standard input or output");
    }
    Ok(())
}

pub fn read_corpus(path: &Path, format: Format) -> Result<Vec<SrlAnnotation>> {
    require_file(path, format)?;
    let reader = open_input(path)?;
    let corpus = match format {
        Format::Jsonl => read_jsonl(reader),
        Format::Props => read_props(reader),
    };
    corpus.with_context(|| format!("reading {}", path.display()))
}

pub fn write_corpus(path: &Path, format: Format, corpus: &[SrlAnnotation]) -> Result<()> {
    require_file(path, format)?;
    let mut writer = open_output(path)?;
    match format {
        Format::Jsonl => write_jsonl(&mut writer, corpus),
        Format::Props => write_props(&mut writer, corpus),
    }
    .with_context(|| format!("writing {}", path.display()))?;
    writer
        .flush()
        .with_context(|| format!("writing {}", path.display()))
}
