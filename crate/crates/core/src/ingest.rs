//! Line-delimited JSON record IO and URL blocklist filtering.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use crate::document::{Document, TraceEntry, Verdict};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    seq: Option<u64>,
    url: Option<String>,
    text: String,
    lang: Option<String>,
    lang_conf: Option<f64>,
    category: Option<String>,
    quality: Option<f64>,
    repeat: Option<u32>,
    #[serde(default)]
    trace: Vec<TraceEntry>,
}

/// One input line: either a document or a line that could not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Doc(Document),
    Malformed { line: usize, bytes: u64 },
}

/// Streams [`Record`]s from line-delimited JSON.
///
/// Records without a `seq` get the next ordinal (gapless over accepted
/// documents); records carrying one (intermediate files) keep it, provided it
/// is strictly greater than the previous document's. Records without an `id`
/// get `<source>:<line>`. Blank lines are ignored.
pub struct RecordReader<R> {
    reader: R,
    source: String,
    line_no: usize,
    next_seq: u64,
    buf: String,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R, source: impl Into<String>) -> Self {
        Self {
            reader,
            source: source.into(),
            line_no: 0,
            next_seq: 0,
            buf: String::new(),
        }
    }

    fn parse(&mut self, line: &str) -> Option<Document> {
        let raw: RawRecord = serde_json::from_str(line).ok()?;
        let seq = match raw.seq {
            Some(seq) if seq < self.next_seq => return None,
            Some(seq) => seq,
            None => self.next_seq,
        };
        self.next_seq = seq + 1;
        Some(Document {
            doc_id: raw
                .id
                .unwrap_or_else(|| format!("{}:{}", self.source, self.line_no)),
            seq,
            url: raw.url.unwrap_or_default(),
            text: raw.text,
            lang: raw.lang,
            lang_conf: raw.lang_conf,
            category: raw.category,
            quality: raw.quality,
            repeat: raw.repeat,
            trace: raw.trace,
        })
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            let n = match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(n) => n,
                Err(e) => return Some(Err(Error::io(&self.source, e))),
            };
            self.line_no += 1;
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim();
            if trimmed.is_empty() {
                self.buf = line;
                continue;
            }
            let record = match self.parse(trimmed) {
                Some(doc) => Record::Doc(doc),
                None => Record::Malformed {
                    line: self.line_no,
                    bytes: n as u64,
                },
            };
            self.buf = line;
            return Some(Ok(record));
        }
    }
}

pub fn read_records<R: BufRead>(reader: R, source: &str) -> RecordReader<R> {
    RecordReader::new(reader, source)
}

/// Reads a whole JSONL file, returning documents and malformed lines.
/// Generated ids use the file name, not the full path.
pub fn read_jsonl_file(path: &Path) -> Result<(Vec<Document>, Vec<Record>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    let mut docs = Vec::new();
    let mut malformed = Vec::new();
    for record in read_records(BufReader::new(file), &source) {
        match record? {
            Record::Doc(doc) => docs.push(doc),
            bad => malformed.push(bad),
        }
    }
    Ok((docs, malformed))
}

pub fn write_records<'a, W: Write>(
    mut writer: W,
    docs: impl IntoIterator<Item = &'a Document>,
) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Registrable domains to exclude, matched against a URL host and every
/// parent suffix of it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocklist {
    domains: HashSet<String>,
}

impl Blocklist {
    pub fn new<I, S>(domains: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Self::default();
        for d in domains {
            out.insert(d.as_ref())?;
        }
        Ok(out)
    }

    /// One domain per line; `#` starts a comment.
    pub fn parse(contents: &str) -> Result<Self> {
        let entries = contents
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&contents).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn insert(&mut self, domain: &str) -> Result<()> {
        let d = domain.trim().trim_end_matches('.').to_lowercase();
        if d.is_empty() || d.contains(['/', ':', ' ', '\t']) {
            return Err(Error::config(format!(
                "blocklist entry `{domain}` must be a bare domain (no scheme, port or path)"
            )));
        }
        self.domains.insert(d);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// True when `host` or any of its label suffixes is listed.
    pub fn matches_host(&self, host: &str) -> bool {
        let host = host.trim_end_matches('.').to_lowercase();
        let mut rest = host.as_str();
        loop {
            if self.domains.contains(rest) {
                return true;
            }
            match rest.split_once('.') {
                Some((_, parent)) => rest = parent,
                None => return false,
            }
        }
    }
}

/// Extracts the host of `url`, accepting scheme-less inputs like `a.com/x`.
pub fn url_host(url: &str) -> Option<String> {
    let parsed = if url.contains("://") {
        url::Url::parse(url).ok()?
    } else {
        url::Url::parse(&format!("http://{url}")).ok()?
    };
    parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .map(|h| h.trim_start_matches('[').trim_end_matches(']').to_string())
}

pub fn url_filter(doc: &Document, blocklist: &Blocklist) -> Verdict {
    let url = doc.url.trim();
    if url.is_empty() {
        return Verdict::keep();
    }
    match url_host(url) {
        None => Verdict::keep().with_flag("url_unparsed"),
        Some(host) if blocklist.matches_host(&host) => Verdict::drop("url_blocklist"),
        Some(_) => Verdict::keep(),
    }
}
