//! Line-wise inter-document deduplication of head/tail boilerplate.
//!
//! Pass one counts how often each content line appears in a document's head
//! or tail window across the corpus. Pass two walks documents in `seq` order
//! and, for lines counted more than `frequency_cap` times, keeps the first
//! `frequency_cap` windowed occurrences and deletes the rest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{Document, Outcome, Verdict};
use crate::error::{Error, Result};
use crate::text::{is_content_line, raw_lines, ContentLine, LinePosition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineDedupConfig {
    pub head_lines: usize,
    pub tail_lines: usize,
    pub frequency_cap: u64,
}

impl Default for LineDedupConfig {
    fn default() -> Self {
        Self {
            head_lines: 5,
            tail_lines: 5,
            frequency_cap: 200,
        }
    }
}

impl LineDedupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head_lines == 0 || self.tail_lines == 0 || self.frequency_cap == 0 {
            return Err(Error::config(
                "line dedup head_lines, tail_lines and frequency_cap must be positive",
            ));
        }
        Ok(())
    }
}

/// Content lines in the head and tail windows of `text`.
///
/// Windows are taken over raw lines before the content predicate is applied,
/// so blank lines still occupy window slots. Overlapping positions are
/// reported once, as `Head`.
pub fn extract_head_tail(text: &str, cfg: &LineDedupConfig) -> Vec<ContentLine> {
    let lines: Vec<&str> = raw_lines(text).collect();
    let n = lines.len();
    let head_end = cfg.head_lines.min(n);
    let tail_start = n.saturating_sub(cfg.tail_lines).max(head_end);
    (0..head_end)
        .map(|i| (i, LinePosition::Head))
        .chain((tail_start..n).map(|i| (i, LinePosition::Tail)))
        .filter(|(i, _)| is_content_line(lines[*i]))
        .map(|(i, position)| ContentLine {
            raw: lines[i].to_string(),
            position,
            index_in_doc: i,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCounts {
    pub global: u64,
    pub retained: u64,
}

/// Corpus-wide windowed line counts, ordered by line bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineFrequencyTable {
    entries: BTreeMap<String, LineCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TableManifest {
    format: String,
    entries: u64,
    head_lines: usize,
    tail_lines: usize,
    frequency_cap: u64,
}

const TABLE_FORMAT: &str = "line-frequency/v1";

impl LineFrequencyTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, line: &str) -> Option<LineCounts> {
        self.entries.get(line).copied()
    }

    pub fn global_count(&self, line: &str) -> u64 {
        self.entries.get(line).map_or(0, |c| c.global)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, LineCounts)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn add_document(&mut self, text: &str, cfg: &LineDedupConfig) {
        for line in extract_head_tail(text, cfg) {
            self.entries.entry(line.raw).or_default().global += 1;
        }
    }

    /// Sums counts key by key. Associative and commutative.
    pub fn merge(&mut self, other: LineFrequencyTable) {
        for (line, counts) in other.entries {
            let e = self.entries.entry(line).or_default();
            e.global += counts.global;
            e.retained += counts.retained;
        }
    }

    fn manifest_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    }

    /// Writes the table as sorted records of
    /// `u32 LE length | line bytes | u64 LE global | u64 LE retained`,
    /// with a JSON manifest at `<path>.manifest.json`.
    pub fn save(&self, path: &Path, cfg: &LineDedupConfig) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (line, counts) in &self.entries {
            let bytes = line.as_bytes();
            let len = u32::try_from(bytes.len())
                .map_err(|_| Error::format(path, "line longer than 4 GiB"))?;
            w.write_all(&len.to_le_bytes())
                .and_then(|_| w.write_all(bytes))
                .and_then(|_| w.write_all(&counts.global.to_le_bytes()))
                .and_then(|_| w.write_all(&counts.retained.to_le_bytes()))
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let manifest = TableManifest {
            format: TABLE_FORMAT.into(),
            entries: self.entries.len() as u64,
            head_lines: cfg.head_lines,
            tail_lines: cfg.tail_lines,
            frequency_cap: cfg.frequency_cap,
        };
        let mpath = Self::manifest_path(path);
        fs::write(&mpath, serde_json::to_vec_pretty(&manifest).expect("serializes"))
            .map_err(|e| Error::io(&mpath, e))
    }

    /// Loads a table along with the window and cap it was built with.
    pub fn load_any(path: &Path) -> Result<(Self, LineDedupConfig)> {
        let mpath = Self::manifest_path(path);
        let raw = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: TableManifest = serde_json::from_slice(&raw).map_err(|e| Error::format(&mpath, e.to_string()))?;
        let cfg = LineDedupConfig {
            head_lines: m.head_lines,
            tail_lines: m.tail_lines,
            frequency_cap: m.frequency_cap,
        };
        Ok((Self::load(path, &cfg)?, cfg))
    }

    /// Loads a table written by [`LineFrequencyTable::save`]; the window and
    /// cap it was built with must match `cfg`.
    pub fn load(path: &Path, cfg: &LineDedupConfig) -> Result<Self> {
        let mpath = Self::manifest_path(path);
        let raw = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: TableManifest =
            serde_json::from_slice(&raw).map_err(|e| Error::format(&mpath, e.to_string()))?;
        if manifest.format != TABLE_FORMAT
            || manifest.head_lines != cfg.head_lines
            || manifest.tail_lines != cfg.tail_lines
            || manifest.frequency_cap != cfg.frequency_cap
        {
            return Err(Error::config(format!(
                "line table {} was built with head={} tail={} cap={}",
                path.display(),
                manifest.head_lines,
                manifest.tail_lines,
                manifest.frequency_cap
            )));
        }
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let truncated = || Error::format(path, "truncated line table record");
        let mut table = Self::default();
        let mut rest = bytes.as_slice();
        while !rest.is_empty() {
            let (len, tail) = rest.split_first_chunk::<4>().ok_or_else(truncated)?;
            let len = u32::from_le_bytes(*len) as usize;
            if tail.len() < len + 16 {
                return Err(truncated());
            }
            let line = std::str::from_utf8(&tail[..len])
                .map_err(|_| Error::format(path, "line is not UTF-8"))?
                .to_string();
            let global = u64::from_le_bytes(tail[len..len + 8].try_into().expect("8 bytes"));
            let retained = u64::from_le_bytes(tail[len + 8..len + 16].try_into().expect("8 bytes"));
            table.entries.insert(line, LineCounts { global, retained });
            rest = &tail[len + 16..];
        }
        if table.entries.len() as u64 != manifest.entries {
            return Err(Error::format(path, "entry count does not match manifest"));
        }
        Ok(table)
    }
}

/// Counts windowed lines over `docs`; shards are counted in parallel and
/// merged, which gives the same table regardless of worker count.
pub fn build_frequency_table(docs: &[Document], cfg: &LineDedupConfig) -> LineFrequencyTable {
    docs.par_chunks(256)
        .map(|chunk| {
            let mut t = LineFrequencyTable::default();
            for d in chunk {
                t.add_document(&d.text, cfg);
            }
            t
        })
        .reduce(LineFrequencyTable::default, |mut a, b| {
            a.merge(b);
            a
        })
}

/// Removes over-cap windowed lines beyond their first `frequency_cap`
/// occurrences, numbering occurrences in `seq` order and updating the
/// table's retained counts.
pub fn apply_line_dedup(
    mut docs: Vec<Document>,
    table: &mut LineFrequencyTable,
    cfg: &LineDedupConfig,
) -> Vec<Outcome> {
    docs.sort_by_key(|d| d.seq);
    docs.into_iter()
        .map(|doc| apply_one(doc, table, cfg))
        .collect()
}

fn apply_one(mut doc: Document, table: &mut LineFrequencyTable, cfg: &LineDedupConfig) -> Outcome {
    let mut removed: Vec<usize> = Vec::new();
    for line in extract_head_tail(&doc.text, cfg) {
        let Some(counts) = table.entries.get_mut(&line.raw) else {
            continue;
        };
        if counts.global > cfg.frequency_cap && counts.retained >= cfg.frequency_cap {
            removed.push(line.index_in_doc);
        } else {
            counts.retained += 1;
        }
    }
    if removed.is_empty() {
        return Outcome::new(doc, Verdict::keep());
    }
    let text: Vec<&str> = raw_lines(&doc.text)
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, l)| l)
        .collect();
    let text = text.join("\n");
    let flag = format!("lines_removed={}", removed.len());
    if !raw_lines(&text).any(is_content_line) {
        return Outcome::new(doc, Verdict::drop("emptied"));
    }
    doc.text = text;
    Outcome::new(doc, Verdict::keep().with_flag("lines_removed")).with_note(flag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> LineDedupConfig {
        LineDedupConfig::default()
    }

    fn indices(text: &str) -> Vec<usize> {
        extract_head_tail(text, &cfg()).iter().map(|l| l.index_in_doc).collect()
    }

    fn numbered(n: usize) -> String {
        (1..=n).map(|i| format!("line {i}")).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn windows_for_long_and_short_docs() {
        assert_eq!(indices(&numbered(12)), vec![0, 1, 2, 3, 4, 7, 8, 9, 10, 11]);
        assert_eq!(indices(&numbered(6)), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(indices("-----\nreal content\nmore"), vec![1, 2]);
        let lines = extract_head_tail(&numbered(12), &cfg());
        assert_eq!(lines[4].position, LinePosition::Head);
        assert_eq!(lines[5].position, LinePosition::Tail);
    }

    #[test]
    fn blank_lines_consume_window_slots() {
        let text = "\n\n\n\n\nsixth\nseventh\neighth\nninth\ntenth\neleventh\ntwelfth";
        assert_eq!(indices(text), vec![7, 8, 9, 10, 11]);
    }

    #[test]
    fn counts_head_lines_only() {
        let docs: Vec<Document> = (0..1000)
            .map(|i| {
                Document::new(
                    format!("d{i}"),
                    i,
                    format!("subscribe now\n{}\nmiddle marker\n{}", numbered(5), numbered(5)),
                )
            })
            .collect();
        let t = build_frequency_table(&docs, &cfg());
        assert_eq!(t.global_count("subscribe now"), 1000);
        assert_eq!(t.global_count("middle marker"), 0);
    }

    #[test]
    fn shard_merge_is_additive() {
        let mut a = LineFrequencyTable::default();
        a.entries.insert("x".into(), LineCounts { global: 120, retained: 0 });
        let mut b = LineFrequencyTable::default();
        b.entries.insert("x".into(), LineCounts { global: 130, retained: 0 });
        a.merge(b);
        assert_eq!(a.global_count("x"), 250);
    }

    fn corpus(n: u64, line: &str) -> Vec<Document> {
        (0..n)
            .map(|i| Document::new(format!("d{i}"), i, format!("{line}\nbody text number {i}")))
            .collect()
    }

    fn run(docs: Vec<Document>) -> Vec<Outcome> {
        let mut t = build_frequency_table(&docs, &cfg());
        apply_line_dedup(docs, &mut t, &cfg())
    }

    #[test]
    fn below_cap_lines_are_untouched() {
        let docs = corpus(150, "menu home about");
        let out = run(docs.clone());
        for (o, d) in out.iter().zip(&docs) {
            assert_eq!(o.verdict, Verdict::keep());
            assert_eq!(o.doc, *d);
        }
    }

    #[test]
    fn first_200_occurrences_survive() {
        let out = run(corpus(1000, "menu home about"));
        let survivors: Vec<u64> = out
            .iter()
            .filter(|o| o.doc.text.starts_with("menu home about"))
            .map(|o| o.doc.seq)
            .collect();
        assert_eq!(survivors, (0..200).collect::<Vec<_>>());
        assert!(out.iter().all(|o| o.verdict.keep));
        assert_eq!(out[500].doc.text, "body text number 500");
    }

    #[test]
    fn emptied_documents_are_dropped() {
        let docs: Vec<Document> = (0..300)
            .map(|i| Document::new(format!("d{i}"), i, "share this page\n\n***"))
            .collect();
        let out = run(docs);
        assert!(out[..200].iter().all(|o| o.verdict.keep));
        assert!(out[200..].iter().all(|o| o.verdict == Verdict::drop("emptied")));
    }

    #[test]
    fn mid_document_copies_are_not_removed() {
        let mut docs = corpus(250, "login");
        docs.push(Document::new(
            "late",
            250,
            format!("{}\nlogin\n{}", numbered(5), numbered(5)),
        ));
        let out = run(docs);
        assert!(out[250].doc.text.contains("\nlogin\n"));
    }

    #[test]
    fn incremental_retained_count_carries_forward() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lines.tbl");
        let first = corpus(150, "footer links");
        let mut t = build_frequency_table(&first, &cfg());
        apply_line_dedup(first, &mut t, &cfg());
        t.save(&path, &cfg()).unwrap();

        let second: Vec<Document> = corpus(150, "footer links")
            .into_iter()
            .map(|mut d| {
                d.seq += 150;
                d
            })
            .collect();
        let mut t = LineFrequencyTable::load(&path, &cfg()).unwrap();
        assert_eq!(t.get("footer links").unwrap().retained, 150);
        t.merge(build_frequency_table(&second, &cfg()));
        let out = apply_line_dedup(second, &mut t, &cfg());
        let kept = out.iter().filter(|o| o.doc.text.starts_with("footer")).count();
        assert_eq!(kept, 50);
        assert_eq!(t.get("footer links").unwrap(), LineCounts { global: 300, retained: 200 });
    }

    #[test]
    fn table_file_round_trips_and_checks_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let t = build_frequency_table(&corpus(3, "héllo wörld"), &cfg());
        t.save(&path, &cfg()).unwrap();
        assert_eq!(LineFrequencyTable::load(&path, &cfg()).unwrap(), t);
        let other = LineDedupConfig { frequency_cap: 10, ..cfg() };
        assert!(matches!(LineFrequencyTable::load(&path, &other), Err(Error::Config(_))));
    }

    #[test]
    fn config_rejects_zero() {
        assert!(LineDedupConfig { head_lines: 0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(
            a in proptest::collection::vec(("[ab]{1,2}", 1u64..5), 0..6),
            b in proptest::collection::vec(("[ab]{1,2}", 1u64..5), 0..6),
            c in proptest::collection::vec(("[ab]{1,2}", 1u64..5), 0..6),
        ) {
            let mk = |v: &Vec<(String, u64)>| {
                let mut t = LineFrequencyTable::default();
                for (k, n) in v {
                    t.entries.entry(k.clone()).or_default().global += n;
                }
                t
            };
            let mut left = mk(&a);
            left.merge(mk(&b));
            left.merge(mk(&c));
            let mut bc = mk(&b);
            bc.merge(mk(&c));
            let mut right = mk(&a);
            right.merge(bc);
            prop_assert_eq!(&left, &right);
            let mut swapped = mk(&c);
            swapped.merge(mk(&a));
            swapped.merge(mk(&b));
            prop_assert_eq!(&left, &swapped);
        }
    }
}
