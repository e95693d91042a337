//! Identity removal: MD5 over normalized text, keep the lowest-seq copy.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use md5::{Digest, Md5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{Document, Outcome, Verdict};
use crate::error::{Error, Result};
use crate::text::normalize_text;

const SHARDS: usize = 16;
/// Identifies the normalization scheme digests were computed under.
const DIGEST_SCHEME: &str = "md5/nfd-strip-ps-lower-collapse/v1";

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DocumentDigest([u8; 16]);

impl DocumentDigest {
    pub fn of_text(text: &str) -> Self {
        let normalized = normalize_text(text);
        Self(Md5::digest(normalized.as_str().as_bytes()).into())
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// 32 lowercase hex characters.
    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    fn shard(&self) -> usize {
        (self.0[0] >> 4) as usize
    }
}

impl fmt::Debug for DocumentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DocumentDigest({})", self.hex())
    }
}

impl fmt::Display for DocumentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

pub fn document_digest(doc: &Document) -> DocumentDigest {
    DocumentDigest::of_text(&doc.text)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    scheme: String,
    count: u64,
    shards: usize,
}

/// Seen-digest table, sharded by the top nibble of the digest.
///
/// Digests inserted since construction or the last [`DigestTable::persist`]
/// are tracked so a store directory can be extended append-only.
#[derive(Debug, Clone)]
pub struct DigestTable {
    shards: Vec<HashSet<DocumentDigest>>,
    pending: Vec<Vec<DocumentDigest>>,
}

impl Default for DigestTable {
    fn default() -> Self {
        Self {
            shards: vec![HashSet::new(); SHARDS],
            pending: vec![Vec::new(); SHARDS],
        }
    }
}

impl DigestTable {
    pub fn len(&self) -> usize {
        self.shards.iter().map(HashSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, d: &DocumentDigest) -> bool {
        self.shards[d.shard()].contains(d)
    }

    /// Returns true if the digest was not seen before.
    pub fn insert(&mut self, d: DocumentDigest) -> bool {
        let shard = d.shard();
        let fresh = self.shards[shard].insert(d);
        if fresh {
            self.pending[shard].push(d);
        }
        fresh
    }

    /// Loads a store directory written by [`DigestTable::persist`]. A missing
    /// directory yields an empty table.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut table = Self::default();
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            return Ok(table);
        }
        let raw = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: StoreManifest = serde_json::from_slice(&raw)
            .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        if manifest.scheme != DIGEST_SCHEME || manifest.shards != SHARDS {
            return Err(Error::config(format!(
                "digest store {} was written with scheme {} / {} shards",
                dir.display(),
                manifest.scheme,
                manifest.shards
            )));
        }
        for shard in 0..SHARDS {
            let path = dir.join(format!("shard-{shard:x}.bin"));
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(Error::io(&path, e)),
            };
            if bytes.len() % 16 != 0 {
                return Err(Error::format(&path, "truncated digest record"));
            }
            for chunk in bytes.chunks_exact(16) {
                let d = DocumentDigest(chunk.try_into().expect("16-byte chunk"));
                table.shards[shard].insert(d);
            }
        }
        if table.len() as u64 != manifest.count {
            return Err(Error::format(
                &manifest_path,
                format!("manifest count {} but {} digests on disk", manifest.count, table.len()),
            ));
        }
        Ok(table)
    }

    /// Appends digests inserted since the last load/persist and rewrites the manifest.
    pub fn persist(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (shard, pending) in self.pending.iter_mut().enumerate() {
            if pending.is_empty() {
                continue;
            }
            let path = dir.join(format!("shard-{shard:x}.bin"));
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            let mut buf = Vec::with_capacity(pending.len() * 16);
            for d in pending.drain(..) {
                buf.extend_from_slice(&d.0);
            }
            f.write_all(&buf).map_err(|e| Error::io(&path, e))?;
        }
        let manifest = StoreManifest {
            scheme: DIGEST_SCHEME.to_string(),
            count: self.len() as u64,
            shards: SHARDS,
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

/// Drops every document whose normalized-text digest was already seen.
///
/// Digests are computed in parallel; survivor decisions are applied in `seq`
/// order, so the lowest-seq copy of each digest survives.
pub fn dedup_exact(mut docs: Vec<Document>, table: &mut DigestTable) -> Vec<Outcome> {
    docs.sort_by_key(|d| d.seq);
    let digests: Vec<DocumentDigest> = docs.par_iter().map(document_digest).collect();
    docs.into_iter()
        .zip(digests)
        .map(|(doc, digest)| {
            let verdict = if table.insert(digest) {
                Verdict::keep()
            } else {
                Verdict::drop("exact_dup")
            };
            Outcome::new(doc, verdict)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(seq: u64, text: &str) -> Document {
        Document::new(format!("d{seq}"), seq, text)
    }

    fn survivors(out: &[Outcome]) -> Vec<u64> {
        out.iter().filter(|o| o.verdict.keep).map(|o| o.doc.seq).collect()
    }

    #[test]
    fn digests_match_reference_md5() {
        assert_eq!(
            DocumentDigest::of_text("hello world").hex(),
            "5eb63bbbe01eeed093cb22bb8f5acdc3"
        );
        assert_eq!(DocumentDigest::of_text("").hex(), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(
            DocumentDigest::of_text("Hello,  World!"),
            DocumentDigest::of_text("hello world")
        );
        let h = DocumentDigest::of_text("anything").hex();
        assert_eq!(h.len(), 32);
        assert!(h.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f')));
    }

    #[test]
    fn lowest_seq_copy_survives() {
        let out = dedup_exact(
            vec![doc(5, "Hello,  world!"), doc(0, "hello world"), doc(2, "other")],
            &mut DigestTable::default(),
        );
        assert_eq!(survivors(&out), vec![0, 2]);
        assert_eq!(out[2].verdict, Verdict::drop("exact_dup"));
    }

    #[test]
    fn distinct_corpus_is_unchanged_and_triplicates_collapse() {
        let out = dedup_exact(
            vec![doc(0, "a"), doc(1, "b"), doc(2, "c")],
            &mut DigestTable::default(),
        );
        assert_eq!(survivors(&out), vec![0, 1, 2]);
        let out = dedup_exact(
            vec![doc(0, "x y"), doc(1, "X, y"), doc(2, "x  y.")],
            &mut DigestTable::default(),
        );
        assert_eq!(survivors(&out), vec![0]);
    }

    #[test]
    fn store_persists_between_batches() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = DigestTable::load(dir.path()).unwrap();
        dedup_exact(vec![doc(0, "first batch"), doc(1, "shared")], &mut table);
        table.persist(dir.path()).unwrap();

        let mut reloaded = DigestTable::load(dir.path()).unwrap();
        assert_eq!(reloaded.len(), 2);
        let out = dedup_exact(vec![doc(2, "Shared!"), doc(3, "new")], &mut reloaded);
        assert_eq!(survivors(&out), vec![3]);
        reloaded.persist(dir.path()).unwrap();
        let bytes = fs::metadata(dir.path().join(format!(
            "shard-{:x}.bin",
            DocumentDigest::of_text("new").shard()
        )))
        .unwrap()
        .len();
        assert!(bytes >= 16);
        assert_eq!(DigestTable::load(dir.path()).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_store_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut table = DigestTable::default();
        table.insert(DocumentDigest::of_text("a"));
        table.persist(dir.path()).unwrap();
        let shard = DocumentDigest::of_text("a").shard();
        fs::write(dir.path().join(format!("shard-{shard:x}.bin")), [0u8; 7]).unwrap();
        assert!(DigestTable::load(dir.path()).is_err());
    }
}
