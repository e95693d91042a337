use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{band_keys, shingle, BandKey, LshParams, MinHasher, Tokenizer};
use crate::document::{Document, Outcome, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    /// A document colliding with an already-retained document in any band is
    /// dropped; buckets only ever hold retained documents.
    #[default]
    PerBucket,
    /// Documents linked by any chain of band collisions form one component;
    /// only its lowest-seq member survives.
    Component,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Retained {
    seq: u64,
    id: String,
}

/// Band buckets of retained documents, one map per band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LshIndex {
    bands: Vec<HashMap<u64, Retained>>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct IndexManifest {
    format: String,
    num_hashes: usize,
    bands: usize,
    rows: usize,
    shingle_n: usize,
    seed: u64,
    entries: Vec<usize>,
}

const INDEX_FORMAT: &str = "lsh-buckets/v1";

impl LshIndex {
    pub fn new(params: &LshParams) -> Self {
        Self {
            bands: vec![HashMap::new(); params.bands],
        }
    }

    pub fn len(&self) -> usize {
        self.bands.first().map_or(0, HashMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn first_hit(&self, keys: &[BandKey]) -> Option<&Retained> {
        keys.iter()
            .find_map(|k| self.bands[k.band as usize].get(&k.key))
    }

    fn insert(&mut self, keys: &[BandKey], seq: u64, id: &str) {
        for k in keys {
            self.bands[k.band as usize]
                .entry(k.key)
                .or_insert_with(|| Retained { seq, id: id.to_string() });
        }
    }

    /// Writes `band-NNN.bin` files of `key u64 | seq u64 | id_len u32 | id`
    /// (little-endian, sorted by key) plus `manifest.json`.
    pub fn save(&self, dir: &Path, params: &LshParams) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (band, bucket) in self.bands.iter().enumerate() {
            let path = dir.join(format!("band-{band:03}.bin"));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let mut entries: Vec<_> = bucket.iter().collect();
            entries.sort_unstable_by_key(|(k, _)| **k);
            for (key, r) in entries {
                w.write_all(&key.to_le_bytes())
                    .and_then(|_| w.write_all(&r.seq.to_le_bytes()))
                    .and_then(|_| w.write_all(&(r.id.len() as u32).to_le_bytes()))
                    .and_then(|_| w.write_all(r.id.as_bytes()))
                    .map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        let manifest = IndexManifest {
            format: INDEX_FORMAT.into(),
            num_hashes: params.num_hashes,
            bands: params.bands,
            rows: params.rows,
            shingle_n: params.shingle_n,
            seed: params.seed,
            entries: self.bands.iter().map(HashMap::len).collect(),
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("serializes"))
            .map_err(|e| Error::io(&path, e))
    }

    /// Loads buckets written with identical hashing parameters; a directory
    /// without a manifest yields an empty index.
    pub fn load(dir: &Path, params: &LshParams) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        if !mpath.exists() {
            return Ok(Self::new(params));
        }
        let raw = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: IndexManifest =
            serde_json::from_slice(&raw).map_err(|e| Error::format(&mpath, e.to_string()))?;
        if m.format != INDEX_FORMAT
            || (m.num_hashes, m.bands, m.rows, m.shingle_n, m.seed)
                != (params.num_hashes, params.bands, params.rows, params.shingle_n, params.seed)
        {
            return Err(Error::config(format!(
                "bucket store {} was built with different LSH parameters",
                dir.display()
            )));
        }
        let mut index = Self::new(params);
        for (band, bucket) in index.bands.iter_mut().enumerate() {
            let path = dir.join(format!("band-{band:03}.bin"));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let bad = || Error::format(&path, "truncated bucket record");
            let mut rest = bytes.as_slice();
            while !rest.is_empty() {
                if rest.len() < 20 {
                    return Err(bad());
                }
                let key = u64::from_le_bytes(rest[0..8].try_into().expect("8"));
                let seq = u64::from_le_bytes(rest[8..16].try_into().expect("8"));
                let len = u32::from_le_bytes(rest[16..20].try_into().expect("4")) as usize;
                let id = rest.get(20..20 + len).ok_or_else(bad)?;
                let id = String::from_utf8(id.to_vec())
                    .map_err(|_| Error::format(&path, "bucket id is not UTF-8"))?;
                bucket.insert(key, Retained { seq, id });
                rest = &rest[20 + len..];
            }
            if bucket.len() != m.entries.get(band).copied().unwrap_or(usize::MAX) {
                return Err(Error::format(&path, "entry count does not match manifest"));
            }
        }
        Ok(index)
    }
}

/// Near-duplicate removal over `docs` in `seq` order.
///
/// Signatures are computed in parallel; bucket decisions are sequential in
/// `seq` order, so the result does not depend on worker count. Documents too
/// short to produce a shingle bypass the stage and are flagged.
pub fn dedup_fuzzy(
    mut docs: Vec<Document>,
    params: &LshParams,
    tokenizer: &dyn Tokenizer,
    index: &mut LshIndex,
) -> Vec<Outcome> {
    docs.sort_by_key(|d| d.seq);
    let hasher = MinHasher::from_params(params);
    let keys: Vec<Option<Vec<BandKey>>> = docs
        .par_iter()
        .map(|d| {
            let shingles = shingle(&tokenizer.tokenize(&d.text), params.shingle_n);
            hasher
                .signature(shingles.iter().map(String::as_str))
                .map(|sig| band_keys(&sig, params))
        })
        .collect();
    match params.policy {
        CollisionPolicy::PerBucket => per_bucket(docs, keys, index),
        CollisionPolicy::Component => component(docs, keys, index),
    }
}

fn short_doc(doc: Document) -> Outcome {
    Outcome::new(doc, Verdict::keep().with_flag("short_for_minhash"))
}

fn per_bucket(docs: Vec<Document>, keys: Vec<Option<Vec<BandKey>>>, index: &mut LshIndex) -> Vec<Outcome> {
    docs.into_iter()
        .zip(keys)
        .map(|(doc, keys)| {
            let Some(keys) = keys else {
                return short_doc(doc);
            };
            if let Some(hit) = index.first_hit(&keys) {
                let note = format!("dup_of={}", hit.id);
                return Outcome::new(doc, Verdict::drop("fuzzy_dup")).with_note(note);
            }
            index.insert(&keys, doc.seq, &doc.doc_id);
            Outcome::new(doc, Verdict::keep())
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn component(docs: Vec<Document>, keys: Vec<Option<Vec<BandKey>>>, index: &mut LshIndex) -> Vec<Outcome> {
    let n = docs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut first_with_key: HashMap<BandKey, usize> = HashMap::new();
    let mut history_hit: Vec<Option<String>> = vec![None; n];
    for (i, ks) in keys.iter().enumerate() {
        let Some(ks) = ks else { continue };
        history_hit[i] = index.first_hit(ks).map(|r| r.id.clone());
        for k in ks {
            match first_with_key.get(k) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    // Roots are always the lowest index, i.e. the lowest seq.
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent[hi] = lo;
                }
                None => {
                    first_with_key.insert(*k, i);
                }
            }
        }
    }
    let mut component_history: HashMap<usize, String> = HashMap::new();
    for (i, hit) in history_hit.iter().enumerate() {
        if let Some(id) = hit {
            let root = find(&mut parent, i);
            component_history.entry(root).or_insert_with(|| id.clone());
        }
    }
    let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
    docs.into_iter()
        .zip(keys)
        .enumerate()
        .map(|(i, (doc, ks))| {
            let Some(ks) = ks else {
                return short_doc(doc);
            };
            let root = find(&mut parent, i);
            if let Some(id) = component_history.get(&root) {
                return Outcome::new(doc, Verdict::drop("fuzzy_dup")).with_note(format!("dup_of={id}"));
            }
            if root != i {
                let note = format!("dup_of={}", ids[root]);
                return Outcome::new(doc, Verdict::drop("fuzzy_dup")).with_note(note);
            }
            index.insert(&ks, doc.seq, &doc.doc_id);
            Outcome::new(doc, Verdict::keep())
        })
        .collect()
}
