//! MinHash signatures and LSH banding for near-duplicate detection.
//!
//! Text is normalized and tokenized (CJK characters are single tokens), turned
//! into a set of word n-gram shingles, and summarized by `num_hashes` minima
//! of affine hash functions modulo the Mersenne prime 2^61 − 1. The signature
//! is cut into `bands` bands of `rows` components; two documents are
//! candidates when any band hashes identically.

mod dedup;

pub use dedup::{dedup_fuzzy, CollisionPolicy, LshIndex};

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::error::{Error, Result};
use crate::text::{is_cjk, normalize_text};

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LshParams {
    pub num_hashes: usize,
    pub bands: usize,
    pub rows: usize,
    pub shingle_n: usize,
    pub seed: u64,
    pub policy: CollisionPolicy,
}

impl Default for LshParams {
    fn default() -> Self {
        Self {
            num_hashes: 2048,
            bands: 128,
            rows: 16,
            shingle_n: 5,
            seed: 0,
            policy: CollisionPolicy::PerBucket,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_hashes == 0 || self.bands == 0 || self.rows == 0 || self.shingle_n == 0 {
            return Err(Error::config("LSH parameters must all be positive"));
        }
        if self.bands * self.rows != self.num_hashes {
            return Err(Error::config(format!(
                "num_hashes ({}) must equal bands ({}) x rows ({})",
                self.num_hashes, self.bands, self.rows
            )));
        }
        Ok(())
    }
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Normalizes, then emits each CJK character as a token and every maximal
/// run of other non-space characters as a token.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultTokenizer;

impl Tokenizer for DefaultTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = normalize_text(text);
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in normalized.as_str().chars() {
        if c.is_whitespace() || is_cjk(c) {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            if is_cjk(c) {
                tokens.push(c.to_string());
            }
        } else {
            run.push(c);
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

/// Distinct space-joined windows of `n` consecutive tokens.
pub fn shingle(tokens: &[String], n: usize) -> HashSet<String> {
    if n == 0 || tokens.len() < n {
        return HashSet::new();
    }
    tokens.windows(n).map(|w| w.join(" ")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinHashSignature {
    pub components: Vec<u64>,
}

impl MinHashSignature {
    /// Fraction of positions where the two signatures agree.
    pub fn agreement(&self, other: &MinHashSignature) -> f64 {
        assert_eq!(self.components.len(), other.components.len());
        let same = self
            .components
            .iter()
            .zip(&other.components)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.components.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BandKey {
    pub band: u32,
    pub key: u64,
}

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    while r >= p {
        r -= p;
    }
    r as u64
}

/// The hash family `h_i(x) = (a_i·x + b_i) mod p`, coefficients drawn from a
/// ChaCha stream seeded by `seed`, with `a_i ∈ [1, p)` and `b_i ∈ [0, p)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(num_hashes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..num_hashes)
            .map(|_| {
                (
                    rng.random_range(1..MERSENNE_61),
                    rng.random_range(0..MERSENNE_61),
                )
            })
            .collect();
        Self { coeffs }
    }

    pub fn from_params(params: &LshParams) -> Self {
        Self::new(params.num_hashes, params.seed)
    }

    pub fn num_hashes(&self) -> usize {
        self.coeffs.len()
    }

    /// The 64-bit base hash of a shingle.
    pub fn base_hash(shingle: &str) -> u64 {
        xxh3_64(shingle.as_bytes())
    }

    #[inline]
    pub fn apply(&self, i: usize, base: u64) -> u64 {
        let (a, b) = self.coeffs[i];
        let x = mod_mersenne(base as u128);
        mod_mersenne(a as u128 * x as u128 + b as u128)
    }

    /// `None` when the shingle set is empty.
    pub fn signature<'a, I>(&self, shingles: I) -> Option<MinHashSignature>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut mins = vec![u64::MAX; self.coeffs.len()];
        let mut any = false;
        for s in shingles {
            any = true;
            let x = mod_mersenne(Self::base_hash(s) as u128) as u128;
            for (m, &(a, b)) in mins.iter_mut().zip(&self.coeffs) {
                let h = mod_mersenne(a as u128 * x + b as u128);
                if h < *m {
                    *m = h;
                }
            }
        }
        any.then_some(MinHashSignature { components: mins })
    }
}

pub fn minhash_signature(shingles: &HashSet<String>, params: &LshParams) -> Option<MinHashSignature> {
    MinHasher::from_params(params).signature(shingles.iter().map(String::as_str))
}

/// One key per band: the xxh3 hash of the band's `rows` components (LE bytes).
pub fn band_keys(sig: &MinHashSignature, params: &LshParams) -> Vec<BandKey> {
    assert_eq!(sig.components.len(), params.bands * params.rows, "signature length");
    sig.components
        .chunks_exact(params.rows)
        .enumerate()
        .map(|(band, rows)| {
            let mut bytes = Vec::with_capacity(rows.len() * 8);
            for c in rows {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            BandKey {
                band: band as u32,
                key: xxh3_64(&bytes),
            }
        })
        .collect()
}

/// Probability that a pair with Jaccard similarity `s` collides in at least
/// one of `bands` bands of `rows` rows: `1 − (1 − s^rows)^bands`, computed as
/// `−expm1(bands · ln_1p(−s^rows))`.
pub fn detection_probability(s: f64, bands: usize, rows: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::config(format!("Jaccard similarity {s} outside [0, 1]")));
    }
    if bands == 0 || rows == 0 {
        return Err(Error::config("bands and rows must be positive"));
    }
    let band_hit = s.powi(rows as i32);
    Ok(-(bands as f64 * (-band_hit).ln_1p()).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenizer_handles_latin_and_cjk() {
        assert_eq!(tokenize("hello world"), toks(&["hello", "world"]));
        assert_eq!(tokenize("你好world"), toks(&["你", "好", "world"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Café, OK!"), toks(&["cafe\u{301}", "ok"]));
    }

    #[test]
    fn shingle_counts() {
        let t = |n: usize| (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>();
        assert_eq!(shingle(&t(5), 5).len(), 1);
        assert_eq!(shingle(&t(7), 5).len(), 3);
        assert!(shingle(&t(4), 5).is_empty());
        assert!(shingle(&t(7), 5).contains("t2 t3 t4 t5 t6"));
    }

    #[test]
    fn mersenne_reduction_matches_modulo() {
        for x in [0u128, 1, MERSENNE_61 as u128, (MERSENNE_61 as u128) * 3 + 5, u128::from(u64::MAX), (1u128 << 122) - 1] {
            assert_eq!(mod_mersenne(x) as u128, x % MERSENNE_61 as u128, "{x}");
        }
    }

    #[test]
    fn signatures_are_deterministic_and_set_based() {
        let p = LshParams::default();
        let a: HashSet<String> = ["a b", "c d", "e f"].iter().map(|s| s.to_string()).collect();
        let sa = minhash_signature(&a, &p).unwrap();
        assert_eq!(sa.components.len(), 2048);
        assert_eq!(sa, minhash_signature(&a.clone(), &p).unwrap());
        assert!(sa.components.iter().all(|&c| c < MERSENNE_61));
        assert!(minhash_signature(&HashSet::new(), &p).is_none());
    }

    #[test]
    fn singleton_signature_is_the_hash_itself() {
        let p = LshParams { num_hashes: 64, bands: 8, rows: 8, ..Default::default() };
        let h = MinHasher::from_params(&p);
        let sig = h.signature(["only shingle"]).unwrap();
        let base = MinHasher::base_hash("only shingle");
        for (i, c) in sig.components.iter().enumerate() {
            assert_eq!(*c, h.apply(i, base));
        }
    }

    #[test]
    fn coefficient_a_is_never_zero() {
        let h = MinHasher::new(4096, 99);
        assert!(h.coeffs.iter().all(|&(a, b)| a != 0 && a < MERSENNE_61 && b < MERSENNE_61));
    }

    #[test]
    fn band_keys_are_local() {
        let p = LshParams::default();
        let sig = MinHashSignature { components: (0..2048).collect() };
        let mut other = sig.clone();
        other.components[0] = 999_999;
        let a = band_keys(&sig, &p);
        let b = band_keys(&other, &p);
        assert_eq!(a.len(), 128);
        assert_ne!(a[0], b[0]);
        assert_eq!(a[1..], b[1..]);
        assert_eq!(a, band_keys(&sig.clone(), &p));
        assert!(a.iter().enumerate().all(|(i, k)| k.band as usize == i));
    }

    #[test]
    fn detection_probability_reference_points() {
        let p = detection_probability(0.8, 128, 16).unwrap();
        assert!((p - 0.9742).abs() <= 1e-4, "{p}");
        // high-precision reference: 0.974127063368274481...
        assert!((p - 0.974_127_063_368_274_5).abs() < 1e-12);
        assert_eq!(detection_probability(1.0, 128, 16).unwrap(), 1.0);
        assert_eq!(detection_probability(0.0, 128, 16).unwrap(), 0.0);
        let half = detection_probability(0.5, 128, 16).unwrap();
        assert!((half - 1.951_233_764_761_471_5e-3).abs() < 1e-15, "{half}");
        let tiny = detection_probability(0.2, 128, 16).unwrap();
        assert!((tiny / 8.388_607_996_509_05e-10 - 1.0).abs() < 1e-9, "{tiny}");
        assert!(detection_probability(1.2, 128, 16).is_err());
        assert!(detection_probability(-0.1, 128, 16).is_err());
        assert!(detection_probability(f64::NAN, 128, 16).is_err());
    }

    #[test]
    fn params_require_k_equals_b_times_r() {
        assert!(LshParams::default().validate().is_ok());
        let bad = LshParams { bands: 100, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
