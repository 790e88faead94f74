//! Exact and near-duplicate removal.
//!
//! Exact duplicates share a canonical key (prompt and response with
//! whitespace runs collapsed). Near duplicates are found with MinHash over
//! width-`w` shingles of whitespace tokens, bucketed by LSH banding; a band
//! collision only counts once the full signature estimate reaches the
//! similarity threshold. The first occurrence in stream order always wins.

use std::collections::{HashMap, HashSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::{fnv1a64, mix64};

const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinHashConfig {
    pub shingle_width: usize,
    pub num_permutations: usize,
    pub lsh_bands: usize,
    pub similarity_threshold: f64,
    pub hash_seed: u64,
}

impl Default for MinHashConfig {
    fn default() -> Self {
        MinHashConfig {
            shingle_width: 5,
            num_permutations: 128,
            lsh_bands: 32,
            similarity_threshold: 0.85,
            hash_seed: 0x5e_ed0f_d0d0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DedupConfigError {
    #[error("num_permutations ({0}) must be a positive multiple of lsh_bands ({1})")]
    Bands(usize, usize),
    #[error("similarity_threshold {0} must lie in (0, 1]")]
    Threshold(f64),
    #[error("shingle_width must be positive")]
    Width,
}

impl MinHashConfig {
    pub fn validate(&self) -> Result<(), DedupConfigError> {
        if self.lsh_bands == 0 || self.num_permutations == 0 || !self.num_permutations.is_multiple_of(self.lsh_bands) {
            return Err(DedupConfigError::Bands(self.num_permutations, self.lsh_bands));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(DedupConfigError::Threshold(self.similarity_threshold));
        }
        if self.shingle_width == 0 {
            return Err(DedupConfigError::Width);
        }
        Ok(())
    }
}

/// Text that participates in deduplication.
pub trait DedupText {
    fn dedup_text(&self) -> String;
}

impl DedupText for String {
    fn dedup_text(&self) -> String {
        self.clone()
    }
}

impl DedupText for &str {
    fn dedup_text(&self) -> String {
        (*self).to_string()
    }
}

/// Collapses whitespace runs to one space and trims both ends.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical key of a prompt/response pair.
pub fn canonical_key(prompt: &str, response: &str) -> String {
    normalize(&format!("{prompt}\n{response}"))
}

/// Shingle hashes of a (normalized) text: every window of `width`
/// consecutive whitespace tokens, or the whole text when it is shorter.
pub fn shingles(text: &str, width: usize) -> HashSet<u64> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < width {
        return std::iter::once(fnv1a64(tokens.join(" ").as_bytes())).collect();
    }
    tokens.windows(width).map(|w| fnv1a64(w.join(" ").as_bytes())).collect()
}

/// `num_permutations` universal hash functions `h_i(x) = (a_i x + b_i) mod p`
/// over the Mersenne prime `p = 2^61 - 1`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    coeffs: Vec<(u64, u64)>,
    width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub minima: Vec<u64>,
}

impl Signature {
    /// Fraction of agreeing positions, an estimate of Jaccard similarity.
    pub fn similarity(&self, other: &Signature) -> f64 {
        debug_assert_eq!(self.minima.len(), other.minima.len());
        let same = self.minima.iter().zip(&other.minima).filter(|(a, b)| a == b).count();
        same as f64 / self.minima.len() as f64
    }
}

fn mulmod61(a: u64, x: u64) -> u64 {
    let prod = u128::from(a) * u128::from(x);
    let folded = (prod & u128::from(MERSENNE_61)) + (prod >> 61);
    let mut r = folded as u64;
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

impl MinHasher {
    pub fn new(config: &MinHashConfig) -> Self {
        let mut rng = crate::seed::rng(config.hash_seed);
        let coeffs = (0..config.num_permutations)
            .map(|_| (rng.random_range(1..MERSENNE_61), rng.random_range(0..MERSENNE_61)))
            .collect();
        MinHasher { coeffs, width: config.shingle_width }
    }

    /// Signature of a set of pre-hashed elements.
    pub fn signature_of_set(&self, elements: &HashSet<u64>) -> Signature {
        let mut minima = vec![u64::MAX; self.coeffs.len()];
        for &e in elements {
            let x = mix64(e) % MERSENNE_61;
            for (m, &(a, b)) in minima.iter_mut().zip(&self.coeffs) {
                let mut h = mulmod61(a, x) + b;
                if h >= MERSENNE_61 {
                    h -= MERSENNE_61;
                }
                if h < *m {
                    *m = h;
                }
            }
        }
        Signature { minima }
    }

    pub fn signature(&self, text: &str) -> Signature {
        self.signature_of_set(&shingles(&normalize(text), self.width))
    }
}

/// Signature of `text` under `config`.
pub fn minhash_signature(text: &str, config: &MinHashConfig) -> Signature {
    MinHasher::new(config).signature(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Kept,
    Exact,
    Near,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub kept: usize,
    pub exact: usize,
    pub near: usize,
}

impl DedupReport {
    pub fn record(&mut self, d: Decision) {
        match d {
            Decision::Kept => self.kept += 1,
            Decision::Exact => self.exact += 1,
            Decision::Near => self.near += 1,
        }
    }
}

/// Incremental first-wins index.
pub struct Deduplicator {
    config: MinHashConfig,
    hasher: MinHasher,
    rows: usize,
    keys: HashSet<String>,
    signatures: Vec<Signature>,
    buckets: HashMap<(usize, u64), Vec<usize>>,
}

impl Deduplicator {
    pub fn new(config: MinHashConfig) -> Result<Self, DedupConfigError> {
        config.validate()?;
        Ok(Deduplicator {
            hasher: MinHasher::new(&config),
            rows: config.num_permutations / config.lsh_bands,
            config,
            keys: HashSet::new(),
            signatures: Vec::new(),
            buckets: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn band_keys(&self, sig: &Signature) -> Vec<(usize, u64)> {
        sig.minima
            .chunks(self.rows)
            .enumerate()
            .map(|(band, rows)| {
                let h = rows.iter().fold(band as u64, |acc, &m| crate::seed::split(acc, m));
                (band, h)
            })
            .collect()
    }

    fn classify(&self, key: &str, sig: &Signature) -> Decision {
        if self.keys.contains(key) {
            return Decision::Exact;
        }
        let mut checked = HashSet::new();
        for bk in self.band_keys(sig) {
            for &other in self.buckets.get(&bk).into_iter().flatten() {
                if checked.insert(other) && sig.similarity(&self.signatures[other]) >= self.config.similarity_threshold
                {
                    return Decision::Near;
                }
            }
        }
        Decision::Kept
    }

    /// Decision for `text` against what has been kept so far, without
    /// inserting it.
    pub fn check(&self, text: &str) -> Decision {
        let key = normalize(text);
        if self.keys.contains(&key) {
            return Decision::Exact;
        }
        let sig = self.hasher.signature(&key);
        self.classify(&key, &sig)
    }

    /// Classifies `text` and keeps it if it is new.
    pub fn insert(&mut self, text: &str) -> Decision {
        let key = normalize(text);
        if self.keys.contains(&key) {
            return Decision::Exact;
        }
        let sig = self.hasher.signature(&key);
        let d = self.classify(&key, &sig);
        if d == Decision::Kept {
            let ix = self.signatures.len();
            for bk in self.band_keys(&sig) {
                self.buckets.entry(bk).or_default().push(ix);
            }
            self.signatures.push(sig);
            self.keys.insert(key);
        }
        d
    }
}

/// Keeps the first occurrence of every exact or near duplicate group.
pub fn dedup_records<T: DedupText>(
    records: impl IntoIterator<Item = T>,
    config: &MinHashConfig,
) -> Result<(Vec<T>, DedupReport), DedupConfigError> {
    let mut index = Deduplicator::new(config.clone())?;
    let mut report = DedupReport::default();
    let mut kept = Vec::new();
    for r in records {
        let d = index.insert(&r.dedup_text());
        report.record(d);
        if d == Decision::Kept {
            kept.push(r);
        }
    }
    Ok((kept, report))
}

/// Exact Jaccard similarity of two sets.
pub fn jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}
