//! Bias-classification corpus preparation: hard-negative mining by TF-IDF
//! cosine similarity and a stratified train/dev/test split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::ingest::preprocess_text;

pub const NEGATIVE_CATEGORY: &str = "none";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub id: String,
    pub text: String,
    #[serde(with = "label01")]
    pub label: bool,
    pub category: String,
}

mod label01 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(D::Error::custom(format!("label must be 0 or 1, found `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub splits: BTreeMap<String, Split>,
    /// Categories with fewer than 3 items, sent wholly to train.
    pub small_categories: Vec<String>,
}

impl SplitAssignment {
    pub fn count(&self, split: Split) -> usize {
        self.splits.values().filter(|s| **s == split).count()
    }
}

#[derive(Debug, Error)]
pub enum CorpusPrepError {
    #[error("hard-negative pool exhausted; unmatched positives: {0:?}")]
    PoolExhausted(Vec<String>),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    Ratios([f64; 3]),
    #[error("excerpt {0}: biased excerpts need a category other than `none`")]
    Category(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Splits prose on `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            out.push(text[start..end].trim().to_owned());
            start = end;
        }
    }
    out.push(text[start..].trim().to_owned());
    out.retain(|s| !s.is_empty());
    out
}

/// Set-of-words TF-IDF over the shared tokenization. A term's weight is its
/// smoothed idf `ln((N + 1) / (df + 1)) + 1` when present, 0 otherwise, so
/// identical token sets have cosine exactly 1.
#[derive(Clone, Debug)]
pub struct TfIdf {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl TfIdf {
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Result<Self, CorpusPrepError> {
        if corpus.is_empty() {
            return Err(CorpusPrepError::EmptyCorpus);
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for t in token_set(doc.as_ref()) {
                *df.entry(t).or_default() += 1;
            }
        }
        Ok(TfIdf {
            n_docs: corpus.len(),
            df,
        })
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((self.n_docs as f64 + 1.0) / (df + 1.0)).ln() + 1.0
    }

    pub fn vector(&self, text: &str) -> SparseVec {
        let mut terms: Vec<(String, f64)> = token_set(text).into_iter().map(|t| {
            let w = self.idf(&t);
            (t, w)
        }).collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let norm = terms.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        SparseVec { terms, norm }
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        self.vector(a).cosine(&self.vector(b))
    }
}

/// Sorted sparse term vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVec {
    terms: Vec<(String, f64)>,
    norm: f64,
}

impl SparseVec {
    pub fn cosine(&self, other: &SparseVec) -> f64 {
        if self.terms.is_empty() || other.terms.is_empty() {
            return 0.0;
        }
        if self.terms.len() == other.terms.len() && self.terms.iter().zip(&other.terms).all(|(a, b)| a.0 == b.0) {
            return 1.0;
        }
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < self.terms.len() && j < other.terms.len() {
            match self.terms[i].0.cmp(&other.terms[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += self.terms[i].1 * other.terms[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        (dot / (self.norm * other.norm)).clamp(0.0, 1.0)
    }
}

fn token_set(text: &str) -> HashSet<String> {
    preprocess_text(text).tokens.into_iter().collect()
}

/// TF-IDF cosine of `a` and `b` with document frequencies from `corpus`.
pub fn tfidf_cosine<S: AsRef<str>>(a: &str, b: &str, corpus: &[S]) -> Result<f64, CorpusPrepError> {
    Ok(TfIdf::fit(corpus)?.cosine(a, b))
}

/// For each positive (in id order) pick the most similar unused pool
/// sentence, skipping verbatim copies of any positive. Ties go to the
/// earlier pool entry. Document frequencies come from positives + pool.
pub fn mine_hard_negatives(exec: Exec, positives: &[Excerpt], pool: &[String]) -> Result<Vec<Excerpt>, CorpusPrepError> {
    let mut order: Vec<&Excerpt> = positives.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let corpus: Vec<&str> = positives.iter().map(|p| p.text.as_str()).chain(pool.iter().map(String::as_str)).collect();
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let model = TfIdf::fit(&corpus)?;

    let verbatim: HashSet<&str> = positives.iter().map(|p| p.text.trim()).collect();
    let eligible: Vec<usize> = (0..pool.len()).filter(|&i| !verbatim.contains(pool[i].trim())).collect();
    let pool_vecs = exec.map(&eligible, |&i| model.vector(&pool[i]));
    let sims: Vec<Vec<f64>> = exec.map(&order, |p| {
        let v = model.vector(&p.text);
        pool_vecs.iter().map(|q| v.cosine(q)).collect()
    });

    let mut used_idx = vec![false; eligible.len()];
    let mut used_text: HashSet<&str> = HashSet::new();
    let mut out = Vec::with_capacity(order.len());
    let mut unmatched = Vec::new();
    for (p, row) in order.iter().zip(&sims) {
        let best = (0..eligible.len())
            .filter(|&j| !used_idx[j] && !used_text.contains(pool[eligible[j]].trim()))
            .fold(None::<usize>, |best, j| match best {
                Some(b) if row[b] >= row[j] => Some(b),
                _ => Some(j),
            });
        match best {
            Some(j) => {
                used_idx[j] = true;
                let text = &pool[eligible[j]];
                used_text.insert(text.trim());
                out.push(Excerpt {
                    id: format!("neg-{}", p.id),
                    text: text.clone(),
                    label: false,
                    category: NEGATIVE_CATEGORY.to_owned(),
                });
            }
            None => unmatched.push(p.id.clone()),
        }
    }
    if unmatched.is_empty() {
        Ok(out)
    } else {
        Err(CorpusPrepError::PoolExhausted(unmatched))
    }
}

/// Largest-remainder apportionment of `n` items over `weights` (integer
/// parts per million). Remainder ties go to the earlier slot.
pub fn apportion(n: usize, weights: [u64; 3]) -> [usize; 3] {
    const SCALE: u64 = 1_000_000;
    let n = n as u64;
    let mut counts = [0usize; 3];
    let mut rems = [(0u64, 0usize); 3];
    for (i, w) in weights.iter().enumerate() {
        counts[i] = (n * w / SCALE) as usize;
        rems[i] = (n * w % SCALE, i);
    }
    let left = n as usize - counts.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(left) {
        counts[i] += 1;
    }
    counts
}

fn ratio_weights(ratios: [f64; 3]) -> Result<[u64; 3], CorpusPrepError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(CorpusPrepError::Ratios(ratios));
    }
    let w = ratios.map(|r| (r * 1e6).round() as u64);
    if w.iter().sum::<u64>() != 1_000_000 {
        return Err(CorpusPrepError::Ratios(ratios));
    }
    Ok(w)
}

/// Per-category largest-remainder split. Items are sorted by id, shuffled
/// with a ChaCha8 stream seeded from `seed`, and dealt train → dev → test.
/// Categories are processed in name order from the same stream.
pub fn stratified_split(excerpts: &[Excerpt], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, CorpusPrepError> {
    let weights = ratio_weights(ratios)?;
    let mut by_cat: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in excerpts {
        if e.label && e.category == NEGATIVE_CATEGORY {
            return Err(CorpusPrepError::Category(e.id.clone()));
        }
        by_cat.entry(e.category.as_str()).or_default().push(e.id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment::default();
    for (cat, mut ids) in by_cat {
        ids.sort_unstable();
        if ids.len() < 3 {
            out.small_categories.push(cat.to_owned());
            out.splits.extend(ids.into_iter().map(|id| (id.to_owned(), Split::Train)));
            continue;
        }
        // Fisher-Yates with unbiased bounded draws.
        for i in (1..ids.len()).rev() {
            let j = bounded(&mut rng, i as u64 + 1) as usize;
            ids.swap(i, j);
        }
        let [tr, dv, _] = apportion(ids.len(), weights);
        for (k, id) in ids.into_iter().enumerate() {
            let split = if k < tr {
                Split::Train
            } else if k < tr + dv {
                Split::Dev
            } else {
                Split::Test
            };
            out.splits.insert(id.to_owned(), split);
        }
    }
    Ok(out)
}

/// Uniform integer in `[0, n)` by rejection.
fn bounded(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

pub fn read_excerpts<R: Read>(input: R) -> Result<Vec<Excerpt>, CorpusPrepError> {
    let v: Vec<Excerpt> = csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>()?;
    if let Some(bad) = v.iter().find(|e| e.label && e.category == NEGATIVE_CATEGORY) {
        return Err(CorpusPrepError::Category(bad.id.clone()));
    }
    Ok(v)
}

pub fn write_excerpts<W: Write>(out: W, excerpts: &[Excerpt]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in excerpts {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `id,split`, ids ascending.
pub fn write_splits<W: Write>(out: W, s: &SplitAssignment) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "split"])?;
    for (id, split) in &s.splits {
        let name = match split {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        w.write_record([id.as_str(), name])?;
    }
    w.flush()?;
    Ok(())
}
