//! Seeded synthetic corpora with known cascade ground truth.
//!
//! Each cascade is a Galton–Watson tree: every node below `max_depth` gets
//! Poisson(`offspring_mean`) retweet children, and a child is posted an
//! Exponential(`rate_per_min`) delay after its parent (at least 1 ms, so
//! timestamps strictly increase down the tree).
//!
//! Randomness is portable: cascade `i` draws from its own ChaCha8 stream
//! seeded with `splitmix64(seed ^ splitmix64(i))` via `seed_from_u64`;
//! uniforms are `(next_u64 >> 11) * 2^-53`; exponentials use inversion;
//! Poisson draws use Knuth's product method in chunks of mean ≤ 16. Any
//! implementation following those rules regenerates the same corpus.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::LabeledExample;
use crate::cascade::{Cascade, CascadeNode, Edge};
use crate::cohort::Cohort;
use crate::exec::Exec;
use crate::ingest::{RefKind, TweetRecord};
use crate::scoring::ScoreRecord;

/// Target median minutes to 100 retweets, biased cohort.
pub const REFERENCE_MEDIAN_MIN_BIASED: f64 = 145.31;
/// Target median minutes to 100 retweets, unbiased cohort.
pub const REFERENCE_MEDIAN_MIN_UNBIASED: f64 = 822.43;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortGen {
    pub n_roots: usize,
    /// Poisson mean of retweet children per node.
    pub offspring_mean: f64,
    pub max_depth: u32,
    /// Exponential delay rate, events per minute.
    pub rate_per_min: f64,
    /// Root bias scores are uniform on `[lo, hi)`.
    pub bias_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub biased: CohortGen,
    pub unbiased: CohortGen,
    /// Root claim scores are uniform on `[lo, hi)`.
    pub claim_range: (f64, f64),
    /// Extra non-claim originals and replies that never form cascades.
    pub n_distractors: usize,
    /// Root authors are Zipf-distributed over this many users.
    pub root_authors: usize,
    pub author_zipf_exponent: f64,
    /// Retweeters are uniform over this many users.
    pub retweeters: usize,
    pub start_ms: i64,
    /// Roots are posted uniformly over this many minutes after `start_ms`.
    pub root_span_minutes: f64,
    /// Hard cap on nodes per cascade (guards supercritical settings).
    pub max_cascade_size: usize,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{0}")]
    Invalid(String),
    #[error("ground-truth line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl GenConfig {
    /// Small default: both cohorts identical except for rate and bias range.
    pub fn new(seed: u64) -> Self {
        let base = CohortGen {
            n_roots: 100,
            offspring_mean: 0.8,
            max_depth: 20,
            rate_per_min: 0.1,
            bias_range: (0.6, 0.9),
        };
        GenConfig {
            biased: base.clone(),
            unbiased: CohortGen {
                bias_range: (0.05, 0.35),
                ..base
            },
            claim_range: (0.92, 1.0),
            n_distractors: 0,
            root_authors: 200,
            author_zipf_exponent: 1.2,
            retweeters: 50_000,
            start_ms: 1_577_836_800_000, // 2020-01-01T00:00:00Z
            root_span_minutes: 60.0 * 24.0 * 30.0,
            max_cascade_size: 100_000,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn cohort(&self, c: Cohort) -> &CohortGen {
        match c {
            Cohort::Biased => &self.biased,
            Cohort::Unbiased => &self.unbiased,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        for (name, c) in [("biased", &self.biased), ("unbiased", &self.unbiased)] {
            if !(c.offspring_mean >= 0.0 && c.offspring_mean.is_finite()) {
                return bad(format!("{name}: offspring mean must be >= 0"));
            }
            if !(c.rate_per_min > 0.0 && c.rate_per_min.is_finite()) {
                return bad(format!("{name}: rate must be > 0"));
            }
            let (lo, hi) = c.bias_range;
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(format!("{name}: bias range must lie in [0,1]"));
            }
        }
        let (b, u) = (self.biased.bias_range, self.unbiased.bias_range);
        if b.0 < u.1 && u.0 < b.1 {
            return bad("cohort bias ranges overlap".into());
        }
        let (lo, hi) = self.claim_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("claim range must lie in [0,1]".into());
        }
        if self.root_authors == 0 || self.retweeters == 0 || self.max_cascade_size == 0 {
            return bad("author pools and cascade cap must be positive".into());
        }
        if self.start_ms < 0 || self.root_span_minutes < 0.0 {
            return bad("start time and span must be non-negative".into());
        }
        Ok(())
    }
}

/// Reference preset: the biased cohort spreads
/// `822.43 / 145.31 ≈ 5.66` times faster and has a larger offspring mean.
pub fn reference_profile() -> GenConfig {
    let biased_rate = 0.075;
    GenConfig {
        biased: CohortGen {
            n_roots: 500,
            offspring_mean: 0.96,
            max_depth: 50,
            rate_per_min: biased_rate,
            bias_range: (0.6, 0.9),
        },
        unbiased: CohortGen {
            n_roots: 500,
            offspring_mean: 0.94,
            max_depth: 50,
            rate_per_min: biased_rate * REFERENCE_MEDIAN_MIN_BIASED / REFERENCE_MEDIAN_MIN_UNBIASED,
            bias_range: (0.05, 0.35),
        },
        n_distractors: 200,
        ..GenConfig::new(2023)
    }
}

/// Ground-truth cascade with its generating cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthCascade {
    pub cohort: Cohort,
    pub cascade: Cascade,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Sorted by `(created_at, id)`.
    pub records: Vec<TweetRecord>,
    /// Biased cascades first, then unbiased, in generation order.
    pub cascades: Vec<TruthCascade>,
    /// In record order.
    pub scores: Vec<ScoreRecord>,
}

impl GroundTruth {
    pub fn root_ids(&self, cohort: Option<Cohort>) -> Vec<String> {
        self.cascades
            .iter()
            .filter(|t| cohort.map_or(true, |c| t.cohort == c))
            .map(|t| t.cascade.root_id.clone())
            .collect()
    }

    /// Labelled claim-validation set: cascade roots are positives, records
    /// outside every cascade are negatives. In record order.
    pub fn validation_set(&self) -> Vec<LabeledExample> {
        let roots: HashSet<&str> = self.cascades.iter().map(|t| t.cascade.root_id.as_str()).collect();
        let members: HashSet<&str> = self
            .cascades
            .iter()
            .flat_map(|t| t.cascade.nodes.iter().map(|n| n.tweet_id.as_str()))
            .collect();
        self.scores
            .iter()
            .filter_map(|s| {
                let id = s.tweet_id.as_str();
                let y = roots.contains(id);
                (y || !members.contains(id)).then(|| LabeledExample::new(id, s.p_claim, y))
            })
            .collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream seed for cascade `index` (distractors use `u64::MAX`).
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Portable sampling primitives over a ChaCha8 stream.
pub struct Sampler(ChaCha8Rng);

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, (lo, hi): (f64, f64)) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        -(1.0 - self.uniform()).ln() / rate
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        const CHUNK: f64 = 16.0;
        let mut left = mean;
        let mut total = 0;
        while left > 0.0 {
            let m = left.min(CHUNK);
            left -= m;
            let limit = (-m).exp();
            let mut p = self.uniform();
            while p > limit {
                total += 1;
                p *= self.uniform();
            }
        }
        total
    }
}

/// Inverse-CDF sampler for a Zipf law over ranks `1..=n`.
struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|r| {
                acc += 1.0 / (r as f64).powf(exponent);
                acc
            })
            .collect();
        Zipf { cumulative }
    }

    fn sample(&self, s: &mut Sampler) -> usize {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let u = s.uniform() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1) + 1
    }
}

const BIASED_TEXTS: &[&str] = &[
    "Only women get depression this bad, it is all hormones",
    "98% of autism in men is just depression",
    "All girls with anxiety are just seeking attention",
    "Every man who goes to therapy is weak, testosterone fixes mental health",
    "There are only 2 genders. Gender dysphoria is a mental health issue caused by environmental estrogen",
];

const UNBIASED_TEXTS: &[&str] = &[
    "Sleep deprivation is linked to higher anxiety in adults",
    "Elevated paternal glucocorticoid exposure alters anxiety phenotypes in offspring",
    "Regular exercise reduces depressive symptoms in a 12 week trial",
    "Early diagnosis improves outcomes for ADHD across ages",
];

const DISTRACTOR_TEXTS: &[&str] = &[
    "Happy mental health awareness week everyone",
    "Anyone have podcast recommendations",
    "Thinking of you all today",
];

struct Generated {
    records: Vec<TweetRecord>,
    scores: Vec<ScoreRecord>,
    truth: TruthCascade,
}

fn generate_cascade(cfg: &GenConfig, zipf: &Zipf, index: usize, cohort: Cohort) -> Generated {
    let gen = cfg.cohort(cohort);
    let mut s = Sampler::new(stream_seed(cfg.seed, index as u64));
    let root_id = format!("c{index:06}");
    let root_author = format!("a{}", zipf.sample(&mut s));
    let root_t = cfg.start_ms + (s.uniform() * cfg.root_span_minutes * 60_000.0) as i64;
    let text = match cohort {
        Cohort::Biased => BIASED_TEXTS[s.below(BIASED_TEXTS.len())],
        Cohort::Unbiased => UNBIASED_TEXTS[s.below(UNBIASED_TEXTS.len())],
    };
    let p_claim = s.uniform_in(cfg.claim_range);
    let p_bias = s.uniform_in(gen.bias_range);

    let root = TweetRecord::original(root_id.clone(), Some(&root_author), root_t, text);
    let mut cascade = Cascade::singleton(CascadeNode {
        tweet_id: root_id.clone(),
        author_id: Some(root_author.clone()),
        created_at: root_t,
    });
    let mut records = vec![root];
    // (record index, depth) in generation (BFS) order
    let mut frontier = std::collections::VecDeque::from([(0usize, 0u32)]);
    let rt_text = format!("RT @{root_author}: {text}");
    'grow: while let Some((parent, depth)) = frontier.pop_front() {
        if depth >= gen.max_depth {
            continue;
        }
        let kids = s.poisson(gen.offspring_mean);
        for _ in 0..kids {
            if records.len() >= cfg.max_cascade_size {
                break 'grow;
            }
            let delay_ms = ((s.exponential(gen.rate_per_min) * 60_000.0).round() as i64).max(1);
            let parent_rec = &records[parent];
            let (parent_id, parent_t) = (parent_rec.id.clone(), parent_rec.created_at);
            let id = format!("{root_id}-{:06}", records.len());
            let author = format!("u{}", s.below(cfg.retweeters));
            let t = parent_t + delay_ms;
            cascade.nodes.push(CascadeNode {
                tweet_id: id.clone(),
                author_id: Some(author.clone()),
                created_at: t,
            });
            cascade.edges.push(Edge {
                child_id: id.clone(),
                parent_id: parent_id.clone(),
            });
            frontier.push_back((records.len(), depth + 1));
            records.push(TweetRecord::referencing(id, Some(&author), t, rt_text.clone(), RefKind::Retweet, parent_id));
        }
    }
    let scores = records
        .iter()
        .map(|r| ScoreRecord {
            tweet_id: r.id.clone(),
            p_claim,
            p_bias: Some(p_bias),
        })
        .collect();
    Generated {
        records,
        scores,
        truth: TruthCascade { cohort, cascade },
    }
}

fn distractors(cfg: &GenConfig, zipf: &Zipf, n_roots: usize) -> (Vec<TweetRecord>, Vec<ScoreRecord>) {
    let mut s = Sampler::new(stream_seed(cfg.seed, u64::MAX));
    let mut recs = Vec::with_capacity(cfg.n_distractors);
    let mut scores = Vec::with_capacity(cfg.n_distractors);
    for i in 0..cfg.n_distractors {
        let id = format!("d{i:06}");
        let t = cfg.start_ms + (s.uniform() * cfg.root_span_minutes * 60_000.0) as i64;
        let text = DISTRACTOR_TEXTS[s.below(DISTRACTOR_TEXTS.len())];
        // every third distractor replies to a cascade root
        let rec = if i % 3 == 2 && n_roots > 0 {
            let target = format!("c{:06}", s.below(n_roots));
            TweetRecord::referencing(id.clone(), Some(&format!("u{}", s.below(cfg.retweeters))), t, text, RefKind::Reply, target)
        } else {
            TweetRecord::original(id.clone(), Some(&format!("a{}", zipf.sample(&mut s))), t, text)
        };
        recs.push(rec);
        scores.push(ScoreRecord {
            tweet_id: id,
            p_claim: s.uniform_in((0.0, 0.5)),
            p_bias: None,
        });
    }
    (recs, scores)
}

pub fn generate(cfg: &GenConfig) -> Result<GroundTruth, SynthError> {
    generate_with(Exec::default(), cfg)
}

/// Generates a corpus. Cascades are independent streams, so the parallel
/// and sequential paths produce identical output.
pub fn generate_with(exec: Exec, cfg: &GenConfig) -> Result<GroundTruth, SynthError> {
    cfg.validate()?;
    let zipf = Zipf::new(cfg.root_authors, cfg.author_zipf_exponent);
    let nb = cfg.biased.n_roots;
    let n = nb + cfg.unbiased.n_roots;
    let generated = exec.map_range(n, |i| {
        let cohort = if i < nb { Cohort::Biased } else { Cohort::Unbiased };
        generate_cascade(cfg, &zipf, i, cohort)
    });

    let (d_recs, d_scores) = distractors(cfg, &zipf, n);
    let mut rows: Vec<(TweetRecord, ScoreRecord)> = d_recs.into_iter().zip(d_scores).collect();
    let mut cascades = Vec::with_capacity(n);
    for g in generated {
        rows.extend(g.records.into_iter().zip(g.scores));
        cascades.push(g.truth);
    }
    rows.sort_by(|a, b| a.0.created_at.cmp(&b.0.created_at).then_with(|| a.0.id.cmp(&b.0.id)));
    let (records, scores) = rows.into_iter().unzip();
    Ok(GroundTruth {
        records,
        cascades,
        scores,
    })
}

/// One JSON document per line: `{"cohort": ..., "cascade": {...}}`.
pub fn write_truth<W: Write>(mut out: W, truth: &[TruthCascade]) -> std::io::Result<()> {
    for t in truth {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_truth<R: BufRead>(input: R) -> Result<Vec<TruthCascade>, SynthError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| SynthError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SynthError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}
