//! Claim and bias probabilities.
//!
//! Scores normally come from an external score file (`tweet_id,p_claim,p_bias`)
//! written by the transformer adapter. The baseline lexicon scorers here are
//! deterministic stand-ins for desk-scale runs and tests.

use std::collections::HashMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::exec::Exec;
use crate::ingest::{preprocess_text, CleanText, ErrorPolicy, TweetRecord};

pub const SCORE_HEADER: [&str; 3] = ["tweet_id", "p_claim", "p_bias"];

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub tweet_id: String,
    pub p_claim: f64,
    /// Only required for tweets that pass the claim threshold.
    pub p_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreRowError {
    #[error("line {line}: empty tweet_id")]
    EmptyId { line: u64 },
    #[error("line {line}: {field} = {value} is not a probability in [0,1]")]
    OutOfRange { line: u64, field: &'static str, value: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("score file header must be `tweet_id,p_claim,p_bias`, found `{0}`")]
    Header(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Row(#[from] ScoreRowError),
}

#[derive(Debug, Default)]
pub struct LoadedScores {
    pub records: Vec<ScoreRecord>,
    pub errors: Vec<ScoreRowError>,
    /// Rows whose tweet_id was already seen; the later row wins.
    pub duplicates: usize,
}

fn parse_prob(raw: &str, field: &'static str, line: u64) -> Result<f64, ScoreRowError> {
    let v: f64 = raw.trim().parse().map_err(|_| ScoreRowError::Malformed {
        line,
        message: format!("{field} `{raw}` is not a number"),
    })?;
    if !(0.0..=1.0).contains(&v) {
        return Err(ScoreRowError::OutOfRange {
            line,
            field,
            value: raw.trim().to_owned(),
        });
    }
    Ok(v)
}

/// Reads a score file. Duplicate ids keep the first row's position and the
/// last row's values.
pub fn load_scores<R: Read>(input: R, policy: ErrorPolicy) -> Result<LoadedScores, ScoreError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(ScoreError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = LoadedScores::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parsed = (|| {
            if row.len() != 3 {
                return Err(ScoreRowError::Malformed {
                    line,
                    message: format!("expected 3 fields, found {}", row.len()),
                });
            }
            let id = row[0].trim();
            if id.is_empty() {
                return Err(ScoreRowError::EmptyId { line });
            }
            let p_claim = parse_prob(&row[1], "p_claim", line)?;
            let p_bias = match row[2].trim() {
                "" => None,
                s => Some(parse_prob(s, "p_bias", line)?),
            };
            Ok(ScoreRecord {
                tweet_id: id.to_owned(),
                p_claim,
                p_bias,
            })
        })();
        match parsed {
            Ok(rec) => match index.get(&rec.tweet_id) {
                Some(&i) => {
                    out.duplicates += 1;
                    out.records[i] = rec;
                }
                None => {
                    index.insert(rec.tweet_id.clone(), out.records.len());
                    out.records.push(rec);
                }
            },
            Err(e) if policy == ErrorPolicy::Abort => return Err(e.into()),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

pub fn write_scores<W: Write>(out: W, scores: &[ScoreRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_HEADER)?;
    for s in scores {
        let bias = s.p_bias.map(|b| b.to_string()).unwrap_or_default();
        w.write_record([s.tweet_id.as_str(), &s.p_claim.to_string(), &bias])?;
    }
    w.flush()?;
    Ok(())
}

/// A probability model over cleaned text.
pub trait Scorer: Send + Sync {
    fn score(&self, text: &CleanText) -> f64;
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

const CAUSAL_VERBS: &[&str] = &[
    "cause", "causes", "caused", "causing", "lead", "leads", "led", "leading", "link", "linked", "links",
    "increase", "increases", "increased", "raise", "raises", "reduce", "reduces", "reduced", "prevent",
    "prevents", "trigger", "triggers", "triggered", "result", "results", "cure", "cures", "treat", "treats",
    "worsen", "worsens", "affect", "affects", "alter", "alters", "modify", "modifies", "associated",
];

const MEDICAL_TERMS: &[&str] = &[
    "depression", "depressive", "depressed", "anxiety", "anxious", "autism", "autistic", "adhd", "bipolar",
    "schizophrenia", "ptsd", "ocd", "disorder", "disorders", "dysphoria", "mental", "health", "illness",
    "suicide", "suicidal", "therapy", "medication", "antidepressants", "hormone", "hormones", "estrogen",
    "testosterone", "brain", "diagnosis", "diagnosed", "symptoms", "trauma", "anorexia", "bulimia",
    "insomnia", "stress", "psychiatric", "phenotypes", "glucocorticoid",
];

const GENDERED_TERMS: &[&str] = &[
    "men", "man", "women", "woman", "male", "males", "female", "females", "boy", "boys", "girl", "girls",
    "mother", "mothers", "father", "fathers", "mom", "moms", "dad", "dads", "husband", "husbands", "wife",
    "wives", "son", "sons", "daughter", "daughters", "gender", "genders", "masculine", "feminine", "trans",
    "transgender", "nonbinary", "gay", "lesbian", "paternal", "maternal",
];

const GENERALIZATION_CUES: &[&str] = &[
    "all", "only", "every", "always", "never", "most", "everyone", "nobody", "none",
];

fn has_digit(t: &str) -> bool {
    t.bytes().any(|b| b.is_ascii_digit())
}

fn is_percentage(t: &str) -> bool {
    t.ends_with('%') && has_digit(t)
}

fn hits(text: &CleanText, lexicon: &[&str]) -> f64 {
    text.tokens.iter().filter(|t| lexicon.contains(&t.as_str())).count() as f64
}

/// Fixed weights of the baseline claim scorer:
/// `σ(intercept + numeral·[numeral] + percentage·[percentage] + causal·hits + medical·hits)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaimWeights {
    pub intercept: f64,
    pub numeral: f64,
    pub percentage: f64,
    pub causal: f64,
    pub medical: f64,
}

impl ClaimWeights {
    pub const V1: ClaimWeights = ClaimWeights {
        intercept: -2.0,
        numeral: 1.0,
        percentage: 0.5,
        causal: 1.5,
        medical: 0.75,
    };
}

/// Fixed weights of the baseline bias scorer:
/// `σ(intercept + gendered·g + cue·c + interaction·g·c)` where `g` counts
/// gendered terms and `c` counts generalization cues and percentages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasWeights {
    pub intercept: f64,
    pub gendered: f64,
    pub cue: f64,
    pub interaction: f64,
}

impl BiasWeights {
    pub const V1: BiasWeights = BiasWeights {
        intercept: -2.5,
        gendered: 0.5,
        cue: 0.25,
        interaction: 0.75,
    };
}

#[derive(Clone, Copy, Debug)]
pub struct BaselineClaimScorer(pub ClaimWeights);

impl Default for BaselineClaimScorer {
    fn default() -> Self {
        BaselineClaimScorer(ClaimWeights::V1)
    }
}

impl Scorer for BaselineClaimScorer {
    fn score(&self, t: &CleanText) -> f64 {
        let w = self.0;
        let numeral = f64::from(u8::from(t.tokens.iter().any(|x| has_digit(x))));
        let pct = f64::from(u8::from(t.tokens.iter().any(|x| is_percentage(x))));
        sigmoid(
            w.intercept
                + w.numeral * numeral
                + w.percentage * pct
                + w.causal * hits(t, CAUSAL_VERBS)
                + w.medical * hits(t, MEDICAL_TERMS),
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BaselineBiasScorer(pub BiasWeights);

impl Default for BaselineBiasScorer {
    fn default() -> Self {
        BaselineBiasScorer(BiasWeights::V1)
    }
}

impl Scorer for BaselineBiasScorer {
    fn score(&self, t: &CleanText) -> f64 {
        let w = self.0;
        let g = hits(t, GENDERED_TERMS);
        let c = hits(t, GENERALIZATION_CUES) + t.tokens.iter().filter(|x| is_percentage(x)).count() as f64;
        sigmoid(w.intercept + w.gendered * g + w.cue * c + w.interaction * g * c)
    }
}

pub fn baseline_claim_score(t: &CleanText) -> f64 {
    BaselineClaimScorer::default().score(t)
}

pub fn baseline_bias_score(t: &CleanText) -> f64 {
    BaselineBiasScorer::default().score(t)
}

/// Scores a corpus with the given scorers. When `tau` is given, bias is
/// only computed for tweets with `p_claim > tau`.
pub fn score_corpus(
    exec: Exec,
    records: &[TweetRecord],
    claim: &dyn Scorer,
    bias: &dyn Scorer,
    tau: Option<f64>,
) -> Vec<ScoreRecord> {
    exec.map(records, |r| {
        let clean = preprocess_text(&r.text);
        let p_claim = claim.score(&clean);
        let p_bias = match tau {
            Some(t) if p_claim <= t => None,
            _ => Some(bias.score(&clean)),
        };
        ScoreRecord {
            tweet_id: r.id.clone(),
            p_claim,
            p_bias,
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTweet<'a> {
    pub record: &'a TweetRecord,
    pub p_claim: f64,
    pub p_bias: Option<f64>,
}

#[derive(Debug, Default)]
pub struct JoinResult<'a> {
    /// In record order.
    pub rows: Vec<ScoredTweet<'a>>,
    pub unscored: usize,
}

/// Inner join of records and scores on tweet id.
pub fn join_scores<'a>(records: &'a [TweetRecord], scores: &[ScoreRecord]) -> JoinResult<'a> {
    let by_id: HashMap<&str, &ScoreRecord> = scores.iter().map(|s| (s.tweet_id.as_str(), s)).collect();
    let mut out = JoinResult::default();
    for r in records {
        match by_id.get(r.id.as_str()) {
            Some(s) => out.rows.push(ScoredTweet {
                record: r,
                p_claim: s.p_claim,
                p_bias: s.p_bias,
            }),
            None => out.unscored += 1,
        }
    }
    out
}
