//! Claim filtering, root selection and the biased / unbiased decile split.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RefKind;
use crate::scoring::ScoredTweet;

pub const DEFAULT_FRACTION: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub tau: f64,
    pub fraction: f64,
}

impl CohortSpec {
    pub fn new(tau: f64, fraction: f64) -> Result<Self, CohortError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(CohortError::Tau(tau));
        }
        if !(fraction > 0.0 && fraction <= 0.5) {
            return Err(CohortError::Fraction(fraction));
        }
        Ok(CohortSpec { tau, fraction })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Biased,
    Unbiased,
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Biased => "biased",
            Cohort::Unbiased => "unbiased",
        }
    }
}

/// A root eligible for the split.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasedRoot {
    pub tweet_id: String,
    pub p_bias: f64,
}

/// Biased roots are ordered most-biased first, unbiased roots least-biased first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CohortAssignment {
    pub biased: Vec<String>,
    pub unbiased: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("need at least 2 roots to split, found {0}")]
    TooFewRoots(usize),
    #[error("tau {0} outside [0,1]")]
    Tau(f64),
    #[error("cohort fraction {0} outside (0, 0.5]")]
    Fraction(f64),
    #[error("cohort file line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn filter_claims<'a, 'b>(scored: &'b [ScoredTweet<'a>], tau: f64) -> Vec<&'b ScoredTweet<'a>> {
    scored.iter().filter(|s| s.p_claim > tau).collect()
}

pub fn select_roots<'a, 'b>(claims: &[&'b ScoredTweet<'a>]) -> Vec<&'b ScoredTweet<'a>> {
    claims
        .iter()
        .copied()
        .filter(|s| s.record.ref_kind == RefKind::Original)
        .collect()
}

/// `max(1, floor(fraction * n))`. The small epsilon keeps products such as
/// `0.3 * 10 = 2.9999999999999996` on the intended integer.
pub fn cohort_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).max(1)
}

/// Ranks roots by `p_bias` descending with `tweet_id` ascending as the
/// tie-break; the first `n` form the biased cohort and the last `n` the
/// unbiased cohort. Using one total order keeps the cohorts disjoint even
/// when every score ties.
pub fn decile_split(roots: &[BiasedRoot], fraction: f64) -> Result<CohortAssignment, CohortError> {
    if roots.len() < 2 {
        return Err(CohortError::TooFewRoots(roots.len()));
    }
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(CohortError::Fraction(fraction));
    }
    let mut ranked: Vec<&BiasedRoot> = roots.iter().collect();
    ranked.sort_by(|a, b| b.p_bias.total_cmp(&a.p_bias).then_with(|| a.tweet_id.cmp(&b.tweet_id)));
    let n = cohort_size(fraction, ranked.len());
    Ok(CohortAssignment {
        biased: ranked[..n].iter().map(|r| r.tweet_id.clone()).collect(),
        unbiased: ranked[ranked.len() - n..].iter().rev().map(|r| r.tweet_id.clone()).collect(),
    })
}

/// Result of the full cohort stage.
#[derive(Debug, Default)]
pub struct CohortSelection {
    pub n_claims: usize,
    /// Original claims, in record order.
    pub roots: Vec<String>,
    /// Roots excluded from the split because they carry no `p_bias`.
    pub missing_bias: usize,
    /// `None` when fewer than two roots carry a bias score.
    pub assignment: Option<CohortAssignment>,
}

/// filter → roots → split. Roots without `p_bias` are dropped with a count.
pub fn select_cohorts(scored: &[ScoredTweet<'_>], spec: CohortSpec) -> Result<CohortSelection, CohortError> {
    let claims = filter_claims(scored, spec.tau);
    let roots = select_roots(&claims);
    let with_bias: Vec<BiasedRoot> = roots
        .iter()
        .filter_map(|r| {
            r.p_bias.map(|p| BiasedRoot {
                tweet_id: r.record.id.clone(),
                p_bias: p,
            })
        })
        .collect();
    let assignment = if with_bias.len() >= 2 {
        Some(decile_split(&with_bias, spec.fraction)?)
    } else {
        None
    };
    Ok(CohortSelection {
        n_claims: claims.len(),
        missing_bias: roots.len() - with_bias.len(),
        roots: roots.iter().map(|r| r.record.id.clone()).collect(),
        assignment,
    })
}

/// CSV `tweet_id,cohort`, biased rows first.
pub fn write_cohorts<W: Write>(out: W, a: &CohortAssignment) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tweet_id", "cohort"])?;
    for (ids, c) in [(&a.biased, Cohort::Biased), (&a.unbiased, Cohort::Unbiased)] {
        for id in ids {
            w.write_record([id.as_str(), c.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohorts<R: Read>(input: R) -> Result<CohortAssignment, CohortError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut a = CohortAssignment::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match row.get(1).map(str::trim) {
            Some("biased") => a.biased.push(row[0].to_owned()),
            Some("unbiased") => a.unbiased.push(row[0].to_owned()),
            other => {
                return Err(CohortError::Row {
                    line,
                    message: format!("unknown cohort {other:?}"),
                })
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TweetRecord;
    use proptest::prelude::*;

    fn roots(scores: &[f64]) -> Vec<BiasedRoot> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &p)| BiasedRoot { tweet_id: format!("t{i:02}"), p_bias: p })
            .collect()
    }

    #[test]
    fn ten_distinct() {
        let r = roots(&(0..10).map(|i| i as f64 / 10.0).collect::<Vec<_>>());
        let a = decile_split(&r, 0.1).unwrap();
        assert_eq!(a.biased, vec!["t09"]);
        assert_eq!(a.unbiased, vec!["t00"]);
    }

    #[test]
    fn twenty_distinct_sorted() {
        // scores reversed against ids so id order and score order disagree
        let r = roots(&(0..20).map(|i| (19 - i) as f64 / 20.0).collect::<Vec<_>>());
        let a = decile_split(&r, 0.1).unwrap();
        assert_eq!(a.biased, vec!["t00", "t01"]);
        assert_eq!(a.unbiased, vec!["t19", "t18"]);
    }

    #[test]
    fn all_ties_use_id_order() {
        let a = decile_split(&roots(&[0.5; 10]), 0.1).unwrap();
        assert_eq!(a.biased, vec!["t00"]);
        assert_eq!(a.unbiased, vec!["t09"]);
    }

    #[test]
    fn too_few_and_bad_fraction() {
        assert!(matches!(decile_split(&roots(&[0.3]), 0.1), Err(CohortError::TooFewRoots(1))));
        assert!(decile_split(&roots(&[0.3, 0.4]), 0.6).is_err());
        assert!(CohortSpec::new(1.2, 0.1).is_err());
        assert!(CohortSpec::new(0.9, 0.0).is_err());
    }

    #[test]
    fn size_rounding() {
        assert_eq!(cohort_size(0.3, 10), 3);
        assert_eq!(cohort_size(0.1, 9), 1);
        assert_eq!(cohort_size(0.1, 2), 1);
        assert_eq!(cohort_size(0.1, 1000), 100);
    }

    fn scored_fixture() -> Vec<TweetRecord> {
        vec![
            TweetRecord::original("a", None, 0, ""),
            TweetRecord::referencing("b", None, 1, "", RefKind::Retweet, "a"),
            TweetRecord::referencing("c", None, 1, "", RefKind::Reply, "a"),
            TweetRecord::original("d", None, 2, ""),
            TweetRecord::referencing("e", None, 3, "", RefKind::Quote, "d"),
            TweetRecord::referencing("f", None, 3, "", RefKind::Mention, "d"),
        ]
    }

    #[test]
    fn filter_strict_table_values() {
        let recs = scored_fixture();
        let s = vec![
            ScoredTweet { record: &recs[0], p_claim: 0.91, p_bias: Some(0.68) },
            ScoredTweet { record: &recs[3], p_claim: 0.94, p_bias: Some(0.32) },
        ];
        let c = filter_claims(&s, 0.91);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].record.id, "d");
        let zero: Vec<_> = recs.iter().map(|r| ScoredTweet { record: r, p_claim: 0.0, p_bias: None }).collect();
        assert!(filter_claims(&zero, 0.5).is_empty());
    }

    #[test]
    fn mixed_filter_and_roots() {
        let recs = scored_fixture();
        let p = [0.95, 0.2, 0.99, 0.5, 0.97, 0.96];
        let s: Vec<_> = recs.iter().zip(p).map(|(r, p)| ScoredTweet { record: r, p_claim: p, p_bias: Some(p) }).collect();
        let claims = filter_claims(&s, 0.9);
        let ids: Vec<_> = claims.iter().map(|c| c.record.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c", "e", "f"]);
        let all: Vec<_> = s.iter().collect();
        let r: Vec<_> = select_roots(&all).iter().map(|c| c.record.id.as_str()).collect();
        assert_eq!(r, vec!["a", "d"]);
        let rts: Vec<_> = s.iter().filter(|x| x.record.ref_kind == RefKind::Retweet).collect();
        assert!(select_roots(&rts).is_empty());
        let one_each = vec![&s[0], &s[2]];
        assert_eq!(select_roots(&one_each).len(), 1);
    }

    #[test]
    fn selection_counts_missing_bias() {
        let recs = scored_fixture();
        let s = vec![
            ScoredTweet { record: &recs[0], p_claim: 0.95, p_bias: None },
            ScoredTweet { record: &recs[3], p_claim: 0.95, p_bias: Some(0.1) },
        ];
        let sel = select_cohorts(&s, CohortSpec::new(0.9, 0.1).unwrap()).unwrap();
        assert_eq!(sel.missing_bias, 1);
        assert!(sel.assignment.is_none());
    }

    #[test]
    fn csv_round_trip() {
        let a = CohortAssignment { biased: vec!["x".into()], unbiased: vec!["y".into(), "z".into()] };
        let mut buf = Vec::new();
        write_cohorts(&mut buf, &a).unwrap();
        assert_eq!(std::str::from_utf8(&buf).unwrap(), "tweet_id,cohort\nx,biased\ny,unbiased\nz,unbiased\n");
        assert_eq!(read_cohorts(buf.as_slice()).unwrap(), a);
    }

    proptest! {
        #[test]
        fn split_properties(scores in proptest::collection::vec(0u8..10, 2..80), frac in 0.01f64..=0.5, rot in 0usize..80) {
            let r = roots(&scores.iter().map(|&s| s as f64 / 10.0).collect::<Vec<_>>());
            let a = decile_split(&r, frac).unwrap();
            let n = cohort_size(frac, r.len());
            prop_assert_eq!(a.biased.len(), n);
            prop_assert_eq!(a.unbiased.len(), n);
            prop_assert!(a.biased.iter().all(|b| !a.unbiased.contains(b)));
            let p = |id: &String| r.iter().find(|x| &x.tweet_id == id).unwrap().p_bias;
            let min_b = a.biased.iter().map(p).fold(f64::INFINITY, f64::min);
            let max_u = a.unbiased.iter().map(p).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_b >= max_u);
            let mut perm = r.clone();
            let len = perm.len();
            perm.rotate_left(rot % len);
            perm.reverse();
            prop_assert_eq!(decile_split(&perm, frac).unwrap(), a);
        }
    }
}
