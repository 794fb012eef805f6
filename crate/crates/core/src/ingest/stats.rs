use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{RefKind, TweetRecord};
use crate::exec::Exec;
use crate::report::percent;

/// Per-kind record counts, indexed in [`RefKind::ALL`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KindCounts(pub [u64; 5]);

impl KindCounts {
    fn slot(kind: RefKind) -> usize {
        RefKind::ALL.iter().position(|k| *k == kind).unwrap_or(0)
    }

    pub fn get(&self, kind: RefKind) -> u64 {
        self.0[Self::slot(kind)]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// Flat corpus summary. Means, fractions and the time range are `None`
/// (and `means_undefined` set) for an empty corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: u64,
    pub n_original: u64,
    pub n_retweet: u64,
    pub n_reply: u64,
    pub n_quote: u64,
    pub n_mention: u64,
    pub means_undefined: bool,
    pub mean_likes: Option<f64>,
    pub mean_views: Option<f64>,
    pub earliest_created_at: Option<i64>,
    pub latest_created_at: Option<i64>,
    pub geotagged_fraction: Option<f64>,
}

#[derive(Clone, Default)]
struct Acc {
    counts: KindCounts,
    likes: u128,
    views: u128,
    geotagged: u64,
    earliest: Option<i64>,
    latest: Option<i64>,
}

impl Acc {
    fn push(mut self, r: &TweetRecord) -> Acc {
        self.counts.0[KindCounts::slot(r.ref_kind)] += 1;
        self.likes += u128::from(r.like_count);
        self.views += u128::from(r.view_count);
        self.geotagged += u64::from(r.place.is_some());
        self.earliest = Some(self.earliest.map_or(r.created_at, |e| e.min(r.created_at)));
        self.latest = Some(self.latest.map_or(r.created_at, |l| l.max(r.created_at)));
        self
    }

    // Integer sums and min/max: associative and commutative.
    fn merge(mut self, o: Acc) -> Acc {
        for (a, b) in self.counts.0.iter_mut().zip(o.counts.0) {
            *a += b;
        }
        self.likes += o.likes;
        self.views += o.views;
        self.geotagged += o.geotagged;
        self.earliest = match (self.earliest, o.earliest) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.latest = match (self.latest, o.latest) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self
    }
}

pub fn corpus_stats(records: &[TweetRecord]) -> CorpusStats {
    corpus_stats_with(Exec::default(), records)
}

pub fn corpus_stats_with(exec: Exec, records: &[TweetRecord]) -> CorpusStats {
    let acc = exec.fold_chunks(records, 4096, Acc::default(), Acc::push, Acc::merge);
    let total = acc.counts.total();
    let mean = |sum: u128| (total > 0).then(|| sum as f64 / total as f64);
    let c = acc.counts;
    CorpusStats {
        total,
        n_original: c.get(RefKind::Original),
        n_retweet: c.get(RefKind::Retweet),
        n_reply: c.get(RefKind::Reply),
        n_quote: c.get(RefKind::Quote),
        n_mention: c.get(RefKind::Mention),
        means_undefined: total == 0,
        mean_likes: mean(acc.likes),
        mean_views: mean(acc.views),
        earliest_created_at: acc.earliest,
        latest_created_at: acc.latest,
        geotagged_fraction: (total > 0).then(|| acc.geotagged as f64 / total as f64),
    }
}

impl CorpusStats {
    pub fn count(&self, kind: RefKind) -> u64 {
        match kind {
            RefKind::Original => self.n_original,
            RefKind::Retweet => self.n_retweet,
            RefKind::Reply => self.n_reply,
            RefKind::Quote => self.n_quote,
            RefKind::Mention => self.n_mention,
        }
    }

    pub fn fraction(&self, kind: RefKind) -> Option<f64> {
        (self.total > 0).then(|| self.count(kind) as f64 / self.total as f64)
    }

    /// Interaction breakdown with quotes and mentions merged into one bucket:
    /// retweets, replies, mentions/quotes, original.
    pub fn interaction_breakdown(&self) -> Option<[(&'static str, f64); 4]> {
        if self.total == 0 {
            return None;
        }
        let t = self.total as f64;
        Some([
            ("retweets", self.n_retweet as f64 / t),
            ("replies", self.n_reply as f64 / t),
            ("mentions/quotes", (self.n_quote + self.n_mention) as f64 / t),
            ("original", self.n_original as f64 / t),
        ])
    }

    /// One line per bucket, e.g. `retweets: 57.5%`.
    pub fn render_breakdown(&self) -> String {
        match self.interaction_breakdown() {
            None => "no records\n".to_owned(),
            Some(rows) => rows
                .iter()
                .map(|(label, f)| format!("{label}: {}\n", percent(*f)))
                .collect(),
        }
    }

    /// CSV `kind,count,fraction` over the five kinds.
    pub fn write_kind_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "count", "fraction"])?;
        for kind in RefKind::ALL {
            let frac = self.fraction(kind).map(|f| f.to_string()).unwrap_or_default();
            w.write_record([kind.as_str(), &self.count(kind).to_string(), &frac])?;
        }
        w.flush()?;
        Ok(())
    }
}
