//! Text and CSV renderings of the result tables.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// Percentage with at most two decimals and no trailing zeros: `0.575` → `57.5%`.
pub fn percent(fraction: f64) -> String {
    let s = format!("{:.2}", fraction * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

pub fn two_dp(x: f64) -> String {
    format!("{x:.2}")
}

/// One class row of a precision/recall/F1 table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfRow {
    pub model: String,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class PRF table, values rendered to two decimals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrfTable {
    pub rows: Vec<PrfRow>,
}

impl PrfTable {
    pub fn render_text(&self) -> String {
        let mw = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
        let cw = self.rows.iter().map(|r| r.class.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<mw$}  {:<cw$}  Precision  Recall  F-1 Score", "Model", "Class");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<mw$}  {:<cw$}  {:<9}  {:<6}  {}",
                r.model,
                r.class,
                two_dp(r.precision),
                two_dp(r.recall),
                two_dp(r.f1)
            );
        }
        out
    }

    /// CSV `model,class,precision,recall,f1` with two-decimal cells.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "class", "precision", "recall", "f1"])?;
        for r in &self.rows {
            w.write_record([
                r.model.as_str(),
                r.class.as_str(),
                &two_dp(r.precision),
                &two_dp(r.recall),
                &two_dp(r.f1),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> csv::Result<PrfTable> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<csv::Result<Vec<PrfRow>>>()?;
        Ok(PrfTable { rows })
    }
}

/// Median minutes to reach `k` retweets for both cohorts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityPair {
    pub k: u32,
    pub biased: Option<f64>,
    pub unbiased: Option<f64>,
}

/// Minimum cascade size reached by the top `share` of a cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopReach {
    pub cohort: String,
    pub share: f64,
    pub min_users: u64,
}

/// Headline cascade-comparison numbers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSummary {
    pub n_cascades: usize,
    pub mean_size_tweets: Option<f64>,
    pub mean_size_users: Option<f64>,
    pub multi_cascade_author_share: Option<f64>,
    pub top_reach: Vec<TopReach>,
    pub velocity: Vec<VelocityPair>,
    /// Notes such as "no roots" for degenerate runs.
    pub notes: Vec<String>,
}

impl DiffusionSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "cascades analysed: {}", self.n_cascades);
        if let Some(m) = self.mean_size_tweets {
            let _ = write!(out, "average cascade size: {} tweets", two_dp(m));
            match self.mean_size_users {
                Some(u) => {
                    let _ = writeln!(out, " ({} unique users)", two_dp(u));
                }
                None => out.push('\n'),
            }
        }
        if let Some(s) = self.multi_cascade_author_share {
            let _ = writeln!(out, "{} of users authored two or more cascades", percent(s));
        }
        for r in &self.top_reach {
            let _ = writeln!(
                out,
                "top {} of {} cascades reach at least {} users",
                percent(r.share),
                r.cohort,
                r.min_users
            );
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |m| format!("{} min", two_dp(m)));
        for v in &self.velocity {
            let _ = writeln!(out, "k={}: {} (biased) vs {} (unbiased)", v.k, fmt(v.biased), fmt(v.unbiased));
        }
        out
    }
}
