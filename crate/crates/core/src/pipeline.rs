//! End-to-end run: ingest → score → calibrate → cohorts → cascades →
//! metrics → report. Stages run in order; each parallelises internally.
//! Every artifact is a pure function of the inputs and configuration, so
//! reruns and different `threads` settings produce identical files.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{self, CalibrationResult};
use crate::cascade::{self, Authorship, Cascade, CascadeMetrics, CohortReport};
use crate::cohort::{self, CohortAssignment, CohortSpec};
use crate::config::RunConfig;
use crate::exec::{with_threads, Exec};
use crate::ingest::{self, CorpusStats, ErrorPolicy};
use crate::plot::{self, Chart, Scale, Series};
use crate::report::{DiffusionSummary, TopReach, VelocityPair};
use crate::scoring::{self, BaselineBiasScorer, BaselineClaimScorer};

/// Share of each cohort reported as "top reach".
pub const TOP_SHARE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Scores,
    Calibrate,
    Cohort,
    Cascades,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Scores => "scores",
            Stage::Calibrate => "calibrate",
            Stage::Cohort => "cohort",
            Stage::Cascades => "cascades",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Box<dyn std::error::Error + Send + Sync>>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Where the threshold came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauSource {
    Override,
    Calibrated,
}

/// Machine-readable run summary (`summary.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub tau: f64,
    pub tau_source: TauSource,
    pub recall_floor: f64,
    pub fraction: f64,
    pub ks: Vec<u32>,
    pub records: usize,
    pub rejected_records: usize,
    pub unknown_kind_warnings: usize,
    pub scores_loaded: usize,
    pub rejected_scores: usize,
    pub unscored_records: usize,
    pub claims: usize,
    pub roots: usize,
    pub roots_missing_bias: usize,
    pub biased_roots: usize,
    pub unbiased_roots: usize,
    pub dropped_edges: usize,
    pub diffusion: DiffusionSummary,
}

impl RunSummary {
    pub fn from_json(s: &str) -> serde_json::Result<RunSummary> {
        serde_json::from_str(s)
    }

    pub fn render(&self) -> String {
        let src = match self.tau_source {
            TauSource::Override => "fixed",
            TauSource::Calibrated => "calibrated",
        };
        format!(
            "records: {} ({} rejected)\nclaim threshold: {} ({src})\nclaims: {}, roots: {} ({} without bias score)\ncohorts: {} biased, {} unbiased\n{}",
            self.records,
            self.rejected_records,
            self.tau,
            self.claims,
            self.roots,
            self.roots_missing_bias,
            self.biased_roots,
            self.unbiased_roots,
            self.diffusion.render()
        )
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub stats: CorpusStats,
    pub calibration: Option<CalibrationResult>,
    pub assignment: CohortAssignment,
    pub biased: CohortReport,
    pub unbiased: CohortReport,
    pub summary: RunSummary,
    /// File names written into the output directory, in write order.
    pub artifacts: Vec<String>,
}

/// Writes named artifacts into one directory and records their names.
pub struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Out, PipelineError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).at(Stage::Write)?;
        Ok(Out {
            dir,
                written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>, PipelineError> {
        self.written.push(name.to_owned());
        File::create(self.dir.join(name)).map(BufWriter::new).at(Stage::Write)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), PipelineError> {
        let mut f = self.file(name)?;
        f.write_all(body.as_bytes()).and_then(|_| f.flush()).at(Stage::Write)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), PipelineError> {
        let mut body = serde_json::to_string_pretty(v).at(Stage::Write)?;
        body.push('\n');
        self.text(name, &body)
    }

    pub fn csv(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> csv::Result<()>) -> Result<(), PipelineError> {
        let w = self.file(name)?;
        f(w).at(Stage::Write)
    }
}

pub fn open(path: &Path, stage: Stage) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| format!("{}: {e}", path.display()))
        .at(stage)
}

/// Runs the full pipeline with at most `cfg.threads` workers.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    with_threads(cfg.threads, || run_with(Exec::default(), cfg))
}

pub fn run_with(exec: Exec, cfg: &RunConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate().at(Stage::Ingest)?;
    let mut out = Out::new(&cfg.out)?;

    // ingest
    let parsed = ingest::parse_corpus_with(exec, open(&cfg.corpus, Stage::Ingest)?, ErrorPolicy::Skip).at(Stage::Ingest)?;
    let records = &parsed.records;
    let stats = ingest::corpus_stats_with(exec, records);
    out.json("stats.json", &stats)?;
    out.csv("kind_counts.csv", |w| stats.write_kind_csv(w))?;
    out.text("breakdown.txt", &stats.render_breakdown())?;

    // calibrate (or fixed threshold)
    let validation = match &cfg.validation {
        Some(p) => Some(calibration::load_validation(open(p, Stage::Calibrate)?).at(Stage::Calibrate)?),
        None => None,
    };
    let (tau, tau_source, calib) = match (cfg.tau, &validation) {
        (Some(t), _) => (t, TauSource::Override, None),
        (None, Some(v)) => {
            let c = calibration::calibrate(v, cfg.recall_floor).at(Stage::Calibrate)?;
            (c.tau, TauSource::Calibrated, Some(c))
        }
        (None, None) => unreachable!("validated config has tau or validation"),
    };
    if let Some(c) = &calib {
        out.text("calibration.json", &(c.to_json().at(Stage::Write)? + "\n"))?;
        out.csv("calibration_curve.csv", |w| calibration::write_curve_csv(w, &c.curve))?;
    }
    if let Some(v) = &validation {
        let table = calibration::eval_report("claim", v, tau);
        out.csv("prf_table.csv", |w| table.write_csv(w))?;
        out.text("prf_table.txt", &table.render_text())?;
    }

    // scores
    let (scores, scores_loaded, rejected_scores) = match &cfg.scores {
        Some(p) => {
            let loaded = scoring::load_scores(open(p, Stage::Scores)?, ErrorPolicy::Skip).at(Stage::Scores)?;
            let n = loaded.records.len();
            (loaded.records, n, loaded.errors.len())
        }
        None => {
            let s = scoring::score_corpus(
                exec,
                records,
                &BaselineClaimScorer::default(),
                &BaselineBiasScorer::default(),
                Some(tau),
            );
            out.csv("scores.csv", |w| scoring::write_scores(w, &s))?;
            (s, 0, 0)
        }
    };
    let joined = scoring::join_scores(records, &scores);

    // cohorts
    let spec = CohortSpec::new(tau, cfg.fraction).at(Stage::Cohort)?;
    let selection = cohort::select_cohorts(&joined.rows, spec).at(Stage::Cohort)?;
    let mut notes = Vec::new();
    if selection.roots.is_empty() {
        notes.push("no roots".to_owned());
    } else if selection.assignment.is_none() {
        notes.push("fewer than two roots with a bias score; no cohorts formed".to_owned());
    }
    let assignment = selection.assignment.clone().unwrap_or_default();
    out.csv("cohorts.csv", |w| cohort::write_cohorts(w, &assignment))?;

    // cascades
    let edges = cascade::build_edgelist_with(exec, records).at(Stage::Cascades)?;
    out.csv("edgelist.csv", |w| cascade::write_edgelist(w, &edges))?;
    let roots: Vec<String> = assignment.biased.iter().chain(&assignment.unbiased).cloned().collect();
    let rec = cascade::reconstruct_with(exec, &roots, &edges, records);
    if !rec.missing_roots.is_empty() {
        return Err("cohort roots missing from corpus").at(Stage::Cascades);
    }
    out.csv("cascades.jsonl", |w| {
        cascade::write_cascades(w, &rec.cascades).map_err(|e| match e {
            cascade::CascadeError::Csv(e) => e,
            other => csv::Error::from(std::io::Error::other(other.to_string())),
        })
    })?;

    // metrics
    let nb = assignment.biased.len();
    let (bc, uc) = rec.cascades.split_at(nb);
    let mut analysis = analyse(exec, bc, uc, &cfg.ks);
    analysis.summary.notes = notes;
    write_analysis(&mut out, &analysis, &cfg.ks, cfg.plots)?;

    // report
    let summary = RunSummary {
        seed: cfg.seed,
        tau,
        tau_source,
        recall_floor: cfg.recall_floor,
        fraction: cfg.fraction,
        ks: cfg.ks.clone(),
        records: records.len(),
        rejected_records: parsed.errors.len(),
        unknown_kind_warnings: parsed.unknown_kind_warnings,
        scores_loaded,
        rejected_scores,
        unscored_records: joined.unscored,
        claims: selection.n_claims,
        roots: selection.roots.len(),
        roots_missing_bias: selection.missing_bias,
        biased_roots: nb,
        unbiased_roots: assignment.unbiased.len(),
        dropped_edges: rec.dropped_edges,
        diffusion: analysis.summary.clone(),
    };
    out.json("summary.json", &summary)?;
    out.text("summary.txt", &summary.render())?;

    Ok(PipelineOutput {
        stats,
        calibration: calib,
        assignment,
        biased: analysis.biased,
        unbiased: analysis.unbiased,
        summary,
        artifacts: out.written,
    })
}

/// Cohort reports plus corpus-wide cascade figures.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub biased: CohortReport,
    pub unbiased: CohortReport,
    /// Root authorship over both cohorts.
    pub authorship: Authorship,
    /// Biased cascades first.
    pub per_cascade: Vec<CascadeMetrics>,
    pub n_biased: usize,
    pub summary: DiffusionSummary,
}

pub fn analyse(exec: Exec, biased: &[Cascade], unbiased: &[Cascade], ks: &[u32]) -> Analysis {
    fn refs(cs: &[Cascade]) -> Vec<&Cascade> {
        cs.iter().collect()
    }
    let b = CohortReport::build("biased", &refs(biased), ks);
    let u = CohortReport::build("unbiased", &refs(unbiased), ks);
    let all: Vec<&Cascade> = biased.iter().chain(unbiased).collect();
    let per_cascade: Vec<CascadeMetrics> = exec.map(&all, |c| cascade::metrics(c));
    let authorship = cascade::cascades_per_user(all.iter().map(|c| c.root().author_id.as_deref()));
    let n = per_cascade.len();
    let mean = |f: fn(&CascadeMetrics) -> u64| (n > 0).then(|| per_cascade.iter().map(|m| f(m) as f64).sum::<f64>() / n as f64);
    let summary = DiffusionSummary {
        n_cascades: n,
        mean_size_tweets: mean(|m| m.size_tweets),
        mean_size_users: mean(|m| m.size_users),
        multi_cascade_author_share: authorship.multi_share,
        top_reach: [&b, &u]
            .iter()
            .filter_map(|r| {
                Some(TopReach {
                    cohort: r.cohort.clone(),
                    share: TOP_SHARE,
                    min_users: r.sizes_users.top_reach(TOP_SHARE)?,
                })
            })
            .collect(),
        velocity: ks
            .iter()
            .map(|&k| VelocityPair {
                k,
                biased: b.velocity.get(&k).map(|v| v.median_minutes),
                unbiased: u.velocity.get(&k).map(|v| v.median_minutes),
            })
            .collect(),
        notes: Vec::new(),
    };
    Analysis {
        biased: b,
        unbiased: u,
        authorship,
        per_cascade,
        n_biased: biased.len(),
        summary,
    }
}

/// Per-cascade metrics, per-cohort CCDF and velocity tables, authorship
/// histogram and, optionally, SVG charts.
pub fn write_analysis(out: &mut Out, a: &Analysis, ks: &[u32], plots: bool) -> Result<(), PipelineError> {
    out.csv("cascade_metrics.csv", |w| write_metrics_csv(w, &a.per_cascade, a.n_biased, ks))?;
    for r in [&a.biased, &a.unbiased] {
        out.csv(&format!("ccdf_{}.csv", r.cohort), |w| cascade::write_ccdf_csv(w, &r.sizes_users))?;
        out.csv(&format!("velocity_{}.csv", r.cohort), |w| cascade::write_velocity_csv(w, &r.velocity))?;
    }
    out.csv("authorship.csv", |w| cascade::write_authorship_csv(w, &a.authorship))?;
    if plots {
        write_plots(out, &a.biased, &a.unbiased, &a.authorship)?;
    }
    Ok(())
}

/// CSV `root_id,cohort,size_users,size_tweets,depth,t_<k>...`; the first
/// `n_biased` rows are the biased cohort. Missing times are empty.
pub fn write_metrics_csv<W: Write>(out: W, ms: &[CascadeMetrics], n_biased: usize, ks: &[u32]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["root_id".to_owned(), "cohort".into(), "size_users".into(), "size_tweets".into(), "depth".into()];
    header.extend(ks.iter().map(|k| format!("t_{k}")));
    w.write_record(&header)?;
    for (i, m) in ms.iter().enumerate() {
        let mut row = vec![
            m.root_id.clone(),
            if i < n_biased { "biased" } else { "unbiased" }.to_owned(),
            m.size_users.to_string(),
            m.size_tweets.to_string(),
            m.depth.to_string(),
        ];
        row.extend(ks.iter().map(|&k| m.time_to(k).map_or_else(String::new, |t| t.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plots(out: &mut Out, b: &CohortReport, u: &CohortReport, a: &Authorship) -> Result<(), PipelineError> {
    let ccdf = |r: &CohortReport| Series::new(&r.cohort, r.sizes_users.ccdf.iter().map(|&(s, p)| (s as f64, p)).collect());
    let velocity = |r: &CohortReport| {
        Series::new(
            &r.cohort,
            r.velocity.iter().map(|(&k, v)| (k as f64, v.median_minutes)).collect(),
        )
    };
    let log_log = |title: &str, x: &str, y: &str, scatter| Chart {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        x_scale: Scale::Log10,
        y_scale: Scale::Log10,
        scatter,
    };
    out.text(
        "ccdf.svg",
        &plot::render(&log_log("Cascade size CCDF", "unique users", "P(size >= s)", false), &[ccdf(b), ccdf(u)]),
    )?;
    out.text(
        "velocity.svg",
        &plot::render(
            &Chart {
                x_scale: Scale::Linear,
                y_scale: Scale::Linear,
                ..log_log("Median time to k retweets", "k", "minutes", false)
            },
            &[velocity(b), velocity(u)],
        ),
    )?;
    let hist = Series::new("users", a.histogram.iter().map(|(&c, &n)| (c as f64, n as f64)).collect());
    out.text(
        "authorship.svg",
        &plot::render(&log_log("Cascades per user", "cascades", "users", true), &[hist]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigLayer;
    use crate::ingest::TweetRecord;

    fn cfg(dir: &Path, corpus: &Path) -> RunConfig {
        RunConfig::resolve(ConfigLayer {
            corpus: Some(corpus.to_owned()),
            tau: Some(0.5),
            out: Some(dir.join("out")),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_corpus_reports_no_roots() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        std::fs::write(&corpus, "").unwrap();
        let o = run_pipeline(&cfg(dir.path(), &corpus)).unwrap();
        assert_eq!(o.summary.diffusion.notes, vec!["no roots"]);
        assert_eq!(o.summary.diffusion.n_cascades, 0);
        let text = std::fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
        assert!(text.contains("note: no roots"));
    }

    #[test]
    fn stage_named_errors() {
        let dir = tempfile::tempdir().unwrap();
        let e = run_pipeline(&cfg(dir.path(), &dir.path().join("missing.jsonl"))).unwrap_err();
        assert_eq!(e.stage, Stage::Ingest);
        assert!(e.to_string().starts_with("ingest: "));

        let corpus = dir.path().join("c.jsonl");
        std::fs::write(&corpus, "").unwrap();
        let scores = dir.path().join("s.csv");
        std::fs::write(&scores, "id,score\n").unwrap();
        let mut c = cfg(dir.path(), &corpus);
        c.scores = Some(scores);
        assert_eq!(run_pipeline(&c).unwrap_err().stage, Stage::Scores);
    }

    #[test]
    fn baseline_scoring_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        let mut recs = vec![
            TweetRecord::original("a", Some("u1"), 0, "Only women get depression, 98% caused by hormones"),
            TweetRecord::original("b", Some("u2"), 0, "Exercise reduces anxiety symptoms in adults"),
            TweetRecord::original("c", Some("u3"), 0, "lovely weather"),
        ];
        for i in 0..3 {
            recs.push(TweetRecord::referencing(format!("r{i}"), Some("u9"), 60_000 * (i + 1), "RT", ingest::RefKind::Retweet, "a"));
        }
        let mut buf = Vec::new();
        ingest::write_corpus(&mut buf, &recs).unwrap();
        std::fs::write(&corpus, buf).unwrap();
        let mut c = cfg(dir.path(), &corpus);
        c.tau = Some(0.0);
        c.fraction = 0.5;
        c.plots = true;
        let o = run_pipeline(&c).unwrap();
        assert!(o.artifacts.contains(&"scores.csv".to_owned()));
        assert!(o.artifacts.contains(&"ccdf.svg".to_owned()));
        assert_eq!(o.assignment.biased.len() + o.assignment.unbiased.len(), 2);
        for name in &o.artifacts {
            assert!(dir.path().join("out").join(name).exists(), "{name}");
        }
    }
}
