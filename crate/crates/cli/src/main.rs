//! `biascascade`: batch CLI over the scoring, calibration, cohort and cascade
//! pipeline. Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biascascade_core::calibration::{self, LabeledExample};
use biascascade_core::cascade::{self, Cascade};
use biascascade_core::cohort::{self, CohortAssignment, CohortSpec};
use biascascade_core::config::{parse_ks, ConfigLayer, RunConfig};
use biascascade_core::ingest::{self, ErrorPolicy, TweetRecord};
use biascascade_core::pipeline::{self, Out, RunSummary};
use biascascade_core::report::PrfTable;
use biascascade_core::scoring::{self, BaselineBiasScorer, BaselineClaimScorer};
use biascascade_core::synth;
use biascascade_core::{with_threads, Exec};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biascascade", version, about = "Claim/bias cohort cascade analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Corpus statistics and interaction breakdown.
    Stats(Opts),
    /// Pick the claim threshold from a labelled validation CSV.
    Calibrate(Opts),
    /// Score a corpus with the built-in baseline scorers.
    Score(Opts),
    /// Select biased / unbiased root cohorts.
    Cohort(Opts),
    /// Build the retweet edge list and reconstruct cohort cascades.
    Cascades(Opts),
    /// Size, velocity and authorship metrics for reconstructed cascades.
    Metrics(Opts),
    /// Generate a seeded synthetic corpus with ground truth.
    Synth(Opts),
    /// Render a PRF table CSV and/or a run summary JSON as text.
    Report(Opts),
    /// Run every stage end to end.
    Run(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    /// Flat key=value config file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tweet corpus (JSON Lines).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Score CSV (tweet_id,p_claim,p_bias).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Labelled validation CSV (tweet_id,p_claim,label).
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Fixed claim threshold; skips calibration.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    recall_floor: Option<f64>,
    /// Cohort size as a share of roots.
    #[arg(long)]
    fraction: Option<f64>,
    /// Comma-separated retweet counts for velocity, e.g. 1,10,100.
    #[arg(long, value_parser = parse_ks_arg)]
    ks: Option<Ks>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG charts.
    #[arg(long)]
    plots: bool,
    /// Cohort CSV (tweet_id,cohort).
    #[arg(long)]
    cohorts: Option<PathBuf>,
    /// Cascade dump (JSON Lines).
    #[arg(long)]
    cascades: Option<PathBuf>,
    /// PRF table CSV for `report`.
    #[arg(long)]
    prf: Option<PathBuf>,
    /// Run summary JSON for `report`.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Roots per cohort for `synth` (default: reference preset size).
    #[arg(long)]
    roots: Option<usize>,
}

#[derive(Clone, Debug)]
struct Ks(Vec<u32>);

fn parse_ks_arg(s: &str) -> Result<Ks, String> {
    parse_ks(s).map(Ks).map_err(|e| e.to_string())
}

enum CliError {
    Usage(String),
    Data(String),
}

type Res<T = ()> = Result<T, CliError>;

fn data<E: std::fmt::Display>(ctx: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{ctx}: {e}"))
}

fn need<T>(v: Option<T>, flag: &str) -> Res<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn open(p: &Path) -> Res<BufReader<File>> {
    File::open(p).map(BufReader::new).map_err(data(p.display()))
}

fn create(dir: &Path, name: &str) -> Res<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(data(dir.display()))?;
    let p = dir.join(name);
    File::create(&p).map(BufWriter::new).map_err(data(p.display()))
}

/// Merged view of config file and flags.
struct Ctx {
    layer: ConfigLayer,
    o: Opts,
}

impl Ctx {
    fn new(o: Opts) -> Res<Ctx> {
        let file = match &o.config {
            Some(p) => ConfigLayer::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => ConfigLayer::default(),
        };
        let cli = ConfigLayer {
            corpus: o.corpus.clone(),
            scores: o.scores.clone(),
            validation: o.validation.clone(),
            tau: o.tau,
            recall_floor: o.recall_floor,
            fraction: o.fraction,
            ks: o.ks.clone().map(|k| k.0),
            out: o.out.clone(),
            seed: o.seed,
            threads: o.threads,
            plots: o.plots.then_some(true),
        };
        Ok(Ctx {
            layer: file.overlay(cli),
            o,
        })
    }

    fn out(&self) -> PathBuf {
        self.layer.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn records(&self) -> Res<Vec<TweetRecord>> {
        let p = need(self.layer.corpus.as_ref(), "corpus")?;
        let parsed = ingest::parse_corpus(open(p)?, ErrorPolicy::Skip).map_err(data(p.display()))?;
        for e in &parsed.errors {
            eprintln!("warning: {}: {e}", p.display());
        }
        Ok(parsed.records)
    }

    fn recall_floor(&self) -> f64 {
        self.layer.recall_floor.unwrap_or(calibration::DEFAULT_RECALL_FLOOR)
    }

    fn validation(&self) -> Res<Vec<LabeledExample>> {
        let p = need(self.layer.validation.as_ref(), "validation")?;
        calibration::load_validation(open(p)?).map_err(data(p.display()))
    }

    /// `--tau`, else calibrated from `--validation`.
    fn tau(&self) -> Res<f64> {
        if let Some(t) = self.layer.tau {
            return Ok(t);
        }
        if self.layer.validation.is_none() {
            return Err(CliError::Usage("need --tau or --validation".into()));
        }
        let r = calibration::calibrate(&self.validation()?, self.recall_floor()).map_err(data("calibrate"))?;
        Ok(r.tau)
    }

    fn ks(&self) -> Vec<u32> {
        self.layer.ks.clone().unwrap_or_else(|| cascade::DEFAULT_KS.to_vec())
    }

    fn cohorts(&self) -> Res<CohortAssignment> {
        let p = need(self.o.cohorts.as_ref(), "cohorts")?;
        cohort::read_cohorts(open(p)?).map_err(data(p.display()))
    }
}

fn cmd_stats(c: &Ctx) -> Res {
    let recs = c.records()?;
    let stats = ingest::corpus_stats(&recs);
    print!("{}", stats.render_breakdown());
    if c.layer.out.is_some() {
        let mut out = Out::new(c.out()).map_err(data("write"))?;
        out.json("stats.json", &stats).map_err(data("write"))?;
        out.csv("kind_counts.csv", |w| stats.write_kind_csv(w)).map_err(data("write"))?;
    }
    Ok(())
}

fn cmd_calibrate(c: &Ctx) -> Res {
    let v = c.validation()?;
    let r = calibration::calibrate(&v, c.recall_floor()).map_err(data("calibrate"))?;
    println!(
        "tau={} precision={} recall={} f1={}",
        r.tau, r.selected.precision, r.selected.recall, r.selected.f1
    );
    if c.layer.out.is_some() {
        let dir = c.out();
        let json = r.to_json().map_err(data("calibrate"))?;
        writeln!(create(&dir, "calibration.json")?, "{json}").map_err(data("write"))?;
        calibration::write_curve_csv(create(&dir, "calibration_curve.csv")?, &r.curve).map_err(data("write"))?;
        let table = calibration::eval_report("claim", &v, r.tau);
        table.write_csv(create(&dir, "prf_table.csv")?).map_err(data("write"))?;
    }
    Ok(())
}

fn cmd_score(c: &Ctx) -> Res {
    let recs = c.records()?;
    let s = scoring::score_corpus(
        Exec::default(),
        &recs,
        &BaselineClaimScorer::default(),
        &BaselineBiasScorer::default(),
        c.layer.tau,
    );
    scoring::write_scores(create(&c.out(), "scores.csv")?, &s).map_err(data("write"))?;
    println!("scored {} records", s.len());
    Ok(())
}

fn cmd_cohort(c: &Ctx) -> Res {
    let recs = c.records()?;
    let sp = need(c.layer.scores.as_ref(), "scores")?;
    let loaded = scoring::load_scores(open(sp)?, ErrorPolicy::Skip).map_err(data(sp.display()))?;
    let tau = c.tau()?;
    let fraction = c.layer.fraction.unwrap_or(cohort::DEFAULT_FRACTION);
    let spec = CohortSpec::new(tau, fraction).map_err(|e| CliError::Usage(e.to_string()))?;
    let joined = scoring::join_scores(&recs, &loaded.records);
    let sel = cohort::select_cohorts(&joined.rows, spec).map_err(data("cohort"))?;
    let a = sel.assignment.unwrap_or_default();
    cohort::write_cohorts(create(&c.out(), "cohorts.csv")?, &a).map_err(data("write"))?;
    println!(
        "tau={tau} claims={} roots={} biased={} unbiased={}",
        sel.n_claims,
        sel.roots.len(),
        a.biased.len(),
        a.unbiased.len()
    );
    Ok(())
}

fn cmd_cascades(c: &Ctx) -> Res {
    let recs = c.records()?;
    let a = c.cohorts()?;
    let edges = cascade::build_edgelist(&recs).map_err(data("cascades"))?;
    let roots: Vec<String> = a.biased.iter().chain(&a.unbiased).cloned().collect();
    let rec = cascade::reconstruct(&roots, &edges, &recs);
    if !rec.missing_roots.is_empty() {
        return Err(CliError::Data(format!("{} cohort roots missing from corpus", rec.missing_roots.len())));
    }
    let dir = c.out();
    cascade::write_edgelist(create(&dir, "edgelist.csv")?, &edges).map_err(data("write"))?;
    cascade::write_cascades(create(&dir, "cascades.jsonl")?, &rec.cascades).map_err(data("write"))?;
    println!("edges={} cascades={} dropped_edges={}", edges.len(), rec.cascades.len(), rec.dropped_edges);
    Ok(())
}

fn cmd_metrics(c: &Ctx) -> Res {
    let p = need(c.o.cascades.as_ref(), "cascades")?;
    let all = cascade::read_cascades(open(p)?).map_err(data(p.display()))?;
    let a = c.cohorts()?;
    let pick = |ids: &[String]| -> Res<Vec<Cascade>> {
        ids.iter()
            .map(|id| {
                all.iter()
                    .find(|c| &c.root_id == id)
                    .cloned()
                    .ok_or_else(|| CliError::Data(format!("no cascade for cohort root {id}")))
            })
            .collect()
    };
    let ks = c.ks();
    let analysis = pipeline::analyse(Exec::default(), &pick(&a.biased)?, &pick(&a.unbiased)?, &ks);
    let mut out = Out::new(c.out()).map_err(data("write"))?;
    pipeline::write_analysis(&mut out, &analysis, &ks, c.layer.plots.unwrap_or(false)).map_err(data("write"))?;
    let text = analysis.summary.render();
    out.text("summary.txt", &text).map_err(data("write"))?;
    print!("{text}");
    Ok(())
}

fn cmd_synth(c: &Ctx) -> Res {
    let mut cfg = synth::reference_profile();
    if let Some(s) = c.layer.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.o.roots {
        cfg.biased.n_roots = n;
        cfg.unbiased.n_roots = n;
    }
    let g = synth::generate(&cfg).map_err(data("synth"))?;
    let dir = c.out();
    let w = |e: std::io::Error| CliError::Data(format!("write: {e}"));
    ingest::write_corpus(create(&dir, "corpus.jsonl")?, &g.records).map_err(w)?;
    scoring::write_scores(create(&dir, "scores.csv")?, &g.scores).map_err(data("write"))?;
    synth::write_truth(create(&dir, "truth.jsonl")?, &g.cascades).map_err(w)?;
    calibration::write_validation(create(&dir, "validation.csv")?, &g.validation_set()).map_err(data("write"))?;
    println!("records={} cascades={} seed={}", g.records.len(), g.cascades.len(), cfg.seed);
    Ok(())
}

fn cmd_report(c: &Ctx) -> Res {
    if c.o.prf.is_none() && c.o.summary.is_none() {
        return Err(CliError::Usage("report needs --prf and/or --summary".into()));
    }
    if let Some(p) = &c.o.prf {
        let t = PrfTable::read_csv(open(p)?).map_err(data(p.display()))?;
        print!("{}", t.render_text());
    }
    if let Some(p) = &c.o.summary {
        let s = std::fs::read_to_string(p).map_err(data(p.display()))?;
        let s = RunSummary::from_json(&s).map_err(data(p.display()))?;
        print!("{}", s.render());
    }
    Ok(())
}

fn cmd_run(c: &Ctx) -> Res {
    let cfg = RunConfig::resolve(c.layer.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let o = pipeline::run_with(Exec::default(), &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    print!("{}", o.summary.render());
    Ok(())
}

fn check_ranges(l: &ConfigLayer) -> Res {
    let bad = |m: &str| Err(CliError::Usage(m.into()));
    if l.tau.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
        return bad("--tau must lie in [0, 1]");
    }
    if l.recall_floor.is_some_and(|r| !(r > 0.0 && r <= 1.0)) {
        return bad("--recall-floor must lie in (0, 1]");
    }
    if l.fraction.is_some_and(|f| !(f > 0.0 && f <= 0.5)) {
        return bad("--fraction must lie in (0, 0.5]");
    }
    if l.threads == Some(0) {
        return bad("--threads must be at least 1");
    }
    Ok(())
}

fn dispatch(cmd: Cmd) -> Res {
    let (o, f): (Opts, fn(&Ctx) -> Res) = match cmd {
        Cmd::Stats(o) => (o, cmd_stats),
        Cmd::Calibrate(o) => (o, cmd_calibrate),
        Cmd::Score(o) => (o, cmd_score),
        Cmd::Cohort(o) => (o, cmd_cohort),
        Cmd::Cascades(o) => (o, cmd_cascades),
        Cmd::Metrics(o) => (o, cmd_metrics),
        Cmd::Synth(o) => (o, cmd_synth),
        Cmd::Report(o) => (o, cmd_report),
        Cmd::Run(o) => (o, cmd_run),
    };
    let ctx = Ctx::new(o)?;
    check_ranges(&ctx.layer)?;
    with_threads(ctx.layer.threads, || f(&ctx))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
