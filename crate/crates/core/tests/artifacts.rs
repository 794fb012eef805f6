//! Every artifact written by a pipeline run parses back with the reader that
//! owns its format, and the score-file contract holds for scorer output.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use biascascade_core::calibration::{self, CalibrationResult};
use biascascade_core::cascade;
use biascascade_core::cohort;
use biascascade_core::config::{ConfigLayer, RunConfig};
use biascascade_core::ingest::{self, ErrorPolicy, TweetRecord};
use biascascade_core::pipeline::{self, RunSummary};
use biascascade_core::report::PrfTable;
use biascascade_core::scoring::{self, BaselineBiasScorer, BaselineClaimScorer};
use biascascade_core::synth::{self, GenConfig};
use biascascade_core::Exec;

fn small_truth(seed: u64) -> synth::GroundTruth {
    let mut cfg = GenConfig::new(seed);
    cfg.biased.n_roots = 60;
    cfg.unbiased.n_roots = 60;
    cfg.biased.offspring_mean = 0.95;
    cfg.unbiased.offspring_mean = 0.9;
    cfg.unbiased.rate_per_min = cfg.biased.rate_per_min / 5.0;
    cfg.n_distractors = 40;
    synth::generate(&cfg).unwrap()
}

fn write_inputs(dir: &Path, g: &synth::GroundTruth) {
    ingest::write_corpus(File::create(dir.join("corpus.jsonl")).unwrap(), &g.records).unwrap();
    scoring::write_scores(File::create(dir.join("scores.csv")).unwrap(), &g.scores).unwrap();
    calibration::write_validation(File::create(dir.join("validation.csv")).unwrap(), &g.validation_set()).unwrap();
}

fn open(p: impl AsRef<Path>) -> BufReader<File> {
    BufReader::new(File::open(p).unwrap())
}

#[test]
fn pipeline_artifacts_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let g = small_truth(3);
    write_inputs(tmp.path(), &g);
    let out = tmp.path().join("out");
    let cfg = RunConfig::resolve(ConfigLayer {
        corpus: Some(tmp.path().join("corpus.jsonl")),
        scores: Some(tmp.path().join("scores.csv")),
        validation: Some(tmp.path().join("validation.csv")),
        fraction: Some(0.5),
        out: Some(out.clone()),
        ..Default::default()
    })
    .unwrap();
    let o = pipeline::run_pipeline(&cfg).unwrap();

    let cohorts = cohort::read_cohorts(open(out.join("cohorts.csv"))).unwrap();
    assert_eq!(cohorts, o.assignment);
    assert_eq!(cohorts.biased.len(), 60);

    let edges = cascade::read_edgelist(open(out.join("edgelist.csv"))).unwrap();
    assert_eq!(edges, cascade::build_edgelist(&g.records).unwrap());

    let cascades = cascade::read_cascades(open(out.join("cascades.jsonl"))).unwrap();
    assert_eq!(cascades.len(), 120);
    for c in &cascades {
        let truth = g.cascades.iter().find(|t| t.cascade.root_id == c.root_id).unwrap();
        assert_eq!(c.canonical(), truth.cascade.canonical());
    }

    let calib = CalibrationResult::from_json(&std::fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(Some(calib), o.calibration);

    let table = PrfTable::read_csv(open(out.join("prf_table.csv"))).unwrap();
    assert_eq!(table.render_text(), std::fs::read_to_string(out.join("prf_table.txt")).unwrap());

    let summary = RunSummary::from_json(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, o.summary);
    assert_eq!(summary.render(), std::fs::read_to_string(out.join("summary.txt")).unwrap());

    let stats: ingest::CorpusStats = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats, o.stats);

    // tabular outputs without a dedicated reader are rectangular CSV
    for name in [
        "kind_counts.csv",
        "calibration_curve.csv",
        "cascade_metrics.csv",
        "ccdf_biased.csv",
        "ccdf_unbiased.csv",
        "velocity_biased.csv",
        "velocity_unbiased.csv",
        "authorship.csv",
    ] {
        let mut r = csv::Reader::from_reader(open(out.join(name)));
        let width = r.headers().unwrap().len();
        for row in r.records() {
            assert_eq!(row.unwrap().len(), width, "{name}");
        }
    }
}

#[test]
fn synthetic_run_orders_cohort_velocity() {
    let tmp = tempfile::tempdir().unwrap();
    let g = synth::generate(&synth::reference_profile()).unwrap();
    write_inputs(tmp.path(), &g);
    let cfg = RunConfig::resolve(ConfigLayer {
        corpus: Some(tmp.path().join("corpus.jsonl")),
        scores: Some(tmp.path().join("scores.csv")),
        validation: Some(tmp.path().join("validation.csv")),
        out: Some(tmp.path().join("out")),
        ..Default::default()
    })
    .unwrap();
    let o = pipeline::run_pipeline(&cfg).unwrap();
    let mut shared = 0;
    for v in &o.summary.diffusion.velocity {
        if let (Some(b), Some(u)) = (v.biased, v.unbiased) {
            assert!(b < u, "k={}: {b} vs {u}", v.k);
            shared += 1;
        }
    }
    assert!(shared >= 3);
    assert_eq!(o.summary.biased_roots, 100);
}

#[test]
fn sequential_and_parallel_runs_match() {
    let tmp = tempfile::tempdir().unwrap();
    write_inputs(tmp.path(), &small_truth(8));
    let run = |exec, name: &str| {
        let cfg = RunConfig::resolve(ConfigLayer {
            corpus: Some(tmp.path().join("corpus.jsonl")),
            scores: Some(tmp.path().join("scores.csv")),
            tau: Some(0.5),
            out: Some(tmp.path().join(name)),
            ..Default::default()
        })
        .unwrap();
        pipeline::run_with(exec, &cfg).unwrap();
        std::fs::read(tmp.path().join(name).join("summary.json")).unwrap()
    };
    assert_eq!(run(Exec::Sequential, "s"), run(Exec::Parallel, "p"));
}

fn fifty_tweets() -> Vec<TweetRecord> {
    let texts = [
        "Only women get depression, 98% caused by hormones",
        "Exercise reduces anxiety in men",
        "lovely day",
        "Therapy causes improvement in ADHD symptoms",
        "",
    ];
    (0..50)
        .map(|i| TweetRecord::original(format!("t{i}"), Some("u"), i, texts[i as usize % texts.len()]))
        .collect()
}

#[test]
fn scorer_output_satisfies_score_contract() {
    let recs = fifty_tweets();
    for tau in [None, Some(0.2)] {
        let scores =
            scoring::score_corpus(Exec::default(), &recs, &BaselineClaimScorer::default(), &BaselineBiasScorer::default(), tau);
        let mut buf = Vec::new();
        scoring::write_scores(&mut buf, &scores).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some("tweet_id,p_claim,p_bias"));
        let loaded = scoring::load_scores(buf.as_slice(), ErrorPolicy::Abort).unwrap();
        assert!(loaded.errors.is_empty());
        assert_eq!(loaded.records, scores);
        if let Some(t) = tau {
            assert!(scores.iter().all(|s| s.p_bias.is_some() == (s.p_claim > t)));
        }
    }
}

#[test]
fn empty_corpus_gives_header_only_score_file() {
    let scores = scoring::score_corpus(Exec::default(), &[], &BaselineClaimScorer::default(), &BaselineBiasScorer::default(), None);
    let mut buf = Vec::new();
    scoring::write_scores(&mut buf, &scores).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "tweet_id,p_claim,p_bias\n");
    let loaded = scoring::load_scores(buf.as_slice(), ErrorPolicy::Abort).unwrap();
    assert!(loaded.records.is_empty() && loaded.errors.is_empty());
}

#[test]
fn synthetic_score_file_passes_validator() {
    let g = small_truth(1);
    let mut buf = Vec::new();
    scoring::write_scores(&mut buf, &g.scores).unwrap();
    let loaded = scoring::load_scores(buf.as_slice(), ErrorPolicy::Abort).unwrap();
    assert_eq!(loaded.records, g.scores);
    let mut truth = Vec::new();
    synth::write_truth(&mut truth, &g.cascades).unwrap();
    assert_eq!(synth::read_truth(truth.as_slice()).unwrap(), g.cascades);
}
