//! Claim-threshold calibration on a labeled validation set.
//!
//! A tweet is predicted to be a claim when `p > tau` (strict). The threshold
//! is chosen as the point of highest precision whose recall stays at or
//! above a configurable floor.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{PrfRow, PrfTable};

pub const DEFAULT_RECALL_FLOOR: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub tweet_id: String,
    pub p: f64,
    /// `true` = claim.
    pub y: bool,
}

impl LabeledExample {
    pub fn new(tweet_id: impl Into<String>, p: f64, y: bool) -> Self {
        LabeledExample {
            tweet_id: tweet_id.into(),
            p,
            y,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same matrix viewed with the negative class as positive.
    pub fn flipped(&self) -> Self {
        ConfusionCounts::new(self.tn, self.fn_, self.fp, self.tp)
    }
}

/// Precision, recall and F1. Zero denominators yield 0 with the matching
/// `*_undefined` flag set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub tau: f64,
    pub recall_floor: f64,
    pub selected: PrPoint,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("infeasible recall floor {floor}: best recall on the curve is {best}")]
    InfeasibleFloor { floor: f64, best: f64 },
    #[error("empty curve")]
    EmptyCurve,
    #[error("no labeled examples")]
    NoExamples,
    #[error("class weight undefined: no negative examples")]
    ZeroNegatives,
    #[error("{0} is outside [0,1]")]
    OutOfRange(f64),
    #[error("validation file line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn confusion_at(examples: &[LabeledExample], tau: f64) -> ConfusionCounts {
    examples.iter().fold(ConfusionCounts::default(), |mut c, e| {
        match (e.p > tau, e.y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
        c
    })
}

pub fn prf(c: &ConfusionCounts) -> Prf {
    let pred = c.tp + c.fp;
    let actual = c.tp + c.fn_;
    let precision = if pred == 0 { 0.0 } else { c.tp as f64 / pred as f64 };
    let recall = if actual == 0 { 0.0 } else { c.tp as f64 / actual as f64 };
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); one rounding instead of four.
    let denom = 2 * c.tp + c.fp + c.fn_;
    let f1 = if c.tp == 0 { 0.0 } else { (2 * c.tp) as f64 / denom as f64 };
    Prf {
        precision,
        recall,
        f1,
        precision_undefined: pred == 0,
        recall_undefined: actual == 0,
    }
}

fn point(threshold: f64, counts: ConfusionCounts) -> PrPoint {
    let m = prf(&counts);
    PrPoint {
        threshold,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        counts,
    }
}

/// One point per distinct score plus the boundaries 0 and 1 (deduplicated
/// when a score sits on a boundary), ascending by threshold.
pub fn pr_curve(examples: &[LabeledExample]) -> Vec<PrPoint> {
    let mut sorted: Vec<(f64, bool)> = examples.iter().map(|e| (e.p, e.y)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut thresholds: Vec<f64> = Vec::with_capacity(sorted.len() + 2);
    thresholds.push(0.0);
    thresholds.extend(sorted.iter().map(|s| s.0));
    thresholds.push(1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let n_pos = sorted.iter().filter(|s| s.1).count() as u64;
    let n_neg = sorted.len() as u64 - n_pos;
    // Sweep: examples with p <= t are predicted negative.
    let (mut neg_pos, mut neg_neg) = (0u64, 0u64);
    let mut i = 0;
    thresholds
        .into_iter()
        .map(|t| {
            while i < sorted.len() && sorted[i].0 <= t {
                if sorted[i].1 {
                    neg_pos += 1;
                } else {
                    neg_neg += 1;
                }
                i += 1;
            }
            point(t, ConfusionCounts::new(n_pos - neg_pos, n_neg - neg_neg, neg_pos, neg_neg))
        })
        .collect()
}

/// Highest precision subject to `recall >= recall_floor`; ties go to higher
/// recall, then lower threshold.
pub fn select_threshold(curve: &[PrPoint], recall_floor: f64) -> Result<CalibrationResult, CalibrationError> {
    if curve.is_empty() {
        return Err(CalibrationError::EmptyCurve);
    }
    if !(0.0..=1.0).contains(&recall_floor) {
        return Err(CalibrationError::OutOfRange(recall_floor));
    }
    let best = curve
        .iter()
        .filter(|p| p.recall >= recall_floor)
        .reduce(|best, p| {
            let better = p.precision > best.precision
                || (p.precision == best.precision
                    && (p.recall > best.recall || (p.recall == best.recall && p.threshold < best.threshold)));
            if better {
                p
            } else {
                best
            }
        })
        .ok_or_else(|| CalibrationError::InfeasibleFloor {
            floor: recall_floor,
            best: curve.iter().map(|p| p.recall).fold(0.0, f64::max),
        })?;
    Ok(CalibrationResult {
        tau: best.threshold,
        recall_floor,
        selected: best.clone(),
        curve: curve.to_vec(),
    })
}

/// Convenience: curve + selection.
pub fn calibrate(examples: &[LabeledExample], recall_floor: f64) -> Result<CalibrationResult, CalibrationError> {
    if examples.is_empty() {
        return Err(CalibrationError::NoExamples);
    }
    select_threshold(&pr_curve(examples), recall_floor)
}

/// Training class-weight ratio `n_pos / n_neg`.
pub fn class_weight(n_pos: u64, n_neg: u64) -> Result<f64, CalibrationError> {
    if n_neg == 0 {
        return Err(CalibrationError::ZeroNegatives);
    }
    Ok(n_pos as f64 / n_neg as f64)
}

/// Per-class PRF rows (`Non-Claim` first, then `Claim`) at threshold `tau`.
pub fn eval_report(model: &str, examples: &[LabeledExample], tau: f64) -> PrfTable {
    let c = confusion_at(examples, tau);
    let row = |class: &str, m: Prf| PrfRow {
        model: model.to_owned(),
        class: class.to_owned(),
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
    };
    PrfTable {
        rows: vec![row("Non-Claim", prf(&c.flipped())), row("Claim", prf(&c))],
    }
}

/// Reads a validation file `tweet_id,p_claim,label`.
pub fn load_validation<R: Read>(input: R) -> Result<Vec<LabeledExample>, CalibrationError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["tweet_id", "p_claim", "label"] {
        return Err(CalibrationError::Row {
            line: 1,
            message: format!("header must be `tweet_id,p_claim,label`, found `{}`", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| CalibrationError::Row { line, message };
        let p: f64 = row[1].trim().parse().map_err(|_| bad(format!("bad p_claim `{}`", &row[1])))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("p_claim {p} outside [0,1]")));
        }
        let y = match row[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("label must be 0 or 1, found `{other}`"))),
        };
        out.push(LabeledExample::new(row[0].trim(), p, y));
    }
    Ok(out)
}

pub fn write_validation<W: Write>(out: W, examples: &[LabeledExample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tweet_id", "p_claim", "label"])?;
    for e in examples {
        w.write_record([e.tweet_id.as_str(), &e.p.to_string(), if e.y { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

/// Curve as CSV `threshold,precision,recall,f1,tp,fp,fn,tn`.
pub fn write_curve_csv<W: Write>(out: W, curve: &[PrPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "precision", "recall", "f1", "tp", "fp", "fn", "tn"])?;
    for p in curve {
        let c = p.counts;
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.f1.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl CalibrationResult {
    pub fn to_json(&self) -> Result<String, CalibrationError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, CalibrationError> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(p: f64, y: bool) -> LabeledExample {
        LabeledExample::new("x", p, y)
    }

    #[test]
    fn confusion_cases() {
        assert_eq!(confusion_at(&[ex(0.5, true)], 0.9), ConfusionCounts::new(0, 0, 1, 0));
        let set = [ex(0.95, true), ex(0.95, false), ex(0.1, false)];
        assert_eq!(confusion_at(&set, 0.9), ConfusionCounts::new(1, 1, 0, 1));
        let c = confusion_at(&[ex(1.0, true), ex(0.99, false)], 1.0);
        assert_eq!(c.tp + c.fp, 0);
    }

    #[test]
    fn strict_inequality() {
        assert_eq!(confusion_at(&[ex(0.91, true)], 0.91).tp, 0);
        assert_eq!(confusion_at(&[ex(0.94, true)], 0.91).tp, 1);
    }

    #[test]
    fn prf_cases() {
        let m = prf(&ConfusionCounts::new(1, 0, 0, 0));
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = prf(&ConfusionCounts::new(0, 0, 5, 5));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.precision_undefined && !m.recall_undefined);
        let m = prf(&ConfusionCounts::new(3, 1, 1, 5));
        assert_eq!((m.precision, m.recall, m.f1), (0.75, 0.75, 0.75));
    }

    #[test]
    fn curve_shapes() {
        let same = [ex(0.4, true), ex(0.4, false)];
        let c = pr_curve(&same);
        assert_eq!(c.iter().map(|p| p.threshold).collect::<Vec<_>>(), vec![0.0, 0.4, 1.0]);
        let distinct: Vec<_> = (1..=7).map(|i| ex(i as f64 / 10.0, i % 2 == 0)).collect();
        assert_eq!(pr_curve(&distinct).len(), 9);
    }

    #[test]
    fn select_single_and_infeasible() {
        let curve = vec![point(0.5, ConfusionCounts::new(1, 1, 0, 0))];
        assert_eq!(select_threshold(&curve, 0.5).unwrap().tau, 0.5);
        // a positive scored exactly 0 is never predicted positive
        let imperfect = [ex(0.0, true), ex(0.8, true), ex(0.3, false)];
        let err = select_threshold(&pr_curve(&imperfect), 1.0).unwrap_err();
        assert!(matches!(err, CalibrationError::InfeasibleFloor { .. }));
        assert!(matches!(select_threshold(&[], 0.1), Err(CalibrationError::EmptyCurve)));
    }

    #[test]
    fn ten_example_set() {
        // Hand enumeration: thresholds 0,.1,.2,...; at t=0.6 predicted {.7,.8,.9,.95}
        // → tp=3 (.7,.9,.95), fp=1 (.8); recall 3/5, precision 3/4.
        // At t=0.7: {.8,.9,.95} tp=2 fp=1 → 2/3. At t=0.8: {.9,.95} tp=2 fp=0 → P=1, R=2/5.
        // At t=0.9: {.95} P=1, R=1/5. Floor 0.3 → t=0.8 (P=1, higher recall than 0.9).
        let set: Vec<_> = [
            (0.1, false),
            (0.2, true),
            (0.3, false),
            (0.4, false),
            (0.5, true),
            (0.6, false),
            (0.7, true),
            (0.8, false),
            (0.9, true),
            (0.95, true),
        ]
        .iter()
        .map(|&(p, y)| ex(p, y))
        .collect();
        let r = calibrate(&set, 0.3).unwrap();
        assert_eq!(r.tau, 0.8);
        assert_eq!(r.selected.counts, ConfusionCounts::new(2, 0, 3, 5));
        assert_eq!(calibrate(&set, 0.5).unwrap().tau, 0.6);
    }

    #[test]
    fn class_weights() {
        assert!((class_weight(6977, 1007).unwrap() - 6.93).abs() <= 0.005);
        assert_eq!(class_weight(1, 1).unwrap(), 1.0);
        assert_eq!(class_weight(0, 5).unwrap(), 0.0);
        assert!(matches!(class_weight(3, 0), Err(CalibrationError::ZeroNegatives)));
    }

    #[test]
    fn report_perfect_and_hand() {
        let perfect = [ex(0.99, true), ex(0.1, false), ex(0.95, true)];
        let t = eval_report("m", &perfect, 0.5);
        assert!(t.render_text().lines().skip(1).all(|l| l.matches("1.00").count() == 3));
        // 10 examples at tau 0.5: claim tp=3 (.7,.9,.95) fp=2 (.6,.8) fn=2 (.2,.5) tn=3
        let set: Vec<_> = [(0.1, false), (0.2, true), (0.3, false), (0.4, false), (0.5, true), (0.6, false), (0.7, true), (0.8, false), (0.9, true), (0.95, true)]
            .iter()
            .map(|&(p, y)| ex(p, y))
            .collect();
        let t = eval_report("m", &set, 0.5);
        assert_eq!(t.rows[1].class, "Claim");
        assert_eq!((t.rows[1].precision, t.rows[1].recall, t.rows[1].f1), (0.6, 0.6, 0.6));
        assert_eq!((t.rows[0].precision, t.rows[0].recall, t.rows[0].f1), (0.6, 0.6, 0.6));
    }

    #[test]
    fn validation_file() {
        let ex = load_validation("tweet_id,p_claim,label\na,0.2,1\nb,0.9,0\n".as_bytes()).unwrap();
        assert_eq!(ex, vec![LabeledExample::new("a", 0.2, true), LabeledExample::new("b", 0.9, false)]);
        assert!(load_validation("tweet_id,p_claim,label\na,0.2,2\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_validation(&mut buf, &ex).unwrap();
        assert_eq!(load_validation(buf.as_slice()).unwrap(), ex);
    }

    fn arb_examples() -> impl Strategy<Value = Vec<LabeledExample>> {
        proptest::collection::vec((0u8..=20, any::<bool>()), 1..60)
            .prop_map(|v| v.into_iter().map(|(p, y)| ex(p as f64 / 20.0, y)).collect())
    }

    proptest! {
        #[test]
        fn recall_non_increasing(examples in arb_examples()) {
            let c = pr_curve(&examples);
            for w in c.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[1].recall <= w[0].recall);
            }
            for p in &c {
                prop_assert_eq!(p.counts, confusion_at(&examples, p.threshold));
                prop_assert!((0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.f1));
            }
        }

        #[test]
        fn selection_permutation_invariant(examples in arb_examples(), k in 0usize..60, floor in 0.0f64..0.6) {
            let mut perm = examples.clone();
            let n = perm.len();
            perm.rotate_left(k % n);
            perm.reverse();
            let a = calibrate(&examples, floor).ok().map(|r| r.tau);
            let b = calibrate(&perm, floor).ok().map(|r| r.tau);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn class_weight_scale_free(a in 0u64..10_000, b in 1u64..10_000, k in 1u64..50) {
            prop_assert_eq!(class_weight(a * k, b * k).unwrap(), class_weight(a, b).unwrap());
        }
    }
}
