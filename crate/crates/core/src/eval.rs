//! Range-adjusted (point-adjust) precision, recall and F1, best-F1 threshold
//! sweep, and train-statistics standardization.
//!
//! A point is flagged when its score is strictly greater than the threshold.
//! When any point of a contiguous labeled range is flagged, the whole range
//! counts as detected, and precision is computed over the adjusted flags.

use std::io::Write;

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ssgpfa::Standardization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Decision threshold; `+inf` flags nothing and serializes as `"inf"`.
    #[serde(serialize_with = "ser_threshold", deserialize_with = "de_threshold")]
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn ser_threshold<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

fn de_threshold<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Str(s) => s
            .parse::<f64>()
            .map_err(|_| serde::de::Error::custom(format!("invalid threshold `{s}`"))),
    }
}

impl EvalReport {
    /// Build a report from adjusted counts; empty predictions give precision 0.
    pub fn from_counts(threshold: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
        Self {
            threshold,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // Equal to 2PR/(P+R) and exactly rounded.
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }

    /// Ordering used by the sweep: higher F1, then higher precision, then
    /// lower threshold. F1 and precision are compared as exact fractions.
    pub fn better_than(&self, other: &Self) -> bool {
        let (tp, fp, fn_) = (self.true_positives, self.false_positives, self.false_negatives);
        let (otp, ofp, ofn) = (other.true_positives, other.false_positives, other.false_negatives);
        // a/b vs c/d with empty denominators meaning 0.
        let cmp = |a: usize, b: usize, c: usize, d: usize| {
            let (a, c) = (if b == 0 { 0 } else { a }, if d == 0 { 0 } else { c });
            let (b, d) = (b.max(1), d.max(1));
            (a as u128 * d as u128).cmp(&(c as u128 * b as u128))
        };
        cmp(2 * tp, 2 * tp + fp + fn_, 2 * otp, 2 * otp + ofp + ofn)
            .then_with(|| cmp(tp, tp + fp, otp, otp + ofp))
            .then_with(|| other.threshold.total_cmp(&self.threshold))
            .is_gt()
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Maximal runs `[start, end)` of positive labels.
pub fn label_ranges(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len()));
    }
    out
}

/// Apply point-adjust to a binary prediction vector.
pub fn adjust_predictions(predictions: &[bool], labels: &[bool]) -> Vec<bool> {
    let mut out = predictions.to_vec();
    for (a, b) in label_ranges(labels) {
        if predictions[a..b].iter().any(|&p| p) {
            out[a..b].iter_mut().for_each(|p| *p = true);
        }
    }
    out
}

/// Precision, recall and F1 of a prediction vector taken at face value.
pub fn pointwise_metrics(predictions: &[bool], labels: &[bool], threshold: f64) -> EvalReport {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    EvalReport::from_counts(threshold, tp, fp, fn_)
}

pub fn flags(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

pub fn range_adjusted_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    check_lengths(scores, labels)?;
    let adjusted = adjust_predictions(&flags(scores, threshold), labels);
    Ok(pointwise_metrics(&adjusted, labels, threshold))
}

/// Distinct finite or infinite non-NaN scores in ascending order, followed by `+inf`.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = scores.iter().copied().filter(|s| !s.is_nan()).collect();
    c.push(f64::INFINITY);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Range-adjusted reports at every candidate threshold, in ascending threshold order.
pub fn threshold_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<EvalReport>> {
    threshold_curve_segments(&[(scores, labels)])
}

/// Curve for several independent series evaluated under one shared
/// threshold. Labeled ranges never extend across series boundaries.
pub fn threshold_curve_segments(segments: &[(&[f64], &[bool])]) -> Result<Vec<EvalReport>> {
    let mut range_max: Vec<(f64, usize)> = Vec::new();
    let mut negatives: Vec<f64> = Vec::new();
    let mut all_scores: Vec<f64> = Vec::new();
    for (scores, labels) in segments {
        check_lengths(scores, labels)?;
        // A range is detected iff its maximum score exceeds the threshold.
        range_max.extend(label_ranges(labels).into_iter().map(|(a, b)| {
            let m = scores[a..b]
                .iter()
                .copied()
                .filter(|s| !s.is_nan())
                .fold(f64::NEG_INFINITY, f64::max);
            (m, b - a)
        }));
        negatives.extend(
            scores
                .iter()
                .zip(labels.iter())
                .filter(|(s, l)| !**l && !s.is_nan())
                .map(|(s, _)| *s),
        );
        all_scores.extend_from_slice(scores);
    }
    let positives: usize = range_max.iter().map(|r| r.1).sum();
    range_max.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Suffix sums of range lengths over ascending range maxima.
    let mut covered = vec![0usize; range_max.len() + 1];
    for i in (0..range_max.len()).rev() {
        covered[i] = covered[i + 1] + range_max[i].1;
    }
    negatives.sort_by(f64::total_cmp);

    let candidates = candidate_thresholds(&all_scores);
    Ok(candidates
        .par_iter()
        .map(|&alpha| {
            let first_range = range_max.partition_point(|(m, _)| *m <= alpha);
            let tp = covered[first_range];
            let fp = negatives.len() - negatives.partition_point(|s| *s <= alpha);
            EvalReport::from_counts(alpha, tp, fp, positives - tp)
        })
        .collect())
}

fn best_of(curve: &[EvalReport]) -> EvalReport {
    let mut best = curve[0];
    for r in &curve[1..] {
        if r.better_than(&best) {
            best = *r;
        }
    }
    best
}

pub fn best_f1_sweep(scores: &[f64], labels: &[bool]) -> Result<EvalReport> {
    best_f1_sweep_segments(&[(scores, labels)])
}

/// Best-F1 sweep with one threshold shared by several series.
pub fn best_f1_sweep_segments(segments: &[(&[f64], &[bool])]) -> Result<EvalReport> {
    for (scores, labels) in segments {
        check_lengths(scores, labels)?;
    }
    if !segments.iter().any(|(_, l)| l.contains(&true)) {
        return Err(Error::UndefinedRecall);
    }
    Ok(best_of(&threshold_curve_segments(segments)?))
}

/// Plot-ready CSV with one row per candidate threshold.
pub fn write_curve_csv(w: impl Write, curve: &[EvalReport]) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record([
        "threshold",
        "precision",
        "recall",
        "f1",
        "true_positives",
        "false_positives",
        "false_negatives",
    ])?;
    for r in curve {
        out.write_record([
            format!("{}", r.threshold),
            format!("{}", r.precision),
            format!("{}", r.recall),
            format!("{}", r.f1),
            r.true_positives.to_string(),
            r.false_positives.to_string(),
            r.false_negatives.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Standardized training and test observations with the fitted transform.
pub type Standardized = (Vec<DVector<f64>>, Vec<DVector<f64>>, Standardization);

/// Per-dimension mean and population standard deviation of the training
/// observations, ignoring missing entries, applied to both sequences.
pub fn standardize(
    train: &[DVector<f64>],
    test: &[DVector<f64>],
) -> Result<Standardized> {
    let dims = train
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::Input("cannot standardize an empty training sequence".into()))?;
    if let Some(v) = train.iter().chain(test).find(|v| v.len() != dims) {
        return Err(Error::Shape(format!("observation of length {} among length {dims}", v.len())));
    }
    let mut mean = vec![0.0; dims];
    let mut std = vec![1.0; dims];
    for i in 0..dims {
        let col: Vec<f64> = train.iter().map(|v| v[i]).filter(|x| !x.is_nan()).collect();
        if col.is_empty() {
            return Err(Error::Input(format!("training dimension {i} has no observed values")));
        }
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        mean[i] = m;
        if var > 0.0 {
            std[i] = var.sqrt();
        } else {
            warn!("training dimension {i} is constant; its scale is left at 1");
        }
    }
    let st = Standardization { mean, std };
    let scaled_train = train.iter().map(|v| st.apply(v)).collect();
    let scaled_test = test.iter().map(|v| st.apply(v)).collect();
    Ok((scaled_train, scaled_test, st))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Vec<DVector<f64>> {
        v.iter().map(|x| DVector::from_element(1, *x)).collect()
    }

    #[test]
    fn standardize_uses_train_statistics() {
        let (tr, te, st) = standardize(&col(&[0.0, 2.0]), &col(&[4.0])).unwrap();
        assert_eq!((st.mean[0], st.std[0]), (1.0, 1.0));
        assert_eq!((tr[0][0], tr[1][0], te[0][0]), (-1.0, 1.0, 3.0));
        let (tr, _, st) = standardize(&col(&[5.0, 5.0]), &[]).unwrap();
        assert_eq!(st.std[0], 1.0);
        assert!(tr.iter().all(|v| v[0] == 0.0));
        assert!(standardize(&[], &col(&[1.0])).is_err());
    }

    #[test]
    fn standardize_skips_missing() {
        let (tr, _, st) = standardize(&col(&[0.0, f64::NAN, 2.0]), &[]).unwrap();
        assert_eq!(st.mean[0], 1.0);
        assert!(tr[1][0].is_nan());
    }

    #[test]
    fn adjusted_metric_examples() {
        let labels = [false, true, true, false];
        let r = range_adjusted_metrics(&[0.0, 0.0, 1.0, 0.0], &labels, 0.5).unwrap();
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (2, 0, 0));
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = range_adjusted_metrics(&[1.0, 0.0, 0.0, 0.0], &labels, 0.5).unwrap();
        assert_eq!((r.true_positives, r.false_positives, r.precision, r.f1), (0, 1, 0.0, 0.0));
        let r = range_adjusted_metrics(&[0.0; 4], &labels, 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(range_adjusted_metrics(&[0.0; 3], &labels, 0.5).is_err());
    }

    #[test]
    fn f1_is_harmonic_mean() {
        for (tp, fp, fn_) in [(3, 1, 2), (1, 0, 0), (5, 7, 11), (0, 2, 1)] {
            let r = EvalReport::from_counts(0.0, tp, fp, fn_);
            let h = if r.precision + r.recall > 0.0 {
                2.0 * r.precision * r.recall / (r.precision + r.recall)
            } else {
                0.0
            };
            assert!((r.f1 - h).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_is_strict() {
        let r = range_adjusted_metrics(&[1.0, 2.0], &[false, true], 2.0).unwrap();
        assert_eq!(r.true_positives, 0);
    }

    #[test]
    fn sweep_examples() {
        let r = best_f1_sweep(&[0.1, 0.9, 0.2], &[false, true, false]).unwrap();
        assert_eq!(r.f1, 1.0);
        assert!((0.2..0.9).contains(&r.threshold));
        assert_eq!(r.threshold, 0.2);
        let r = best_f1_sweep(&[0.0, 1.0, 1.0, 0.0], &[false, true, true, false]).unwrap();
        assert_eq!(r.f1, 1.0);
        assert!(matches!(best_f1_sweep(&[0.1, 0.2], &[false, false]), Err(Error::UndefinedRecall)));
    }

    #[test]
    fn curve_matches_direct_evaluation() {
        let scores = [0.3, 0.1, 0.7, 0.7, 0.2, 0.9, 0.0, 0.4];
        let labels = [false, true, true, false, false, true, true, false];
        for r in threshold_curve(&scores, &labels).unwrap() {
            assert_eq!(r, range_adjusted_metrics(&scores, &labels, r.threshold).unwrap());
        }
    }

    #[test]
    fn segments_keep_ranges_apart() {
        // Joined, the two boundary points would form one range detected by index 2.
        let a: (&[f64], &[bool]) = (&[0.0, 0.0, 0.0], &[false, false, true]);
        let b: (&[f64], &[bool]) = (&[0.0, 1.0], &[true, false]);
        let curve = threshold_curve_segments(&[a, b]).unwrap();
        let at_zero = curve.iter().find(|r| r.threshold == 0.0).unwrap();
        assert_eq!((at_zero.true_positives, at_zero.false_positives), (0, 1));
        let single = threshold_curve(&[0.5, 0.1], &[true, false]).unwrap();
        assert_eq!(single, threshold_curve_segments(&[(&[0.5, 0.1], &[true, false])]).unwrap());
    }

    #[test]
    fn infinite_threshold_round_trips_through_json() {
        let r = EvalReport::from_counts(f64::INFINITY, 0, 0, 3);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"threshold\":\"inf\""), "{json}");
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
