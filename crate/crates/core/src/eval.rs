//! Binary classification metrics with `Burnout` as the positive class.
//!
//! Ratios whose denominator is zero are reported as `None`, never as 0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Class;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions vs {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("no examples to evaluate")]
    Empty,
    #[error("ROC needs both classes; no {0} examples among the truths")]
    MissingClass(Class),
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are predicted positive. The first point uses +inf.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Writes `fpr,tpr,threshold` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fpr,tpr,threshold")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
        }
        Ok(())
    }
}

pub fn confusion(predictions: &[Class], truths: &[Class]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in predictions.iter().zip(truths) {
        match (p.is_positive(), t.is_positive()) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Threshold metrics from a confusion matrix (AUC left empty).
pub fn basic_metrics(m: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = m.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(MetricsReport {
        accuracy: (m.tp + m.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        auc: None,
    })
}

/// ROC curve over all distinct score thresholds (descending, ties grouped)
/// and the trapezoidal area under it.
pub fn roc_and_auc(scores: &[f64], truths: &[Class]) -> Result<(RocCurve, f64), EvalError> {
    if scores.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: scores.len(),
            truths: truths.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let positives = truths.iter().filter(|t| t.is_positive()).count() as u64;
    let negatives = truths.len() as u64 - positives;
    if positives == 0 {
        return Err(EvalError::MissingClass(Class::Burnout));
    }
    if negatives == 0 {
        return Err(EvalError::MissingClass(Class::Neutral));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (pf, nf) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // Twice the area in units of (one negative) x (one positive), kept exact.
    let mut doubled_area: u128 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if truths[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled_area += (fp - fp_prev) as u128 * (tp + tp_prev) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / nf,
            tpr: tp as f64 / pf,
            threshold,
        });
    }
    let auc = doubled_area as f64 / (2.0 * pf * nf);
    Ok((RocCurve { points }, auc))
}

/// Confusion matrix and full report (with AUC when both classes are present)
/// for probability scores cut at `threshold`.
pub fn evaluate(
    scores: &[f64],
    truths: &[Class],
    threshold: f64,
) -> Result<(ConfusionMatrix, MetricsReport), EvalError> {
    let predictions: Vec<Class> = scores
        .iter()
        .map(|&s| if s >= threshold { Class::Burnout } else { Class::Neutral })
        .collect();
    let m = confusion(&predictions, truths)?;
    let mut report = basic_metrics(&m)?;
    report.auc = match roc_and_auc(scores, truths) {
        Ok((_, auc)) => Some(auc),
        Err(EvalError::MissingClass(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((m, report))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use Class::{Burnout as P, Neutral as N};

    /// O(P*N) concordance probability with ties worth one half.
    fn concordance(scores: &[f64], truths: &[Class]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, ti) in truths.iter().enumerate() {
            if !ti.is_positive() {
                continue;
            }
            for (j, tj) in truths.iter().enumerate() {
                if tj.is_positive() {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    #[test]
    fn perfect_predictions() {
        let t = [P, P, P, N, N];
        let m = confusion(&t, &t).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tp: 3,
                fp: 0,
                fn_: 0,
                tn: 2
            }
        );
        let r = basic_metrics(&m).unwrap();
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1),
            (1.0, Some(1.0), Some(1.0), Some(1.0))
        );
    }

    #[test]
    fn all_predicted_positive() {
        let m = confusion(&[P, P], &[P, N]).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tp: 1,
                fp: 1,
                fn_: 0,
                tn: 0
            }
        );
    }

    #[test]
    fn random_fixture_matches_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let pick = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { P } else { N };
        let preds: Vec<_> = (0..50).map(|_| pick(&mut rng)).collect();
        let truths: Vec<_> = (0..50).map(|_| pick(&mut rng)).collect();
        let m = confusion(&preds, &truths).unwrap();
        let tally = |p: Class, t: Class| preds.iter().zip(&truths).filter(|(a, b)| **a == p && **b == t).count() as u64;
        assert_eq!(m.tp, tally(P, P));
        assert_eq!(m.fp, tally(P, N));
        assert_eq!(m.fn_, tally(N, P));
        assert_eq!(m.tn, tally(N, N));
        assert_eq!(m.total(), 50);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            confusion(&[P], &[P, N]),
            Err(EvalError::LengthMismatch {
                predictions: 1,
                truths: 2
            })
        );
        assert_eq!(confusion(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn reference_confusion_matrix() {
        let m = ConfusionMatrix {
            tp: 2074,
            fp: 154,
            fn_: 125,
            tn: 2246,
        };
        let r = basic_metrics(&m).unwrap();
        assert!((r.accuracy - 0.9393).abs() < 5e-5);
        assert!((r.precision.unwrap() - 0.9309).abs() < 5e-5);
        assert!((r.recall.unwrap() - 0.9432).abs() < 5e-5);
        assert!((r.f1.unwrap() - 0.9370).abs() < 5e-5);
    }

    #[test]
    fn undefined_precision_is_absent() {
        let r = basic_metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 3,
            tn: 4,
        })
        .unwrap();
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
        assert_eq!(r.f1, None);
        assert!((r.accuracy - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(basic_metrics(&ConfusionMatrix::default()), Err(EvalError::Empty));
    }

    #[test]
    fn auc_extremes() {
        let truths = [P, P, N, N];
        assert_eq!(roc_and_auc(&[0.9, 0.8, 0.2, 0.1], &truths).unwrap().1, 1.0);
        assert_eq!(roc_and_auc(&[0.1, 0.2, 0.8, 0.9], &truths).unwrap().1, 0.0);
        assert_eq!(roc_and_auc(&[0.5; 4], &truths).unwrap().1, 0.5);
    }

    #[test]
    fn single_class_names_missing_class() {
        assert_eq!(
            roc_and_auc(&[0.1, 0.2], &[P, P]).unwrap_err(),
            EvalError::MissingClass(N)
        );
        assert_eq!(
            roc_and_auc(&[0.1, 0.2], &[N, N]).unwrap_err(),
            EvalError::MissingClass(P)
        );
        assert!(roc_and_auc(&[f64::NAN, 0.2], &[N, P]).is_err());
    }

    #[test]
    fn twenty_random_pairs_match_concordance() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut scores: Vec<f64> = (0..20).map(|_| (rng.gen_range(0..8) as f64) / 8.0).collect();
        scores[3] = scores[7];
        let mut truths: Vec<Class> = (0..20).map(|_| if rng.gen_bool(0.5) { P } else { N }).collect();
        truths[0] = P;
        truths[1] = N;
        let (_, auc) = roc_and_auc(&scores, &truths).unwrap();
        assert!((auc - concordance(&scores, &truths)).abs() < 1e-12);
    }

    #[test]
    fn roc_csv_has_header() {
        let (curve, _) = roc_and_auc(&[0.9, 0.1], &[P, N]).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("fpr,tpr,threshold\n0,0,inf\n"));
        assert!(text.ends_with("1,1,0.1\n"));
    }

    fn arb_scored() -> impl Strategy<Value = (Vec<f64>, Vec<Class>)> {
        prop::collection::vec((0u8..12, any::<bool>()), 2..50).prop_map(|v| {
            let mut scores: Vec<f64> = v.iter().map(|(s, _)| *s as f64 / 11.0).collect();
            let mut truths: Vec<Class> = v.iter().map(|(_, b)| if *b { P } else { N }).collect();
            truths[0] = P;
            truths[1] = N;
            scores[0] = scores[0].min(1.0);
            (scores, truths)
        })
    }

    proptest! {
        #[test]
        fn roc_is_monotone((scores, truths) in arb_scored()) {
            let (curve, auc) = roc_and_auc(&scores, &truths).unwrap();
            let first = curve.points.first().unwrap();
            let last = curve.points.last().unwrap();
            prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in curve.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                prop_assert!(w[1].threshold < w[0].threshold);
            }
            prop_assert!((0.0..=1.0).contains(&auc));
        }

        #[test]
        fn f1_between_precision_and_recall(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let r = basic_metrics(&ConfusionMatrix { tp, fp, fn_, tn }).unwrap();
            if let (Some(p), Some(rc), Some(f)) = (r.precision, r.recall, r.f1) {
                prop_assert!(f <= p.max(rc) + 1e-15 && f >= p.min(rc) - 1e-15);
            }
            prop_assert!((0.0..=1.0).contains(&r.accuracy));
        }

        #[test]
        fn thresholded_metrics_match_direct((scores, truths) in arb_scored()) {
            let (m, report) = evaluate(&scores, &truths, 0.5).unwrap();
            let preds: Vec<Class> = scores.iter().map(|&s| if s >= 0.5 { P } else { N }).collect();
            let direct = basic_metrics(&confusion(&preds, &truths).unwrap()).unwrap();
            prop_assert_eq!(m, confusion(&preds, &truths).unwrap());
            prop_assert_eq!(report.accuracy, direct.accuracy);
            prop_assert_eq!(report.f1, direct.f1);
        }
    }
}
