//! Final dataset assembly from the three source strata and the stratified,
//! seeded train/eval split.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::{compute_stats, CorpusStats, Label, SentenceRecord, Source};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DatasetError {
    #[error("record {id:?} in the {stratum} stratum is unlabeled")]
    Unlabeled { id: String, stratum: Source },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("cannot split an empty record set")]
    Empty,
    #[error("record id {0:?} occurs more than once")]
    DuplicateId(String),
}

/// Expected size of one `(label, source)` stratum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumTarget {
    pub label: Label,
    pub source: Source,
    pub count: usize,
}

/// Per-stratum counts of the reference training set (18,395 sentences).
pub const REFERENCE_STRATA: [(Label, Source, usize); 6] = [
    (Label::Burnout, Source::Synthetic, 1_981),
    (Label::Burnout, Source::YoutubeGpt, 6_327),
    (Label::Burnout, Source::YoutubeManual, 566),
    (Label::Neutral, Source::Synthetic, 2_015),
    (Label::Neutral, Source::YoutubeGpt, 6_772),
    (Label::Neutral, Source::YoutubeManual, 734),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblyPlan {
    pub synthetic_sample_n: usize,
    pub synthetic_seed: u64,
    /// Reference composition for reports; never enforced on user data.
    pub target_strata: Vec<StratumTarget>,
    pub synthetic_share: f64,
    pub share_tolerance: f64,
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for AssemblyPlan {
    fn default() -> Self {
        AssemblyPlan {
            synthetic_sample_n: 5_000,
            synthetic_seed: 17,
            target_strata: REFERENCE_STRATA
                .iter()
                .map(|&(label, source, count)| StratumTarget { label, source, count })
                .collect(),
            synthetic_share: 0.20,
            share_tolerance: 0.05,
            split_ratio: 0.80,
            split_seed: 42,
        }
    }
}

impl AssemblyPlan {
    /// Every violated constraint, keyed by field name.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            out.push((
                "split_ratio",
                format!("{} must lie strictly between 0 and 1", self.split_ratio),
            ));
        }
        if !(0.0..=1.0).contains(&self.synthetic_share) {
            out.push((
                "synthetic_share",
                format!("{} must lie in [0, 1]", self.synthetic_share),
            ));
        }
        if self.share_tolerance.is_nan() || self.share_tolerance < 0.0 {
            out.push(("share_tolerance", "must be non-negative".to_string()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub stats: CorpusStats,
    pub synthetic_share: f64,
    pub planned_share: f64,
    pub share_within_tolerance: bool,
    pub duplicates_removed: usize,
    pub targets: Vec<StratumTarget>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub records: Vec<SentenceRecord>,
    pub report: CompositionReport,
}

/// Concatenates the synthetic, GPT-labelled and manually labelled strata,
/// drops exact duplicate texts (first occurrence wins), and reports the
/// composition. Each record's `source` is set by the stratum it arrived in.
pub fn assemble(
    synthetic: &[SentenceRecord],
    gpt_labeled: &[SentenceRecord],
    manual: &[SentenceRecord],
    plan: &AssemblyPlan,
) -> Result<Assembly, DatasetError> {
    let strata = [
        (Source::Synthetic, synthetic),
        (Source::YoutubeGpt, gpt_labeled),
        (Source::YoutubeManual, manual),
    ];
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut duplicates_removed = 0;
    for (source, stratum) in strata {
        for r in stratum {
            if r.label == Label::Unlabeled {
                return Err(DatasetError::Unlabeled {
                    id: r.id.clone(),
                    stratum: source,
                });
            }
            if !seen.insert(r.text.as_str()) {
                duplicates_removed += 1;
                continue;
            }
            records.push(r.clone().with_source(source));
        }
    }

    let stats = compute_stats(&records);
    let synth = records.iter().filter(|r| r.source == Source::Synthetic).count();
    let synthetic_share = if records.is_empty() {
        0.0
    } else {
        synth as f64 / records.len() as f64
    };
    let share_within_tolerance = (synthetic_share - plan.synthetic_share).abs() <= plan.share_tolerance + 1e-12;
    let mut warnings = Vec::new();
    if !share_within_tolerance {
        let msg = format!(
            "synthetic share {:.1}% is outside {:.1}% ± {:.1} points",
            synthetic_share * 100.0,
            plan.synthetic_share * 100.0,
            plan.share_tolerance * 100.0
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Assembly {
        records,
        report: CompositionReport {
            stats,
            synthetic_share,
            planned_share: plan.synthetic_share,
            share_within_tolerance,
            duplicates_removed,
            targets: plan.target_strata.clone(),
            warnings,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SentenceRecord>,
    pub eval: Vec<SentenceRecord>,
}

/// Training-side count per label so the total is `round(ratio * N)` and each
/// label is within one record of `ratio * n_label` (largest remainder).
fn train_counts(sizes: &[usize], ratio: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (ratio * total as f64).round() as usize;
    let ideal: Vec<f64> = sizes.iter().map(|&n| ratio * n as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..sizes.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    for &i in by_remainder.iter().cycle().take(sizes.len() * 2) {
        if assigned >= target {
            break;
        }
        if counts[i] < sizes[i] && (counts[i] as f64) < ideal[i].ceil() {
            counts[i] += 1;
            assigned += 1;
        }
    }
    counts
}

/// Seeded shuffle stratified by label.
pub fn split(records: &[SentenceRecord], ratio: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId(r.id.clone()));
        }
    }

    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.label).or_default().push(i);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let counts = train_counts(&sizes, ratio);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut eval_idx = Vec::new();
    for (members, &k) in groups.values_mut().zip(&counts) {
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..k]);
        eval_idx.extend_from_slice(&members[k..]);
    }
    train_idx.shuffle(&mut rng);
    eval_idx.shuffle(&mut rng);
    Ok(DatasetSplit {
        train: train_idx.into_iter().map(|i| records[i].clone()).collect(),
        eval: eval_idx.into_iter().map(|i| records[i].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn rec(id: &str, text: &str, label: Label, source: Source) -> SentenceRecord {
        SentenceRecord::new(id, text, source, label)
    }

    fn many(prefix: &str, n: usize, label: Label, source: Source) -> Vec<SentenceRecord> {
        (0..n)
            .map(|i| rec(&format!("{prefix}{i}"), &format!("{prefix} text {i}"), label, source))
            .collect()
    }

    #[test]
    fn exact_share() {
        let synth = many("s", 20, Label::Burnout, Source::Synthetic);
        let gpt = many("g", 80, Label::Neutral, Source::YoutubeGpt);
        let out = assemble(&synth, &gpt, &[], &AssemblyPlan::default()).unwrap();
        assert_eq!(out.records.len(), 100);
        assert_eq!(out.report.synthetic_share, 0.20);
        assert!(out.report.share_within_tolerance);
        assert!(out.report.warnings.is_empty());
    }

    #[test]
    fn duplicate_text_across_strata_kept_once() {
        let a = [rec("s1", "same words here", Label::Burnout, Source::Synthetic)];
        let b = [rec("g1", "same words here", Label::Burnout, Source::YoutubeGpt)];
        let out = assemble(&a, &b, &[], &AssemblyPlan::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].id, "s1");
        assert_eq!(out.report.duplicates_removed, 1);
    }

    #[test]
    fn share_outside_tolerance_warns() {
        let synth = many("s", 50, Label::Burnout, Source::Synthetic);
        let gpt = many("g", 50, Label::Neutral, Source::YoutubeGpt);
        let out = assemble(&synth, &gpt, &[], &AssemblyPlan::default()).unwrap();
        assert!(!out.report.share_within_tolerance);
        assert_eq!(out.report.warnings.len(), 1);
    }

    #[test]
    fn unlabeled_rejected() {
        let bad = [rec("g1", "x y z", Label::Unlabeled, Source::YoutubeGpt)];
        assert_eq!(
            assemble(&[], &bad, &[], &AssemblyPlan::default()).unwrap_err(),
            DatasetError::Unlabeled {
                id: "g1".into(),
                stratum: Source::YoutubeGpt
            }
        );
    }

    #[test]
    fn source_follows_stratum() {
        let manual = [rec("m1", "abc def ghi", Label::Neutral, Source::YoutubeGpt)];
        let out = assemble(&[], &[], &manual, &AssemblyPlan::default()).unwrap();
        assert_eq!(out.records[0].source, Source::YoutubeManual);
    }

    #[test]
    fn reference_strata_sizes() {
        let mut synth = Vec::new();
        let mut gpt = Vec::new();
        let mut manual = Vec::new();
        for (label, source, n) in REFERENCE_STRATA {
            let bucket = match source {
                Source::Synthetic => &mut synth,
                Source::YoutubeGpt => &mut gpt,
                Source::YoutubeManual => &mut manual,
            };
            bucket.extend(many(&format!("{label}-{source}-"), n, label, source));
        }
        let out = assemble(&synth, &gpt, &manual, &AssemblyPlan::default()).unwrap();
        assert_eq!(out.records.len(), 18_395);
        assert_eq!(out.report.stats.total.count, 18_395);
        for (label, source, n) in REFERENCE_STRATA {
            assert_eq!(out.report.stats.stratum(label, source).count, n);
        }
        // 3,996 / 18,395 = 21.7%, inside 20% ± 5.
        assert!(out.report.share_within_tolerance);
    }

    #[test]
    fn ten_records_split() {
        let mut recs = many("b", 5, Label::Burnout, Source::Synthetic);
        recs.extend(many("n", 5, Label::Neutral, Source::Synthetic));
        let s = split(&recs, 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.eval.len()), (8, 2));
        assert_eq!(s.eval.iter().filter(|r| r.label == Label::Burnout).count(), 1);
        assert_eq!(s.eval.iter().filter(|r| r.label == Label::Neutral).count(), 1);
    }

    #[test]
    fn reference_split_sizes() {
        // Label mix is arbitrary here; only the total fixes the sizes.
        let mut recs = many("b", 11_073, Label::Burnout, Source::YoutubeGpt);
        recs.extend(many("n", 11_921, Label::Neutral, Source::YoutubeGpt));
        assert_eq!(recs.len(), 22_994);
        let s = split(&recs, 0.8, 42).unwrap();
        assert_eq!((s.train.len(), s.eval.len()), (18_395, 4_599));
    }

    #[test]
    fn split_errors() {
        let recs = many("b", 3, Label::Burnout, Source::Synthetic);
        assert_eq!(split(&recs, 1.0, 1).unwrap_err(), DatasetError::BadRatio(1.0));
        assert_eq!(split(&recs, 0.0, 1).unwrap_err(), DatasetError::BadRatio(0.0));
        assert_eq!(split(&[], 0.5, 1).unwrap_err(), DatasetError::Empty);
        let dup = [recs[0].clone(), recs[0].clone()];
        assert!(matches!(split(&dup, 0.5, 1), Err(DatasetError::DuplicateId(_))));
    }

    #[test]
    fn split_is_seeded() {
        let mut recs = many("b", 30, Label::Burnout, Source::Synthetic);
        recs.extend(many("n", 17, Label::Neutral, Source::Synthetic));
        assert_eq!(split(&recs, 0.7, 9).unwrap(), split(&recs, 0.7, 9).unwrap());
        assert_ne!(split(&recs, 0.7, 9).unwrap(), split(&recs, 0.7, 10).unwrap());
    }

    proptest! {
        #[test]
        fn train_counts_invariants(sizes in prop::collection::vec(0usize..500, 1..4), ratio in 0.01f64..0.99) {
            let counts = train_counts(&sizes, ratio);
            let total: usize = sizes.iter().sum();
            prop_assert_eq!(counts.iter().sum::<usize>(), (ratio * total as f64).round() as usize);
            for (c, n) in counts.iter().zip(&sizes) {
                prop_assert!(*c <= *n);
                prop_assert!((*c as f64 - ratio * *n as f64).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn assemble_ignores_stratum_order(a in 0usize..10, b in 0usize..10, overlap in 0usize..5) {
            let s1: Vec<_> = (0..a).map(|i| rec(&format!("a{i}"), &format!("t{i}"), Label::Burnout, Source::Synthetic)).collect();
            let s2: Vec<_> = (0..b).map(|i| rec(&format!("b{i}"), &format!("t{}", i + a.saturating_sub(overlap)), Label::Neutral, Source::YoutubeGpt)).collect();
            let plan = AssemblyPlan::default();
            let mut x: Vec<String> = assemble(&s1, &s2, &[], &plan).unwrap().records.into_iter().map(|r| r.text).collect();
            let mut y: Vec<String> = assemble(&s2, &s1, &[], &plan).unwrap().records.into_iter().map(|r| r.text).collect();
            x.sort();
            y.sort();
            prop_assert_eq!(x, y);
            let out = assemble(&s1, &s2, &[], &plan).unwrap();
            prop_assert_eq!(out.report.stats.total.count, out.records.len());
        }
    }
}
