use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Label, SentenceRecord, Source};

/// Count and mean lengths for one `(label, source)` stratum. Means are `None`
/// when the stratum is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub label: Label,
    pub source: Source,
    pub count: usize,
    pub avg_chars: Option<f64>,
    pub avg_words: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalStats {
    pub count: usize,
    pub avg_chars: Option<f64>,
    pub avg_words: Option<f64>,
}

/// Per-stratum dataset characteristics in the layout of the training-set table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Every `(label, source)` pair, label-major, in declaration order.
    pub strata: Vec<StratumStats>,
    pub total: TotalStats,
}

impl CorpusStats {
    pub fn stratum(&self, label: Label, source: Source) -> &StratumStats {
        self.strata
            .iter()
            .find(|s| s.label == label && s.source == source)
            .expect("all strata are present")
    }

    /// Renders the table for terminal output. Empty unlabeled strata are omitted.
    pub fn render_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:<40} {:>10} {:>10} {:>10}",
            "label", "type of data", "sentences", "avg chars", "avg words"
        );
        let mut last_label = None;
        for st in &self.strata {
            if st.label == Label::Unlabeled && st.count == 0 {
                continue;
            }
            let label = if last_label == Some(st.label) {
                ""
            } else {
                st.label.as_str()
            };
            last_label = Some(st.label);
            let _ = writeln!(
                s,
                "{:<10} {:<40} {:>10} {:>10} {:>10}",
                label,
                st.source.describe(),
                st.count,
                fmt_opt(st.avg_chars),
                fmt_opt(st.avg_words)
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:<40} {:>10} {:>10} {:>10}",
            "total",
            "",
            self.total.count,
            fmt_opt(self.total.avg_chars),
            fmt_opt(self.total.avg_words)
        );
        s
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    count: usize,
    chars: u64,
    words: u64,
}

impl Acc {
    fn add(&mut self, r: &SentenceRecord) {
        self.count += 1;
        self.chars += r.char_count as u64;
        self.words += r.word_count as u64;
    }

    fn mean(&self, sum: u64) -> Option<f64> {
        (self.count > 0).then(|| sum as f64 / self.count as f64)
    }
}

pub fn compute_stats(records: &[SentenceRecord]) -> CorpusStats {
    let mut cells = [[Acc::default(); 3]; 3];
    let mut total = Acc::default();
    for r in records {
        let li = Label::ALL.iter().position(|&l| l == r.label).unwrap();
        let si = Source::ALL.iter().position(|&s| s == r.source).unwrap();
        cells[li][si].add(r);
        total.add(r);
    }
    let mut strata = Vec::with_capacity(9);
    for (li, label) in Label::ALL.iter().enumerate() {
        for (si, source) in Source::ALL.iter().enumerate() {
            let acc = cells[li][si];
            strata.push(StratumStats {
                label: *label,
                source: *source,
                count: acc.count,
                avg_chars: acc.mean(acc.chars),
                avg_words: acc.mean(acc.words),
            });
        }
    }
    CorpusStats {
        strata,
        total: TotalStats {
            count: total.count,
            avg_chars: total.mean(total.chars),
            avg_words: total.mean(total.words),
        },
    }
}
