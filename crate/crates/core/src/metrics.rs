//! One-vs-all precision / recall / F1 with micro and macro aggregates over
//! all labels and over the positive labels only, plus the categorical
//! random-sampling baseline.
//!
//! Any `0/0` is taken as 0, so a class that is never predicted and never
//! correct scores `(0, 0, 0)`.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, NUM_CLASSES};
use crate::splitter::LabelDistribution;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    /// `tp + fn`: gold instances of the class.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub per_class: [Counts; NUM_CLASSES],
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> Counts {
        self.per_class[label.index()]
    }

    fn pooled(&self, labels: &[Label]) -> Counts {
        labels.iter().fold(Counts::default(), |acc, l| {
            let c = self.get(*l);
            Counts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                fn_: acc.fn_ + c.fn_,
            }
        })
    }
}

pub fn confusion_counts(preds: &[Label], golds: &[Label]) -> Result<ClassCounts> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = ClassCounts::default();
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            counts.per_class[p.index()].tp += 1;
        } else {
            counts.per_class[p.index()].fp += 1;
            counts.per_class[g.index()].fn_ += 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let p = ratio(tp as f64, (tp + fp) as f64);
    let r = ratio(tp as f64, (tp + fn_) as f64);
    Prf {
        precision: p,
        recall: r,
        f1: ratio(2.0 * tp as f64, (2 * tp + fp + fn_) as f64),
    }
}

/// Unweighted mean of each column.
pub fn macro_average(rows: &[Prf]) -> Prf {
    if rows.is_empty() {
        return Prf::default();
    }
    let n = rows.len() as f64;
    Prf {
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Option<Label>,
    #[serde(flatten)]
    pub prf: Prf,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Indexed by [`Label::index`].
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub micro_all: Prf,
    pub macro_all: Prf,
    pub micro_pos: Prf,
    pub macro_pos: Prf,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    pub fn from_counts(counts: &ClassCounts) -> Self {
        let per_class = Label::ALL.map(|l| {
            let c = counts.get(l);
            ClassMetrics {
                label: Some(l),
                prf: prf(c.tp, c.fp, c.fn_),
                support: c.support(),
            }
        });
        let rows = |ls: &[Label]| ls.iter().map(|l| per_class[l.index()].prf).collect::<Vec<_>>();
        let pooled_all = counts.pooled(&Label::ALL);
        let pooled_pos = counts.pooled(&Label::POSITIVE);
        MetricsReport {
            micro_all: prf(pooled_all.tp, pooled_all.fp, pooled_all.fn_),
            macro_all: macro_average(&rows(&Label::ALL)),
            micro_pos: prf(pooled_pos.tp, pooled_pos.fp, pooled_pos.fn_),
            macro_pos: macro_average(&rows(&Label::POSITIVE)),
            per_class,
        }
    }

    /// Element-wise mean of several reports (supports must agree).
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> Prf| {
            let (mut p, mut r, mut f1) = (0.0, 0.0, 0.0);
            for rep in reports {
                let x = f(rep);
                p += x.precision;
                r += x.recall;
                f1 += x.f1;
            }
            Prf {
                precision: p / n,
                recall: r / n,
                f1: f1 / n,
            }
        };
        let per_class = Label::ALL.map(|l| ClassMetrics {
            label: Some(l),
            prf: avg(&|rep| rep.per_class[l.index()].prf),
            support: first.per_class[l.index()].support,
        });
        Some(MetricsReport {
            per_class,
            micro_all: avg(&|r| r.micro_all),
            macro_all: avg(&|r| r.macro_all),
            micro_pos: avg(&|r| r.micro_pos),
            macro_pos: avg(&|r| r.macro_pos),
        })
    }

    /// Tab-separated table: label rows in table order, then the four aggregates.
    pub fn to_table(&self) -> String {
        let mut s = String::from("\tP\tR\tF1\tSupport\n");
        for l in Label::TABLE_ORDER {
            let c = self.class(l);
            let _ = writeln!(
                s,
                "{}\t{:.3}\t{:.3}\t{:.3}\t{}",
                l.table_name(),
                c.prf.precision,
                c.prf.recall,
                c.prf.f1,
                c.support
            );
        }
        for (name, m) in [
            ("Micro-all", self.micro_all),
            ("Macro-all", self.macro_all),
            ("Micro-pos", self.micro_pos),
            ("Macro-pos", self.macro_pos),
        ] {
            let _ = writeln!(s, "{name}\t{:.3}\t{:.3}\t{:.3}\t", m.precision, m.recall, m.f1);
        }
        s
    }
}

pub fn metrics_report(preds: &[Label], golds: &[Label]) -> Result<MetricsReport> {
    Ok(MetricsReport::from_counts(&confusion_counts(preds, golds)?))
}

/// Samples one label per dev instance from `train_dist`, `n_runs` times, and
/// averages the per-run reports. Run `i` uses stream `i` of `seed`.
pub fn random_baseline(
    train_dist: &LabelDistribution,
    dev_golds: &[Label],
    n_runs: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if dev_golds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_runs == 0 {
        return Err(Error::Validation("baseline needs at least one run".into()));
    }
    let sampler = WeightedIndex::new(train_dist.p).map_err(|e| Error::Validation(e.to_string()))?;
    let reports: Vec<MetricsReport> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            let preds: Vec<Label> = dev_golds.iter().map(|_| Label::ALL[sampler.sample(&mut rng)]).collect();
            metrics_report(&preds, dev_golds).expect("lengths agree and are non-empty")
        })
        .collect();
    Ok(MetricsReport::mean(&reports).expect("n_runs > 0"))
}
