//! Document-level train/dev split with matched label distributions.
//!
//! Seeds are tried in increasing order. Each seed shuffles the sorted
//! document ids; the first `floor(ratio * n)` go to train. The first seed
//! whose `D(train || dev)` is within the threshold wins, otherwise the seed
//! with the smallest divergence. Seeds that leave a train label absent from
//! dev are never eligible, which keeps the divergence finite.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, NUM_CLASSES};

/// Probabilities indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub p: [f64; NUM_CLASSES],
}

impl LabelDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(p: [f64; NUM_CLASSES]) -> Result<Self> {
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Validation(format!("probabilities out of [0, 1]: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Validation(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(LabelDistribution { p })
    }

    /// Normalizes nonnegative weights (e.g. rounded published proportions).
    pub fn from_weights(w: [f64; NUM_CLASSES]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) || sum <= 0.0 {
            return Err(Error::Validation(format!("weights must be nonnegative with positive sum: {w:?}")));
        }
        Ok(LabelDistribution { p: w.map(|x| x / sum) })
    }

    pub fn uniform() -> Self {
        LabelDistribution {
            p: [1.0 / NUM_CLASSES as f64; NUM_CLASSES],
        }
    }

    pub fn prob(&self, label: Label) -> f64 {
        self.p[label.index()]
    }
}

/// Empirical class proportions.
pub fn label_distribution<I>(labels: I) -> Result<LabelDistribution>
where
    I: IntoIterator<Item = Label>,
{
    let counts = label_counts(labels);
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(LabelDistribution {
        p: counts.map(|c| c as f64 / total as f64),
    })
}

pub fn label_counts<I>(labels: I) -> [usize; NUM_CLASSES]
where
    I: IntoIterator<Item = Label>,
{
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

/// Shannon entropy in bits; `0 log 0 = 0`.
pub fn entropy_bits(d: &LabelDistribution) -> f64 {
    -d.p.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

/// `D(p || q)` in bits. Errors when `q` is zero somewhere `p` is positive.
pub fn kl_divergence_bits(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    let mut d = 0.0;
    for (i, (&pi, &qi)) in p.p.iter().zip(&q.p).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::InfiniteDivergence(Label::ALL[i]));
            }
            d += pi * (pi / qi).log2();
        }
    }
    // Rounding can push identical inputs a hair below zero.
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratio: f64,
    pub max_seed_trials: u64,
    pub kl_threshold_bits: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: 0.8,
            max_seed_trials: 10_000,
            kl_threshold_bits: 0.02,
        }
    }
}

/// A document and the labels of its instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocLabels {
    pub doc_id: String,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_doc_ids: BTreeSet<String>,
    pub dev_doc_ids: BTreeSet<String>,
    pub seed_used: u64,
    pub kl_bits: f64,
}

impl Split {
    pub fn is_train(&self, doc_id: &str) -> bool {
        self.train_doc_ids.contains(doc_id)
    }

    pub fn is_dev(&self, doc_id: &str) -> bool {
        self.dev_doc_ids.contains(doc_id)
    }
}

/// Number of train documents for `n` documents; both sides stay non-empty.
pub fn train_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).floor() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Divergence of one shuffled split, or `None` if a train label is missing from dev.
fn evaluate_seed(docs: &[&DocLabels], n_train: usize, seed: u64) -> Option<(Vec<usize>, f64)> {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train = label_counts(order[..n_train].iter().flat_map(|&i| docs[i].labels.iter().copied()));
    let dev = label_counts(order[n_train..].iter().flat_map(|&i| docs[i].labels.iter().copied()));
    if train.iter().sum::<usize>() == 0 || dev.iter().sum::<usize>() == 0 {
        return None;
    }
    if train.iter().zip(&dev).any(|(&t, &d)| t > 0 && d == 0) {
        return None;
    }
    let p = counts_to_dist(&train);
    let q = counts_to_dist(&dev);
    kl_divergence_bits(&p, &q).ok().map(|kl| (order, kl))
}

fn counts_to_dist(c: &[usize; NUM_CLASSES]) -> LabelDistribution {
    let total: usize = c.iter().sum();
    LabelDistribution {
        p: c.map(|x| x as f64 / total as f64),
    }
}

pub fn split_corpus(docs: &[DocLabels], cfg: &SplitConfig) -> Result<Split> {
    if docs.len() < 2 {
        return Err(Error::TooFewDocuments(docs.len()));
    }
    if !(cfg.ratio > 0.0 && cfg.ratio < 1.0) {
        return Err(Error::Validation(format!("split ratio {} not in (0, 1)", cfg.ratio)));
    }
    let mut sorted: Vec<&DocLabels> = docs.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if sorted.windows(2).any(|w| w[0].doc_id == w[1].doc_id) {
        return Err(Error::Validation("duplicate doc_id in split input".into()));
    }
    let n_train = train_size(sorted.len(), cfg.ratio);

    let mut best: Option<(u64, Vec<usize>, f64)> = None;
    for seed in 0..cfg.max_seed_trials {
        let Some((order, kl)) = evaluate_seed(&sorted, n_train, seed) else {
            continue;
        };
        if kl <= cfg.kl_threshold_bits {
            best = Some((seed, order, kl));
            break;
        }
        if best.as_ref().is_none_or(|(_, _, b)| kl < *b) {
            best = Some((seed, order, kl));
        }
    }
    let (seed_used, order, kl_bits) = best.ok_or(Error::NoAdmissibleSplit(cfg.max_seed_trials))?;
    let ids = |r: &[usize]| r.iter().map(|&i| sorted[i].doc_id.clone()).collect::<BTreeSet<_>>();
    Ok(Split {
        train_doc_ids: ids(&order[..n_train]),
        dev_doc_ids: ids(&order[n_train..]),
        seed_used,
        kl_bits,
    })
}

/// Manifest text: a `#` header with seed and divergence, then `train|dev<TAB>doc_id` lines.
pub fn format_manifest(split: &Split) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# seed_used={}\tkl_bits={}", split.seed_used, split.kl_bits);
    for id in &split.train_doc_ids {
        let _ = writeln!(s, "train\t{id}");
    }
    for id in &split.dev_doc_ids {
        let _ = writeln!(s, "dev\t{id}");
    }
    s
}

pub fn read_manifest(reader: impl Read, name: &str) -> Result<Split> {
    let mut split = Split {
        train_doc_ids: BTreeSet::new(),
        dev_doc_ids: BTreeSet::new(),
        seed_used: 0,
        kl_bits: 0.0,
    };
    let mut saw_header = false;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let lineno = i + 1;
        if let Some(header) = line.strip_prefix('#') {
            for field in header.split('\t').map(str::trim) {
                let bad = || Error::parse(name, lineno, format!("bad header field `{field}`"));
                match field.split_once('=') {
                    Some(("seed_used", v)) => split.seed_used = v.parse().map_err(|_| bad())?,
                    Some(("kl_bits", v)) => split.kl_bits = v.parse().map_err(|_| bad())?,
                    _ => return Err(bad()),
                }
            }
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some(("train", id)) => split.train_doc_ids.insert(id.to_owned()),
            Some(("dev", id)) => split.dev_doc_ids.insert(id.to_owned()),
            _ => return Err(Error::parse(name, lineno, "expected `train` or `dev`, a tab and a doc_id")),
        };
    }
    if !saw_header {
        return Err(Error::parse(name, 1, "missing `# seed_used=...` header"));
    }
    if !split.train_doc_ids.is_disjoint(&split.dev_doc_ids) {
        return Err(Error::Validation("train and dev sets overlap".into()));
    }
    Ok(split)
}
