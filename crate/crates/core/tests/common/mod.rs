//! Shared fixtures and oracles for the integration tests.

#![allow(dead_code)]

use pairctx::corpus::{AbstractDoc, CorpusStore, EntityMention, EntityType, Provenance, RelationInstance};
use pairctx::encoder_input::{pad_batch, Batch, EncodedExample};
use pairctx::label::Label;
use pairctx::ner_align::NerMention;
use pairctx::net::{nll_loss, forward, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite difference of the batch loss along one coordinate.
pub fn numeric_partial(params: &ModelParams<f64>, batch: &Batch, tensor: usize, index: usize, step: f64) -> f64 {
    let loss_at = |delta: f64| {
        let mut p = params.clone();
        p.tensors_mut()[tensor].data[index] += delta;
        let logits = forward(&p, batch).unwrap();
        nll_loss(&logits, &batch.labels)
    };
    (loss_at(step) - loss_at(-step)) / (2.0 * step)
}

/// Coordinates the loss can depend on: token rows that occur in the batch,
/// position rows below the padded length, and every other tensor in full.
pub fn active_coordinates(params: &ModelParams<f64>, batch: &Batch) -> Vec<(usize, usize)> {
    let h = params.config.hidden_dim;
    let used: std::collections::BTreeSet<usize> =
        batch.token_ids.iter().flatten().map(|&t| t as usize).collect();
    let mut out = Vec::new();
    for (ti, t) in params.tensors().iter().enumerate() {
        for i in 0..t.data.len() {
            let keep = match t.name.as_str() {
                "embeddings.token" => used.contains(&(i / h)),
                "embeddings.position" => i / h < batch.seq_len(),
                _ => true,
            };
            if keep {
                out.push((ti, i));
            }
        }
    }
    out
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Random example `[CLS] a.. [SEP] b.. [SEP]` with ids from `4..vocab`.
pub fn random_example(rng: &mut impl Rng, vocab: u32, max_len: usize, label: Label) -> EncodedExample {
    let total = rng.random_range(5..=max_len);
    let first = rng.random_range(1..=total - 4);
    let mut ids = vec![2u32];
    ids.extend((0..first).map(|_| rng.random_range(4..vocab)));
    ids.push(3);
    ids.extend((0..total - first - 3).map(|_| rng.random_range(4..vocab)));
    ids.push(3);
    let segment_ids = (0..ids.len()).map(|i| u8::from(i > first + 1)).collect();
    EncodedExample {
        token_ids: ids,
        segment_ids,
        label,
        doc_id: "x".into(),
        pair: ("g".into(), "d".into()),
    }
}

pub fn random_batch(seed: u64, n: usize, vocab: u32, max_len: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exs: Vec<_> = (0..n)
        .map(|i| random_example(&mut rng, vocab, max_len, Label::ALL[i % 5]))
        .collect();
    pad_batch(&exs, 0, Some(max_len))
}

/// Replaces every parameter with a draw from N(0, 0.3) (gammas around 1),
/// moving a freshly initialised model away from near-uniform attention.
pub fn spread_params(params: &mut ModelParams<f64>, seed: u64) {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.3).unwrap();
    for t in params.tensors_mut() {
        let offset = if t.name.ends_with(".gamma") { 1.0 } else { 0.0 };
        for v in t.data.iter_mut() {
            *v = offset + normal.sample(&mut rng);
        }
    }
}

/// Separable fixture: the token right after `[CLS]` is `4 + class`; the rest
/// of both segments is filler drawn from `9..vocab`. Ten examples per class.
pub fn separable_fixture(seed: u64, per_class: usize, vocab: u32) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in Label::ALL {
        for _ in 0..per_class {
            let mut ids = vec![2, 4 + label.index() as u32, rng.random_range(9..vocab), 3];
            let body = rng.random_range(3..=8);
            ids.extend((0..body).map(|_| rng.random_range(9..vocab)));
            ids.push(3);
            let segment_ids = (0..ids.len()).map(|i| u8::from(i > 3)).collect();
            out.push(EncodedExample {
                token_ids: ids,
                segment_ids,
                label,
                doc_id: "synthetic".into(),
                pair: ("g".into(), "d".into()),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Exact,
    Fuzzy,
    Missing,
}

fn mention(doc: &AbstractDoc, surface: &str, from: usize, etype: EntityType, id: &str) -> EntityMention {
    let start = doc.text[from..].find(surface).expect("surface in text") + from;
    EntityMention {
        doc_id: doc.doc_id.clone(),
        start,
        end: start + surface.len(),
        surface: surface.to_owned(),
        etype,
        grounding_id: Some(id.to_owned()),
    }
}

/// Two gold positive pairs per document. `kinds[k]` decides how the tagger
/// output for pair `k` relates to the gold mentions:
/// exact (surface equal up to case), fuzzy (right id, longer span) or
/// missing (entity not tagged, or tagged under another id).
pub fn alignment_fixture(kinds: &[PairKind]) -> (CorpusStore, Vec<NerMention>) {
    assert!(kinds.len() % 2 == 0);
    let mut docs = Vec::new();
    let mut gold_mentions = Vec::new();
    let mut relations = Vec::new();
    let mut ner = Vec::new();
    for (d, chunk) in kinds.chunks(2).enumerate() {
        let doc_id = format!("{}", 30_000_000 + d);
        let genes = [format!("GENE{}A", d), format!("GENE{}B", d)];
        let diseases = [format!("disorder {}a", d), format!("disorder {}b", d)];
        let text = format!(
            "The {} variant reduces activity in {} cases. Separately, {} variant gain was observed with {} onset.",
            genes[0], diseases[0], genes[1], diseases[1]
        );
        let doc = AbstractDoc::new(doc_id.clone(), text);
        let mut cursor = 0;
        for (j, &kind) in chunk.iter().enumerate() {
            let gene_id = format!("NCBIGene:{}", 1000 + 2 * d + j);
            let disease_id = format!("MESH:D{:06}", 2 * d + j);
            let g = mention(&doc, &genes[j], cursor, EntityType::Gene, &gene_id);
            let x = mention(&doc, &diseases[j], g.end, EntityType::Disease, &disease_id);
            cursor = x.end;
            relations.push(RelationInstance {
                doc_id: doc_id.clone(),
                gene_grounding_id: gene_id.clone(),
                gene_surface: g.surface.clone(),
                disease_grounding_id: disease_id.clone(),
                disease_surface: x.surface.clone(),
                label: if j == 0 { Label::Lof } else { Label::Gof },
                provenance: Provenance::Gold,
            });
            let k = 2 * d + j;
            let lower = |m: &EntityMention| {
                let mut m = m.clone();
                m.surface = m.surface.to_lowercase();
                m
            };
            let widened = |m: &EntityMention, suffix: &str| {
                let mut m = m.clone();
                m.surface.push_str(suffix);
                m.end += suffix.len();
                m
            };
            let suffix = if j == 0 { " cases" } else { " onset" };
            let (tg, tx) = match kind {
                PairKind::Exact => (Some(if k % 2 == 0 { lower(&g) } else { g.clone() }), Some(x.clone())),
                PairKind::Fuzzy => match k % 3 {
                    0 => (Some(widened(&g, " variant")), Some(x.clone())),
                    1 => (Some(g.clone()), Some(widened(&x, suffix))),
                    _ => (Some(widened(&g, " variant")), Some(widened(&x, suffix))),
                },
                PairKind::Missing => {
                    if k % 2 == 0 {
                        (None, Some(x.clone()))
                    } else {
                        let mut wrong = x.clone();
                        wrong.grounding_id = Some("MESH:D999999".into());
                        (Some(g.clone()), Some(wrong))
                    }
                }
            };
            ner.extend(tg.into_iter().chain(tx).map(NerMention));
            gold_mentions.push(g);
            gold_mentions.push(x);
        }
        docs.push(doc);
    }
    let store = CorpusStore::from_parts(docs, gold_mentions, relations).expect("valid fixture");
    (store, ner)
}

/// 44 pair kinds: 24 exact, 14 fuzzy, 6 missing, interleaved by a fixed
/// permutation so every bucket spans many documents.
pub fn audit_kinds() -> Vec<PairKind> {
    (0..44)
        .map(|k| match (k * 17) % 44 {
            r if r < 24 => PairKind::Exact,
            r if r < 38 => PairKind::Fuzzy,
            _ => PairKind::Missing,
        })
        .collect()
}
