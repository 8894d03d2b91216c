//! Alignment of tagger output to gold annotations and negative-pair synthesis.
//!
//! Alignment works on grounding identifiers: a tagged mention matches a gold
//! mention when both carry the same identifier and entity type. Surface text
//! only decides whether the match is exact (after case-folding and whitespace
//! collapsing) or fuzzy.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_span_for, AbstractDoc, CorpusStore, EntityMention, EntityType, Provenance, RelationInstance};
use crate::error::{Error, Result};
use crate::label::Label;

/// A mention produced by the external tagger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerMention(pub EntityMention);

impl NerMention {
    pub const SOURCE: &'static str = "EXTERNAL_NER";
}

impl Deref for NerMention {
    type Target = EntityMention;

    fn deref(&self) -> &EntityMention {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlignKind {
    #[serde(rename = "EXACT")]
    Exact,
    #[serde(rename = "FUZZY")]
    Fuzzy,
    #[serde(rename = "NONE")]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignmentOutcome<'a> {
    pub kind: AlignKind,
    pub matched_gold: Option<&'a EntityMention>,
}

impl AlignmentOutcome<'_> {
    const NONE: Self = AlignmentOutcome {
        kind: AlignKind::None,
        matched_gold: None,
    };
}

/// Counts of gold positive pairs by how well the tagger recovered them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub total_positive_pairs: usize,
    pub both_exact: usize,
    pub aligned_not_exact: usize,
    pub entity_missing: usize,
}

/// Per-pair detail behind an [`AlignmentReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAudit {
    pub doc_id: String,
    pub gene_id: String,
    pub disease_id: String,
    pub gene: AlignKind,
    pub disease: AlignKind,
}

/// One candidate pair per distinct (gene id, disease id) in a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub gene_id: String,
    pub gene_surface: String,
    pub disease_id: String,
    pub disease_surface: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledPairs {
    pub instances: Vec<RelationInstance>,
    /// Gold triples with no matching candidate pair.
    pub unrecoverable: Vec<RelationInstance>,
}

/// Case-fold and collapse internal whitespace.
pub fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Aligns one tagged mention against the gold mentions of its document.
pub fn align_mention<'a>(m: &NerMention, gold: &'a [EntityMention]) -> AlignmentOutcome<'a> {
    let Some(id) = m.grounding_id.as_deref() else {
        return AlignmentOutcome::NONE;
    };
    let norm = normalize_surface(&m.surface);
    let mut fuzzy = None;
    for g in gold
        .iter()
        .filter(|g| g.etype == m.etype && g.grounding_id.as_deref() == Some(id))
    {
        if normalize_surface(&g.surface) == norm {
            return AlignmentOutcome {
                kind: AlignKind::Exact,
                matched_gold: Some(g),
            };
        }
        fuzzy.get_or_insert(g);
    }
    match fuzzy {
        Some(g) => AlignmentOutcome {
            kind: AlignKind::Fuzzy,
            matched_gold: Some(g),
        },
        None => AlignmentOutcome::NONE,
    }
}

/// Enumerates gene × disease pairs over distinct grounding ids.
///
/// Mentions without a grounding id are dropped. The representative surface
/// of an id is its first mention in document order. Output is sorted by
/// `(gene_id, disease_id)`.
pub fn generate_candidate_pairs(doc: &AbstractDoc, ner: &[NerMention]) -> Vec<CandidatePair> {
    let mut ordered: Vec<&NerMention> = ner
        .iter()
        .filter(|m| m.doc_id == doc.doc_id && m.grounding_id.is_some())
        .collect();
    ordered.sort_by_key(|m| (m.start, m.end));

    let mut genes: BTreeMap<&str, &str> = BTreeMap::new();
    let mut diseases: BTreeMap<&str, &str> = BTreeMap::new();
    for m in ordered {
        let id = m.grounding_id.as_deref().unwrap();
        let table = match m.etype {
            EntityType::Gene => &mut genes,
            EntityType::Disease => &mut diseases,
        };
        table.entry(id).or_insert(&m.surface);
    }

    let mut pairs = Vec::with_capacity(genes.len() * diseases.len());
    for (gid, gsurf) in &genes {
        for (did, dsurf) in &diseases {
            pairs.push(CandidatePair {
                gene_id: (*gid).to_owned(),
                gene_surface: (*gsurf).to_owned(),
                disease_id: (*did).to_owned(),
                disease_surface: (*dsurf).to_owned(),
            });
        }
    }
    pairs
}

/// Labels candidate pairs from the document's gold triples.
///
/// Matched pairs take the gold label (provenance GOLD); the rest become
/// `NO_REL` generated negatives. Instance surfaces are the candidate pair's
/// representative surfaces.
pub fn label_pairs(doc_id: &str, pairs: &[CandidatePair], gold: &[RelationInstance]) -> Result<LabeledPairs> {
    let mut gold_by_key: BTreeMap<(&str, &str), &RelationInstance> = BTreeMap::new();
    for g in gold.iter().filter(|g| g.doc_id == doc_id) {
        let key = (g.gene_grounding_id.as_str(), g.disease_grounding_id.as_str());
        if let Some(prev) = gold_by_key.insert(key, g) {
            if prev.label != g.label {
                return Err(Error::LabelConflict {
                    doc_id: doc_id.to_owned(),
                    gene_id: key.0.to_owned(),
                    disease_id: key.1.to_owned(),
                    first: prev.label,
                    second: g.label,
                });
            }
        }
    }

    let mut covered = BTreeSet::new();
    let mut instances = Vec::with_capacity(pairs.len());
    let mut sorted: Vec<&CandidatePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| (&a.gene_id, &a.disease_id).cmp(&(&b.gene_id, &b.disease_id)));
    sorted.dedup_by(|a, b| a.gene_id == b.gene_id && a.disease_id == b.disease_id);
    for p in sorted {
        let key = (p.gene_id.as_str(), p.disease_id.as_str());
        let (label, provenance) = match gold_by_key.get(&key) {
            Some(g) => {
                covered.insert(key);
                (g.label, Provenance::Gold)
            }
            None => (Label::NoRel, Provenance::GeneratedNegative),
        };
        instances.push(RelationInstance {
            doc_id: doc_id.to_owned(),
            gene_grounding_id: p.gene_id.clone(),
            gene_surface: p.gene_surface.clone(),
            disease_grounding_id: p.disease_id.clone(),
            disease_surface: p.disease_surface.clone(),
            label,
            provenance,
        });
    }
    let unrecoverable = gold_by_key
        .iter()
        .filter(|(k, _)| !covered.contains(*k))
        .map(|(_, g)| (*g).clone())
        .collect();
    Ok(LabeledPairs {
        instances,
        unrecoverable,
    })
}

/// Runs pair generation and labelling over every document of the corpus.
pub fn build_dataset(store: &CorpusStore, ner: &[NerMention]) -> Result<LabeledPairs> {
    let by_doc = group_by_doc(ner);
    let mut out = LabeledPairs::default();
    for doc in store.documents.values() {
        let mentions = by_doc.get(doc.doc_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let pairs = generate_candidate_pairs(doc, mentions);
        let gold: Vec<RelationInstance> = store.relations_for(&doc.doc_id).cloned().collect();
        let labeled = label_pairs(&doc.doc_id, &pairs, &gold)?;
        out.instances.extend(labeled.instances);
        out.unrecoverable.extend(labeled.unrecoverable);
    }
    Ok(out)
}

fn group_by_doc(ner: &[NerMention]) -> BTreeMap<&str, Vec<NerMention>> {
    let mut map: BTreeMap<&str, Vec<NerMention>> = BTreeMap::new();
    for m in ner {
        map.entry(m.doc_id.as_str()).or_default().push(m.clone());
    }
    map
}

/// Best alignment of a gold entity against the tagged mentions of its document.
///
/// The reference surfaces are the gold triple's own surface plus every gold
/// mention in the document sharing its id and type.
fn entity_outcome(
    etype: EntityType,
    id: &str,
    triple_surface: &str,
    gold_mentions: &[EntityMention],
    ner: &[NerMention],
) -> AlignKind {
    let mut refs: Vec<EntityMention> = gold_mentions
        .iter()
        .filter(|g| g.etype == etype && g.grounding_id.as_deref() == Some(id))
        .cloned()
        .collect();
    refs.push(EntityMention {
        doc_id: String::new(),
        start: 0,
        end: 0,
        surface: triple_surface.to_owned(),
        etype,
        grounding_id: Some(id.to_owned()),
    });
    let mut best = AlignKind::None;
    for m in ner.iter().filter(|m| m.etype == etype) {
        match align_mention(m, &refs).kind {
            AlignKind::Exact => return AlignKind::Exact,
            AlignKind::Fuzzy => best = AlignKind::Fuzzy,
            AlignKind::None => {}
        }
    }
    best
}

/// Per-pair audit of every distinct gold positive pair in the corpus.
pub fn audit_pairs(store: &CorpusStore, ner: &[NerMention]) -> Vec<PairAudit> {
    let by_doc = group_by_doc(ner);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in store.positive_relations() {
        if !seen.insert(r.key()) {
            continue;
        }
        let mentions = by_doc.get(r.doc_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let gold: Vec<EntityMention> = store.mentions_for(&r.doc_id).cloned().collect();
        out.push(PairAudit {
            doc_id: r.doc_id.clone(),
            gene_id: r.gene_grounding_id.clone(),
            disease_id: r.disease_grounding_id.clone(),
            gene: entity_outcome(EntityType::Gene, &r.gene_grounding_id, &r.gene_surface, &gold, mentions),
            disease: entity_outcome(
                EntityType::Disease,
                &r.disease_grounding_id,
                &r.disease_surface,
                &gold,
                mentions,
            ),
        });
    }
    out
}

/// Buckets gold positive pairs into exact / aligned-but-not-exact / missing.
pub fn alignment_report(store: &CorpusStore, ner: &[NerMention]) -> AlignmentReport {
    report_from_audit(&audit_pairs(store, ner))
}

pub fn report_from_audit(audit: &[PairAudit]) -> AlignmentReport {
    let mut report = AlignmentReport {
        total_positive_pairs: audit.len(),
        ..Default::default()
    };
    for a in audit {
        match (a.gene, a.disease) {
            (AlignKind::None, _) | (_, AlignKind::None) => report.entity_missing += 1,
            (AlignKind::Exact, AlignKind::Exact) => report.both_exact += 1,
            _ => report.aligned_not_exact += 1,
        }
    }
    report
}

/// Reads tagger output: `doc_id  start  end  surface  etype  grounding_id`,
/// tab-separated. An empty or `-` grounding id means none.
pub fn read_ner_tsv(reader: impl Read, name: &str) -> Result<Vec<NerMention>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 || fields.len() > 6 {
            return Err(Error::parse(name, i + 1, format!("expected 6 tab-separated fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(name, i + 1, format!("bad {what} `{s}`: {e}")))
        };
        let etype = fields[4]
            .trim()
            .parse::<EntityType>()
            .map_err(|e| Error::parse(name, i + 1, e))?;
        let grounding_id = fields
            .get(5)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty() && *s != "-")
            .map(str::to_owned);
        out.push(NerMention(EntityMention {
            doc_id: fields[0].trim().to_owned(),
            start: num(fields[1], "start")?,
            end: num(fields[2], "end")?,
            surface: fields[3].to_owned(),
            etype,
            grounding_id,
        }));
    }
    Ok(out)
}

pub fn load_ner(path: &Path) -> Result<Vec<NerMention>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ner_tsv(f, &path.display().to_string())
}

/// Checks every tagged mention against the span invariants of its document.
pub fn validate_ner(store: &CorpusStore, ner: &[NerMention]) -> Result<()> {
    for m in ner {
        let doc = store
            .document(&m.doc_id)
            .ok_or_else(|| Error::Validation(format!("tagged mention references unknown doc_id {}", m.doc_id)))?;
        check_span_for(doc, m)?;
    }
    Ok(())
}
