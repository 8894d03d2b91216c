//! Abstracts, gold entity mentions and gold relation triples.
//!
//! Two line-delimited JSON files make up a corpus on disk:
//!
//! * the corpus file, one `{"doc_id", "text"[, "title"]}` object per line;
//! * the annotation file, one `{"doc_id", "mentions", "relations"}` object
//!   per line.
//!
//! When a title is given it is joined to the body with a single space and
//! mention offsets refer to that joined text. Offsets count Unicode scalar
//! values, not bytes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "GENE", alias = "Gene", alias = "gene")]
    Gene,
    #[serde(rename = "DISEASE", alias = "Disease", alias = "disease")]
    Disease,
}

impl std::str::FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gene" => Ok(EntityType::Gene),
            "disease" => Ok(EntityType::Disease),
            _ => Err(format!("unknown entity type `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "GOLD")]
    Gold,
    #[serde(rename = "GENERATED_NEGATIVE")]
    GeneratedNegative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractDoc {
    pub doc_id: String,
    /// Title and body joined by one space, or just the body.
    pub text: String,
    /// Length in chars of the title prefix of `text`, when a title was given.
    pub title_chars: Option<usize>,
}

impl AbstractDoc {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        AbstractDoc {
            doc_id: doc_id.into(),
            text: text.into(),
            title_chars: None,
        }
    }

    pub fn with_title(doc_id: impl Into<String>, title: &str, body: &str) -> Self {
        AbstractDoc {
            doc_id: doc_id.into(),
            text: format!("{title} {body}"),
            title_chars: Some(title.chars().count()),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Text fed to the encoder; drops the title prefix when `include_title` is false.
    pub fn encoder_text(&self, include_title: bool) -> &str {
        match (include_title, self.title_chars) {
            (false, Some(n)) => {
                let body_start = byte_offset(&self.text, n + 1).unwrap_or(self.text.len());
                &self.text[body_start..]
            }
            _ => &self.text,
        }
    }

    fn split_title(&self) -> (Option<&str>, &str) {
        match self.title_chars {
            Some(n) => {
                let t_end = byte_offset(&self.text, n).unwrap_or(self.text.len());
                let b_start = byte_offset(&self.text, n + 1).unwrap_or(self.text.len());
                (Some(&self.text[..t_end]), &self.text[b_start..])
            }
            None => (None, &self.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub etype: EntityType,
    pub grounding_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub doc_id: String,
    pub gene_grounding_id: String,
    pub gene_surface: String,
    pub disease_grounding_id: String,
    pub disease_surface: String,
    pub label: Label,
    pub provenance: Provenance,
}

impl RelationInstance {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.doc_id, &self.gene_grounding_id, &self.disease_grounding_id)
    }
}

/// Immutable, validated corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStore {
    pub documents: BTreeMap<String, AbstractDoc>,
    pub gold_mentions: Vec<EntityMention>,
    pub gold_relations: Vec<RelationInstance>,
}

impl CorpusStore {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, doc_id: &str) -> Option<&AbstractDoc> {
        self.documents.get(doc_id)
    }

    pub fn mentions_for<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a EntityMention> + 'a {
        self.gold_mentions.iter().filter(move |m| m.doc_id == doc_id)
    }

    pub fn relations_for<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a RelationInstance> + 'a {
        self.gold_relations.iter().filter(move |r| r.doc_id == doc_id)
    }

    /// Every gold positive triple in the store.
    pub fn positive_relations(&self) -> impl Iterator<Item = &RelationInstance> {
        self.gold_relations.iter().filter(|r| r.label.is_positive())
    }

    /// Builds a store from in-memory parts, validating every invariant.
    pub fn from_parts(
        documents: Vec<AbstractDoc>,
        mut mentions: Vec<EntityMention>,
        mut relations: Vec<RelationInstance>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for doc in documents {
            if doc.doc_id.is_empty() {
                return Err(Error::Validation("empty doc_id".into()));
            }
            if doc.text.is_empty() {
                return Err(Error::Validation(format!("document {} has empty text", doc.doc_id)));
            }
            let id = doc.doc_id.clone();
            if map.insert(id.clone(), doc).is_some() {
                return Err(Error::Validation(format!("duplicate doc_id {id}")));
            }
        }
        for m in &mentions {
            let doc = map
                .get(&m.doc_id)
                .ok_or_else(|| Error::Validation(format!("mention references unknown doc_id {}", m.doc_id)))?;
            check_span_for(doc, m)?;
        }
        for r in &relations {
            if !map.contains_key(&r.doc_id) {
                return Err(Error::Validation(format!("relation references unknown doc_id {}", r.doc_id)));
            }
            if r.provenance != Provenance::Gold || !r.label.is_positive() {
                return Err(Error::Validation(format!(
                    "gold relation ({}, {}, {}) must be a positive GOLD triple",
                    r.doc_id, r.gene_grounding_id, r.disease_grounding_id
                )));
            }
        }
        // Stable grouping by document keeps written files canonical.
        mentions.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        relations.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(CorpusStore {
            documents: map,
            gold_mentions: mentions,
            gold_relations: relations,
        })
    }
}

/// Checks `0 <= start < end <= len(text)` and that `surface` is the spanned text.
pub fn check_span_for(doc: &AbstractDoc, m: &EntityMention) -> Result<()> {
    let len = doc.char_len();
    if m.start >= m.end || m.end > len {
        return Err(Error::Validation(format!(
            "mention [{}, {}) out of range for document {} of length {len}",
            m.start, m.end, m.doc_id
        )));
    }
    let slice = char_slice(&doc.text, m.start, m.end).unwrap_or_default();
    if slice != m.surface {
        return Err(Error::Validation(format!(
            "mention surface `{}` does not match text `{slice}` at [{}, {}) in {}",
            m.surface, m.start, m.end, m.doc_id
        )));
    }
    Ok(())
}

/// Byte offset of the `n`-th char, or `None` past the end.
fn byte_offset(text: &str, n: usize) -> Option<usize> {
    if n == 0 {
        return Some(0);
    }
    let mut it = text.char_indices();
    match it.nth(n) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == n => Some(text.len()),
        None => None,
    }
}

/// Substring by char offsets `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    let s = byte_offset(text, start)?;
    let e = byte_offset(text, end)?;
    (s <= e).then(|| &text[s..e])
}

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MentionRecord {
    start: usize,
    end: usize,
    surface: String,
    etype: EntityType,
    #[serde(default)]
    grounding_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationRecord {
    gene_id: String,
    gene_surface: String,
    disease_id: String,
    disease_surface: String,
    label: Label,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    doc_id: String,
    #[serde(default)]
    mentions: Vec<MentionRecord>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
}

/// Reads the corpus file and, optionally, its annotation file.
pub fn load_corpus(corpus: &Path, annotations: Option<&Path>) -> Result<CorpusStore> {
    let f = File::open(corpus).map_err(|e| Error::io(corpus, e))?;
    let docs = read_documents(BufReader::new(f), &corpus.display().to_string())?;
    let (mentions, relations) = match annotations {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            read_annotations(BufReader::new(f), &p.display().to_string())?
        }
        None => (Vec::new(), Vec::new()),
    };
    CorpusStore::from_parts(docs, mentions, relations)
}

/// Parses documents from any reader; `name` labels parse errors.
pub fn read_documents(reader: impl Read, name: &str) -> Result<Vec<AbstractDoc>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(&line).map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        out.push(match rec.title {
            Some(t) => AbstractDoc::with_title(rec.doc_id, &t, &rec.text),
            None => AbstractDoc::new(rec.doc_id, rec.text),
        });
    }
    Ok(out)
}

pub fn read_annotations(reader: impl Read, name: &str) -> Result<(Vec<EntityMention>, Vec<RelationInstance>)> {
    let mut mentions = Vec::new();
    let mut relations = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(name, i + 1, e.to_string()))?;
        for m in rec.mentions {
            mentions.push(EntityMention {
                doc_id: rec.doc_id.clone(),
                start: m.start,
                end: m.end,
                surface: m.surface,
                etype: m.etype,
                grounding_id: m.grounding_id.filter(|g| !g.is_empty()),
            });
        }
        for r in rec.relations {
            if !r.label.is_positive() {
                return Err(Error::parse(name, i + 1, "gold relation label must be one of LOF|GOF|REG|COM"));
            }
            relations.push(RelationInstance {
                doc_id: rec.doc_id.clone(),
                gene_grounding_id: r.gene_id,
                gene_surface: r.gene_surface,
                disease_grounding_id: r.disease_id,
                disease_surface: r.disease_surface,
                label: r.label,
                provenance: Provenance::Gold,
            });
        }
    }
    Ok((mentions, relations))
}

/// Writes the canonical corpus and annotation files.
pub fn write_corpus(store: &CorpusStore, corpus: &Path, annotations: &Path) -> Result<()> {
    let f = File::create(corpus).map_err(|e| Error::io(corpus, e))?;
    let mut w = BufWriter::new(f);
    write_documents(store, &mut w).map_err(|e| Error::io(corpus, e))?;
    let f = File::create(annotations).map_err(|e| Error::io(annotations, e))?;
    let mut w = BufWriter::new(f);
    write_annotations(store, &mut w).map_err(|e| Error::io(annotations, e))?;
    Ok(())
}

pub fn write_documents(store: &CorpusStore, w: &mut impl Write) -> std::io::Result<()> {
    for doc in store.documents.values() {
        let (title, body) = doc.split_title();
        let rec = DocRecord {
            doc_id: doc.doc_id.clone(),
            title: title.map(str::to_owned),
            text: body.to_owned(),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_annotations(store: &CorpusStore, w: &mut impl Write) -> std::io::Result<()> {
    let mut by_doc: BTreeMap<&str, AnnotationRecord> = BTreeMap::new();
    let blank = |id: &str| AnnotationRecord {
        doc_id: id.to_owned(),
        mentions: Vec::new(),
        relations: Vec::new(),
    };
    for m in &store.gold_mentions {
        by_doc
            .entry(&m.doc_id)
            .or_insert_with(|| blank(&m.doc_id))
            .mentions
            .push(MentionRecord {
                start: m.start,
                end: m.end,
                surface: m.surface.clone(),
                etype: m.etype,
                grounding_id: m.grounding_id.clone(),
            });
    }
    for r in &store.gold_relations {
        by_doc
            .entry(&r.doc_id)
            .or_insert_with(|| blank(&r.doc_id))
            .relations
            .push(RelationRecord {
                gene_id: r.gene_grounding_id.clone(),
                gene_surface: r.gene_surface.clone(),
                disease_id: r.disease_grounding_id.clone(),
                disease_surface: r.disease_surface.clone(),
                label: r.label,
            });
    }
    for rec in by_doc.values() {
        serde_json::to_writer(&mut *w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownDocument(String),
    /// A generated negative must carry `NO_REL`.
    NegativeWithPositiveLabel(Label),
    /// A gold triple must carry a positive label.
    GoldWithNoRel,
    /// Another record in the store already uses this (doc, gene, disease) key.
    DuplicateKey,
    EmptyGroundingId,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownDocument(id) => write!(f, "unknown doc_id {id}"),
            Violation::NegativeWithPositiveLabel(l) => write!(f, "GENERATED_NEGATIVE instance labelled {l}"),
            Violation::GoldWithNoRel => f.write_str("GOLD instance labelled NO_REL"),
            Violation::DuplicateKey => f.write_str("duplicate (doc_id, gene, disease) key"),
            Violation::EmptyGroundingId => f.write_str("empty grounding id"),
        }
    }
}

/// Lists every invariant `inst` violates against `store`; empty means valid.
pub fn validate_instance(inst: &RelationInstance, store: &CorpusStore) -> Vec<Violation> {
    let mut out = intrinsic_violations(inst, store);
    let same_key: Vec<_> = store.gold_relations.iter().filter(|r| r.key() == inst.key()).collect();
    if same_key.len() > 1 || same_key.iter().any(|r| *r != inst) {
        out.push(Violation::DuplicateKey);
    }
    out
}

/// Validates a whole dataset, including key uniqueness within it.
/// Returns `(index, violation)` pairs.
pub fn validate_instances(instances: &[RelationInstance], store: &CorpusStore) -> Vec<(usize, Violation)> {
    let mut seen: HashMap<(&str, &str, &str), usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        out.extend(intrinsic_violations(inst, store).into_iter().map(|v| (i, v)));
        if seen.insert(inst.key(), i).is_some() {
            out.push((i, Violation::DuplicateKey));
        }
    }
    out
}

fn intrinsic_violations(inst: &RelationInstance, store: &CorpusStore) -> Vec<Violation> {
    let mut out = Vec::new();
    if !store.documents.contains_key(&inst.doc_id) {
        out.push(Violation::UnknownDocument(inst.doc_id.clone()));
    }
    match inst.provenance {
        Provenance::GeneratedNegative if inst.label.is_positive() => {
            out.push(Violation::NegativeWithPositiveLabel(inst.label))
        }
        Provenance::Gold if !inst.label.is_positive() => out.push(Violation::GoldWithNoRel),
        _ => {}
    }
    if inst.gene_grounding_id.is_empty() || inst.disease_grounding_id.is_empty() {
        out.push(Violation::EmptyGroundingId);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHP2: &str = "Mutations in SHP-2 phosphatase that cause hyperactivation of its catalytic activity have been identified in human leukemias, particularly juvenile myelomonocytic leukemia.";

    fn shp2_store() -> CorpusStore {
        let doc = AbstractDoc::new("100", SHP2);
        let start = SHP2.find("juvenile").unwrap();
        let surface = "juvenile myelomonocytic leukemia";
        let mentions = vec![
            EntityMention {
                doc_id: "100".into(),
                start: 13,
                end: 18,
                surface: "SHP-2".into(),
                etype: EntityType::Gene,
                grounding_id: Some("5781".into()),
            },
            EntityMention {
                doc_id: "100".into(),
                start,
                end: start + surface.len(),
                surface: surface.into(),
                etype: EntityType::Disease,
                grounding_id: Some("MESH:D054429".into()),
            },
        ];
        let rel = RelationInstance {
            doc_id: "100".into(),
            gene_grounding_id: "5781".into(),
            gene_surface: "SHP-2".into(),
            disease_grounding_id: "MESH:D054429".into(),
            disease_surface: surface.into(),
            label: Label::Gof,
            provenance: Provenance::Gold,
        };
        CorpusStore::from_parts(vec![doc], mentions, vec![rel]).unwrap()
    }

    #[test]
    fn empty_files_give_empty_store() {
        let docs = read_documents("".as_bytes(), "c").unwrap();
        let (m, r) = read_annotations("\n".as_bytes(), "a").unwrap();
        let store = CorpusStore::from_parts(docs, m, r).unwrap();
        assert_eq!(store.len(), 0);
        assert!(store.gold_relations.is_empty());
    }

    #[test]
    fn malformed_record_names_line() {
        let input = "{\"doc_id\":\"1\",\"text\":\"a\"}\n{not json}\n";
        match read_documents(input.as_bytes(), "corpus.jsonl") {
            Err(Error::Parse { line, file, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(file, "corpus.jsonl");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let docs = vec![AbstractDoc::new("1", "a"), AbstractDoc::new("1", "b")];
        assert!(matches!(
            CorpusStore::from_parts(docs, vec![], vec![]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn mention_past_end_rejected() {
        let docs = vec![AbstractDoc::new("1", "short")];
        let m = EntityMention {
            doc_id: "1".into(),
            start: 2,
            end: 9,
            surface: "ort".into(),
            etype: EntityType::Gene,
            grounding_id: None,
        };
        assert!(matches!(CorpusStore::from_parts(docs, vec![m], vec![]), Err(Error::Validation(_))));
    }

    #[test]
    fn surface_must_match_text() {
        let docs = vec![AbstractDoc::new("1", "MLH1 gene")];
        let m = EntityMention {
            doc_id: "1".into(),
            start: 0,
            end: 4,
            surface: "MSH2".into(),
            etype: EntityType::Gene,
            grounding_id: None,
        };
        assert!(CorpusStore::from_parts(docs, vec![m], vec![]).is_err());
    }

    #[test]
    fn offsets_count_chars_not_bytes() {
        let doc = AbstractDoc::new("1", "α-synuclein in Parkinson disease");
        assert_eq!(char_slice(&doc.text, 0, 11), Some("α-synuclein"));
        let m = EntityMention {
            doc_id: "1".into(),
            start: 15,
            end: 32,
            surface: "Parkinson disease".into(),
            etype: EntityType::Disease,
            grounding_id: Some("MESH:D010300".into()),
        };
        assert!(CorpusStore::from_parts(vec![doc], vec![m], vec![]).is_ok());
    }

    #[test]
    fn no_rel_gold_annotation_rejected() {
        let line = r#"{"doc_id":"1","relations":[{"gene_id":"g","gene_surface":"G","disease_id":"d","disease_surface":"D","label":"NO_REL"}]}"#;
        assert!(matches!(read_annotations(line.as_bytes(), "a"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn title_is_joined_and_can_be_dropped() {
        let line = r#"{"doc_id":"7","title":"Lynch syndrome.","text":"MLH1 mutations."}"#;
        let docs = read_documents(line.as_bytes(), "c").unwrap();
        assert_eq!(docs[0].text, "Lynch syndrome. MLH1 mutations.");
        assert_eq!(docs[0].encoder_text(true), "Lynch syndrome. MLH1 mutations.");
        assert_eq!(docs[0].encoder_text(false), "MLH1 mutations.");
    }

    #[test]
    fn validate_gold_instance_present_doc() {
        let store = shp2_store();
        assert!(validate_instance(&store.gold_relations[0], &store).is_empty());
    }

    #[test]
    fn validate_negative_with_positive_label() {
        let store = shp2_store();
        let inst = RelationInstance {
            gene_grounding_id: "other".into(),
            provenance: Provenance::GeneratedNegative,
            ..store.gold_relations[0].clone()
        };
        let v = validate_instance(&inst, &store);
        assert_eq!(v, vec![Violation::NegativeWithPositiveLabel(Label::Gof)]);
    }

    #[test]
    fn validate_duplicate_key() {
        let store = shp2_store();
        let dup = RelationInstance {
            label: Label::Lof,
            ..store.gold_relations[0].clone()
        };
        assert!(validate_instance(&dup, &store).contains(&Violation::DuplicateKey));

        let list = vec![store.gold_relations[0].clone(), store.gold_relations[0].clone()];
        assert_eq!(validate_instances(&list, &store), vec![(1, Violation::DuplicateKey)]);
    }

    #[test]
    fn unknown_document_reported() {
        let store = shp2_store();
        let inst = RelationInstance {
            doc_id: "999".into(),
            ..store.gold_relations[0].clone()
        };
        assert!(validate_instance(&inst, &store).contains(&Violation::UnknownDocument("999".into())));
    }

    #[test]
    fn write_then_read_is_identity() {
        let store = shp2_store();
        let mut c = Vec::new();
        let mut a = Vec::new();
        write_documents(&store, &mut c).unwrap();
        write_annotations(&store, &mut a).unwrap();
        let docs = read_documents(c.as_slice(), "c").unwrap();
        let (m, r) = read_annotations(a.as_slice(), "a").unwrap();
        assert_eq!(CorpusStore::from_parts(docs, m, r).unwrap(), store);
    }
}
