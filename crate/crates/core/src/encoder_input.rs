//! WordPiece tokenization and pair-context sequence construction.
//!
//! A candidate pair is encoded as
//!
//! ```text
//! [CLS] gene-subwords disease-subwords [SEP] abstract-subwords [SEP]
//! ```
//!
//! Only the abstract is truncated (from the tail) when the sequence would
//! exceed the length cap.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const PAD: &str = "[PAD]";
pub const CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_MAX_LEN: usize = 350;
const MAX_CHARS_PER_WORD: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub cls_id: u32,
    pub sep_id: u32,
    pub unk_id: u32,
    pub pad_id: u32,
}

impl Vocab {
    /// Builds a vocabulary where index = position. All four special tokens
    /// must be present.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Vocab(format!("empty token at index {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{t}`")));
            }
        }
        let special = |s: &str| index.get(s).copied().ok_or_else(|| Error::Vocab(format!("missing {s}")));
        Ok(Vocab {
            cls_id: special(CLS)?,
            sep_id: special(SEP)?,
            unk_id: special(UNK)?,
            pad_id: special(PAD)?,
            tokens,
            index,
        })
    }

    /// Special tokens at indices 0..4 (`[PAD] [UNK] [CLS] [SEP]`), then `words`.
    pub fn with_specials<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(Into::into));
        Self::from_tokens(tokens)
    }

    /// One token per line; line number is the index.
    pub fn read(reader: impl Read) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in BufReader::new(reader).lines() {
            let line = line.map_err(|e| Error::io("<vocab>", e))?;
            tokens.push(line.trim_end_matches('\r').to_owned());
        }
        while tokens.last().is_some_and(|t| t.is_empty()) {
            tokens.pop();
        }
        Self::from_tokens(tokens)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(f)
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerOptions {
    pub lowercase: bool,
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace() && !c.is_control())
}

/// Whitespace split, then every punctuation char becomes its own word.
pub fn pre_tokenize(text: &str, opts: TokenizerOptions) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = if opts.lowercase { chunk.to_lowercase() } else { chunk.to_owned() };
        let mut cur = String::new();
        for c in chunk.chars().filter(|c| !c.is_control()) {
            if is_punctuation(c) {
                if !cur.is_empty() {
                    words.push(std::mem::take(&mut cur));
                }
                words.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

/// Greedy longest-match-first segmentation of one pre-split word.
fn segment_word<'v>(word: &str, vocab: &'v Vocab, out: &mut Vec<&'v str>) {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_CHARS_PER_WORD {
        out.push(UNK);
        return;
    }
    let mark = out.len();
    let mut start = 0;
    let mut piece = String::new();
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            piece.clear();
            if start > 0 {
                piece.push_str(CONTINUATION_PREFIX);
            }
            piece.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&piece) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                out.push(vocab.token(id).unwrap());
                start = end;
            }
            None => {
                out.truncate(mark);
                out.push(UNK);
                return;
            }
        }
    }
}

/// Subword tokens of `text`.
pub fn wordpiece_tokenize<'v>(text: &str, vocab: &'v Vocab, opts: TokenizerOptions) -> Vec<&'v str> {
    let mut out = Vec::new();
    for w in pre_tokenize(text, opts) {
        segment_word(&w, vocab, &mut out);
    }
    out
}

pub fn wordpiece_ids(text: &str, vocab: &Vocab, opts: TokenizerOptions) -> Vec<u32> {
    wordpiece_tokenize(text, vocab, opts)
        .into_iter()
        .map(|t| vocab.id(t).unwrap_or(vocab.unk_id))
        .collect()
}

/// Token and segment ids of one pair-context sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    /// Abstract subwords dropped by truncation.
    pub truncated: usize,
}

/// Lays out `[CLS] gene disease [SEP] abstract [SEP]` within `max_len` tokens.
pub fn build_sequence(
    gene_surface: &str,
    disease_surface: &str,
    abstract_text: &str,
    vocab: &Vocab,
    max_len: usize,
    opts: TokenizerOptions,
) -> Result<Sequence> {
    if gene_surface.trim().is_empty() || disease_surface.trim().is_empty() {
        return Err(Error::Validation("gene and disease surfaces must be non-empty".into()));
    }
    let pair = wordpiece_ids(&format!("{gene_surface} {disease_surface}"), vocab, opts);
    let needed = pair.len() + 3;
    if needed > max_len {
        return Err(Error::PairTooLong { needed, max_len });
    }
    let body = wordpiece_ids(abstract_text, vocab, opts);
    let keep = body.len().min(max_len - needed);

    let mut token_ids = Vec::with_capacity(needed + keep);
    token_ids.push(vocab.cls_id);
    token_ids.extend_from_slice(&pair);
    token_ids.push(vocab.sep_id);
    let first_segment = token_ids.len();
    token_ids.extend_from_slice(&body[..keep]);
    token_ids.push(vocab.sep_id);

    let mut segment_ids = vec![0u8; token_ids.len()];
    segment_ids[first_segment..].fill(1);
    Ok(Sequence {
        token_ids,
        segment_ids,
        truncated: body.len() - keep,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub label: Label,
    pub doc_id: String,
    /// `(gene_id, disease_id)`.
    pub pair: (String, String),
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Lists violated layout invariants; empty means well formed.
    pub fn check(&self, vocab: &Vocab, max_len: usize) -> Vec<String> {
        let mut errs = Vec::new();
        let ids = &self.token_ids;
        if ids.len() > max_len {
            errs.push(format!("length {} > {max_len}", ids.len()));
        }
        if ids.first() != Some(&vocab.cls_id) {
            errs.push("does not start with [CLS]".into());
        }
        let seps: Vec<usize> = ids.iter().enumerate().filter(|(_, &t)| t == vocab.sep_id).map(|(i, _)| i).collect();
        if seps.len() != 2 {
            errs.push(format!("{} [SEP] tokens", seps.len()));
        }
        let last_real = ids.iter().rposition(|&t| t != vocab.pad_id);
        if last_real.map(|i| ids[i]) != Some(vocab.sep_id) {
            errs.push("final non-PAD token is not [SEP]".into());
        }
        if self.segment_ids.len() != ids.len() {
            errs.push("segment_ids length differs from token_ids".into());
        } else if let Some(&first_sep) = seps.first() {
            let ok = self
                .segment_ids
                .iter()
                .enumerate()
                .all(|(i, &s)| s == u8::from(i > first_sep));
            if !ok {
                errs.push("segment ids are not 0 through the first [SEP] and 1 after".into());
            }
        }
        errs
    }
}

/// Encodes pairs with a fixed vocabulary and options.
#[derive(Debug, Clone)]
pub struct PairEncoder {
    pub vocab: Vocab,
    pub max_len: usize,
    pub options: TokenizerOptions,
}

impl PairEncoder {
    pub fn new(vocab: Vocab) -> Self {
        PairEncoder {
            vocab,
            max_len: DEFAULT_MAX_LEN,
            options: TokenizerOptions::default(),
        }
    }

    pub fn encode(&self, inst: &crate::corpus::RelationInstance, abstract_text: &str) -> Result<EncodedExample> {
        let seq = build_sequence(
            &inst.gene_surface,
            &inst.disease_surface,
            abstract_text,
            &self.vocab,
            self.max_len,
            self.options,
        )?;
        Ok(EncodedExample {
            token_ids: seq.token_ids,
            segment_ids: seq.segment_ids,
            label: inst.label,
            doc_id: inst.doc_id.clone(),
            pair: (inst.gene_grounding_id.clone(), inst.disease_grounding_id.clone()),
        })
    }
}

/// Examples padded to a common length with an attention mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub token_ids: Vec<Vec<u32>>,
    pub segment_ids: Vec<Vec<u8>>,
    /// `true` for real tokens, `false` for padding.
    pub mask: Vec<Vec<bool>>,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.token_ids.first().map_or(0, Vec::len)
    }
}

/// Pads to the longest example in the batch, or to `pad_to` if longer.
pub fn pad_batch<'a, I>(examples: I, pad_id: u32, pad_to: Option<usize>) -> Batch
where
    I: IntoIterator<Item = &'a EncodedExample>,
{
    let examples: Vec<&EncodedExample> = examples.into_iter().collect();
    let width = examples
        .iter()
        .map(|e| e.len())
        .max()
        .unwrap_or(0)
        .max(pad_to.unwrap_or(0));
    let mut batch = Batch {
        token_ids: Vec::with_capacity(examples.len()),
        segment_ids: Vec::with_capacity(examples.len()),
        mask: Vec::with_capacity(examples.len()),
        labels: Vec::with_capacity(examples.len()),
    };
    for e in examples {
        let n = e.len();
        let mut ids = e.token_ids.clone();
        ids.resize(width, pad_id);
        let mut seg = e.segment_ids.clone();
        seg.resize(width, 0);
        let mut mask = vec![true; n];
        mask.resize(width, false);
        batch.token_ids.push(ids);
        batch.segment_ids.push(seg);
        batch.mask.push(mask);
        batch.labels.push(e.label);
    }
    batch
}

pub fn write_encoded(examples: &[EncodedExample], w: &mut impl Write) -> std::io::Result<()> {
    for e in examples {
        serde_json::to_writer(&mut *w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_encoded(reader: impl Read, name: &str) -> Result<Vec<EncodedExample>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(name, i + 1, e.to_string()))?);
    }
    Ok(out)
}
