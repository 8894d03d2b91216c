use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use pairctx::corpus::{load_corpus, write_corpus, CorpusStore, RelationInstance};
use pairctx::encoder_input::{read_encoded, write_encoded, EncodedExample, PairEncoder, TokenizerOptions, Vocab};
use pairctx::label::Label;
use pairctx::metrics::{metrics_report, random_baseline, MetricsReport};
use pairctx::ner_align::{audit_pairs, build_dataset, load_ner, report_from_audit, validate_ner};
use pairctx::net::{load_checkpoint, save_checkpoint};
use pairctx::splitter::{format_manifest, label_distribution, read_manifest, split_corpus, DocLabels, Split};
use pairctx::trainer::{predict_all, run_restarts, StoppingCriterion, TrainData};
use pairctx::Scalar;
use serde::Serialize;

use crate::config::{Precision, RunConfig};

pub const CORPUS: &str = "corpus.jsonl";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const INSTANCES: &str = "instances.jsonl";
pub const UNRECOVERABLE: &str = "unrecoverable.jsonl";
pub const ALIGNMENT: &str = "alignment_report.json";
pub const AUDIT: &str = "alignment_audit.jsonl";
pub const SPLIT: &str = "split.tsv";
pub const VOCAB: &str = "vocab.txt";
pub const TRAIN_SET: &str = "train.encoded.jsonl";
pub const DEV_SET: &str = "dev.encoded.jsonl";
pub const BASELINE: &str = "baseline";

pub fn model_file(c: StoppingCriterion) -> String {
    format!("model_{c}.ckpt")
}

/// Path of an artifact some earlier stage should have produced.
fn upstream(cfg: &RunConfig, file: &str, stage: &str) -> Result<PathBuf> {
    let p = cfg.paths.output_dir.join(file);
    if !p.is_file() {
        bail!("missing {}: run the `{stage}` stage first", p.display());
    }
    Ok(p)
}

fn output(cfg: &RunConfig, file: &str) -> Result<PathBuf> {
    let dir = &cfg.paths.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn canonical_store(cfg: &RunConfig) -> Result<CorpusStore> {
    let corpus = upstream(cfg, CORPUS, "ingest")?;
    let ann = upstream(cfg, ANNOTATIONS, "ingest")?;
    Ok(load_corpus(&corpus, Some(&ann))?)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let Some(corpus) = cfg.paths.corpus.as_deref() else {
        bail!("no corpus file given (use --corpus or paths.corpus)");
    };
    let store = load_corpus(corpus, cfg.paths.annotations.as_deref())?;
    write_corpus(&store, &output(cfg, CORPUS)?, &output(cfg, ANNOTATIONS)?)?;
    println!("{} documents", store.len());
    info!(
        "{} gold mentions, {} gold relations",
        store.gold_mentions.len(),
        store.gold_relations.len()
    );
    Ok(())
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let store = canonical_store(cfg)?;
    let Some(ner_path) = cfg.paths.ner.as_deref() else {
        bail!("no tagger output given (use --ner or paths.ner)");
    };
    let ner = load_ner(ner_path)?;
    validate_ner(&store, &ner)?;
    let data = build_dataset(&store, &ner)?;
    let audit = audit_pairs(&store, &ner);
    let report = report_from_audit(&audit);
    write_jsonl(&output(cfg, INSTANCES)?, &data.instances)?;
    write_jsonl(&output(cfg, UNRECOVERABLE)?, &data.unrecoverable)?;
    write_jsonl(&output(cfg, AUDIT)?, &audit)?;
    write_json(&output(cfg, ALIGNMENT)?, &report)?;
    let positives = data.instances.iter().filter(|r| r.label.is_positive()).count();
    println!(
        "{} instances ({} gold, {} generated negatives), {} unrecoverable gold triples",
        data.instances.len(),
        positives,
        data.instances.len() - positives,
        data.unrecoverable.len()
    );
    println!(
        "alignment: {} positive pairs = {} exact + {} aligned not exact + {} entity missing",
        report.total_positive_pairs, report.both_exact, report.aligned_not_exact, report.entity_missing
    );
    Ok(())
}

fn instances(cfg: &RunConfig) -> Result<Vec<RelationInstance>> {
    read_jsonl(&upstream(cfg, INSTANCES, "prepare")?)
}

fn load_split(cfg: &RunConfig) -> Result<Split> {
    let path = upstream(cfg, SPLIT, "split")?;
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_manifest(f, &path.display().to_string())?)
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let store = canonical_store(cfg)?;
    let rows = instances(cfg)?;
    let docs: Vec<DocLabels> = store
        .documents
        .keys()
        .map(|id| DocLabels {
            doc_id: id.clone(),
            labels: rows.iter().filter(|r| &r.doc_id == id).map(|r| r.label).collect(),
        })
        .collect();
    let split = split_corpus(&docs, &cfg.split)?;
    write_text(&output(cfg, SPLIT)?, &format_manifest(&split))?;
    println!(
        "{} train / {} dev documents, seed {}, D(train||dev) = {:.6} bits",
        split.train_doc_ids.len(),
        split.dev_doc_ids.len(),
        split.seed_used,
        split.kl_bits
    );
    Ok(())
}

pub fn encode(cfg: &RunConfig) -> Result<()> {
    let store = canonical_store(cfg)?;
    let rows = instances(cfg)?;
    let split = load_split(cfg)?;
    let Some(vocab_path) = cfg.paths.vocab.as_deref() else {
        bail!("no vocabulary given (use --vocab or paths.vocab)");
    };
    let vocab = Vocab::load(vocab_path)?;
    let mut copy = create(&output(cfg, VOCAB)?)?;
    vocab.write(&mut copy)?;
    copy.flush()?;
    let encoder = PairEncoder {
        vocab,
        max_len: cfg.encode.max_len,
        options: TokenizerOptions {
            lowercase: cfg.encode.lowercase,
        },
    };
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    let mut truncated = 0;
    for r in &rows {
        let Some(doc) = store.document(&r.doc_id) else {
            bail!("instance references unknown document {}", r.doc_id);
        };
        let text = doc.encoder_text(cfg.encode.include_title);
        let ex = encoder
            .encode(r, text)
            .with_context(|| format!("encoding {} ({}, {})", r.doc_id, r.gene_grounding_id, r.disease_grounding_id))?;
        truncated += usize::from(ex.token_ids.len() == encoder.max_len);
        if split.is_train(&r.doc_id) {
            train.push(ex);
        } else if split.is_dev(&r.doc_id) {
            dev.push(ex);
        } else {
            bail!("document {} is in neither side of the split", r.doc_id);
        }
    }
    for (file, set) in [(TRAIN_SET, &train), (DEV_SET, &dev)] {
        let mut w = create(&output(cfg, file)?)?;
        write_encoded(set, &mut w)?;
        w.flush()?;
    }
    println!(
        "{} train / {} dev examples, {} at the length cap",
        train.len(),
        dev.len(),
        truncated
    );
    Ok(())
}

fn encoded(cfg: &RunConfig, file: &str) -> Result<Vec<EncodedExample>> {
    let path = upstream(cfg, file, "encode")?;
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_encoded(f, &path.display().to_string())?)
}

fn encoded_vocab(cfg: &RunConfig) -> Result<Vocab> {
    Ok(Vocab::load(&upstream(cfg, VOCAB, "encode")?)?)
}

pub fn train(cfg: &RunConfig, criteria: &[StoppingCriterion]) -> Result<()> {
    let train = encoded(cfg, TRAIN_SET)?;
    let dev = encoded(cfg, DEV_SET)?;
    let vocab = encoded_vocab(cfg)?;
    let mut model = cfg.model;
    model.vocab_size = vocab.len();
    model.max_positions = model.max_positions.max(cfg.encode.max_len);
    for &criterion in criteria {
        let mut tc = cfg.train;
        tc.stopping_criterion = criterion;
        match cfg.precision {
            Precision::F32 => train_with::<f32>(cfg, &tc, &model, &train, &dev, vocab.pad_id)?,
            Precision::F64 => train_with::<f64>(cfg, &tc, &model, &train, &dev, vocab.pad_id)?,
        }
    }
    Ok(())
}

fn train_with<T: Scalar>(
    cfg: &RunConfig,
    tc: &pairctx::trainer::TrainConfig,
    model: &pairctx::net::ModelConfig,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    pad_id: u32,
) -> Result<()> {
    let c = tc.stopping_criterion;
    info!(
        "training {} restarts under {c} ({} train / {} dev examples)",
        tc.num_restarts,
        train.len(),
        dev.len()
    );
    let data = TrainData { train, dev, pad_id };
    let out = run_restarts::<T>(tc, model, data)?;
    let history = &out.best.history;
    save_checkpoint(&out.best.params, &output(cfg, &model_file(c))?)?;
    write_text(&output(cfg, &format!("train_{c}.log"))?, &history.to_log(out.restart_index))?;
    write_json(&output(cfg, &format!("history_{c}.json"))?, history)?;
    let diverged = out.scores.iter().filter(|s| s.is_none()).count();
    println!(
        "{c}: restart {} best, score {:.4} at epoch {} (stopped at {}), {} of {} restarts diverged",
        out.restart_index,
        history.best_score(),
        history.best_epoch,
        history.stop_epoch,
        diverged,
        out.scores.len()
    );
    Ok(())
}

fn write_report(cfg: &RunConfig, stem: &str, report: &MetricsReport) -> Result<()> {
    let table = report.to_table();
    write_text(&output(cfg, &format!("{stem}.tsv"))?, &table)?;
    write_json(&output(cfg, &format!("{stem}.json"))?, report)?;
    print!("{table}");
    Ok(())
}

/// Reads `gold<TAB>pred` label pairs; blank lines and `#` comments are skipped.
pub fn read_predictions(path: &Path) -> Result<(Vec<Label>, Vec<Label>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (mut golds, mut preds) = (Vec::new(), Vec::new());
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), i + 1);
        let Some((g, p)) = line.split_once('\t') else {
            bail!("{}: expected `gold<TAB>pred`", ctx());
        };
        golds.push(g.trim().parse::<Label>().map_err(anyhow::Error::msg).with_context(ctx)?);
        preds.push(p.trim().parse::<Label>().map_err(anyhow::Error::msg).with_context(ctx)?);
    }
    Ok((golds, preds))
}

pub fn evaluate(cfg: &RunConfig, criteria: &[StoppingCriterion], predictions: Option<&Path>) -> Result<()> {
    if let Some(path) = predictions {
        let (golds, preds) = read_predictions(path)?;
        let report = metrics_report(&preds, &golds)?;
        return write_report(cfg, "report_predictions", &report);
    }
    let dev = encoded(cfg, DEV_SET)?;
    let vocab = encoded_vocab(cfg)?;
    for &c in criteria {
        let ckpt = upstream(cfg, &model_file(c), "train")?;
        let preds = match cfg.precision {
            Precision::F32 => {
                let p = load_checkpoint::<f32>(&ckpt)?;
                predict_all(&p, &dev, cfg.report.eval_batch_size, vocab.pad_id)?
            }
            Precision::F64 => {
                let p = load_checkpoint::<f64>(&ckpt)?;
                predict_all(&p, &dev, cfg.report.eval_batch_size, vocab.pad_id)?
            }
        };
        let golds: Vec<Label> = dev.iter().map(|e| e.label).collect();
        let mut w = create(&output(cfg, &format!("predictions_{c}.tsv"))?)?;
        writeln!(w, "doc_id\tgene_id\tdisease_id\tgold\tpred")?;
        for (e, p) in dev.iter().zip(&preds) {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", e.doc_id, e.pair.0, e.pair.1, e.label, p)?;
        }
        w.flush()?;
        println!("model selected by {c}");
        write_report(cfg, &format!("report_{c}"), &metrics_report(&preds, &golds)?)?;
    }
    Ok(())
}

pub fn baseline(cfg: &RunConfig) -> Result<()> {
    let rows = instances(cfg)?;
    let split = load_split(cfg)?;
    let train = rows.iter().filter(|r| split.is_train(&r.doc_id)).map(|r| r.label);
    let dist = label_distribution(train).context("train split has no instances")?;
    let golds: Vec<Label> = rows
        .iter()
        .filter(|r| split.is_dev(&r.doc_id))
        .map(|r| r.label)
        .collect();
    let runs = cfg.report.baseline_runs;
    info!("train label distribution {:?}, {runs} runs", dist.p);
    let report = random_baseline(&dist, &golds, runs, cfg.train.master_seed)?;
    println!("random baseline averaged over {runs} runs");
    write_report(cfg, BASELINE, &report)
}
