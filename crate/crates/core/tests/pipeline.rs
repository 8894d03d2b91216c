mod common;

use std::fs;

use pairctx::corpus::{load_corpus, write_corpus};
use pairctx::encoder_input::{read_encoded, write_encoded, PairEncoder, Vocab};
use pairctx::label::Label;
use pairctx::ner_align::build_dataset;
use pairctx::net::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams};
use pairctx::splitter::{format_manifest, read_manifest, split_corpus, DocLabels, SplitConfig};
use pairctx::trainer::{evaluate, run_restarts, train_one, StoppingCriterion, TrainConfig, TrainData};
use pairctx::Error;

fn tiny_model(vocab: usize) -> ModelConfig {
    ModelConfig {
        num_layers: 1,
        num_heads: 2,
        hidden_dim: 16,
        ffn_dim: 32,
        vocab_size: vocab,
        ..Default::default()
    }
}

#[test]
fn corpus_to_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (store, ner) = common::alignment_fixture(&common::audit_kinds());
    let corpus = dir.path().join("corpus.jsonl");
    let annotations = dir.path().join("annotations.jsonl");
    write_corpus(&store, &corpus, &annotations).unwrap();
    let store = load_corpus(&corpus, Some(&annotations)).unwrap();
    assert_eq!(store.len(), 22);

    let built = build_dataset(&store, &ner).unwrap();
    let positives = built.instances.iter().filter(|r| r.label.is_positive()).count();
    assert_eq!(positives + built.unrecoverable.len(), 44);
    assert!(built.instances.iter().any(|r| r.label == Label::NoRel));

    let docs: Vec<DocLabels> = store
        .documents
        .keys()
        .map(|id| DocLabels {
            doc_id: id.clone(),
            labels: built.instances.iter().filter(|r| &r.doc_id == id).map(|r| r.label).collect(),
        })
        .collect();
    let split = split_corpus(&docs, &SplitConfig { kl_threshold_bits: 0.5, ..Default::default() }).unwrap();
    let manifest = format_manifest(&split);
    assert_eq!(read_manifest(manifest.as_bytes(), "split").unwrap(), split);
    assert_eq!(split.train_doc_ids.len(), 17);

    let mut words: Vec<String> = store
        .documents
        .values()
        .flat_map(|d| d.text.split(|c: char| c.is_whitespace() || c == '.').map(str::to_owned))
        .filter(|w| !w.is_empty())
        .collect();
    words.sort();
    words.dedup();
    words.push(".".into());
    let vocab = Vocab::with_specials(&words).unwrap();
    let encoder = PairEncoder::new(vocab);
    let encode = |train: bool| {
        built
            .instances
            .iter()
            .filter(|r| split.is_train(&r.doc_id) == train)
            .map(|r| encoder.encode(r, &store.documents[&r.doc_id].text).unwrap())
            .collect::<Vec<_>>()
    };
    let (train, dev) = (encode(true), encode(false));
    assert!(train.iter().chain(&dev).all(|e| e.check(&encoder.vocab, 350).is_empty()));
    let mut buf = Vec::new();
    write_encoded(&train, &mut buf).unwrap();
    assert_eq!(read_encoded(buf.as_slice(), "train").unwrap(), train);

    let cfg = TrainConfig {
        max_epochs: 3,
        num_restarts: 3,
        learning_rate: 0.05,
        stopping_criterion: StoppingCriterion::MacroF1All,
        master_seed: 11,
        ..Default::default()
    };
    let model = tiny_model(encoder.vocab.len());
    let data = TrainData {
        train: &train,
        dev: &dev,
        pad_id: encoder.vocab.pad_id,
    };
    let out = run_restarts::<f32>(&cfg, &model, data).unwrap();
    assert_eq!(out.scores.len(), 3);
    let history = &out.best.history;
    assert!(history.stop_epoch <= 3 && history.best_epoch >= 1);
    assert!(history.epochs.iter().all(|e| e.criterion_score <= history.best_score()));
    let report = evaluate(&out.best.params, &dev, 32, encoder.vocab.pad_id).unwrap();
    assert_eq!(report.per_class.iter().map(|c| c.support).sum::<usize>(), dev.len());
    assert_eq!(Some(&report), history.best_report());

    let path = dir.path().join("model.ckpt");
    save_checkpoint(&out.best.params, &path).unwrap();
    let back: ModelParams<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(back, out.best.params);
    assert!(fs::metadata(&path).unwrap().len() > 4 * back.num_params() as u64);
}

#[test]
fn restart_selection_matches_sequential_runs() {
    let train = common::separable_fixture(4, 4, 40);
    let dev = common::separable_fixture(5, 2, 40);
    let cfg = TrainConfig {
        max_epochs: 4,
        num_restarts: 4,
        learning_rate: 0.05,
        master_seed: 100,
        ..Default::default()
    };
    let model = tiny_model(40);
    let data = TrainData {
        train: &train,
        dev: &dev,
        pad_id: 0,
    };
    let parallel = run_restarts::<f64>(&cfg, &model, data).unwrap();
    let sequential: Vec<f64> = (0..4)
        .map(|i| train_one::<f64>(&cfg, &model, data, 100 + i).unwrap().history.best_score())
        .collect();
    let best = sequential.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = sequential.iter().position(|&s| s == best).unwrap();
    assert_eq!(parallel.restart_index, first);
    assert_eq!(parallel.scores, sequential.into_iter().map(Some).collect::<Vec<_>>());
    let again = run_restarts::<f64>(&cfg, &model, data).unwrap();
    assert_eq!(again.best.params, parallel.best.params);
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let train = common::separable_fixture(6, 4, 40);
    let cfg = TrainConfig {
        learning_rate: 1e30,
        max_epochs: 5,
        ..Default::default()
    };
    let data = TrainData {
        train: &train,
        dev: &train,
        pad_id: 0,
    };
    match train_one::<f32>(&cfg, &tiny_model(40), data, 0) {
        Err(Error::Diverged { epoch, history }) => {
            assert!(epoch <= 5);
            assert_eq!(history.stop_epoch, epoch);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history.stop_epoch)),
    }
}
