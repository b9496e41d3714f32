//! Training, evaluation, model directories and k-fold cross-validation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use apsg::ingest::{make_folds, CorpusError};
use apsg::lexer::LexError;
use apsg::{ApsgError, EntropyModel, Label, PatchRecord};
use rand::seq::SliceRandom;
use serde::Serialize;
use tensor_core::optim::{Adam, AdamConfig};
use tensor_core::rng::seeded;
use tensor_core::{Checkpoint, ParamGrads, Tape, TensorError};
use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::gnn::GraphBatch;
use crate::host::{predict_label, Model};
use crate::metrics::{
    compute_metrics, mean_metrics, pooled_metrics, MeanMetrics, Metrics, MetricsError,
};
use crate::vocab::{build_prompt, PromptError, Vocab, VocabError};
use crate::ModelError;

/// Offset separating the example-shuffling stream from the initialization
/// stream of the same seed.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] ApsgError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("tokenizing training corpus: {0}")]
    Lex(#[from] LexError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}, example {id}")]
    NonFiniteLoss {
        epoch: usize,
        step: u64,
        id: String,
        loss: f64,
    },
    #[error("non-finite gradient at epoch {epoch}, step {step}")]
    NonFiniteGradient { epoch: usize, step: u64 },
    #[error("fold {fold}: entropy model was fitted on held-out records {ids:?}")]
    Leakage { fold: usize, ids: Vec<String> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("model directory {path}: {reason}")]
    ModelDir { path: PathBuf, reason: String },
    #[error("training corpus is empty")]
    EmptyCorpus,
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

impl TrainError {
    /// Process exit code: 3 for numeric failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } => 3,
            TrainError::Model(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

/// One record ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub ids: Vec<usize>,
    pub graph: GraphBatch,
    pub label: Label,
}

pub fn prepare(
    records: &[PatchRecord],
    vocab: &Vocab,
    entropy: &EntropyModel,
    config: &TrainConfig,
) -> Result<Vec<Example>, TrainError> {
    records
        .iter()
        .map(|r| {
            let apsg = apsg::build_patch_graph(r, entropy)?;
            Ok(Example {
                id: r.id.clone(),
                ids: build_prompt(
                    r,
                    vocab,
                    config.include_ground_truth,
                    config.host.max_seq_len,
                )?,
                graph: GraphBatch::from_apsg(&apsg, vocab, config.attributes, &config.drop_nodes),
                label: r.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy of a full pass over the training set after the epoch, when
    /// tracked or when an accuracy stop is configured.
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub optimizer_steps: u64,
    pub frozen_hash_before: String,
    pub frozen_hash_after: String,
    pub stopped_early: bool,
}

/// A trained model together with everything needed to preprocess new records.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub optimizer: Adam,
    pub vocab: Vocab,
    pub entropy: EntropyModel,
    pub log: TrainLog,
}

fn example_loss(model: &Model, ex: &Example) -> Result<(f64, ParamGrads), TrainError> {
    let mut tape = Tape::new(&model.store);
    let out = model.forward(&mut tape, &ex.ids, Some(&ex.graph), true)?;
    if !tape.value(out.logits).is_finite() {
        return Ok((f64::NAN, ParamGrads::default()));
    }
    let loss = tape.cross_entropy(out.logits, ex.label.as_target())?;
    let value = tape.value(loss).item();
    let grads = if value.is_finite() {
        tape.backward(loss)?.params
    } else {
        ParamGrads::default()
    };
    Ok((value, grads))
}

/// Per-example gradient steps with accumulation over `batch_size` examples.
/// Calls `after_step` once per optimizer step.
pub fn fit(
    model: &mut Model,
    optimizer: &mut Adam,
    examples: &[Example],
    config: &TrainConfig,
    mut after_step: impl FnMut(&Model, u64),
) -> Result<TrainLog, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let frozen_hash_before = model.frozen_hash();
    let mut rng = seeded(config.seed.wrapping_add(SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut acc = ParamGrads::default();
        let mut pending = 0usize;
        let mut loss_sum = 0.0;
        for (pos, &i) in order.iter().enumerate() {
            let ex = &examples[i];
            let (loss, grads) = example_loss(model, ex)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step: optimizer.step,
                    id: ex.id.clone(),
                    loss,
                });
            }
            loss_sum += loss;
            acc.accumulate(&grads);
            pending += 1;
            if pending == config.batch_size || pos + 1 == order.len() {
                acc.scale(1.0 / pending as f64);
                if !acc.is_finite() {
                    return Err(TrainError::NonFiniteGradient {
                        epoch,
                        step: optimizer.step,
                    });
                }
                optimizer.step(&mut model.store, &acc)?;
                after_step(model, optimizer.step);
                acc = ParamGrads::default();
                pending = 0;
            }
        }
        let mean_loss = loss_sum / examples.len() as f64;
        let train_accuracy =
            if config.track_train_accuracy || config.stop_at_train_accuracy.is_some() {
                evaluate(model, examples)?.1.accuracy
            } else {
                None
            };
        epochs.push(EpochLog {
            epoch,
            mean_loss,
            train_accuracy,
        });
        if let (Some(target), Some(a)) = (config.stop_at_train_accuracy, train_accuracy) {
            if a >= target {
                stopped_early = epoch + 1 < config.epochs;
                break;
            }
        }
    }
    Ok(TrainLog {
        epochs,
        optimizer_steps: optimizer.step,
        frozen_hash_before,
        frozen_hash_after: model.frozen_hash(),
        stopped_early,
    })
}

pub fn new_optimizer(config: &TrainConfig) -> Adam {
    Adam::new(AdamConfig::new(config.lr, config.warmup_steps))
}

/// Fit the entropy model and vocabulary on `records`, then train a fresh model.
pub fn train(records: &[PatchRecord], config: &TrainConfig) -> Result<Trained, TrainError> {
    if records.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let entropy = EntropyModel::fit(records)?;
    let vocab = Vocab::build(records, config.host.vocab_capacity)?;
    let examples = prepare(records, &vocab, &entropy, config)?;
    let mut model = Model::new(config)?;
    let mut optimizer = new_optimizer(config);
    let log = fit(&mut model, &mut optimizer, &examples, config, |_, _| {})?;
    Ok(Trained {
        model,
        optimizer,
        vocab,
        entropy,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub predicted: Label,
    pub p_overfitting: f64,
}

pub fn evaluate(
    model: &Model,
    examples: &[Example],
) -> Result<(Vec<Prediction>, Metrics), TrainError> {
    let mut preds = Vec::with_capacity(examples.len());
    for ex in examples {
        let p = model.probabilities(&ex.ids, Some(&ex.graph))?;
        preds.push(Prediction {
            id: ex.id.clone(),
            label: ex.label,
            predicted: predict_label(p),
            p_overfitting: p[1],
        });
    }
    let predicted: Vec<Label> = preds.iter().map(|p| p.predicted).collect();
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let metrics = compute_metrics(&predicted, &labels)?;
    Ok((preds, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

pub fn evaluate_records(
    trained: &Trained,
    records: &[PatchRecord],
) -> Result<EvalReport, TrainError> {
    let examples = prepare(
        records,
        &trained.vocab,
        &trained.entropy,
        &trained.model.config,
    )?;
    let (predictions, metrics) = evaluate(&trained.model, &examples)?;
    Ok(EvalReport {
        metrics,
        predictions,
    })
}

pub const CONFIG_FILE: &str = "config.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const ENTROPY_FILE: &str = "entropy.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.json";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Trained {
    /// Parameters followed by optimizer state.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        for (name, t) in self.optimizer.state_tensors(&self.model.store) {
            ck.push(name, t);
        }
        ck
    }

    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(io(&p))
        };
        write(CONFIG_FILE, self.model.config.to_text().as_bytes())?;
        write(VOCAB_FILE, self.vocab.to_text().as_bytes())?;
        write(ENTROPY_FILE, self.entropy.to_text().as_bytes())?;
        write(CHECKPOINT_FILE, &self.checkpoint().to_bytes())?;
        let log = serde_json::to_string_pretty(&self.log).expect("log serializes");
        write(LOG_FILE, log.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, TrainError> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(io(&p))
        };
        let config = TrainConfig::parse(&read(CONFIG_FILE)?)?;
        let vocab = Vocab::from_text(&read(VOCAB_FILE)?)?;
        let entropy =
            EntropyModel::from_text(&read(ENTROPY_FILE)?).ok_or_else(|| TrainError::ModelDir {
                path: dir.into(),
                reason: format!("malformed {ENTROPY_FILE}"),
            })?;
        let ck_path = dir.join(CHECKPOINT_FILE);
        let ck = Checkpoint::read(&ck_path)?;
        let model = Model::from_checkpoint(&config, &ck)?;
        let optimizer = Adam::load_state(
            AdamConfig::new(config.lr, config.warmup_steps),
            &model.store,
            &ck.to_map(),
        )?;
        let log = TrainLog {
            epochs: Vec::new(),
            optimizer_steps: optimizer.step,
            frozen_hash_before: model.frozen_hash(),
            frozen_hash_after: model.frozen_hash(),
            stopped_early: false,
        };
        Ok(Trained {
            model,
            optimizer,
            vocab,
            entropy,
            log,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub held_out: Vec<String>,
    pub train_size: usize,
    pub final_loss: f64,
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
    /// Number of records the fold's entropy model was fitted on; none of them
    /// is held out.
    pub entropy_sources: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XvalReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub mean: MeanMetrics,
    pub pooled: Metrics,
    pub leakage_free: bool,
}

/// Records not in `held`, in corpus order.
fn split<'a>(
    records: &'a [PatchRecord],
    held: &BTreeSet<&str>,
) -> (Vec<PatchRecord>, Vec<PatchRecord>) {
    let (test, train): (Vec<&'a PatchRecord>, Vec<&'a PatchRecord>) =
        records.iter().partition(|r| held.contains(r.id.as_str()));
    (
        train.into_iter().cloned().collect(),
        test.into_iter().cloned().collect(),
    )
}

/// Ids of held-out records the entropy model saw.
pub fn leakage(entropy: &EntropyModel, held: &BTreeSet<&str>) -> Vec<String> {
    entropy
        .sources
        .iter()
        .filter(|s| held.contains(s.as_str()))
        .cloned()
        .collect()
}

pub fn cross_validate(
    records: &[PatchRecord],
    config: &TrainConfig,
) -> Result<XvalReport, TrainError> {
    let plan = make_folds(records, config.k, config.seed)?;
    let mut folds = Vec::with_capacity(config.k);
    for (i, ids) in plan.folds.iter().enumerate() {
        let held: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let (train_set, test_set) = split(records, &held);
        let trained = train(&train_set, config)?;
        let leaked = leakage(&trained.entropy, &held);
        if !leaked.is_empty() {
            return Err(TrainError::Leakage {
                fold: i,
                ids: leaked,
            });
        }
        let report = evaluate_records(&trained, &test_set)?;
        folds.push(FoldReport {
            fold: i,
            held_out: ids.clone(),
            train_size: train_set.len(),
            final_loss: trained.log.epochs.last().map_or(f64::NAN, |e| e.mean_loss),
            metrics: report.metrics,
            predictions: report.predictions,
            entropy_sources: trained.entropy.sources.len(),
        });
    }
    let metrics: Vec<Metrics> = folds.iter().map(|f| f.metrics.clone()).collect();
    Ok(XvalReport {
        k: config.k,
        seed: config.seed,
        mean: mean_metrics(&metrics),
        pooled: pooled_metrics(&metrics),
        folds,
        leakage_free: true,
    })
}
