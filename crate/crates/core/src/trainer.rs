//! Stochastic gradient descent with weight decay, a linear learning-rate
//! schedule and optional HogWILD workers.
//!
//! Step `t` (counted globally over all epochs) uses
//! `lr = lr0 * (1 - t / total_steps)`. Each step applies
//!
//! ```text
//! B      <- (1 - lr*wd) * B      - lr * dB
//! A[r]   <- (1 - lr*wd) * A[r]   - lr * dA[r]     for every row r in the bag
//! ```
//!
//! Decay on `A` is lazy: rows that a sample does not touch are left alone.

use std::borrow::Cow;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::hash::HashVariant;
use crate::hogwild::SharedParams;
use crate::huffman::{CodecSpec, HuffmanCodec, SymbolDictionary};
use crate::model::{
    check_bag, logits_into, nll_from_logits, represent_into, softmax_into, upstream_into,
    FeatureBag, FeatureConfig, Model, Parameters,
};
use crate::ngram::{build_topk_vocabulary, parse_ngram_set, FeatureIndexer, NGramSet};

/// How grams are mapped to rows before training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum IndexerSpec {
    Hashed { hash: HashVariant, table_size: u64 },
    TopK { k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub workers: usize,
    pub seed: u64,
    pub ngrams: NGramSet,
    pub indexer: IndexerSpec,
    pub dim: usize,
    /// Huffman-compress payloads (codec built on the training set) before training.
    pub codec: Option<CodecSpec>,
}

impl TrainConfig {
    /// `{4,8,12,16}`, weight decay 1e-3, dim 16, 2^24 hashed rows.
    pub fn text_preset() -> Self {
        TrainConfig {
            epochs: 5,
            lr0: 0.05,
            weight_decay: 1e-3,
            workers: 1,
            seed: 0,
            ngrams: parse_ngram_set("4,8,12,16").unwrap(),
            indexer: IndexerSpec::Hashed {
                hash: HashVariant::Fnv1a64,
                table_size: 1 << 24,
            },
            dim: 16,
            codec: None,
        }
    }

    /// `2[1-8]`, weight decay 1e-6, otherwise as the text preset.
    pub fn gene_preset() -> Self {
        TrainConfig {
            ngrams: parse_ngram_set("2[1-8]").unwrap(),
            weight_decay: 1e-6,
            ..TrainConfig::text_preset()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad(format!("initial learning rate must be positive, got {}", self.lr0));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.dim == 0 {
            return bad("embedding dimension must be at least 1".into());
        }
        match self.indexer {
            IndexerSpec::Hashed { table_size: 0, .. } => return bad("hash table size must be positive".into()),
            IndexerSpec::TopK { k: 0 } => return bad("top-k size must be positive".into()),
            _ => {}
        }
        if self.weight_decay != 0.0 && !(1e-7..=1e-2).contains(&self.weight_decay) {
            log::warn!(
                "weight decay {} is outside the usual range [1e-7, 1e-2]",
                self.weight_decay
            );
        }
        if self.lr0 * self.weight_decay >= 1.0 {
            log::warn!("lr0 * weight_decay >= 1: decay will flip parameter signs");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::text_preset()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_error: Option<f64>,
    pub wall_time_s: f64,
    pub samples_per_sec: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Payload compression ratio of the training set, when a codec was applied.
    pub compression_ratio: Option<f64>,
}

impl TrainReport {
    pub fn final_dev_error(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.dev_error)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).unwrap() + "\n")
            .collect()
    }
}

pub struct TrainOutput {
    pub model: Model,
    pub report: TrainReport,
    /// The codec applied to the inputs, if any. Needed again at test time.
    pub codec: Option<HuffmanCodec>,
}

pub fn train(config: &TrainConfig, train_set: &Dataset, dev_set: Option<&Dataset>) -> Result<TrainOutput> {
    train_with(config, train_set, dev_set, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    config: &TrainConfig,
    train_set: &Dataset,
    dev_set: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if train_set.samples.is_empty() {
        return Err(Error::EmptyCorpus("training set has no samples"));
    }
    let num_classes = train_set
        .num_classes
        .max(dev_set.map_or(0, |d| d.num_classes))
        .max(2);
    for s in train_set.samples.iter().chain(dev_set.iter().flat_map(|d| &d.samples)) {
        if s.label as usize >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: s.label as usize,
                num_classes,
            });
        }
    }

    let mut train_data = Cow::Borrowed(train_set);
    let mut dev_data = dev_set.map(Cow::Borrowed);
    let mut codec = None;
    let mut compression_ratio = None;
    if let Some(spec) = config.codec {
        let dict = SymbolDictionary::build(train_set.samples.iter().map(|s| &s.payload), spec.m)?;
        let c = HuffmanCodec::build(dict, spec.arity);
        compression_ratio = Some(c.compression_ratio(train_set.samples.iter().map(|s| &s.payload))?);
        train_data = Cow::Owned(crate::data::compress_dataset(train_set, &c));
        dev_data = dev_set.map(|d| Cow::Owned(crate::data::compress_dataset(d, &c)));
        codec = Some(c);
    }

    let indexer = match config.indexer {
        IndexerSpec::Hashed { hash, table_size } => FeatureIndexer::hashed(hash, table_size)?,
        IndexerSpec::TopK { k } => {
            build_topk_vocabulary(train_data.samples.iter().map(|s| &s.payload), &config.ngrams, k)?
        }
    };
    let features = FeatureConfig {
        ngrams: config.ngrams.clone(),
        indexer,
    };
    let mut model = Model::new(features.clone(), config.dim, num_classes, config.seed)?;

    let samples = &train_data.samples;
    let total_steps = (config.epochs * samples.len()) as u64;
    let step = AtomicU64::new(0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(config.epochs),
        compression_ratio,
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let started = Instant::now();
        let schedule = Schedule {
            lr0: config.lr0,
            weight_decay: config.weight_decay,
            total_steps,
        };
        let loss_sum = run_epoch(&mut model, &features, samples, &order, &step, schedule, config.workers)?;
        let elapsed = started.elapsed().as_secs_f64();
        debug_assert!(model.all_finite());
        let dev_error = match &dev_data {
            Some(d) if !d.samples.is_empty() => Some(error_rate(&model, &d.samples)),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / samples.len() as f64,
            dev_error,
            wall_time_s: elapsed,
            samples_per_sec: samples.len() as f64 / elapsed.max(1e-9),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} dev error {:?} ({:.0} samples/s)",
            record.mean_loss,
            record.dev_error,
            record.samples_per_sec
        );
        on_epoch(&record);
        report.epochs.push(record);
    }

    Ok(TrainOutput {
        model,
        report,
        codec,
    })
}

#[derive(Clone, Copy)]
struct Schedule {
    lr0: f64,
    weight_decay: f64,
    total_steps: u64,
}

impl Schedule {
    fn lr(&self, t: u64) -> f64 {
        learning_rate(self.lr0, t, self.total_steps)
    }
}

/// Linearly decaying rate for global step `t` of `total` (0-based).
pub fn learning_rate(lr0: f64, t: u64, total: u64) -> f64 {
    lr0 * (1.0 - t as f64 / total as f64)
}

fn run_epoch(
    model: &mut Model,
    features: &FeatureConfig,
    samples: &[Sample],
    order: &[usize],
    step: &AtomicU64,
    schedule: Schedule,
    workers: usize,
) -> Result<f64> {
    let dim = model.dim();
    let num_classes = model.num_classes();
    let (emb, cls) = model.parts_mut();
    let params = SharedParams::new(emb, cls, dim, num_classes);
    let abort = AtomicBool::new(false);

    if workers == 1 {
        return run_shard(&params, features, samples, order, step, schedule, &abort);
    }
    let shard_len = order.len().div_ceil(workers).max(1);
    let results: Vec<Result<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = order
            .chunks(shard_len)
            .map(|shard| {
                let params = &params;
                let abort = &abort;
                s.spawn(move || run_shard(params, features, samples, shard, step, schedule, abort))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect()
    });
    results.into_iter().sum()
}

struct Scratch {
    bag: FeatureBag,
    repr: Vec<f64>,
    logits: Vec<f64>,
    err: Vec<f64>,
    upstream: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize, num_classes: usize) -> Self {
        Scratch {
            bag: FeatureBag::default(),
            repr: vec![0.0; dim],
            logits: vec![0.0; num_classes],
            err: vec![0.0; num_classes],
            upstream: vec![0.0; dim],
        }
    }
}

fn run_shard(
    params: &SharedParams<'_>,
    features: &FeatureConfig,
    samples: &[Sample],
    shard: &[usize],
    step: &AtomicU64,
    schedule: Schedule,
    abort: &AtomicBool,
) -> Result<f64> {
    let mut scratch = Scratch::new(params.dim(), params.num_classes());
    let mut loss_sum = 0.0;
    for &i in shard {
        if abort.load(Ordering::Relaxed) {
            break;
        }
        let sample = &samples[i];
        scratch.bag.indices.clear();
        features
            .indexer
            .index_into(&sample.payload, &features.ngrams, &mut scratch.bag.indices);
        let t = step.fetch_add(1, Ordering::Relaxed);
        let lr = schedule.lr(t);
        let loss = sgd_update(params, &mut scratch, sample.label as usize, lr, schedule.weight_decay);
        if !loss.is_finite() {
            abort.store(true, Ordering::Relaxed);
            return Err(Error::NonFiniteLoss { step: t, sample: i, lr });
        }
        loss_sum += loss;
    }
    Ok(loss_sum)
}

/// One SGD step on one sample; returns the loss before the update.
/// Sorts `scratch.bag.indices` as a side effect.
fn sgd_update(params: &SharedParams<'_>, scratch: &mut Scratch, label: usize, lr: f64, weight_decay: f64) -> f64 {
    let Scratch {
        bag,
        repr,
        logits,
        err,
        upstream,
    } = scratch;
    represent_into(params, bag, repr);
    logits_into(params, repr, logits);
    let loss = nll_from_logits(logits, label);
    if !loss.is_finite() {
        return loss;
    }
    softmax_into(logits, err);
    upstream_into(params, err, label, upstream);

    let decay = 1.0 - lr * weight_decay;
    params.update_classifier(decay, lr, err, repr);

    if !bag.is_empty() {
        let inv_g = 1.0 / bag.len() as f64;
        bag.indices.sort_unstable();
        for run in bag.indices.chunk_by(|a, b| a == b) {
            let row = run[0];
            params.update_embedding_row(row, decay, lr * run.len() as f64 * inv_g, upstream);
        }
    }
    loss
}

/// Applies a single SGD step to `model` with an explicit learning rate.
/// Returns the loss before the update.
pub fn sgd_step(model: &mut Model, bag: &FeatureBag, label: usize, lr: f64, weight_decay: f64) -> Result<f64> {
    if label >= model.num_classes() {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: model.num_classes(),
        });
    }
    check_bag(model, bag);
    let dim = model.dim();
    let num_classes = model.num_classes();
    let mut scratch = Scratch::new(dim, num_classes);
    scratch.bag.indices.extend_from_slice(&bag.indices);
    let (emb, cls) = model.parts_mut();
    let params = SharedParams::new(emb, cls, dim, num_classes);
    let loss = sgd_update(&params, &mut scratch, label, lr, weight_decay);
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss { step: 0, sample: 0, lr })
    }
}

fn error_rate(model: &Model, samples: &[Sample]) -> f64 {
    let wrong = samples
        .par_iter()
        .filter(|s| model.predict(&s.payload).argmax != s.label as usize)
        .count();
    wrong as f64 / samples.len() as f64
}

/// Fraction of `test_set` samples whose predicted class differs from the label.
pub fn evaluate(model: &Model, features: &FeatureConfig, test_set: &Dataset) -> Result<f64> {
    model.features().check_compatible(features)?;
    if test_set.samples.is_empty() {
        return Err(Error::EmptyCorpus("test set has no samples"));
    }
    if let Some(s) = test_set
        .samples
        .iter()
        .find(|s| s.label as usize >= model.num_classes())
    {
        return Err(Error::LabelOutOfRange {
            label: s.label as usize,
            num_classes: model.num_classes(),
        });
    }
    Ok(error_rate(model, &test_set.samples))
}
