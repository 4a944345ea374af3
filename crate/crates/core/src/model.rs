//! The two-layer linear model: averaged gram embeddings followed by a
//! softmax classifier.
//!
//! Parameters are stored as `f32`; every reduction (averaging, logits,
//! softmax, loss) is carried out in `f64`.
//!
//! With `dim >= num_classes` the model has exactly the capacity of a linear
//! classifier over the averaged one-hot gram features; smaller `dim` acts as
//! a low-rank constraint. Nothing enforces either regime.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hash::HashVariant;
use crate::ngram::{FeatureIndexer, NGramSet, Vocabulary};

const MODEL_MAGIC: &[u8; 4] = b"BSTD";
const MODEL_VERSION: u32 = 1;

/// Everything needed to turn a payload into a bag of embedding rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureConfig {
    pub ngrams: NGramSet,
    pub indexer: FeatureIndexer,
}

impl FeatureConfig {
    pub fn bag(&self, payload: &[u8]) -> FeatureBag {
        let mut indices = Vec::with_capacity(self.ngrams.gram_count(payload.len()));
        self.indexer.index_into(payload, &self.ngrams, &mut indices);
        FeatureBag { indices }
    }

    /// Checks that `other` maps payloads to the same rows.
    pub fn check_compatible(&self, other: &FeatureConfig) -> Result<()> {
        if self.ngrams != other.ngrams {
            return Err(Error::ConfigMismatch(format!(
                "n-gram set {} vs {}",
                self.ngrams, other.ngrams
            )));
        }
        match (&self.indexer, &other.indexer) {
            (
                FeatureIndexer::Hashed {
                    variant: v1,
                    table_size: t1,
                },
                FeatureIndexer::Hashed {
                    variant: v2,
                    table_size: t2,
                },
            ) => {
                if t1 != t2 {
                    return Err(Error::ConfigMismatch(format!("hash table size {t1} vs {t2}")));
                }
                if v1 != v2 {
                    return Err(Error::ConfigMismatch(format!("hash variant {v1} vs {v2}")));
                }
                Ok(())
            }
            (FeatureIndexer::TopK(a), FeatureIndexer::TopK(b)) if a == b => Ok(()),
            (FeatureIndexer::TopK(_), FeatureIndexer::TopK(_)) => {
                Err(Error::ConfigMismatch("top-k vocabularies differ".into()))
            }
            _ => Err(Error::ConfigMismatch("hashed vs top-k indexer".into())),
        }
    }
}

/// Sparse frequency-of-grams vector: one row index per extracted gram.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureBag {
    pub indices: Vec<usize>,
}

impl FeatureBag {
    pub fn new(indices: Vec<usize>) -> Self {
        FeatureBag { indices }
    }

    /// Number of grams, `G`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Highest logit; ties go to the lowest class id.
    pub argmax: usize,
}

/// Gradients of the loss of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// `num_classes x dim`, row-major.
    pub classifier: Vec<f64>,
    /// Embedding rows touched by the bag.
    pub embedding_rows: BTreeMap<usize, Vec<f64>>,
}

/// Read access to model parameters, shared by the owned model and the
/// lock-free training view.
pub(crate) trait Parameters {
    fn dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn embedding_rows(&self) -> usize;
    /// `out += scale * A[row]`
    fn add_embedding_row(&self, row: usize, scale: f64, out: &mut [f64]);
    fn classifier_entry(&self, class: usize, j: usize) -> f32;
}

pub(crate) fn check_bag<P: Parameters>(params: &P, bag: &FeatureBag) {
    let rows = params.embedding_rows();
    if let Some(&bad) = bag.indices.iter().find(|&&i| i >= rows) {
        panic!("embedding row {bad} out of range for {rows} rows (indexer/model mismatch)");
    }
}

/// Mean of the bag's embedding rows; zero for an empty bag.
pub(crate) fn represent_into<P: Parameters>(params: &P, bag: &FeatureBag, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if bag.is_empty() {
        return;
    }
    let scale = 1.0 / bag.len() as f64;
    for &row in &bag.indices {
        params.add_embedding_row(row, scale, out);
    }
}

pub(crate) fn logits_into<P: Parameters>(params: &P, repr: &[f64], out: &mut [f64]) {
    for (k, logit) in out.iter_mut().enumerate() {
        *logit = repr
            .iter()
            .enumerate()
            .map(|(j, &a)| f64::from(params.classifier_entry(k, j)) * a)
            .sum();
    }
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

/// Softmax with the max logit subtracted before exponentiation.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (p, &l) in out.iter_mut().zip(logits) {
        *p = (l - max).exp();
        total += *p;
    }
    out.iter_mut().for_each(|p| *p /= total);
}

/// `-log softmax(logits)[label]`, computed in log space.
pub fn nll_from_logits(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// `d a = B^T (p - onehot(label))`; also turns `probs` into the error vector in place.
pub(crate) fn upstream_into<P: Parameters>(
    params: &P,
    probs: &mut [f64],
    label: usize,
    out: &mut [f64],
) {
    probs[label] -= 1.0;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, &e) in probs.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        for (j, v) in out.iter_mut().enumerate() {
            *v += f64::from(params.classifier_entry(k, j)) * e;
        }
    }
}

/// Embedding matrix `A` (`rows x dim`) and classifier `B` (`classes x dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    features: FeatureConfig,
    dim: usize,
    num_classes: usize,
    embeddings: Vec<f32>,
    classifier: Vec<f32>,
}

impl Parameters for Model {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn embedding_rows(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    #[inline]
    fn add_embedding_row(&self, row: usize, scale: f64, out: &mut [f64]) {
        let r = &self.embeddings[row * self.dim..(row + 1) * self.dim];
        for (o, &v) in out.iter_mut().zip(r) {
            *o += scale * f64::from(v);
        }
    }

    #[inline]
    fn classifier_entry(&self, class: usize, j: usize) -> f32 {
        self.classifier[class * self.dim + j]
    }
}

impl Model {
    /// Embeddings uniform in `[-1/dim, 1/dim)` from a ChaCha8 stream seeded
    /// with `seed`; classifier all zeros, so the initial prediction is uniform.
    pub fn new(features: FeatureConfig, dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let mut model = Model::zeros(features, dim, num_classes)?;
        let bound = 1.0 / dim as f32;
        let dist = Uniform::new(-bound, bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in model.embeddings.iter_mut() {
            *v = dist.sample(&mut rng);
        }
        Ok(model)
    }

    pub fn zeros(features: FeatureConfig, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let rows = features.indexer.rows();
        if rows == 0 {
            return Err(Error::InvalidConfig("indexer addresses no rows".into()));
        }
        let len = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidConfig("embedding table too large".into()))?;
        Ok(Model {
            features,
            dim,
            num_classes,
            embeddings: vec![0.0; len],
            classifier: vec![0.0; num_classes * dim],
        })
    }

    pub fn features(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [f32] {
        &mut self.embeddings
    }

    pub fn classifier(&self) -> &[f32] {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut [f32] {
        &mut self.classifier
    }

    pub fn embedding_row(&self, row: usize) -> &[f32] {
        &self.embeddings[row * self.dim..(row + 1) * self.dim]
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (&mut self.embeddings, &mut self.classifier)
    }

    pub fn all_finite(&self) -> bool {
        self.embeddings.iter().chain(&self.classifier).all(|v| v.is_finite())
    }

    pub fn bag(&self, payload: &[u8]) -> FeatureBag {
        self.features.bag(payload)
    }

    /// Averaged embedding of the bag.
    ///
    /// # Panics
    ///
    /// If any index is not a row of `A`.
    pub fn represent(&self, bag: &FeatureBag) -> Vec<f64> {
        check_bag(self, bag);
        let mut out = vec![0.0; self.dim];
        represent_into(self, bag, &mut out);
        out
    }

    pub fn forward(&self, bag: &FeatureBag) -> Prediction {
        let repr = self.represent(bag);
        let mut logits = vec![0.0; self.num_classes];
        logits_into(self, &repr, &mut logits);
        let mut probabilities = vec![0.0; self.num_classes];
        softmax_into(&logits, &mut probabilities);
        let argmax = argmax(&logits);
        Prediction {
            logits,
            probabilities,
            argmax,
        }
    }

    pub fn predict(&self, payload: &[u8]) -> Prediction {
        self.forward(&self.bag(payload))
    }

    pub fn backward(&self, bag: &FeatureBag, label: usize) -> Result<Gradients> {
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        let repr = self.represent(bag);
        let mut logits = vec![0.0; self.num_classes];
        logits_into(self, &repr, &mut logits);
        let mut err = vec![0.0; self.num_classes];
        softmax_into(&logits, &mut err);
        let mut upstream = vec![0.0; self.dim];
        upstream_into(self, &mut err, label, &mut upstream);

        let mut classifier = vec![0.0; self.num_classes * self.dim];
        for (k, &e) in err.iter().enumerate() {
            for (j, &a) in repr.iter().enumerate() {
                classifier[k * self.dim + j] = e * a;
            }
        }
        let mut embedding_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        if !bag.is_empty() {
            let scale = 1.0 / bag.len() as f64;
            for &row in &bag.indices {
                let g = embedding_rows
                    .entry(row)
                    .or_insert_with(|| vec![0.0; self.dim]);
                for (gj, &u) in g.iter_mut().zip(&upstream) {
                    *gj += scale * u;
                }
            }
        }
        Ok(Gradients {
            classifier,
            embedding_rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Model::read_from(&mut r)
    }

    /// Little-endian layout:
    ///
    /// ```text
    /// "BSTD" | version u32 | mode u8 (0 hashed, 1 top-k) | hash u8 | rows u64
    /// | dim u32 | classes u32 | n-gram count u32 | lengths u32...
    /// | A f32 row-major | B f32 row-major
    /// | top-k only: per row, gram length u32 + gram bytes
    /// ```
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        let (mode, hash) = match &self.features.indexer {
            FeatureIndexer::Hashed { variant, .. } => (0u8, variant.tag()),
            FeatureIndexer::TopK(_) => (1u8, 0xff),
        };
        w.write_all(&[mode, hash])?;
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.num_classes as u32).to_le_bytes())?;
        let lengths = self.features.ngrams.lengths();
        w.write_all(&(lengths.len() as u32).to_le_bytes())?;
        for &n in lengths {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        write_f32s(w, &self.embeddings)?;
        write_f32s(w, &self.classifier)?;
        if let FeatureIndexer::TopK(vocab) = &self.features.indexer {
            for g in vocab.grams() {
                w.write_all(&(g.len() as u32).to_le_bytes())?;
                w.write_all(g)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::format("model file", "bad magic"));
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(Error::format("model file", format!("unsupported version {version}")));
        }
        let mut mode = [0u8; 2];
        r.read_exact(&mut mode)?;
        let rows = usize::try_from(read_u64(r)?)
            .map_err(|_| Error::format("model file", "row count overflows"))?;
        let dim = read_u32(r)? as usize;
        let num_classes = read_u32(r)? as usize;
        let count = read_u32(r)? as usize;
        if count == 0 || count > 4096 {
            return Err(Error::format("model file", format!("bad n-gram count {count}")));
        }
        let mut lengths = Vec::with_capacity(count);
        for _ in 0..count {
            lengths.push(read_u32(r)? as usize);
        }
        let ngrams = NGramSet::new(lengths)?;
        if dim == 0 || num_classes < 2 || rows == 0 {
            return Err(Error::format("model file", "degenerate shape"));
        }
        let len = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::format("model file", "shape overflows"))?;
        let embeddings = read_f32s(r, len)?;
        let classifier = read_f32s(r, num_classes * dim)?;
        let indexer = match mode[0] {
            0 => {
                let variant = HashVariant::from_tag(mode[1])
                    .ok_or_else(|| Error::format("model file", format!("unknown hash {}", mode[1])))?;
                FeatureIndexer::hashed(variant, rows as u64)?
            }
            1 => {
                let mut grams = Vec::with_capacity(rows);
                for _ in 0..rows {
                    let n = read_u32(r)? as usize;
                    let mut g = vec![0u8; n];
                    r.read_exact(&mut g)?;
                    grams.push(g);
                }
                FeatureIndexer::TopK(Vocabulary::from_grams(grams)?)
            }
            other => return Err(Error::format("model file", format!("unknown mode {other}"))),
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::format("model file", "trailing bytes"));
        }
        Ok(Model {
            features: FeatureConfig { ngrams, indexer },
            dim,
            num_classes,
            embeddings,
            classifier,
        })
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 * 4096);
    for chunk in values.chunks(4096) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = vec![0u8; 4 * 4096];
    let mut remaining = len;
    while remaining > 0 {
        let n = remaining.min(4096);
        r.read_exact(&mut buf[..4 * n])?;
        out.extend(
            buf[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        remaining -= n;
    }
    Ok(out)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
