//! Byte-level n-gram embedding classifier.
//!
//! Inputs are raw byte sequences. Every byte n-gram of the configured lengths
//! is mapped to a row of an embedding table (by hashing, or through a top-k
//! vocabulary), the rows are averaged, and a linear layer with softmax gives
//! class probabilities. Training is plain SGD, optionally with lock-free
//! HogWILD workers, and inputs can be Huffman-compressed beforehand.

pub mod data;
pub mod error;
pub mod eval;
pub mod hash;
pub mod huffman;
pub mod model;
pub mod ngram;
pub mod trainer;

mod hogwild;

pub use data::{Dataset, Provenance, Sample};
pub use error::{Error, Result};
pub use hash::HashVariant;
pub use huffman::{Arity, CodecSpec, HuffmanCodec, SymbolDictionary};
pub use model::{FeatureConfig, Model, Prediction};
pub use ngram::{parse_ngram_set, FeatureIndexer, NGramSet};
pub use trainer::{evaluate, train, IndexerSpec, TrainConfig, TrainOutput, TrainReport};
