//! Byte-level n-gram extraction and gram-to-row indexing.
//!
//! Grams are raw windows of the input. No normalization of any kind is
//! applied, and every gram length shares one index space.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::HashVariant;

/// A gram is a window of the source bytes.
pub type Gram<'a> = &'a [u8];

/// Sorted, duplicate-free set of gram lengths (in bytes).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NGramSet(Vec<usize>);

impl NGramSet {
    /// Builds a set from arbitrary lengths, sorting and deduplicating them.
    pub fn new(lengths: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut lengths: Vec<usize> = lengths.into_iter().collect();
        lengths.sort_unstable();
        lengths.dedup();
        if lengths.is_empty() {
            return Err(Error::InvalidConfig("n-gram set is empty".into()));
        }
        if lengths[0] == 0 {
            return Err(Error::InvalidConfig("n-gram length 0 is not allowed".into()));
        }
        Ok(NGramSet(lengths))
    }

    pub fn lengths(&self) -> &[usize] {
        &self.0
    }

    pub fn max_len(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Number of grams extracted from an input of `len` bytes.
    pub fn gram_count(&self, len: usize) -> usize {
        self.0
            .iter()
            .map(|&n| if n <= len { len - n + 1 } else { 0 })
            .sum()
    }
}

impl TryFrom<Vec<usize>> for NGramSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        NGramSet::new(v)
    }
}

impl From<NGramSet> for Vec<usize> {
    fn from(s: NGramSet) -> Self {
        s.0
    }
}

impl fmt::Display for NGramSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl FromStr for NGramSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_ngram_set(s)
    }
}

/// Parses the n-gram set shorthand.
///
/// Accepted terms, which may be joined with commas and optionally wrapped in
/// braces: `n`, `[a-b]` (every length from a to b), `k[a-b]` (multiples
/// `k*a ..= k*b`) and `k^[a-b]` (powers `k^a ..= k^b`).
///
/// ```
/// use bytesteady::ngram::parse_ngram_set;
/// assert_eq!(parse_ngram_set("2[1-8]").unwrap().lengths(), &[2, 4, 6, 8, 10, 12, 14, 16]);
/// assert_eq!(parse_ngram_set("4^[0-2]").unwrap().lengths(), &[1, 4, 16]);
/// ```
pub fn parse_ngram_set(spec: &str) -> Result<NGramSet> {
    let err = |token: &str, reason: &str| Error::NGramSet {
        input: spec.to_string(),
        token: token.to_string(),
        reason: reason.to_string(),
    };

    let trimmed = spec.trim();
    let body = match (trimmed.strip_prefix('{'), trimmed.ends_with('}')) {
        (Some(rest), true) => &rest[..rest.len() - 1],
        (None, false) => trimmed,
        _ => return Err(err(trimmed, "unbalanced braces")),
    };
    if body.trim().is_empty() {
        return Err(err(trimmed, "empty expansion"));
    }

    let mut lengths = Vec::new();
    for token in body.split(',') {
        let token = token.trim();
        if token.is_empty() {
            return Err(err(token, "empty term"));
        }
        expand_term(token, &mut lengths).map_err(|reason| err(token, &reason))?;
    }
    if lengths.is_empty() {
        return Err(err(trimmed, "empty expansion"));
    }
    if lengths.contains(&0) {
        return Err(err(trimmed, "n-gram lengths must be positive"));
    }
    NGramSet::new(lengths)
}

fn parse_number(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("expected a non-negative integer, found {s:?}"));
    }
    s.parse::<usize>().map_err(|e| e.to_string())
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected [a-b], found {s:?}"))?;
    let (lo, hi) = inner
        .split_once('-')
        .ok_or_else(|| format!("expected [a-b], found {s:?}"))?;
    let (lo, hi) = (parse_number(lo)?, parse_number(hi)?);
    if lo > hi {
        return Err(format!("empty range [{lo}-{hi}]"));
    }
    Ok((lo, hi))
}

fn expand_term(token: &str, out: &mut Vec<usize>) -> std::result::Result<(), String> {
    if let Some((base, range)) = token.split_once('^') {
        let base = parse_number(base)?;
        if base == 0 {
            return Err("exponent base must be positive".into());
        }
        let (lo, hi) = parse_range(range)?;
        for e in lo..=hi {
            let e = u32::try_from(e).map_err(|_| "exponent too large".to_string())?;
            let v = base
                .checked_pow(e)
                .ok_or_else(|| "power overflows".to_string())?;
            out.push(v);
        }
        return Ok(());
    }
    if let Some(open) = token.find('[') {
        let (lo, hi) = parse_range(&token[open..])?;
        let step = if open == 0 {
            1
        } else {
            parse_number(&token[..open])?
        };
        if step == 0 {
            return Err("multiplier must be positive".into());
        }
        if lo == 0 {
            return Err("range must start at 1 or above".into());
        }
        for i in lo..=hi {
            out.push(
                step.checked_mul(i)
                    .ok_or_else(|| "multiple overflows".to_string())?,
            );
        }
        return Ok(());
    }
    let n = parse_number(token)?;
    if n == 0 {
        return Err("n-gram lengths must be positive".into());
    }
    out.push(n);
    Ok(())
}

/// Iterates over every gram of `input`: ascending length, then ascending offset.
pub fn grams<'a>(input: &'a [u8], set: &'a NGramSet) -> impl Iterator<Item = Gram<'a>> + 'a {
    set.0.iter().flat_map(move |&n| input.windows(n))
}

pub fn extract_grams<'a>(input: &'a [u8], set: &'a NGramSet) -> Vec<Gram<'a>> {
    grams(input, set).collect()
}

/// Explicit gram vocabulary, rows assigned in descending frequency order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    grams: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, u32>,
}

impl Vocabulary {
    pub fn from_grams(grams: Vec<Vec<u8>>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(grams.len());
        for (i, g) in grams.iter().enumerate() {
            if lookup.insert(g.clone(), i as u32).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate vocabulary entry {g:?}"
                )));
            }
        }
        Ok(Vocabulary { grams, lookup })
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn get(&self, gram: &[u8]) -> Option<usize> {
        self.lookup.get(gram).map(|&i| i as usize)
    }

    /// Grams in row order.
    pub fn grams(&self) -> &[Vec<u8>] {
        &self.grams
    }
}

/// Maps grams to embedding rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureIndexer {
    /// `hash(gram) mod table_size`, one table shared by every length.
    Hashed {
        variant: HashVariant,
        table_size: u64,
    },
    /// Top-K vocabulary; grams outside it are dropped.
    TopK(Vocabulary),
}

impl FeatureIndexer {
    pub fn hashed(variant: HashVariant, table_size: u64) -> Result<Self> {
        if table_size == 0 {
            return Err(Error::InvalidConfig("hash table size must be positive".into()));
        }
        Ok(FeatureIndexer::Hashed {
            variant,
            table_size,
        })
    }

    /// Number of embedding rows this indexer addresses.
    pub fn rows(&self) -> usize {
        match self {
            FeatureIndexer::Hashed { table_size, .. } => *table_size as usize,
            FeatureIndexer::TopK(v) => v.len(),
        }
    }

    #[inline]
    pub fn index(&self, gram: &[u8]) -> Option<usize> {
        match self {
            FeatureIndexer::Hashed {
                variant,
                table_size,
            } => Some((variant.hash(gram) % table_size) as usize),
            FeatureIndexer::TopK(v) => v.get(gram),
        }
    }

    /// Appends the row of every gram of `input` to `out`.
    pub fn index_into(&self, input: &[u8], set: &NGramSet, out: &mut Vec<usize>) {
        out.extend(grams(input, set).filter_map(|g| self.index(g)));
    }
}

/// Hashed row of a gram; panics if the indexer is not in hashed mode.
pub fn hash_gram(gram: Gram<'_>, indexer: &FeatureIndexer) -> usize {
    match indexer {
        FeatureIndexer::Hashed { .. } => indexer.index(gram).unwrap(),
        FeatureIndexer::TopK(_) => panic!("hash_gram called on a top-k indexer"),
    }
}

/// Keeps the `k` most frequent grams across the corpus (all lengths pooled).
/// Ties are broken by the smaller gram bytes.
pub fn build_topk_vocabulary<I, S>(corpus: I, set: &NGramSet, k: usize) -> Result<FeatureIndexer>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    if k == 0 {
        return Err(Error::InvalidConfig("top-k size must be at least 1".into()));
    }
    let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
    let mut sequences = 0usize;
    for seq in corpus {
        sequences += 1;
        for g in grams(seq.as_ref(), set) {
            match counts.get_mut(g) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(g.to_vec(), 1);
                }
            }
        }
    }
    if sequences == 0 {
        return Err(Error::EmptyCorpus("top-k vocabulary needs at least one sequence"));
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("corpus yields no grams for this n-gram set"));
    }
    let mut ranked: Vec<(Vec<u8>, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    let vocab = Vocabulary::from_grams(ranked.into_iter().map(|(g, _)| g).collect())?;
    Ok(FeatureIndexer::TopK(vocab))
}
