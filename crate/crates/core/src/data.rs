//! Samples, datasets and their on-disk formats.
//!
//! Three formats are supported:
//!
//! * TSV: `label<TAB>payload` per line, with `\t`, `\n` and `\\` escaped in
//!   the payload so arbitrary bytes survive;
//! * binary: `"BSDS" | version u32 | K u32 | N u64`, then per record a LEB128
//!   label, a LEB128 payload length and the payload bytes;
//! * FASTA, read only, with labels taken from a `key=value` header field.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::huffman::HuffmanCodec;
use crate::model::{read_u32, read_u64};

const DATASET_MAGIC: &[u8; 4] = b"BSDS";
const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub label: u32,
    pub payload: Vec<u8>,
}

impl Sample {
    pub fn new(label: u32, payload: impl Into<Vec<u8>>) -> Self {
        Sample {
            label,
            payload: payload.into(),
        }
    }
}

/// Where a dataset came from and what was applied to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub format: String,
    /// Identifier of the Huffman codec applied to the payloads, if any.
    pub codec: Option<String>,
}

impl Provenance {
    pub fn in_memory() -> Self {
        Provenance {
            source: "<memory>".into(),
            format: "memory".into(),
            codec: None,
        }
    }

    fn file(path: &Path, format: &str) -> Self {
        Provenance {
            source: path.display().to_string(),
            format: format.into(),
            codec: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub num_classes: usize,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Fails if `num_classes` is zero or any label is `>= num_classes`.
    pub fn new(num_classes: usize, samples: Vec<Sample>, provenance: Provenance) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidConfig("a dataset needs at least one class".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.label as usize >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: s.label as usize,
                num_classes,
            });
        }
        Ok(Dataset {
            num_classes,
            samples,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn payloads(&self) -> impl Iterator<Item = &[u8]> {
        self.samples.iter().map(|s| s.payload.as_slice())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    pub fn payload_bytes(&self) -> u64 {
        self.samples.iter().map(|s| s.payload.len() as u64).sum()
    }
}

fn num_classes_from(samples: &[Sample], declared: Option<usize>) -> usize {
    declared.unwrap_or_else(|| samples.iter().map(|s| s.label as usize + 1).max().unwrap_or(1))
}

// ---------------------------------------------------------------- TSV

pub fn escape_payload(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + payload.len() / 8);
    for &b in payload {
        match b {
            b'\\' => out.extend_from_slice(b"\\\\"),
            b'\t' => out.extend_from_slice(b"\\t"),
            b'\n' => out.extend_from_slice(b"\\n"),
            _ => out.push(b),
        }
    }
    out
}

pub fn unescape_payload(escaped: &[u8]) -> std::result::Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(escaped.len());
    let mut it = escaped.iter().copied().enumerate();
    while let Some((i, b)) = it.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        match it.next() {
            Some((_, b'\\')) => out.push(b'\\'),
            Some((_, b't')) => out.push(b'\t'),
            Some((_, b'n')) => out.push(b'\n'),
            Some((_, other)) => {
                return Err(format!("bad escape \\{} at byte {i}", other.escape_ascii()));
            }
            None => return Err(format!("dangling backslash at byte {i}")),
        }
    }
    Ok(out)
}

pub fn load_tsv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_tsv_with(path, None)
}

/// As [`load_tsv`], with an explicit class count instead of `max(label) + 1`.
pub fn load_tsv_with(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let samples = read_tsv(reader, &path.display().to_string())?;
    let k = num_classes_from(&samples, num_classes);
    Dataset::new(k, samples, Provenance::file(path, "tsv"))
}

/// Parses TSV records; `source` names the input in error messages.
pub fn read_tsv<R: BufRead>(mut reader: R, source: &str) -> Result<Vec<Sample>> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: source.to_string(),
        line,
        reason,
    };
    let mut samples = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        let tab = buf
            .iter()
            .position(|&b| b == b'\t')
            .ok_or_else(|| parse_err(line_no, "missing tab after label".into()))?;
        let label = std::str::from_utf8(&buf[..tab])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                parse_err(
                    line_no,
                    format!("label {:?} is not a non-negative integer", String::from_utf8_lossy(&buf[..tab])),
                )
            })?;
        let payload = unescape_payload(&buf[tab + 1..]).map_err(|r| parse_err(line_no, r))?;
        samples.push(Sample { label, payload });
    }
    if samples.is_empty() {
        return Err(parse_err(0, "no samples".into()));
    }
    Ok(samples)
}

pub fn write_tsv<W: Write>(w: &mut W, samples: &[Sample]) -> Result<()> {
    for s in samples {
        write!(w, "{}\t", s.label)?;
        w.write_all(&escape_payload(&s.payload))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_tsv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tsv(&mut w, &dataset.samples)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- binary

fn write_varint<W: Write>(w: &mut W, mut v: u64) -> std::io::Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            return w.write_all(&[byte]);
        }
        w.write_all(&[byte | 0x80])?;
    }
}

fn read_varint<R: Read>(r: &mut R) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let mut b = [0u8];
        r.read_exact(&mut b)?;
        let bits = u64::from(b[0] & 0x7f);
        if shift == 63 && bits > 1 {
            break;
        }
        v |= bits << shift;
        if b[0] & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::format("binary dataset", "varint overflows 64 bits"))
}

pub fn write_binary<W: Write>(w: &mut W, dataset: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.num_classes as u32).to_le_bytes())?;
    w.write_all(&(dataset.samples.len() as u64).to_le_bytes())?;
    for s in &dataset.samples {
        write_varint(w, u64::from(s.label))?;
        write_varint(w, s.payload.len() as u64)?;
        w.write_all(&s.payload)?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(r: &mut R, provenance: Provenance) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format("binary dataset", "bad magic"));
    }
    let version = read_u32(r)?;
    if version != DATASET_VERSION {
        return Err(Error::format("binary dataset", format!("unsupported version {version}")));
    }
    let k = read_u32(r)? as usize;
    let n = read_u64(r)?;
    let mut samples = Vec::with_capacity(n.min(1 << 20) as usize);
    for i in 0..n {
        let label = read_varint(r)?;
        let label = u32::try_from(label)
            .map_err(|_| Error::format("binary dataset", format!("record {i}: label {label} too large")))?;
        let len = read_varint(r)?;
        let mut payload = Vec::new();
        r.by_ref().take(len).read_to_end(&mut payload)?;
        if payload.len() as u64 != len {
            return Err(Error::format("binary dataset", format!("record {i}: truncated payload")));
        }
        samples.push(Sample { label, payload });
    }
    let mut rest = [0u8];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("binary dataset", "trailing bytes after last record"));
    }
    Dataset::new(k, samples, provenance)
}

pub fn save_binary(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(&mut w, dataset)?;
    w.flush()?;
    Ok(())
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_binary(&mut BufReader::new(File::open(path)?), Provenance::file(path, "binary"))
}

/// Loads a TSV or binary dataset, telling them apart by the binary magic.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == DATASET_MAGIC {
        load_binary(path)
    } else {
        load_tsv(path)
    }
}

// ---------------------------------------------------------------- FASTA

/// Maps a FASTA header to a class id through a `key=value` field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRule {
    pub field: String,
    /// Class names in id order. Without it the value must be an integer id.
    pub classes: Option<Vec<String>>,
}

impl LabelRule {
    pub fn field(field: impl Into<String>) -> Self {
        LabelRule {
            field: field.into(),
            classes: None,
        }
    }

    pub fn with_classes(mut self, classes: Vec<String>) -> Self {
        self.classes = Some(classes);
        self
    }

    /// Reads class names, one per line, from a sidecar file.
    pub fn with_class_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Ok(self.with_classes(names))
    }

    fn label(&self, header: &str) -> std::result::Result<u32, String> {
        let prefix = format!("{}=", self.field);
        let value = header
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix(prefix.as_str()))
            .ok_or_else(|| format!("no {:?} field", self.field))?;
        match &self.classes {
            Some(names) => names
                .iter()
                .position(|n| n == value)
                .map(|i| i as u32)
                .ok_or_else(|| format!("unknown class {value:?}")),
            None => value
                .parse::<u32>()
                .map_err(|_| format!("class {value:?} is not an integer id")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastaOptions {
    pub rule: LabelRule,
    /// Reject bytes outside `ACGTN` (after uppercasing) instead of keeping them.
    pub strict: bool,
}

pub fn load_fasta(path: impl AsRef<Path>, options: &FastaOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let samples = read_fasta(BufReader::new(File::open(path)?), &path.display().to_string(), options)?;
    let declared = options.rule.classes.as_ref().map(Vec::len);
    let k = num_classes_from(&samples, declared);
    Dataset::new(k, samples, Provenance::file(path, "fasta"))
}

pub fn read_fasta<R: BufRead>(reader: R, source: &str, options: &FastaOptions) -> Result<Vec<Sample>> {
    let err = |line: usize, reason: String| Error::Parse {
        path: source.to_string(),
        line,
        reason,
    };
    struct Record {
        name: String,
        line: usize,
        label: u32,
        seq: Vec<u8>,
    }
    let finish = |r: Record| -> Result<Sample> {
        if r.seq.is_empty() {
            return Err(err(r.line, format!("record {:?} has an empty sequence", r.name)));
        }
        Ok(Sample {
            label: r.label,
            payload: r.seq,
        })
    };

    let mut samples = Vec::new();
    let mut current: Option<Record> = None;
    for (i, line) in reader.split(b'\n').enumerate() {
        let line_no = i + 1;
        let mut line = line?;
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        if let Some(header) = line.strip_prefix(b">") {
            if let Some(r) = current.take() {
                samples.push(finish(r)?);
            }
            let header = String::from_utf8_lossy(header).into_owned();
            let name = header.split_whitespace().next().unwrap_or("").to_string();
            let label = options
                .rule
                .label(&header)
                .map_err(|reason| err(line_no, format!("record {name:?}: {reason}")))?;
            current = Some(Record {
                name,
                line: line_no,
                label,
                seq: Vec::new(),
            });
            continue;
        }
        let trimmed = line.trim_ascii();
        if trimmed.is_empty() {
            continue;
        }
        let record = current
            .as_mut()
            .ok_or_else(|| err(line_no, "sequence data before the first header".into()))?;
        for &b in trimmed {
            let b = b.to_ascii_uppercase();
            if options.strict && !matches!(b, b'A' | b'C' | b'G' | b'T' | b'N') {
                return Err(err(
                    line_no,
                    format!("record {:?}: byte {:?} outside ACGTN", record.name, b.escape_ascii().to_string()),
                ));
            }
            record.seq.push(b);
        }
    }
    if let Some(r) = current.take() {
        samples.push(finish(r)?);
    }
    if samples.is_empty() {
        return Err(err(0, "no samples".into()));
    }
    Ok(samples)
}

// ---------------------------------------------------------------- split

/// Shuffled split with `round(fraction * N)` samples (halves round up) in the
/// first part. Both parts keep the original sample order.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.samples.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("cannot split a dataset of {n} samples")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let first = ((fraction * n as f64) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_first = vec![false; n];
    for &i in &order[..first] {
        in_first[i] = true;
    }
    let (mut a, mut b) = (Vec::with_capacity(first), Vec::with_capacity(n - first));
    for (s, &f) in dataset.samples.iter().zip(&in_first) {
        if f { a.push(s.clone()) } else { b.push(s.clone()) }
    }
    let part = |samples| Dataset {
        num_classes: dataset.num_classes,
        samples,
        provenance: dataset.provenance.clone(),
    };
    Ok((part(a), part(b)))
}

// ---------------------------------------------------------------- codec

/// Replaces every payload by its raw Huffman code stream.
pub fn compress_dataset(dataset: &Dataset, codec: &HuffmanCodec) -> Dataset {
    let samples = dataset
        .samples
        .iter()
        .map(|s| Sample {
            label: s.label,
            payload: codec.encode(&s.payload).payload,
        })
        .collect();
    Dataset {
        num_classes: dataset.num_classes,
        samples,
        provenance: Provenance {
            codec: Some(codec.id()),
            ..dataset.provenance.clone()
        },
    }
}

// ---------------------------------------------------------------- synthetic

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Random byte noise with one class-specific marker planted per sample.
    SeparableText,
    /// i.i.d. uniform `ACGT`, labels independent of content.
    DnaUniform,
    /// Uniform `ACGT` background with one class-specific motif planted per sample.
    DnaMotif,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::SeparableText => "separable-text",
            SyntheticKind::DnaUniform => "dna-uniform",
            SyntheticKind::DnaMotif => "dna-motif",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "separable-text" => Ok(SyntheticKind::SeparableText),
            "dna-uniform" => Ok(SyntheticKind::DnaUniform),
            "dna-motif" => Ok(SyntheticKind::DnaMotif),
            _ => Err(format!(
                "unknown synthetic kind {s:?} (expected separable-text, dna-uniform or dna-motif)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub num_classes: usize,
    /// Payload length range. For separable text this is the noise length,
    /// to which the marker length is added.
    pub min_len: usize,
    pub max_len: usize,
    /// Motif length for `dna-motif`, in 8..=16.
    pub motif_len: usize,
}

impl SyntheticParams {
    /// 2000 samples, 2 classes; noise of 8..=24 bytes for separable text,
    /// 32..=48 bases for motif data, 64..=128 bases for uniform DNA.
    pub fn for_kind(kind: SyntheticKind) -> Self {
        let (min_len, max_len) = match kind {
            SyntheticKind::SeparableText => (8, 24),
            SyntheticKind::DnaMotif => (32, 48),
            SyntheticKind::DnaUniform => (64, 128),
        };
        SyntheticParams {
            n: 2000,
            num_classes: 2,
            min_len,
            max_len,
            motif_len: 16,
        }
    }
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams::for_kind(SyntheticKind::SeparableText)
    }
}

const NUCLEOTIDES: [u8; 4] = *b"ACGT";

pub fn generate_synthetic(kind: SyntheticKind, params: &SyntheticParams, seed: u64) -> Result<Dataset> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    let k = params.num_classes;
    if params.n == 0 {
        return bad("synthetic dataset needs n >= 1".into());
    }
    if k == 0 || k > u32::MAX as usize {
        return bad(format!("invalid class count {k}"));
    }
    if params.min_len > params.max_len {
        return bad(format!("min_len {} exceeds max_len {}", params.min_len, params.max_len));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = match kind {
        SyntheticKind::SeparableText => {
            if k > 4096 {
                return bad(format!("too many classes for distinct markers: {k}"));
            }
            let markers = separable_markers(k, &mut rng);
            (0..params.n)
                .map(|_| {
                    let label = rng.gen_range(0..k);
                    let mut payload: Vec<u8> =
                        (0..rng.gen_range(params.min_len..=params.max_len)).map(|_| rng.gen()).collect();
                    let at = rng.gen_range(0..=payload.len());
                    payload.splice(at..at, markers[label].iter().copied());
                    Sample::new(label as u32, payload)
                })
                .collect()
        }
        SyntheticKind::DnaUniform => (0..params.n)
            .map(|_| {
                let label = rng.gen_range(0..k) as u32;
                let len = rng.gen_range(params.min_len..=params.max_len);
                Sample::new(label, random_dna(len, &mut rng))
            })
            .collect(),
        SyntheticKind::DnaMotif => {
            let l = params.motif_len;
            if !(8..=16).contains(&l) {
                return bad(format!("motif length must be in 8..=16, got {l}"));
            }
            if params.min_len < l {
                return bad(format!("min_len {} is shorter than the motif ({l})", params.min_len));
            }
            if k > 1000 {
                return bad(format!("too many classes for distinct motifs: {k}"));
            }
            let motifs = balanced_motifs(k, l, &mut rng);
            (0..params.n)
                .map(|_| {
                    let label = rng.gen_range(0..k);
                    let mut payload = random_dna(rng.gen_range(params.min_len..=params.max_len), &mut rng);
                    let at = rng.gen_range(0..=payload.len() - l);
                    payload[at..at + l].copy_from_slice(&motifs[label]);
                    Sample::new(label as u32, payload)
                })
                .collect()
        }
    };
    Dataset::new(
        k,
        samples,
        Provenance {
            source: format!("synthetic:{kind}:seed={seed}"),
            format: "synthetic".into(),
            codec: None,
        },
    )
}

fn random_dna(len: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..len).map(|_| NUCLEOTIDES[rng.gen_range(0..4)]).collect()
}

/// Random byte markers of length 4..=8 that share no 4-byte window.
fn separable_markers(k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let mut seen: HashMap<[u8; 4], usize> = HashMap::new();
    let mut markers = Vec::with_capacity(k);
    while markers.len() < k {
        let len = rng.gen_range(4..=8);
        let m: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let windows: Vec<[u8; 4]> = m.windows(4).map(|w| w.try_into().unwrap()).collect();
        if windows.iter().any(|w| seen.contains_key(w)) {
            continue;
        }
        for w in windows {
            seen.insert(w, markers.len());
        }
        markers.push(m);
    }
    markers
}

/// Distinct motifs that are permutations of one fixed, balanced multiset of
/// nucleotides, so single-nucleotide counts carry no class information.
fn balanced_motifs(k: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u8>> {
    let base: Vec<u8> = (0..len).map(|i| NUCLEOTIDES[i % 4]).collect();
    let mut motifs: Vec<Vec<u8>> = Vec::with_capacity(k);
    while motifs.len() < k {
        let mut m = base.clone();
        m.shuffle(rng);
        if !motifs.contains(&m) {
            motifs.push(m);
        }
    }
    motifs
}
