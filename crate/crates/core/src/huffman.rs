//! Huffman compression of byte sequences with multi-byte symbols.
//!
//! Inputs are cut into consecutive `m`-byte chunks; a trailing remainder
//! shorter than `m` becomes single-byte symbols. Codes are emitted either as
//! bits (binary tree) or as whole bytes (256-ary tree).
//!
//! Codes are canonical: symbols sorted by (code length, symbol bytes) get
//! consecutive codes. With 256-ary codes and `m = 1` every byte therefore
//! maps to itself.
//!
//! Every codec has a fallback book built from the dictionary counts plus an
//! add-one count on every single byte, so any input can be encoded. Binary
//! codecs also carry a primary book over the observed symbols only; an input
//! is encoded with it whenever all of its tokens are covered, and the frame
//! header records which book was used. Unseen bytes then cost no code space
//! on inputs that never contain them.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::model::{read_u32, read_u64};

const CODEC_MAGIC: &[u8; 4] = b"BSHF";
const CODEC_VERSION: u32 = 1;

/// Tree arity: binary codes packed as bits, or 256-ary codes emitted as bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    Bit,
    Byte,
}

impl Arity {
    pub fn radix(self) -> usize {
        match self {
            Arity::Bit => 2,
            Arity::Byte => 256,
        }
    }

    pub fn from_radix(radix: u64) -> Option<Self> {
        match radix {
            2 => Some(Arity::Bit),
            256 => Some(Arity::Byte),
            _ => None,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arity::Bit => "bit",
            Arity::Byte => "byte",
        })
    }
}

impl FromStr for Arity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bit" | "2" => Ok(Arity::Bit),
            "byte" | "256" => Ok(Arity::Byte),
            _ => Err(format!("unknown arity {s:?} (expected bit/2 or byte/256)")),
        }
    }
}

/// Arity plus symbol length, written `bit:1`, `byte:2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecSpec {
    pub arity: Arity,
    pub m: usize,
}

impl fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.arity, self.m)
    }
}

impl FromStr for CodecSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (arity, m) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <bit|byte>:<m>, got {s:?}"))?;
        let m: usize = m.parse().map_err(|_| format!("bad symbol length in {s:?}"))?;
        if m == 0 {
            return Err("symbol length must be at least 1".into());
        }
        Ok(CodecSpec {
            arity: arity.parse()?,
            m,
        })
    }
}

/// Consecutive `m`-byte chunks, then the remainder byte by byte.
pub fn tokens(input: &[u8], m: usize) -> impl Iterator<Item = &[u8]> {
    let full = input.len() / m * m;
    input[..full].chunks(m).chain(input[full..].chunks(1))
}

/// Symbol counts gathered from a corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolDictionary {
    m: usize,
    observed: BTreeMap<Vec<u8>, u64>,
}

impl SymbolDictionary {
    pub fn build<I, S>(corpus: I, m: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        if m == 0 {
            return Err(Error::InvalidConfig("symbol length m must be at least 1".into()));
        }
        let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
        for seq in corpus {
            for t in tokens(seq.as_ref(), m) {
                match counts.get_mut(t) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(t.to_vec(), 1);
                    }
                }
            }
        }
        let owned = counts.into_iter().collect();
        Ok(SymbolDictionary { m, observed: owned })
    }

    /// Dictionary from explicit observed counts. Every symbol must have length 1 or `m`.
    pub fn from_counts(m: usize, observed: BTreeMap<Vec<u8>, u64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("symbol length m must be at least 1".into()));
        }
        if let Some(bad) = observed.keys().find(|s| s.len() != 1 && s.len() != m) {
            return Err(Error::InvalidConfig(format!(
                "symbol {bad:?} has length {} (expected 1 or {m})",
                bad.len()
            )));
        }
        let observed = observed.into_iter().filter(|(_, c)| *c > 0).collect();
        Ok(SymbolDictionary { m, observed })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Counts as seen in the corpus, without the single-byte floor.
    pub fn observed(&self) -> &BTreeMap<Vec<u8>, u64> {
        &self.observed
    }

    /// Count including the add-one floor on every single byte.
    pub fn frequency(&self, symbol: &[u8]) -> u64 {
        let seen = self.observed.get(symbol).copied().unwrap_or(0);
        if symbol.len() == 1 {
            seen + 1
        } else {
            seen
        }
    }

    /// Every symbol with its floored count: all 256 single bytes plus observed `m`-byte chunks.
    pub fn frequencies(&self) -> BTreeMap<Vec<u8>, u64> {
        let mut all = self.observed.clone();
        for b in 0..=255u8 {
            *all.entry(vec![b]).or_insert(0) += 1;
        }
        all
    }
}

/// Child slot in the flattened decode tree.
const EMPTY: u32 = u32::MAX;
const LEAF: u32 = 1 << 31;

/// Prefix code over an ordered symbol list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeTree {
    radix: usize,
    /// Code digits per symbol (each digit < radix).
    codes: Vec<Vec<u8>>,
    /// `nodes * radix` child slots; node 0 is the root.
    children: Vec<u32>,
}

enum Node {
    Leaf(u32),
    Dummy,
    Internal(Vec<u32>),
}

impl CodeTree {
    /// Huffman construction over `weights` (one per symbol, in symbol order).
    ///
    /// For radix > 2 the list is padded with zero-weight dummy leaves until
    /// `(count - 1) % (radix - 1) == 0`; dummies never receive a code. Merge
    /// ties are broken by creation order: dummies first, then symbols in the
    /// given order, then internal nodes as they are created.
    pub fn build(weights: &[u64], radix: usize) -> Self {
        assert!((2..=256).contains(&radix), "radix must be in 2..=256");
        assert!(!weights.is_empty(), "cannot build a code for zero symbols");
        assert!(weights.len() < LEAF as usize, "too many symbols");

        if weights.len() == 1 {
            return CodeTree::canonical(&[1], radix).unwrap();
        }

        let mut nodes: Vec<Node> = Vec::with_capacity(weights.len() * 2);
        let mut heap = BinaryHeap::with_capacity(weights.len() + radix);
        let mut seq = 0u64;
        let mut push = |heap: &mut BinaryHeap<_>, nodes: &mut Vec<Node>, node: Node, w: u64| {
            nodes.push(node);
            heap.push(Reverse((w, seq, nodes.len() as u32 - 1)));
            seq += 1;
        };

        let mut count = weights.len();
        if radix > 2 {
            while !(count - 1).is_multiple_of(radix - 1) {
                push(&mut heap, &mut nodes, Node::Dummy, 0);
                count += 1;
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            push(&mut heap, &mut nodes, Node::Leaf(i as u32), w);
        }
        while heap.len() > 1 {
            let mut kids = Vec::with_capacity(radix);
            let mut total = 0u64;
            for _ in 0..radix {
                let Reverse((w, _, id)) = heap.pop().expect("padding guarantees full merges");
                total = total.saturating_add(w);
                kids.push(id);
            }
            push(&mut heap, &mut nodes, Node::Internal(kids), total);
        }
        let Reverse((_, _, root)) = heap.pop().unwrap();

        let mut lengths = vec![0usize; weights.len()];
        let mut stack = vec![(root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            match &nodes[id as usize] {
                Node::Leaf(sym) => lengths[*sym as usize] = depth,
                Node::Dummy => {}
                Node::Internal(kids) => stack.extend(kids.iter().map(|&k| (k, depth + 1))),
            }
        }
        CodeTree::canonical(&lengths, radix).expect("Huffman lengths satisfy the Kraft inequality")
    }

    /// Canonical code for the given lengths: symbols sorted by (length, index)
    /// receive consecutive codes. `None` if the lengths violate the Kraft
    /// inequality or one of them is zero.
    pub fn canonical(lengths: &[usize], radix: usize) -> Option<Self> {
        assert!((2..=256).contains(&radix), "radix must be in 2..=256");
        if lengths.is_empty() || lengths.contains(&0) {
            return None;
        }
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by_key(|&i| (lengths[i], i));

        let mut codes = vec![Vec::new(); lengths.len()];
        let mut code: Vec<u8> = vec![0; lengths[order[0]]];
        for (n, &sym) in order.iter().enumerate() {
            if n > 0 {
                let mut pos = code.len();
                loop {
                    if pos == 0 {
                        return None;
                    }
                    pos -= 1;
                    if (code[pos] as usize) + 1 < radix {
                        code[pos] += 1;
                        break;
                    }
                    code[pos] = 0;
                }
                code.resize(lengths[sym], 0);
            }
            codes[sym] = code.clone();
        }

        let mut children = vec![EMPTY; radix];
        for (sym, code) in codes.iter().enumerate() {
            let mut node = 0usize;
            let (last, inner) = code.split_last().unwrap();
            for &d in inner {
                let slot = node * radix + d as usize;
                node = match children[slot] {
                    EMPTY => {
                        let next = children.len() / radix;
                        children.resize(children.len() + radix, EMPTY);
                        children[slot] = next as u32;
                        next
                    }
                    c if c & LEAF != 0 => return None,
                    c => c as usize,
                };
            }
            let slot = node * radix + *last as usize;
            if children[slot] != EMPTY {
                return None;
            }
            children[slot] = LEAF | sym as u32;
        }
        Some(CodeTree {
            radix,
            codes,
            children,
        })
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn codes(&self) -> &[Vec<u8>] {
        &self.codes
    }

    pub fn code_lengths(&self) -> Vec<usize> {
        self.codes.iter().map(Vec::len).collect()
    }

    /// True if no code is a prefix of another (and all codes are non-empty).
    pub fn is_prefix_free(&self) -> bool {
        let mut sorted: Vec<&Vec<u8>> = self.codes.iter().collect();
        sorted.sort();
        sorted.iter().all(|c| !c.is_empty())
            && sorted.windows(2).all(|w| !w[1].starts_with(w[0]))
    }

    /// Walks the tree; `None` means "keep reading", `Some(Err)` an invalid path.
    #[inline]
    fn step(&self, node: &mut usize, digit: u8) -> Option<std::result::Result<usize, ()>> {
        match self.children[*node * self.radix + digit as usize] {
            EMPTY => Some(Err(())),
            c if c & LEAF != 0 => {
                *node = 0;
                Some(Ok((c & !LEAF) as usize))
            }
            c => {
                *node = c as usize;
                None
            }
        }
    }
}

/// Symbols plus their prefix code.
#[derive(Clone, Debug, PartialEq, Eq)]
struct CodeBook {
    symbols: Vec<Vec<u8>>,
    tree: CodeTree,
    chunks: HashMap<Vec<u8>, u32>,
    singles: [u32; 256],
}

impl CodeBook {
    fn build(frequencies: &BTreeMap<Vec<u8>, u64>, radix: usize) -> Option<Self> {
        if frequencies.is_empty() {
            return None;
        }
        let symbols: Vec<Vec<u8>> = frequencies.keys().cloned().collect();
        let weights: Vec<u64> = frequencies.values().copied().collect();
        let tree = CodeTree::build(&weights, radix);
        let mut chunks = HashMap::new();
        let mut singles = [EMPTY; 256];
        for (i, s) in symbols.iter().enumerate() {
            if s.len() == 1 {
                singles[s[0] as usize] = i as u32;
            } else {
                chunks.insert(s.clone(), i as u32);
            }
        }
        Some(CodeBook {
            symbols,
            tree,
            chunks,
            singles,
        })
    }

    /// Symbol ids for `input`, or `None` if some byte has no code.
    fn symbolize(&self, input: &[u8], m: usize, out: &mut Vec<u32>) -> bool {
        out.clear();
        for t in tokens(input, m) {
            if t.len() > 1 {
                if let Some(&id) = self.chunks.get(t) {
                    out.push(id);
                    continue;
                }
            }
            for &b in t {
                match self.singles[b as usize] {
                    EMPTY => return false,
                    id => out.push(id),
                }
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeTable {
    Primary,
    Fallback,
}

/// One compressed sample: header plus raw code stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Compressed {
    pub arity: Arity,
    pub m: usize,
    pub table: CodeTable,
    /// Payload length in bits (bit arity) or bytes (byte arity).
    pub len: u64,
    pub payload: Vec<u8>,
}

impl Compressed {
    /// `arity u16 | m u32 | table u8 | len u64 | payload`, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(15 + self.payload.len());
        out.extend_from_slice(&(self.arity.radix() as u16).to_le_bytes());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.push(match self.table {
            CodeTable::Primary => 0,
            CodeTable::Fallback => 1,
        });
        out.extend_from_slice(&self.len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 15 {
            return Err(Error::Corrupt("truncated header".into()));
        }
        let radix = u16::from_le_bytes([bytes[0], bytes[1]]);
        let arity = Arity::from_radix(u64::from(radix))
            .ok_or_else(|| Error::Corrupt(format!("invalid arity {radix}")))?;
        let m = u32::from_le_bytes(bytes[2..6].try_into().unwrap()) as usize;
        let table = match bytes[6] {
            0 => CodeTable::Primary,
            1 => CodeTable::Fallback,
            t => return Err(Error::Corrupt(format!("invalid code table {t}"))),
        };
        let len = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
        Ok(Compressed {
            arity,
            m,
            table,
            len,
            payload: bytes[15..].to_vec(),
        })
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    filled: u8,
    bits: u64,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            acc: 0,
            filled: 0,
            bits: 0,
        }
    }

    #[inline]
    fn push(&mut self, bit: u8) {
        self.acc = (self.acc << 1) | bit;
        self.filled += 1;
        self.bits += 1;
        if self.filled == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.filled = 0;
        }
    }

    fn finish(mut self) -> (Vec<u8>, u64) {
        if self.filled > 0 {
            self.bytes.push(self.acc << (8 - self.filled));
        }
        (self.bytes, self.bits)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanCodec {
    arity: Arity,
    dictionary: SymbolDictionary,
    primary: Option<CodeBook>,
    fallback: CodeBook,
}

impl HuffmanCodec {
    pub fn build(dictionary: SymbolDictionary, arity: Arity) -> Self {
        let radix = arity.radix();
        let primary = match arity {
            Arity::Bit => CodeBook::build(dictionary.observed(), radix),
            Arity::Byte => None,
        };
        let fallback =
            CodeBook::build(&dictionary.frequencies(), radix).expect("floor makes the dictionary non-empty");
        HuffmanCodec {
            arity,
            dictionary,
            primary,
            fallback,
        }
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn m(&self) -> usize {
        self.dictionary.m()
    }

    pub fn spec(&self) -> CodecSpec {
        CodecSpec {
            arity: self.arity,
            m: self.m(),
        }
    }

    pub fn dictionary(&self) -> &SymbolDictionary {
        &self.dictionary
    }

    fn book(&self, table: CodeTable) -> Option<&CodeBook> {
        match table {
            CodeTable::Primary => self.primary.as_ref(),
            CodeTable::Fallback => Some(&self.fallback),
        }
    }

    /// Symbol → code digits for one of the two books.
    pub fn code_table(&self, table: CodeTable) -> Option<BTreeMap<Vec<u8>, Vec<u8>>> {
        self.book(table).map(|b| {
            b.symbols
                .iter()
                .cloned()
                .zip(b.tree.codes().iter().cloned())
                .collect()
        })
    }

    pub fn code_tree(&self, table: CodeTable) -> Option<&CodeTree> {
        self.book(table).map(|b| &b.tree)
    }

    /// Code of `symbol` in the fallback book.
    pub fn fallback_code(&self, symbol: &[u8]) -> Option<&[u8]> {
        let id = if symbol.len() == 1 {
            Some(self.fallback.singles[symbol[0] as usize])
        } else {
            self.fallback.chunks.get(symbol).copied()
        }?;
        Some(&self.fallback.tree.codes()[id as usize])
    }

    pub fn encode(&self, input: &[u8]) -> Compressed {
        let m = self.m();
        let mut ids = Vec::with_capacity(input.len());
        let (table, book) = match &self.primary {
            Some(p) if p.symbolize(input, m, &mut ids) => (CodeTable::Primary, p),
            _ => {
                let ok = self.fallback.symbolize(input, m, &mut ids);
                debug_assert!(ok, "fallback book covers every byte");
                (CodeTable::Fallback, &self.fallback)
            }
        };
        let codes = book.tree.codes();
        let (payload, len) = match self.arity {
            Arity::Byte => {
                let mut out = Vec::with_capacity(ids.len());
                for &id in &ids {
                    out.extend_from_slice(&codes[id as usize]);
                }
                let len = out.len() as u64;
                (out, len)
            }
            Arity::Bit => {
                let mut w = BitWriter::new();
                for &id in &ids {
                    for &bit in &codes[id as usize] {
                        w.push(bit);
                    }
                }
                w.finish()
            }
        };
        Compressed {
            arity: self.arity,
            m,
            table,
            len,
            payload,
        }
    }

    pub fn decode(&self, compressed: &Compressed) -> Result<Vec<u8>> {
        if compressed.arity != self.arity {
            return Err(Error::Corrupt(format!(
                "arity {} does not match codec arity {}",
                compressed.arity, self.arity
            )));
        }
        if compressed.m != self.m() {
            return Err(Error::Corrupt(format!(
                "symbol length {} does not match codec m={}",
                compressed.m,
                self.m()
            )));
        }
        let book = self
            .book(compressed.table)
            .ok_or_else(|| Error::Corrupt("primary table is empty for this codec".into()))?;
        let tree = &book.tree;
        let mut out = Vec::with_capacity(compressed.payload.len() * 2);
        let mut node = 0usize;
        let emit = |digit: u8, node: &mut usize, out: &mut Vec<u8>| -> Result<()> {
            match tree.step(node, digit) {
                None => Ok(()),
                Some(Ok(sym)) => {
                    out.extend_from_slice(&book.symbols[sym]);
                    Ok(())
                }
                Some(Err(())) => Err(Error::Corrupt("invalid code in payload".into())),
            }
        };
        match self.arity {
            Arity::Byte => {
                let len = compressed.len as usize;
                if compressed.payload.len() < len {
                    return Err(Error::Corrupt("truncated payload".into()));
                }
                if compressed.payload.len() > len {
                    return Err(Error::Corrupt("trailing bytes after payload".into()));
                }
                for &b in &compressed.payload {
                    emit(b, &mut node, &mut out)?;
                }
            }
            Arity::Bit => {
                let bits = compressed.len;
                let need = bits.div_ceil(8) as usize;
                if compressed.payload.len() < need {
                    return Err(Error::Corrupt("truncated payload".into()));
                }
                if compressed.payload.len() > need {
                    return Err(Error::Corrupt("trailing bytes after payload".into()));
                }
                let pad = (need as u64 * 8 - bits) as u32;
                if pad > 0 {
                    let last = compressed.payload[need - 1];
                    if last & ((1u8 << pad) - 1) != 0 {
                        return Err(Error::Corrupt("non-zero padding bits".into()));
                    }
                }
                for i in 0..bits {
                    let byte = compressed.payload[(i / 8) as usize];
                    let bit = (byte >> (7 - (i % 8))) & 1;
                    emit(bit, &mut node, &mut out)?;
                }
            }
        }
        if node != 0 {
            return Err(Error::Corrupt("payload ends inside a code".into()));
        }
        Ok(out)
    }

    /// Total payload bytes over total input bytes; headers are not counted.
    pub fn compression_ratio<I, S>(&self, corpus: I) -> Result<f64>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let (mut before, mut after) = (0u64, 0u64);
        for s in corpus {
            let s = s.as_ref();
            before += s.len() as u64;
            after += self.encode(s).payload.len() as u64;
        }
        if before == 0 {
            return Err(Error::EmptyCorpus("compression ratio needs a non-empty corpus"));
        }
        Ok(after as f64 / before as f64)
    }

    /// Stable identifier: arity, m and a hash of the serialized codec.
    pub fn id(&self) -> String {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).expect("writing to a Vec cannot fail");
        format!("huffman-{}-m{}-{:016x}", self.arity, self.m(), fnv1a64(&bytes))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        HuffmanCodec::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// `"BSHF" | version u32 | arity u16 | m u32 | count u64 | (len u32, bytes, count u64)*`
    ///
    /// Only observed counts are stored; the trees are rebuilt on load.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CODEC_MAGIC)?;
        w.write_all(&CODEC_VERSION.to_le_bytes())?;
        w.write_all(&(self.arity.radix() as u16).to_le_bytes())?;
        w.write_all(&(self.m() as u32).to_le_bytes())?;
        let observed = self.dictionary.observed();
        w.write_all(&(observed.len() as u64).to_le_bytes())?;
        for (sym, &count) in observed {
            w.write_all(&(sym.len() as u32).to_le_bytes())?;
            w.write_all(sym)?;
            w.write_all(&count.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CODEC_MAGIC {
            return Err(Error::format("codec file", "bad magic"));
        }
        let version = read_u32(r)?;
        if version != CODEC_VERSION {
            return Err(Error::format("codec file", format!("unsupported version {version}")));
        }
        let mut radix = [0u8; 2];
        r.read_exact(&mut radix)?;
        let radix = u16::from_le_bytes(radix);
        let arity = Arity::from_radix(u64::from(radix))
            .ok_or_else(|| Error::format("codec file", format!("invalid arity {radix}")))?;
        let m = read_u32(r)? as usize;
        let count = read_u64(r)?;
        let mut observed = BTreeMap::new();
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            if len != 1 && len != m {
                return Err(Error::format("codec file", format!("symbol length {len} with m={m}")));
            }
            let mut sym = vec![0u8; len];
            r.read_exact(&mut sym)?;
            let c = read_u64(r)?;
            observed.insert(sym, c);
        }
        let dictionary = SymbolDictionary::from_counts(m, observed)?;
        Ok(HuffmanCodec::build(dictionary, arity))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dict(m: usize, corpus: &[&[u8]]) -> SymbolDictionary {
        SymbolDictionary::build(corpus.iter().copied(), m).unwrap()
    }

    #[test]
    fn dictionary_examples() {
        let d = dict(2, &[b"AAAA"]);
        assert_eq!(d.frequency(b"AA"), 2);
        let f = d.frequencies();
        assert_eq!(f.len(), 257);
        assert!((0..=255u8).all(|b| f[&vec![b]] >= 1));

        let d = dict(2, &[b"ABCDE"]);
        assert_eq!(d.observed().len(), 3);
        assert_eq!(d.frequency(b"AB"), 1);
        assert_eq!(d.frequency(b"CD"), 1);
        assert_eq!(d.frequency(b"E"), 2);
        assert_eq!(d.frequency(b"A"), 1);

        let d = dict(1, &[b"hello"]);
        let f = d.frequencies();
        assert_eq!(f.len(), 256);
        assert_eq!(f[&b"l".to_vec()], 3);
        assert_eq!(f[&b"h".to_vec()], 2);
        assert_eq!(f[&b"z".to_vec()], 1);

        assert!(SymbolDictionary::build([b"x"], 0).is_err());
    }

    #[test]
    fn canonical_codes() {
        let t = CodeTree::canonical(&[2, 1, 3, 3], 2).unwrap();
        assert_eq!(t.codes(), &[vec![1, 0], vec![0], vec![1, 1, 0], vec![1, 1, 1]]);
        let t = CodeTree::canonical(&[1, 1, 2], 3).unwrap();
        assert_eq!(t.codes(), &[vec![0], vec![1], vec![2, 0]]);
        assert!(CodeTree::canonical(&[1, 1, 1], 2).is_none());
        assert!(CodeTree::canonical(&[0, 1], 2).is_none());
        let t = CodeTree::build(&[1; 256], 256);
        assert!(t.codes().iter().enumerate().all(|(i, c)| c == &vec![i as u8]));
    }

    #[test]
    fn binary_tree_examples() {
        let t = CodeTree::build(&[2, 1, 1], 2);
        assert_eq!(t.code_lengths(), vec![1, 2, 2]);
        let t = CodeTree::build(&[5, 5, 5, 5], 2);
        assert_eq!(t.code_lengths(), vec![2, 2, 2, 2]);
        assert!(t.is_prefix_free());
        let t = CodeTree::build(&[9], 2);
        assert_eq!(t.code_lengths(), vec![1]);
    }

    #[test]
    fn byte_tree_single_level_up_to_256() {
        for n in [2usize, 17, 255, 256] {
            let weights: Vec<u64> = (1..=n as u64).collect();
            let t = CodeTree::build(&weights, 256);
            assert!(t.code_lengths().iter().all(|&l| l == 1), "n={n}");
            assert!(t.is_prefix_free());
        }
        // 257 symbols: 255 padding dummies join the two lightest symbols one level down.
        let weights: Vec<u64> = (1..=257).collect();
        let t = CodeTree::build(&weights, 256);
        let lens = t.code_lengths();
        assert_eq!(lens.iter().filter(|&&l| l == 2).count(), 2);
        assert_eq!(lens[0], 2);
        assert_eq!(lens[1], 2);
        assert!(t.is_prefix_free());
    }

    #[test]
    fn code_lengths_follow_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for radix in [2usize, 3, 256] {
            for _ in 0..50 {
                let n = rng.gen_range(2..400);
                let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..1000)).collect();
                let t = CodeTree::build(&weights, radix);
                let lens = t.code_lengths();
                assert!(t.is_prefix_free());
                for i in 0..n {
                    for j in 0..n {
                        if weights[i] > weights[j] {
                            assert!(lens[i] <= lens[j]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn encode_examples() {
        // Byte arity, m=2, few live symbols: one byte per chunk.
        let c = HuffmanCodec::build(dict(2, &[b"ACGTTGCAAC"]), Arity::Byte);
        assert!(c.code_table(CodeTable::Primary).is_none());
        let e = c.encode(b"ACGTGT");
        assert_eq!(e.table, CodeTable::Fallback);
        assert_eq!(e.payload.len(), 3);
        assert_eq!(c.decode(&e).unwrap(), b"ACGTGT");
        let e = c.encode(b"ACT");
        assert_eq!(e.payload.len(), 2);
        assert_eq!(c.decode(&e).unwrap(), b"ACT");

        // Bit arity: an odd length needs a single 'T', which the primary book lacks.
        let c = HuffmanCodec::build(dict(2, &[b"ACGTTGCAAC"]), Arity::Bit);
        assert_eq!(c.encode(b"ACGTGT").table, CodeTable::Primary);
        let e = c.encode(b"ACT");
        assert_eq!(e.table, CodeTable::Fallback);
        assert_eq!(c.decode(&e).unwrap(), b"ACT");

        // One repeated byte, bit arity: one bit per byte.
        let c = HuffmanCodec::build(dict(1, &[&[7u8; 800]]), Arity::Bit);
        let e = c.encode(&[7u8; 800]);
        assert_eq!(e.len, 800);
        assert_eq!(e.payload.len(), 100);
        assert_eq!(c.compression_ratio([&[7u8; 800]]).unwrap(), 0.125);
    }

    #[test]
    fn unseen_chunks_fall_back_to_single_bytes() {
        let c = HuffmanCodec::build(dict(2, &[b"ABAB", b"XY"]), Arity::Bit);
        // "BA" was never a chunk; its bytes are in the primary book only if seen alone.
        let e = c.encode(b"BAAB");
        assert_eq!(e.table, CodeTable::Fallback);
        assert_eq!(c.decode(&e).unwrap(), b"BAAB");
        let e = c.encode(b"XYAB");
        assert_eq!(e.table, CodeTable::Primary);
        assert_eq!(c.decode(&e).unwrap(), b"XYAB");
    }

    #[test]
    fn identity_like_codec() {
        let corpus: Vec<Vec<u8>> = vec![b"the quick brown fox".to_vec(), (0..=255u8).collect()];
        let c = HuffmanCodec::build(SymbolDictionary::build(&corpus, 1).unwrap(), Arity::Byte);
        assert_eq!(c.compression_ratio(&corpus).unwrap(), 1.0);
        for s in &corpus {
            assert_eq!(&c.encode(s).payload, s);
        }
        assert_eq!(c.compression_ratio([b"never seen \x00\xff"]).unwrap(), 1.0);
    }

    #[test]
    fn empty_input_roundtrips() {
        for arity in [Arity::Bit, Arity::Byte] {
            let c = HuffmanCodec::build(dict(3, &[b"abcabc"]), arity);
            let e = c.encode(b"");
            assert_eq!(e.len, 0);
            assert!(e.payload.is_empty());
            assert_eq!(c.decode(&e).unwrap(), b"");
        }
        let c = HuffmanCodec::build(dict(1, &[]), Arity::Bit);
        assert!(c.code_table(CodeTable::Primary).is_none());
        assert_eq!(c.decode(&c.encode(b"xyz")).unwrap(), b"xyz");
        assert!(c.compression_ratio([b""]).is_err());
    }

    #[test]
    fn corrupt_frames_are_rejected() {
        let c = HuffmanCodec::build(dict(1, &[b"abracadabra"]), Arity::Bit);
        let e = c.encode(b"abracadabra");
        let mut bytes = e.to_bytes();
        assert_eq!(Compressed::from_bytes(&bytes).unwrap(), e);

        bytes[0] = 7;
        assert!(matches!(Compressed::from_bytes(&bytes), Err(Error::Corrupt(_))));
        assert!(Compressed::from_bytes(&bytes[..10]).is_err());

        let byte_frame = Compressed {
            arity: Arity::Byte,
            ..e.clone()
        };
        assert!(c.decode(&byte_frame).is_err());
        let wrong_m = Compressed { m: 2, ..e.clone() };
        assert!(c.decode(&wrong_m).is_err());

        let mut truncated = e.clone();
        truncated.payload.pop();
        assert!(c.decode(&truncated).is_err());
        let mut trailing = e.clone();
        trailing.payload.push(0);
        assert!(c.decode(&trailing).is_err());
        let mut short = e.clone();
        short.len -= 1;
        // Either the padding check or the tree walk must notice.
        assert!(c.decode(&short).is_err() || c.decode(&short).unwrap() != b"abracadabra");
    }

    #[test]
    fn codec_file_roundtrip_is_deterministic() {
        let corpus: Vec<&[u8]> = vec![b"ACGTACGGTTAC", b"GGGTTTAAACCC", b"ACGT"];
        for arity in [Arity::Bit, Arity::Byte] {
            let c = HuffmanCodec::build(SymbolDictionary::build(&corpus, 2).unwrap(), arity);
            let mut bytes = Vec::new();
            c.write_to(&mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"BSHF");
            let back = HuffmanCodec::read_from(&mut bytes.as_slice()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.id(), c.id());
            let again = HuffmanCodec::build(SymbolDictionary::build(&corpus, 2).unwrap(), arity);
            assert_eq!(again.code_table(CodeTable::Fallback), c.code_table(CodeTable::Fallback));
        }
    }

    #[test]
    fn larger_symbols_compress_repetitive_data_better() {
        let words: [&[u8]; 4] = [b"ABCDEFGH", b"HGFEDCBA", b"AACCBBDD", b"QRSTUVWX"];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let corpus: Vec<Vec<u8>> = (0..100)
            .map(|_| (0..16).flat_map(|_| words[rng.gen_range(0..4)].to_vec()).collect())
            .collect();
        let ratio = |m| {
            HuffmanCodec::build(SymbolDictionary::build(&corpus, m).unwrap(), Arity::Byte)
                .compression_ratio(&corpus)
                .unwrap()
        };
        let (r2, r4, r8) = (ratio(2), ratio(4), ratio(8));
        assert_eq!(r2, 0.5);
        assert_eq!(r4, 0.25);
        assert_eq!(r8, 0.125);
        assert!(r8 <= r4 && r4 <= r2);
    }

    #[test]
    fn spec_strings() {
        let s: CodecSpec = "byte:2".parse().unwrap();
        assert_eq!(s, CodecSpec { arity: Arity::Byte, m: 2 });
        assert_eq!(s.to_string(), "byte:2");
        assert!("bit:0".parse::<CodecSpec>().is_err());
        assert!("nibble:2".parse::<CodecSpec>().is_err());
    }

    /// Minimum of sum(w_i * l_i) over all length vectors satisfying the Kraft inequality.
    fn brute_force_optimum(weights: &[u64]) -> u64 {
        let n = weights.len();
        let max_len = n.max(2) - 1;
        let mut lengths = vec![1usize; n];
        let mut best = u64::MAX;
        loop {
            let kraft: f64 = lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
            if kraft <= 1.0 {
                best = best.min(weights.iter().zip(&lengths).map(|(&w, &l)| w * l as u64).sum());
            }
            let mut i = 0;
            while i < n && lengths[i] == max_len {
                lengths[i] = 1;
                i += 1;
            }
            if i == n {
                return best;
            }
            lengths[i] += 1;
        }
    }

    fn weighted_length(t: &CodeTree, weights: &[u64]) -> u64 {
        t.code_lengths().iter().zip(weights).map(|(&l, &w)| l as u64 * w).sum()
    }

    proptest! {
        #[test]
        fn binary_codes_are_optimal(weights in proptest::collection::vec(1u64..50, 2..=6)) {
            let t = CodeTree::build(&weights, 2);
            prop_assert_eq!(weighted_length(&t, &weights), brute_force_optimum(&weights));
        }

        #[test]
        fn mean_length_within_entropy_bounds(weights in proptest::collection::vec(1u64..1000, 2..64)) {
            let t = CodeTree::build(&weights, 2);
            let total: u64 = weights.iter().sum();
            let h: f64 = weights
                .iter()
                .map(|&w| {
                    let p = w as f64 / total as f64;
                    -p * p.log2()
                })
                .sum();
            let mean = weighted_length(&t, &weights) as f64 / total as f64;
            prop_assert!(mean >= h - 1e-12 && mean < h + 1.0, "H={} L={}", h, mean);
            prop_assert!(t.is_prefix_free());
        }

        #[test]
        fn roundtrip(
            corpus in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..40), 0..6),
            input in proptest::collection::vec(any::<u8>(), 0..200),
            m in prop_oneof![Just(1usize), Just(2), Just(4), Just(8)],
            byte in any::<bool>(),
        ) {
            let arity = if byte { Arity::Byte } else { Arity::Bit };
            let c = HuffmanCodec::build(SymbolDictionary::build(&corpus, m).unwrap(), arity);
            for s in corpus.iter().map(Vec::as_slice).chain([input.as_slice()]) {
                let e = c.encode(s);
                let reparsed = Compressed::from_bytes(&e.to_bytes()).unwrap();
                prop_assert_eq!(c.decode(&reparsed).unwrap(), s);
            }
            prop_assert!(c.code_tree(CodeTable::Fallback).unwrap().is_prefix_free());
        }
    }
}
