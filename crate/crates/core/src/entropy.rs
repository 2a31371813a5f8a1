//! Zero-run RLE, canonical Huffman coding and the `AALW` container.
//!
//! Container layout, multi-byte integers little-endian:
//!
//! ```text
//! "AALW" | version u8 = 1 | M u16 | segment_count u32 | original_sample_count u64
//! | pad_length u8 | mu u8 | alpha f32 | token_count u64 | table_size u16
//! | table_size x (zigzag-varint symbol, u8 code length)
//! | payload_bit_count u64 | payload bytes | CRC-32 of all preceding bytes u32
//! ```
//!
//! Literals and run counts share one Huffman alphabet; the RLE grammar tells
//! them apart.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AALW";
pub const STREAM_VERSION: u8 = 1;
pub const MAX_RUN: i32 = 255;
pub const MAX_CODE_LEN: u8 = 32;

/// Replaces each maximal zero run by `[0, n]`, splitting runs longer than 255.
pub fn rle_encode(q: &[i32]) -> Vec<i32> {
    let mut out = Vec::with_capacity(q.len());
    let mut run = 0i32;
    let flush = |out: &mut Vec<i32>, run: &mut i32| {
        if *run > 0 {
            out.extend_from_slice(&[0, *run]);
            *run = 0;
        }
    };
    for &v in q {
        if v == 0 {
            run += 1;
            if run == MAX_RUN {
                flush(&mut out, &mut run);
            }
        } else {
            flush(&mut out, &mut run);
            out.push(v);
        }
    }
    flush(&mut out, &mut run);
    out
}

pub fn rle_decode(tokens: &[i32]) -> Result<Vec<i32>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut it = tokens.iter();
    while let Some(&t) = it.next() {
        if t != 0 {
            out.push(t);
            continue;
        }
        let &n = it.next().ok_or(Error::DanglingZero)?;
        if !(1..=MAX_RUN).contains(&n) {
            return Err(Error::BadRunCount(n));
        }
        out.extend(std::iter::repeat_n(0, n as usize));
    }
    Ok(out)
}

/// Canonical prefix code: symbols sorted by `(length, symbol)` receive
/// consecutive code values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeTable {
    /// `(symbol, length)` in canonical order.
    entries: Vec<(i32, u8)>,
    codes: BTreeMap<i32, (u32, u8)>,
}

impl CodeTable {
    /// Rebuilds a table from `(symbol, length)` pairs alone.
    pub fn from_lengths(pairs: &[(i32, u8)]) -> Result<Self> {
        let mut entries = pairs.to_vec();
        entries.sort_by_key(|&(s, l)| (l, s));
        let mut kraft: u64 = 0;
        for &(s, l) in &entries {
            if !(1..=MAX_CODE_LEN).contains(&l) {
                return Err(Error::InvalidTable(format!("symbol {s} has code length {l}")));
            }
            kraft += 1u64 << (MAX_CODE_LEN - l);
        }
        if entries.len() > 1 && kraft > 1u64 << MAX_CODE_LEN {
            return Err(Error::InvalidTable("code lengths violate the Kraft inequality".into()));
        }
        if entries.iter().map(|e| e.0).collect::<std::collections::BTreeSet<_>>().len() != entries.len() {
            return Err(Error::InvalidTable("duplicate symbol".into()));
        }

        let mut codes = BTreeMap::new();
        let mut code: u64 = 0;
        let mut prev_len = entries.first().map_or(0, |e| e.1);
        for &(s, l) in &entries {
            code <<= l - prev_len;
            prev_len = l;
            codes.insert(s, (code as u32, l));
            code += 1;
        }
        Ok(Self { entries, codes })
    }

    pub fn entries(&self) -> &[(i32, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(code, length)` of a symbol.
    pub fn code(&self, symbol: i32) -> Option<(u32, u8)> {
        self.codes.get(&symbol).copied()
    }

    pub fn code_length(&self, symbol: i32) -> Option<u8> {
        self.code(symbol).map(|c| c.1)
    }
}

/// Huffman code lengths for a frequency map. Ties are broken towards the
/// subtree holding the smaller symbol.
fn huffman_lengths(freqs: &BTreeMap<i32, u64>) -> Vec<(i32, u8)> {
    let symbols: Vec<i32> = freqs.keys().copied().collect();
    if symbols.len() == 1 {
        return vec![(symbols[0], 1)];
    }
    // Node ids: leaves 0..n in symbol order, internal nodes after.
    let n = symbols.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize, usize)>> = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| Reverse((freqs[s], i, i)))
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((w1, r1, a)) = heap.pop().expect("heap has two nodes");
        let Reverse((w2, r2, b)) = heap.pop().expect("heap has two nodes");
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((w1 + w2, r1.min(r2), next)));
        next += 1;
    }
    symbols
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut depth = 0u32;
            let mut node = i;
            while parent[node] != usize::MAX {
                node = parent[node];
                depth += 1;
            }
            (s, depth.min(u8::MAX as u32) as u8)
        })
        .collect()
}

/// Builds an optimal canonical code from token frequencies. Lengths are capped
/// at 32 by repeatedly halving the frequencies.
pub fn build_code_table(tokens: &[i32]) -> Result<CodeTable> {
    if tokens.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut freqs: BTreeMap<i32, u64> = BTreeMap::new();
    for &t in tokens {
        *freqs.entry(t).or_default() += 1;
    }
    loop {
        let lengths = huffman_lengths(&freqs);
        if lengths.iter().all(|&(_, l)| l <= MAX_CODE_LEN) {
            return CodeTable::from_lengths(&lengths);
        }
        for f in freqs.values_mut() {
            *f = (*f / 2).max(1);
        }
    }
}

/// Byte buffer with an exact bit length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Payload {
    pub bytes: Vec<u8>,
    pub bit_count: u64,
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    bit_count: u64,
}

impl BitWriter {
    fn write(&mut self, code: u32, len: u8) {
        for i in (0..len).rev() {
            let bit = (code >> i) & 1;
            if self.bit_count.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                let last = self.bytes.last_mut().expect("byte pushed");
                *last |= 0x80 >> (self.bit_count % 8);
            }
            self.bit_count += 1;
        }
    }
}

/// Concatenates canonical codes MSB-first, zero-padding the last byte.
pub fn entropy_encode(tokens: &[i32], table: &CodeTable) -> Result<Payload> {
    let mut w = BitWriter::default();
    for &t in tokens {
        let (code, len) = table.code(t).ok_or(Error::UnknownSymbol(t))?;
        w.write(code, len);
    }
    Ok(Payload {
        bytes: w.bytes,
        bit_count: w.bit_count,
    })
}

pub fn entropy_decode(payload: &Payload, table: &CodeTable, token_count: usize) -> Result<Vec<i32>> {
    if payload.bit_count > payload.bytes.len() as u64 * 8 {
        return Err(Error::Truncated("payload shorter than its bit count".into()));
    }
    let max_len = table.entries.last().map_or(0, |e| e.1) as usize;
    // first code value and first entry index per code length
    let mut first_code = vec![0u64; max_len + 2];
    let mut first_index = vec![0usize; max_len + 2];
    let mut count = vec![0usize; max_len + 2];
    for &(_, l) in &table.entries {
        count[l as usize] += 1;
    }
    let mut code = 0u64;
    let mut index = 0usize;
    for l in 1..=max_len {
        code = (code + count[l - 1] as u64) << 1;
        first_code[l] = code;
        first_index[l] = index;
        index += count[l];
    }
    let mut out = Vec::with_capacity(token_count);
    let mut pos = 0u64;
    while out.len() < token_count {
        let mut code = 0u64;
        let mut len = 0usize;
        loop {
            if pos >= payload.bit_count {
                return Err(Error::BitsExhausted {
                    decoded: out.len(),
                    expected: token_count,
                });
            }
            let byte = payload.bytes[(pos / 8) as usize];
            let bit = (byte >> (7 - pos % 8)) & 1;
            pos += 1;
            code = (code << 1) | bit as u64;
            len += 1;
            if count[len] > 0 && code >= first_code[len] && code - first_code[len] < count[len] as u64 {
                let idx = first_index[len] + (code - first_code[len]) as usize;
                out.push(table.entries[idx].0);
                break;
            }
            if len >= max_len {
                return Err(Error::InvalidPrefix);
            }
        }
    }
    Ok(out)
}

/// Fixed header fields of a compressed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub segment_len: u16,
    pub segment_count: u32,
    pub original_sample_count: u64,
    pub pad_length: u8,
    pub mu: u8,
    pub alpha: f32,
}

impl StreamHeader {
    /// Header for `sample_count` samples cut into segments of length `m`.
    pub fn for_record(sample_count: usize, m: usize, mu: u8, alpha: f32) -> Result<Self> {
        if !(2..=255).contains(&m) {
            return Err(Error::InvalidArgument(format!("segment length must lie in 2..=255, got {m}")));
        }
        let segment_count = sample_count.div_ceil(m);
        let h = Self {
            segment_len: m as u16,
            segment_count: u32::try_from(segment_count)
                .map_err(|_| Error::InvalidArgument("too many segments".into()))?,
            original_sample_count: sample_count as u64,
            pad_length: (segment_count * m - sample_count) as u8,
            mu,
            alpha,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        let m = self.segment_len as u64;
        if m < 2 {
            return Err(Error::Inconsistent(format!("segment length {m}")));
        }
        if self.original_sample_count.div_ceil(m) != self.segment_count as u64 {
            return Err(Error::Inconsistent(format!(
                "{} samples do not fill {} segments of {m}",
                self.original_sample_count, self.segment_count
            )));
        }
        if self.segment_count as u64 * m - self.original_sample_count != self.pad_length as u64 {
            return Err(Error::Inconsistent(format!("pad length {}", self.pad_length)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Inconsistent(format!("alpha {}", self.alpha)));
        }
        Ok(())
    }

    pub fn latent_count(&self) -> usize {
        self.segment_count as usize * self.segment_len as usize
    }
}

/// A serialized container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
}

impl Bitstream {
    pub fn bit_len(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

fn zigzag(v: i32) -> u32 {
    ((v << 1) ^ (v >> 31)) as u32
}

fn unzigzag(v: u32) -> i32 {
    ((v >> 1) as i32) ^ -((v & 1) as i32)
}

fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn varint(&mut self, what: &str) -> Result<u32> {
        let mut v: u64 = 0;
        for shift in (0..35).step_by(7) {
            let b = self.u8(what)?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(v).map_err(|_| Error::Inconsistent(format!("{what} overflows")));
            }
        }
        Err(Error::Inconsistent(format!("{what} varint too long")))
    }
}

/// Serializes per-segment quantized latents into a container.
pub fn pack_stream(header: &StreamHeader, latents: &[Vec<i32>]) -> Result<Bitstream> {
    header.validate()?;
    if latents.len() != header.segment_count as usize {
        return Err(Error::Inconsistent(format!(
            "header announces {} segments, got {}",
            header.segment_count,
            latents.len()
        )));
    }
    if let Some(bad) = latents.iter().find(|l| l.len() != header.segment_len as usize) {
        return Err(Error::DimensionMismatch {
            expected: header.segment_len as usize,
            got: bad.len(),
        });
    }
    let flat: Vec<i32> = latents.iter().flatten().copied().collect();
    let tokens = rle_encode(&flat);
    let (table, payload) = if tokens.is_empty() {
        (CodeTable::from_lengths(&[])?, Payload::default())
    } else {
        let t = build_code_table(&tokens)?;
        let p = entropy_encode(&tokens, &t)?;
        (t, p)
    };

    let mut out = Vec::with_capacity(64 + payload.bytes.len() + 3 * table.len());
    out.extend_from_slice(MAGIC);
    out.push(STREAM_VERSION);
    out.extend_from_slice(&header.segment_len.to_le_bytes());
    out.extend_from_slice(&header.segment_count.to_le_bytes());
    out.extend_from_slice(&header.original_sample_count.to_le_bytes());
    out.push(header.pad_length);
    out.push(header.mu);
    out.extend_from_slice(&header.alpha.to_le_bytes());
    out.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
    let table_size = u16::try_from(table.len())
        .map_err(|_| Error::InvalidTable(format!("{} symbols exceed the table limit", table.len())))?;
    out.extend_from_slice(&table_size.to_le_bytes());
    for &(s, l) in table.entries() {
        put_varint(&mut out, zigzag(s));
        out.push(l);
    }
    out.extend_from_slice(&payload.bit_count.to_le_bytes());
    out.extend_from_slice(&payload.bytes);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(Bitstream { bytes: out })
}

/// Parses and verifies a container, returning the header and per-segment latents.
pub fn unpack_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<Vec<i32>>)> {
    if bytes.len() < 5 {
        return Err(Error::Truncated("stream shorter than its preamble".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes[4] != STREAM_VERSION {
        return Err(Error::BadVersion(bytes[4] as u32));
    }
    if bytes.len() < 9 {
        return Err(Error::Truncated("stream missing its checksum".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 5 };
    let header = StreamHeader {
        segment_len: u16::from_le_bytes(r.array("segment length")?),
        segment_count: u32::from_le_bytes(r.array("segment count")?),
        original_sample_count: u64::from_le_bytes(r.array("sample count")?),
        pad_length: r.u8("pad length")?,
        mu: r.u8("mu")?,
        alpha: f32::from_le_bytes(r.array("alpha")?),
    };
    header.validate()?;
    let token_count = u64::from_le_bytes(r.array("token count")?);
    let table_size = u16::from_le_bytes(r.array("table size")?);
    let mut pairs = Vec::with_capacity(table_size as usize);
    for _ in 0..table_size {
        let s = unzigzag(r.varint("table symbol")?);
        let l = r.u8("code length")?;
        pairs.push((s, l));
    }
    let table = CodeTable::from_lengths(&pairs)?;
    let bit_count = u64::from_le_bytes(r.array("payload bit count")?);
    let payload_len = usize::try_from(bit_count.div_ceil(8))
        .map_err(|_| Error::Inconsistent("payload size".into()))?;
    let payload_bytes = r.take(payload_len, "payload")?;
    if r.pos != body.len() {
        return Err(Error::Inconsistent(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let expected = header.latent_count();
    // A lone zero costs two tokens; nothing costs more.
    if token_count > 2 * expected as u64 {
        return Err(Error::Inconsistent(format!("{token_count} tokens for {expected} latents")));
    }
    if token_count > 0 && table.is_empty() {
        return Err(Error::Inconsistent("tokens present but code table is empty".into()));
    }
    let payload = Payload {
        bytes: payload_bytes.to_vec(),
        bit_count,
    };
    let tokens = entropy_decode(&payload, &table, token_count as usize)?;
    let flat = rle_decode(&tokens)?;
    if flat.len() != expected {
        return Err(Error::Inconsistent(format!(
            "decoded {} latents, header expects {expected}",
            flat.len()
        )));
    }
    let m = header.segment_len as usize;
    let latents = flat.chunks(m).map(<[i32]>::to_vec).collect();
    Ok((header, latents))
}
