//! Canonical Huffman coding of quantization-code symbols followed by the
//! run-length stage. The encoded blob is self-framed:
//! table length (u32) + canonical table, stream length (u64) + stream.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::rle::{rle_decode, rle_encode};
use crate::error::{Error, Result};

const MAX_CODE_LEN: usize = 64;

/// Entropy-encode a symbol sequence. Lossless together with
/// [`entropy_decode`]; the symbol count is carried externally.
pub fn entropy_encode(symbols: &[u32]) -> Vec<u8> {
    let lengths = code_lengths(symbols);
    let codes = canonical_codes(&lengths);

    // Table: distinct count, then (symbol, length) sorted by symbol.
    let mut table = Vec::with_capacity(4 + lengths.len() * 5);
    table.extend_from_slice(&(lengths.len() as u32).to_le_bytes());
    for &(sym, len) in &lengths {
        table.extend_from_slice(&sym.to_le_bytes());
        table.push(len);
    }

    let mut bits = BitWriter::new(symbols.len());
    for &s in symbols {
        let (code, len) = codes[&s];
        bits.put(code, len);
    }
    let stream = rle_encode(&bits.finish());

    let mut out = Vec::with_capacity(4 + table.len() + 8 + stream.len());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    out.extend_from_slice(&table);
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    out.extend_from_slice(&stream);
    out
}

/// Decode exactly `n` symbols from a blob produced by [`entropy_encode`].
/// Returns the symbols and the number of blob bytes consumed.
pub fn entropy_decode(bytes: &[u8], n: usize) -> Result<(Vec<u32>, usize)> {
    let mut pos = 0usize;
    let table_len = read_u32(bytes, &mut pos)? as usize;
    if pos + table_len > bytes.len() {
        return Err(Error::decode("huffman table truncated"));
    }
    let table = &bytes[pos..pos + table_len];
    pos += table_len;

    let mut tpos = 0usize;
    let distinct = read_u32(table, &mut tpos)? as usize;
    if table_len != 4 + distinct * 5 {
        return Err(Error::decode("huffman table length mismatch"));
    }
    let mut lengths = Vec::with_capacity(distinct);
    for _ in 0..distinct {
        let sym = read_u32(table, &mut tpos)?;
        let len = table[tpos];
        tpos += 1;
        if len as usize > MAX_CODE_LEN || len == 0 {
            return Err(Error::decode(format!("invalid huffman code length {len}")));
        }
        lengths.push((sym, len));
    }

    let stream_len = read_u64(bytes, &mut pos)? as usize;
    if pos + stream_len > bytes.len() {
        return Err(Error::decode("huffman stream truncated"));
    }
    let packed = rle_decode(&bytes[pos..pos + stream_len])?;
    pos += stream_len;

    if n == 0 {
        return Ok((Vec::new(), pos));
    }
    if distinct == 0 {
        return Err(Error::decode("empty huffman table for non-empty stream"));
    }

    let decoder = CanonicalDecoder::new(&lengths)?;
    let mut reader = BitReader::new(&packed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(decoder.next(&mut reader)?);
    }
    Ok((out, pos))
}

/// Huffman code lengths per distinct symbol, sorted by symbol.
/// Ties in the merge heap break on insertion order so lengths are
/// identical across runs and platforms.
fn code_lengths(symbols: &[u32]) -> Vec<(u32, u8)> {
    if symbols.is_empty() {
        return Vec::new();
    }
    let mut freq: Vec<(u32, u64)> = Vec::new();
    {
        let mut sorted = symbols.to_vec();
        sorted.sort_unstable();
        let mut i = 0;
        while i < sorted.len() {
            let s = sorted[i];
            let mut c = 0u64;
            while i < sorted.len() && sorted[i] == s {
                c += 1;
                i += 1;
            }
            freq.push((s, c));
        }
    }

    if freq.len() == 1 {
        return vec![(freq[0].0, 1)];
    }

    // Nodes: leaves first (symbol order), then merges in creation order.
    let mut parent: Vec<usize> = vec![usize::MAX; freq.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = freq
        .iter()
        .enumerate()
        .map(|(i, &(_, c))| Reverse((c, i)))
        .collect();
    while heap.len() > 1 {
        let Reverse((ca, ia)) = heap.pop().unwrap();
        let Reverse((cb, ib)) = heap.pop().unwrap();
        let node = parent.len();
        parent.push(usize::MAX);
        parent[ia] = node;
        parent[ib] = node;
        heap.push(Reverse((ca + cb, node)));
    }

    let mut depth = vec![0u8; parent.len()];
    // Parents always have larger indices, so one reverse pass suffices.
    for i in (0..parent.len()).rev() {
        if parent[i] != usize::MAX {
            depth[i] = depth[parent[i]] + 1;
        }
    }
    freq.iter()
        .enumerate()
        .map(|(i, &(s, _))| (s, depth[i]))
        .collect()
}

/// Canonical code assignment: sort by (length, symbol), codes count up.
fn canonical_codes(lengths: &[(u32, u8)]) -> std::collections::HashMap<u32, (u64, u8)> {
    let mut order: Vec<(u8, u32)> = lengths.iter().map(|&(s, l)| (l, s)).collect();
    order.sort_unstable();
    let mut map = std::collections::HashMap::with_capacity(order.len());
    let mut code = 0u64;
    let mut prev_len = 0u8;
    for &(len, sym) in &order {
        code <<= len - prev_len;
        map.insert(sym, (code, len));
        code += 1;
        prev_len = len;
    }
    map
}

struct CanonicalDecoder {
    // Indexed by code length: first canonical code of that length, and the
    // symbols of that length in canonical order.
    first_code: [u64; MAX_CODE_LEN + 1],
    symbols: Vec<Vec<u32>>,
    max_len: usize,
}

impl CanonicalDecoder {
    fn new(lengths: &[(u32, u8)]) -> Result<Self> {
        let mut order: Vec<(u8, u32)> = lengths.iter().map(|&(s, l)| (l, s)).collect();
        order.sort_unstable();
        let max_len = order.last().map(|&(l, _)| l as usize).unwrap_or(0);
        let mut symbols: Vec<Vec<u32>> = vec![Vec::new(); max_len + 1];
        let mut first_code = [0u64; MAX_CODE_LEN + 1];
        let mut code = 0u64;
        let mut prev_len = 0u8;
        for &(len, sym) in &order {
            code <<= len - prev_len;
            if symbols[len as usize].is_empty() {
                first_code[len as usize] = code;
            }
            symbols[len as usize].push(sym);
            code += 1;
            prev_len = len;
        }
        // Kraft check: the final code must not exceed the length-`prev_len`
        // code space, otherwise the table is corrupt.
        if prev_len > 0 && code > (1u64 << prev_len.min(63)) {
            return Err(Error::decode("huffman table violates kraft inequality"));
        }
        Ok(CanonicalDecoder { first_code, symbols, max_len })
    }

    fn next(&self, reader: &mut BitReader<'_>) -> Result<u32> {
        let mut code = 0u64;
        for len in 1..=self.max_len {
            code = (code << 1) | reader.bit()? as u64;
            let bucket = &self.symbols[len];
            if !bucket.is_empty() {
                let offset = code.wrapping_sub(self.first_code[len]);
                if code >= self.first_code[len] && (offset as usize) < bucket.len() {
                    return Ok(bucket[offset as usize]);
                }
            }
        }
        Err(Error::decode("invalid huffman code word"))
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    current: u8,
    filled: u8,
}

impl BitWriter {
    fn new(hint: usize) -> Self {
        BitWriter { bytes: Vec::with_capacity(hint / 4 + 8), current: 0, filled: 0 }
    }

    fn put(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            let bit = ((code >> i) & 1) as u8;
            self.current = (self.current << 1) | bit;
            self.filled += 1;
            if self.filled == 8 {
                self.bytes.push(self.current);
                self.current = 0;
                self.filled = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.current << (8 - self.filled));
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    bit: u8,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0, bit: 0 }
    }

    fn bit(&mut self) -> Result<u8> {
        if self.pos >= self.bytes.len() {
            return Err(Error::decode("huffman bit stream exhausted"));
        }
        let b = (self.bytes[self.pos] >> (7 - self.bit)) & 1;
        self.bit += 1;
        if self.bit == 8 {
            self.bit = 0;
            self.pos += 1;
        }
        Ok(b)
    }
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    if *pos + 4 > bytes.len() {
        return Err(Error::decode("unexpected end of payload"));
    }
    let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
    *pos += 4;
    Ok(v)
}

fn read_u64(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    if *pos + 8 > bytes.len() {
        return Err(Error::decode("unexpected end of payload"));
    }
    let v = u64::from_le_bytes(bytes[*pos..*pos + 8].try_into().unwrap());
    *pos += 8;
    Ok(v)
}
