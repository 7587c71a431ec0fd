//! Prediction-based error-bounded lossy codec.
//!
//! Three stages: first-order Lorenzo prediction from already-decoded
//! neighbors, linear quantization of the residual against the user bound,
//! and canonical Huffman coding followed by a byte-level run-length pass.
//! Residuals outside the capped code alphabet store the original value
//! verbatim, so the pointwise bound holds unconditionally.

mod huffman;
mod lorenzo;
mod quantize;
mod rle;

pub use huffman::{entropy_decode, entropy_encode};
pub use lorenzo::lorenzo_predict;
pub use quantize::{quantize_linear, reconstruct_offset, Quantized};

use crate::error::{Error, Result};
use quantize::{code_to_symbol, symbol_to_code};

pub const PAYLOAD_MAGIC: [u8; 4] = *b"OCB1";
pub const DEFAULT_MAX_QUANT_CODES: u32 = 65_536;

/// How the error bound is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// Bound in the units of the data.
    Absolute,
    /// Bound as a fraction of the partition's value range; converted to an
    /// absolute bound per partition before compressing.
    PointwiseRelative,
}

impl BoundMode {
    fn to_byte(self) -> u8 {
        match self {
            BoundMode::Absolute => 0,
            BoundMode::PointwiseRelative => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(BoundMode::Absolute),
            1 => Ok(BoundMode::PointwiseRelative),
            other => Err(Error::decode(format!("unknown bound mode byte {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundConfig {
    pub mode: BoundMode,
    pub bound: f64,
    /// Cap on the quantization-code alphabet (including the unpredictable
    /// marker). Even, so coded intervals sit symmetrically around the
    /// prediction.
    pub max_quant_codes: u32,
}

impl ErrorBoundConfig {
    pub fn absolute(bound: f64) -> Self {
        ErrorBoundConfig { mode: BoundMode::Absolute, bound, max_quant_codes: DEFAULT_MAX_QUANT_CODES }
    }

    pub fn pointwise_relative(bound: f64) -> Self {
        ErrorBoundConfig {
            mode: BoundMode::PointwiseRelative,
            bound,
            max_quant_codes: DEFAULT_MAX_QUANT_CODES,
        }
    }

    pub fn with_max_codes(mut self, max_quant_codes: u32) -> Self {
        self.max_quant_codes = max_quant_codes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(Error::invalid(format!("error bound must be positive, got {}", self.bound)));
        }
        if self.max_quant_codes < 2 || self.max_quant_codes % 2 != 0 {
            return Err(Error::invalid(format!(
                "max_quant_codes must be even and >= 2, got {}",
                self.max_quant_codes
            )));
        }
        if self.max_quant_codes > 1 << 24 {
            return Err(Error::invalid("max_quant_codes above 2^24 is not supported"));
        }
        Ok(())
    }
}

/// Up to three positive extents; missing trailing axes behave as extent 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims([usize; 3]);

impl Dims {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::invalid(format!("dims must have 1..=3 axes, got {}", dims.len())));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("dims must be positive"));
        }
        let mut d = [1usize; 3];
        d[..dims.len()].copy_from_slice(dims);
        Ok(Dims(d))
    }

    pub fn flat(n: usize) -> Result<Self> {
        Dims::new(&[n])
    }

    pub fn extents(&self) -> [usize; 3] {
        self.0
    }

    pub fn product(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    #[inline]
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.0[1] + j) * self.0[2] + k
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Floating-point element type supported by the codec.
pub trait Scalar: Copy + PartialEq + Send + Sync + 'static {
    const BITS: u8;
    const WIDTH: usize;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BITS: u8 = 32;
    const WIDTH: usize = 4;
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Scalar for f64 {
    const BITS: u8 = 64;
    const WIDTH: usize = 8;
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl FieldValues {
    pub fn len(&self) -> usize {
        match self {
            FieldValues::F32(v) => v.len(),
            FieldValues::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Original bits per value (32 or 64).
    pub fn bits_per_value(&self) -> u8 {
        match self {
            FieldValues::F32(_) => 32,
            FieldValues::F64(_) => 64,
        }
    }

    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            FieldValues::F32(v) => v[i] as f64,
            FieldValues::F64(v) => v[i],
        }
    }

    pub fn raw_bytes(&self) -> u64 {
        self.len() as u64 * (self.bits_per_value() as u64 / 8)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.raw_bytes() as usize);
        match self {
            FieldValues::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            FieldValues::F64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }
}

/// One rank's share of one named field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPartition {
    pub field_name: String,
    pub rank: u32,
    pub dims: Dims,
    pub values: FieldValues,
}

impl FieldPartition {
    pub fn new(field_name: impl Into<String>, rank: u32, dims: Dims, values: FieldValues) -> Result<Self> {
        if dims.product() != values.len() {
            return Err(Error::invalid(format!(
                "dims {} hold {} points but {} values were supplied",
                dims,
                dims.product(),
                values.len()
            )));
        }
        Ok(FieldPartition { field_name: field_name.into(), rank, dims, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn bits_per_value(&self) -> u8 {
        self.values.bits_per_value()
    }

    pub fn raw_bytes(&self) -> u64 {
        self.values.raw_bytes()
    }
}

/// Output of [`compress`]: the self-contained payload plus the statistics
/// needed by the planner and the reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlock {
    payload: Vec<u8>,
    n: u64,
    unpredictable_count: u64,
    checksum: u64,
    overhead_bytes: usize,
}

impl CompressedBlock {
    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    pub fn len(&self) -> u64 {
        self.payload.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn unpredictable_count(&self) -> u64 {
        self.unpredictable_count
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    /// Achieved bits per value over the whole payload.
    pub fn bitrate(&self) -> f64 {
        8.0 * self.payload.len() as f64 / self.n as f64
    }

    pub fn compression_ratio(&self, bits_per_value: u8) -> f64 {
        bits_per_value as f64 / self.bitrate()
    }

    /// Bytes that do not scale with the point count: magic, counters,
    /// bound, the Huffman table, length fields, and the checksum.
    pub fn overhead_bytes(&self) -> usize {
        self.overhead_bytes
    }

    /// Re-validate and adopt raw payload bytes, e.g. read back from a
    /// container file.
    pub fn from_bytes(payload: Vec<u8>) -> Result<Self> {
        let parsed = parse_payload(&payload)?;
        Ok(CompressedBlock {
            n: parsed.n,
            unpredictable_count: parsed.unpredictable_count,
            checksum: parsed.checksum,
            overhead_bytes: parsed.overhead_bytes,
            payload,
        })
    }
}

/// Compress one partition under the given bound configuration.
/// Deterministic: identical input bytes in, identical payload bytes out.
pub fn compress(p: &FieldPartition, cfg: &ErrorBoundConfig) -> Result<CompressedBlock> {
    cfg.validate()?;
    if p.n() == 0 {
        return Err(Error::invalid("cannot compress an empty partition"));
    }
    match &p.values {
        FieldValues::F32(v) => compress_impl(v, p.dims, cfg),
        FieldValues::F64(v) => compress_impl(v, p.dims, cfg),
    }
}

/// Inverse of [`compress`]. The payload is self-contained (it carries the
/// effective absolute bound), `cfg` is checked for mode agreement.
pub fn decompress(block: &CompressedBlock, cfg: &ErrorBoundConfig, dims: Dims) -> Result<FieldPartition> {
    let parsed = parse_payload(block.payload())?;
    if cfg.mode.to_byte() != parsed.mode.to_byte() {
        return Err(Error::invalid(format!(
            "bound mode mismatch: payload is {:?}, config is {:?}",
            parsed.mode, cfg.mode
        )));
    }
    if dims.product() as u64 != parsed.n {
        return Err(Error::invalid(format!(
            "dims {} disagree with payload point count {}",
            dims, parsed.n
        )));
    }
    let values = match parsed.b_ori {
        32 => FieldValues::F32(decode_values::<f32>(&parsed, block.payload(), dims)?),
        64 => FieldValues::F64(decode_values::<f64>(&parsed, block.payload(), dims)?),
        other => return Err(Error::decode(format!("unsupported original bit width {other}"))),
    };
    FieldPartition::new("", 0, dims, values)
}

/// Effective absolute bound stored in a payload, useful for verification.
pub fn payload_bound(payload: &[u8]) -> Result<f64> {
    Ok(parse_payload(payload)?.bound)
}

/// The absolute bound a partition would be compressed under: the
/// configured bound itself in absolute mode, or the configured fraction of
/// the partition's value range in pointwise-relative mode.
pub fn effective_bound(p: &FieldPartition, cfg: &ErrorBoundConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(match &p.values {
        FieldValues::F32(v) => effective_abs_bound(v, cfg),
        FieldValues::F64(v) => effective_abs_bound(v, cfg),
    })
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn effective_abs_bound<T: Scalar>(values: &[T], cfg: &ErrorBoundConfig) -> f64 {
    match cfg.mode {
        BoundMode::Absolute => cfg.bound,
        BoundMode::PointwiseRelative => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in values {
                let x = v.to_f64();
                lo = lo.min(x);
                hi = hi.max(x);
            }
            let bound = cfg.bound * (hi - lo);
            // Constant data: only exact predictions can be coded, anything
            // else falls back to verbatim storage.
            if bound > 0.0 {
                bound
            } else {
                f64::MIN_POSITIVE
            }
        }
    }
}

fn compress_impl<T: Scalar>(values: &[T], dims: Dims, cfg: &ErrorBoundConfig) -> Result<CompressedBlock> {
    for (i, v) in values.iter().enumerate() {
        if !v.to_f64().is_finite() {
            return Err(Error::UnsupportedValue(format!("non-finite value at index {i}")));
        }
    }
    let bound = effective_abs_bound(values, cfg);
    let n = values.len();
    let [d0, d1, d2] = dims.extents();

    let mut recon: Vec<T> = Vec::with_capacity(n);
    let mut symbols: Vec<u32> = Vec::with_capacity(n);
    let mut raws: Vec<u8> = Vec::new();
    let mut unpredictable = 0u64;

    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                let v = values[dims.linear(i, j, k)];
                let vf = v.to_f64();
                // Predict from *reconstructed* neighbors so the decoder,
                // which only ever sees reconstructed values, agrees.
                let pred = lorenzo_predict(&recon, dims, [i, j, k]);
                let mut coded: Option<(i64, T)> = None;
                if let Quantized::Code(q) = quantize_linear(vf - pred, bound, cfg.max_quant_codes) {
                    let cand = T::from_f64(pred + reconstruct_offset(bound, q));
                    // Guard against rounding in the target precision.
                    if (vf - cand.to_f64()).abs() <= bound {
                        coded = Some((q, cand));
                    }
                }
                match coded {
                    Some((q, cand)) => {
                        symbols.push(code_to_symbol(q) as u32);
                        recon.push(cand);
                    }
                    None => {
                        symbols.push(0);
                        unpredictable += 1;
                        v.write_le(&mut raws);
                        recon.push(v);
                    }
                }
            }
        }
    }

    let blob = entropy_encode(&symbols);
    let stream_bytes = entropy_stream_bytes(&blob)?;

    let mut payload = Vec::with_capacity(22 + blob.len() + 8 + raws.len() + 8);
    payload.extend_from_slice(&PAYLOAD_MAGIC);
    payload.extend_from_slice(&(n as u64).to_le_bytes());
    payload.push(T::BITS);
    payload.push(cfg.mode.to_byte());
    payload.extend_from_slice(&bound.to_le_bytes());
    payload.extend_from_slice(&blob);
    payload.extend_from_slice(&unpredictable.to_le_bytes());
    payload.extend_from_slice(&raws);
    let checksum = fnv1a(&payload);
    payload.extend_from_slice(&checksum.to_le_bytes());

    let overhead_bytes = payload.len() - stream_bytes - raws.len();
    Ok(CompressedBlock { payload, n: n as u64, unpredictable_count: unpredictable, checksum, overhead_bytes })
}

/// Byte length of the run-length-coded Huffman stream inside an entropy blob.
fn entropy_stream_bytes(blob: &[u8]) -> Result<usize> {
    if blob.len() < 4 {
        return Err(Error::decode("entropy blob too short"));
    }
    let tbl_len = u32::from_le_bytes(blob[..4].try_into().unwrap()) as usize;
    let at = 4 + tbl_len;
    if blob.len() < at + 8 {
        return Err(Error::decode("entropy blob too short"));
    }
    Ok(u64::from_le_bytes(blob[at..at + 8].try_into().unwrap()) as usize)
}

struct ParsedPayload {
    n: u64,
    b_ori: u8,
    mode: BoundMode,
    bound: f64,
    blob_start: usize,
    raw_start: usize,
    unpredictable_count: u64,
    checksum: u64,
    overhead_bytes: usize,
}

fn parse_payload(payload: &[u8]) -> Result<ParsedPayload> {
    const FIXED: usize = 4 + 8 + 1 + 1 + 8;
    if payload.len() < FIXED + 4 + 4 + 8 + 8 + 8 {
        return Err(Error::decode("payload truncated"));
    }
    if payload[..4] != PAYLOAD_MAGIC {
        return Err(Error::decode("bad payload magic"));
    }
    let expect = fnv1a(&payload[..payload.len() - 8]);
    let checksum = u64::from_le_bytes(payload[payload.len() - 8..].try_into().unwrap());
    if expect != checksum {
        return Err(Error::decode(format!(
            "checksum mismatch: stored {checksum:#018x}, computed {expect:#018x}"
        )));
    }

    let n = u64::from_le_bytes(payload[4..12].try_into().unwrap());
    let b_ori = payload[12];
    let mode = BoundMode::from_byte(payload[13])?;
    let bound = f64::from_le_bytes(payload[14..22].try_into().unwrap());
    if !(bound > 0.0) {
        return Err(Error::decode(format!("non-positive bound {bound} in payload")));
    }

    let blob_start = FIXED;
    let blob = &payload[blob_start..];
    let tbl_len = u32::from_le_bytes(blob[..4].try_into().unwrap()) as usize;
    let stream_at = 4 + tbl_len;
    if blob.len() < stream_at + 8 {
        return Err(Error::decode("payload truncated inside entropy section"));
    }
    let stream_len = u64::from_le_bytes(blob[stream_at..stream_at + 8].try_into().unwrap()) as usize;
    let unpred_at = blob_start + stream_at + 8 + stream_len;
    if payload.len() < unpred_at + 8 {
        return Err(Error::decode("payload truncated before raw section"));
    }
    let unpredictable_count = u64::from_le_bytes(payload[unpred_at..unpred_at + 8].try_into().unwrap());
    if unpredictable_count > n {
        return Err(Error::decode("unpredictable count exceeds point count"));
    }
    let width = match b_ori {
        32 => 4usize,
        64 => 8usize,
        other => return Err(Error::decode(format!("unsupported original bit width {other}"))),
    };
    let raw_start = unpred_at + 8;
    let raw_len = unpredictable_count as usize * width;
    let expected_len = raw_start + raw_len + 8;
    if payload.len() != expected_len {
        return Err(Error::decode(format!(
            "payload length {} does not match structure ({} expected)",
            payload.len(),
            expected_len
        )));
    }
    Ok(ParsedPayload {
        n,
        b_ori,
        mode,
        bound,
        blob_start,
        raw_start,
        unpredictable_count,
        checksum,
        overhead_bytes: payload.len() - stream_len - raw_len,
    })
}

fn decode_values<T: Scalar>(parsed: &ParsedPayload, payload: &[u8], dims: Dims) -> Result<Vec<T>> {
    let n = parsed.n as usize;
    let (symbols, _) = entropy_decode(&payload[parsed.blob_start..], n)?;
    if symbols.len() != n {
        return Err(Error::decode("symbol count mismatch"));
    }
    let raws = &payload[parsed.raw_start..payload.len() - 8];
    let [d0, d1, d2] = dims.extents();

    let mut recon: Vec<T> = Vec::with_capacity(n);
    let mut raw_cursor = 0usize;
    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                let sym = symbols[dims.linear(i, j, k)];
                if sym == 0 {
                    if raw_cursor + T::WIDTH > raws.len() {
                        return Err(Error::decode("raw value section exhausted"));
                    }
                    let v = T::read_le(&raws[raw_cursor..]);
                    raw_cursor += T::WIDTH;
                    recon.push(v);
                } else {
                    let q = symbol_to_code(sym as u64);
                    let pred = lorenzo_predict(&recon, dims, [i, j, k]);
                    recon.push(T::from_f64(pred + reconstruct_offset(parsed.bound, q)));
                }
            }
        }
    }
    if raw_cursor != raws.len() {
        return Err(Error::decode("trailing bytes in raw value section"));
    }
    Ok(recon)
}
