//! Synthetic field generation, domain partitioning, and raw ingestion.
//!
//! Fields are superpositions of 64 random cosine modes whose amplitudes
//! decay with wavenumber; the decay exponent dials compressibility from
//! noise-like (0) to very smooth (3+). Trigonometry goes through a fixed
//! polynomial recipe so outputs are bit-identical across platforms, and
//! accumulation happens in f64 with a single final rounding to f32.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{Dims, FieldValues, Scalar};
use crate::error::{Error, Result};

pub const MODE_COUNT: usize = 64;
const MAX_WAVENUMBER: u64 = 12;

/// Recipe for one synthetic field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub dims: Dims,
    /// Spectral decay exponent; higher means smoother and more
    /// compressible.
    pub decay: f64,
    pub value_range: (f64, f64),
    pub seed: u64,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, dims: Dims, decay: f64, value_range: (f64, f64), seed: u64) -> Result<Self> {
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(Error::invalid(format!("decay exponent must be >= 0, got {decay}")));
        }
        if !(value_range.1 > value_range.0) || !value_range.0.is_finite() || !value_range.1.is_finite() {
            return Err(Error::invalid(format!(
                "value range must be a proper interval, got [{}, {}]",
                value_range.0, value_range.1
            )));
        }
        Ok(FieldSpec { name: name.into(), dims, decay, value_range, seed })
    }
}

/// Generate the global field for a spec. Deterministic per seed.
pub fn gen_smooth_field(spec: &FieldSpec) -> Result<Vec<f32>> {
    let [d0, d1, d2] = spec.dims.extents();
    let n = spec.dims.product();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    struct Mode {
        amplitude: f64,
        // Per-axis (cos, sin) tables of the mode's phase angle; the random
        // phase offset is folded into the last axis.
        x: Vec<(f64, f64)>,
        y: Vec<(f64, f64)>,
        z: Vec<(f64, f64)>,
    }

    let axis_table = |len: usize, k: u64, phase_turns: f64| -> Vec<(f64, f64)> {
        (0..len)
            .map(|i| {
                let turns = k as f64 * i as f64 / len as f64 + phase_turns;
                cos_sin_turns(turns)
            })
            .collect()
    };

    let mut modes = Vec::with_capacity(MODE_COUNT);
    for _ in 0..MODE_COUNT {
        let mut k = |d: usize| if d > 1 { rng.gen_range(1..=MAX_WAVENUMBER.min(d as u64)) } else { 0 };
        let (kx, ky, kz) = (k(d0), k(d1), k(d2));
        let base: f64 = rng.gen_range(0.5..1.0);
        let phase: f64 = rng.gen_range(0.0..1.0);
        let k_mag = (((kx * kx + ky * ky + kz * kz) as f64).sqrt()).max(1.0);
        let amplitude = base / k_mag.powf(spec.decay);
        modes.push(Mode {
            amplitude,
            x: axis_table(d0, kx, 0.0),
            y: axis_table(d1, ky, 0.0),
            z: axis_table(d2, kz, phase),
        });
    }

    let mut raw = Vec::with_capacity(n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d0 {
        for j in 0..d1 {
            for k in 0..d2 {
                let mut sum = 0.0f64;
                for m in &modes {
                    let (cx, sx) = m.x[i];
                    let (cy, sy) = m.y[j];
                    let (cz, sz) = m.z[k];
                    // cos(a + b + c) expanded over the per-axis tables.
                    let cyz = cy * cz - sy * sz;
                    let syz = sy * cz + cy * sz;
                    sum += m.amplitude * (cx * cyz - sx * syz);
                }
                lo = lo.min(sum);
                hi = hi.max(sum);
                raw.push(sum);
            }
        }
    }

    let (target_lo, target_hi) = spec.value_range;
    let span = hi - lo;
    let scale = if span > 0.0 { (target_hi - target_lo) / span } else { 0.0 };
    Ok(raw.into_iter().map(|v| ((v - lo) * scale + target_lo) as f32).collect())
}

/// Cosine and sine of `2*pi*turns`, via exact-period quadrant folding and
/// fixed Taylor polynomials. Every step is plain f64 arithmetic, so the
/// result is identical on any IEEE-754 platform.
fn cos_sin_turns(turns: f64) -> (f64, f64) {
    let t = turns - turns.floor();
    // Map to [-0.5, 0.5) turns, then fold to an eighth of a period.
    let t = if t >= 0.5 { t - 1.0 } else { t };
    let quadrant = (t * 4.0).round();
    let r = (t - quadrant * 0.25) * (2.0 * PI_LITERAL);
    let (c, s) = (cos_poly(r), sin_poly(r));
    match quadrant as i32 {
        0 => (c, s),
        1 => (-s, c),
        -1 => (s, -c),
        _ => (-c, -s),
    }
}

const PI_LITERAL: f64 = std::f64::consts::PI;

fn cos_poly(x: f64) -> f64 {
    let x2 = x * x;
    // 1 - x^2/2! + x^4/4! - ... - x^14/14!; |x| <= pi/4 keeps the
    // truncation below 3e-16.
    let mut acc = -1.0 / 87_178_291_200.0;
    acc = acc * x2 + 1.0 / 479_001_600.0;
    acc = acc * x2 - 1.0 / 3_628_800.0;
    acc = acc * x2 + 1.0 / 40_320.0;
    acc = acc * x2 - 1.0 / 720.0;
    acc = acc * x2 + 1.0 / 24.0;
    acc = acc * x2 - 1.0 / 2.0;
    acc * x2 + 1.0
}

fn sin_poly(x: f64) -> f64 {
    let x2 = x * x;
    // x - x^3/3! + x^5/5! - ... + x^15/15!
    let mut acc = 1.0 / 1_307_674_368_000.0;
    acc = acc * x2 - 1.0 / 6_227_020_800.0;
    acc = acc * x2 + 1.0 / 39_916_800.0;
    acc = acc * x2 - 1.0 / 362_880.0;
    acc = acc * x2 + 1.0 / 5_040.0;
    acc = acc * x2 - 1.0 / 120.0;
    acc = acc * x2 + 1.0 / 6.0;
    (acc * x2 - 1.0) * -x
}

/// One rank's block of the global domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockExtent {
    pub origin: [usize; 3],
    pub dims: Dims,
}

/// Split the domain across `ranks` into near-cuboid blocks tiling it
/// exactly; per axis, block extents differ by at most one cell.
pub fn partition_domain(dims: Dims, ranks: u32) -> Result<Vec<BlockExtent>> {
    if ranks == 0 {
        return Err(Error::invalid("need at least one rank"));
    }
    let total = dims.product() as u64;
    if ranks as u64 > total {
        return Err(Error::invalid(format!(
            "cannot split {total} cells across {ranks} ranks"
        )));
    }
    let [d0, d1, d2] = dims.extents();
    let r = ranks as usize;

    // Enumerate factorizations r = p0*p1*p2 with p_axis <= extent and pick
    // the one whose block sides are most cube-like.
    let mut best: Option<([usize; 3], f64)> = None;
    for p0 in 1..=r {
        if r % p0 != 0 || p0 > d0 {
            continue;
        }
        let rest = r / p0;
        for p1 in 1..=rest {
            if rest % p1 != 0 || p1 > d1 {
                continue;
            }
            let p2 = rest / p1;
            if p2 > d2 {
                continue;
            }
            let block = [d0.div_ceil(p0), d1.div_ceil(p1), d2.div_ceil(p2)];
            let longest = *block.iter().max().unwrap() as f64;
            let shortest = *block.iter().min().unwrap() as f64;
            let score = longest / shortest;
            let candidate = ([p0, p1, p2], score);
            best = match best {
                None => Some(candidate),
                Some((grid, s)) if score < s - 1e-12 => {
                    let _ = grid;
                    Some(candidate)
                }
                other => other,
            };
        }
    }
    let ([p0, p1, p2], _) =
        best.ok_or_else(|| Error::invalid(format!("{ranks} ranks do not tile dims {dims}")))?;

    let cuts = |d: usize, p: usize| -> Vec<(usize, usize)> {
        (0..p)
            .map(|i| {
                let lo = i * d / p;
                let hi = (i + 1) * d / p;
                (lo, hi - lo)
            })
            .collect()
    };
    let (c0, c1, c2) = (cuts(d0, p0), cuts(d1, p1), cuts(d2, p2));

    let mut blocks = Vec::with_capacity(r);
    for (i0, &(o0, e0)) in c0.iter().enumerate() {
        for (i1, &(o1, e1)) in c1.iter().enumerate() {
            for (i2, &(o2, e2)) in c2.iter().enumerate() {
                let _ = (i0, i1, i2);
                blocks.push(BlockExtent { origin: [o0, o1, o2], dims: Dims::new(&[e0, e1, e2])? });
            }
        }
    }
    Ok(blocks)
}

/// Copy one block out of a row-major global field.
pub fn extract_block<T: Scalar>(global: &[T], global_dims: Dims, extent: &BlockExtent) -> Vec<T> {
    let [_, g1, g2] = global_dims.extents();
    let [o0, o1, o2] = extent.origin;
    let [e0, e1, e2] = extent.dims.extents();
    let mut out = Vec::with_capacity(extent.dims.product());
    for i in 0..e0 {
        for j in 0..e1 {
            let base = ((o0 + i) * g1 + (o1 + j)) * g2 + o2;
            out.extend_from_slice(&global[base..base + e2]);
        }
    }
    out
}

/// Inverse of [`extract_block`]: place a block back into a global buffer.
pub fn place_block<T: Scalar>(global: &mut [T], global_dims: Dims, extent: &BlockExtent, values: &[T]) {
    let [_, g1, g2] = global_dims.extents();
    let [o0, o1, o2] = extent.origin;
    let [e0, e1, e2] = extent.dims.extents();
    let mut cursor = 0usize;
    for i in 0..e0 {
        for j in 0..e1 {
            let base = ((o0 + i) * g1 + (o1 + j)) * g2 + o2;
            global[base..base + e2].copy_from_slice(&values[cursor..cursor + e2]);
            cursor += e2;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    F32,
    F64,
}

impl ValueType {
    pub fn width(self) -> usize {
        match self {
            ValueType::F32 => 4,
            ValueType::F64 => 8,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(ValueType::F32),
            "f64" => Ok(ValueType::F64),
            other => Err(Error::invalid(format!("unknown value type '{other}', expected f32|f64"))),
        }
    }
}

/// Load a flat little-endian binary field.
pub fn ingest_raw(path: impl AsRef<Path>, dims: Dims, dtype: ValueType) -> Result<FieldValues> {
    let mut file = std::fs::File::open(path.as_ref())?;
    let expected = dims.product() * dtype.width();
    let actual = file.metadata()?.len();
    if actual != expected as u64 {
        return Err(Error::invalid(format!(
            "{} holds {actual} bytes but dims {dims} with {dtype:?} need {expected}",
            path.as_ref().display()
        )));
    }
    let mut bytes = Vec::with_capacity(expected);
    file.read_to_end(&mut bytes)?;
    Ok(match dtype {
        ValueType::F32 => {
            FieldValues::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        }
        ValueType::F64 => {
            FieldValues::F64(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        }
    })
}
