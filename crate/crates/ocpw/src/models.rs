//! Throughput models and the sampling-based compression-ratio estimator.
//!
//! Compression throughput follows a power curve of the compressed bit-rate,
//! clamped between the calibrated minimum and maximum; write time is linear
//! in the compressed size over a stable per-process write throughput. Both
//! are calibrated offline and drive the planner and the order optimizer.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::codec::{self, CompressedBlock, Dims, ErrorBoundConfig, FieldPartition, FieldValues};
use crate::error::{Error, Result};

pub const DEFAULT_PIVOT_BITRATE: f64 = 3.0;
pub const DEFAULT_WRITE_THROUGHPUT_MBPS: f64 = 400.0;
const MB: f64 = 1.0e6;

/// Calibrated throughput model. Throughputs are MB/s with MB = 1e6 bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputModel {
    /// Compression-throughput floor, hit at high bit-rates.
    pub c_min: f64,
    /// Compression-throughput ceiling, hit at and below the pivot bit-rate.
    pub c_max: f64,
    /// Shape exponent of the power curve, negative.
    pub a: f64,
    /// Stable per-process write throughput.
    pub c_thr: f64,
    /// Bit-rate at which the curve evaluates to `c_max`.
    pub pivot: f64,
}

impl Default for ThroughputModel {
    /// Reference single-core calibration of the codec family this model
    /// was designed around; good enough for simulations and order
    /// optimization when no machine-specific model file is available.
    fn default() -> Self {
        ThroughputModel {
            c_min: 101.7,
            c_max: 240.6,
            a: -1.716,
            c_thr: DEFAULT_WRITE_THROUGHPUT_MBPS,
            pivot: DEFAULT_PIVOT_BITRATE,
        }
    }
}

impl ThroughputModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_max > self.c_min) {
            return Err(Error::invalid(format!(
                "need 0 < c_min < c_max, got c_min={} c_max={}",
                self.c_min, self.c_max
            )));
        }
        if !(self.a < 0.0) {
            return Err(Error::invalid(format!("shape exponent must be negative, got {}", self.a)));
        }
        if !(self.c_thr > 0.0) {
            return Err(Error::invalid(format!("write throughput must be positive, got {}", self.c_thr)));
        }
        if !(self.pivot > 0.0) {
            return Err(Error::invalid(format!("pivot bit-rate must be positive, got {}", self.pivot)));
        }
        Ok(())
    }

    /// Predicted compression throughput (MB/s) at compressed bit-rate `b`.
    /// The raw power curve exceeds `c_max` at and below the pivot, so the
    /// value is clamped into `[c_min, c_max]`.
    pub fn compression_throughput(&self, bitrate: f64) -> f64 {
        if bitrate <= self.pivot {
            return self.c_max;
        }
        let s = (self.c_max - self.c_min) * (bitrate / self.pivot).powf(self.a) + self.c_min;
        s.clamp(self.c_min, self.c_max)
    }

    pub fn with_write_throughput(mut self, c_thr: f64) -> Self {
        self.c_thr = c_thr;
        self
    }

    /// Serialize as the flat key-value model file.
    pub fn to_key_values(&self) -> String {
        format!(
            "c_min={}\nc_max={}\na={}\nc_thr={}\npivot={}\n",
            self.c_min, self.c_max, self.a, self.c_thr, self.pivot
        )
    }

    pub fn parse_key_values(text: &str) -> Result<Self> {
        let mut model = ThroughputModel::default();
        let mut seen = [false; 5];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("model file line {} lacks '='", lineno + 1)))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| Error::invalid(format!("model file line {}: {e}", lineno + 1)))?;
            match key.trim() {
                "c_min" => {
                    model.c_min = value;
                    seen[0] = true;
                }
                "c_max" => {
                    model.c_max = value;
                    seen[1] = true;
                }
                "a" => {
                    model.a = value;
                    seen[2] = true;
                }
                "c_thr" => {
                    model.c_thr = value;
                    seen[3] = true;
                }
                "pivot" => {
                    model.pivot = value;
                    seen[4] = true;
                }
                other => return Err(Error::invalid(format!("unknown model key '{other}'"))),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("model file must define c_min, c_max, a, c_thr, pivot"));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_key_values())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_key_values(&text)
    }
}

/// Predicted wall time to compress `n` values of width `bits_per_value`
/// down to bit-rate `bitrate`.
pub fn predict_compression_time(
    model: &ThroughputModel,
    bitrate: f64,
    n: u64,
    bits_per_value: u8,
) -> Result<f64> {
    if !(bitrate > 0.0) || n == 0 {
        return Err(Error::invalid(format!(
            "compression-time prediction needs positive bitrate and count, got B={bitrate} n={n}"
        )));
    }
    model.validate()?;
    let original_bytes = bits_per_value as f64 * n as f64 / 8.0;
    Ok(original_bytes / (model.compression_throughput(bitrate) * MB))
}

/// Predicted wall time to write `n` values compressed to `bitrate` at the
/// stable write throughput `c_thr_mbps`.
pub fn predict_write_time(bitrate: f64, n: u64, c_thr_mbps: f64) -> Result<f64> {
    if !(bitrate > 0.0) || n == 0 || !(c_thr_mbps > 0.0) {
        return Err(Error::invalid(format!(
            "write-time prediction needs positive arguments, got B={bitrate} n={n} c_thr={c_thr_mbps}"
        )));
    }
    Ok(bitrate * n as f64 / 8.0 / (c_thr_mbps * MB))
}

/// One offline calibration measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub bitrate: f64,
    pub throughput_mbps: f64,
}

impl CalibrationSample {
    pub fn new(bitrate: f64, throughput_mbps: f64) -> Result<Self> {
        if !(bitrate > 0.0 && throughput_mbps > 0.0) {
            return Err(Error::invalid(format!(
                "calibration samples must be positive, got B={bitrate} S={throughput_mbps}"
            )));
        }
        Ok(CalibrationSample { bitrate, throughput_mbps })
    }
}

/// Result of fitting the compression-throughput curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFit {
    pub model: ThroughputModel,
    /// Set when the samples could not constrain the exponent (all-equal
    /// throughputs or no points past the pivot); the model falls back to
    /// a = -1.
    pub degenerate: bool,
}

/// Fit `c_min`/`c_max` to the observed extremes and the exponent by least
/// squares on the log-transformed normalized throughput. Points at or
/// below the pivot sit in the clamped region and carry no information
/// about the exponent, so they are excluded from the regression.
pub fn fit_throughput_model(samples: &[CalibrationSample]) -> Result<ModelFit> {
    fit_throughput_model_with_pivot(samples, DEFAULT_PIVOT_BITRATE)
}

pub fn fit_throughput_model_with_pivot(samples: &[CalibrationSample], pivot: f64) -> Result<ModelFit> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples(format!(
            "throughput fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let min_b = samples.iter().map(|s| s.bitrate).fold(f64::INFINITY, f64::min);
    let max_b = samples.iter().map(|s| s.bitrate).fold(f64::NEG_INFINITY, f64::max);
    if !(min_b > 0.0) || max_b / min_b < 4.0 {
        return Err(Error::TooFewSamples(format!(
            "calibration sweep must span a 4x bit-rate range, got [{min_b}, {max_b}]"
        )));
    }

    let c_min = samples.iter().map(|s| s.throughput_mbps).fold(f64::INFINITY, f64::min);
    let c_max = samples.iter().map(|s| s.throughput_mbps).fold(f64::NEG_INFINITY, f64::max);

    if c_max - c_min < 1e-9 * c_max.abs().max(1.0) {
        let model = ThroughputModel {
            c_min,
            c_max: c_min * (1.0 + 1e-6),
            a: -1.0,
            c_thr: DEFAULT_WRITE_THROUGHPUT_MBPS,
            pivot,
        };
        return Ok(ModelFit { model, degenerate: true });
    }

    // Regression through the origin: ln(norm) = a * ln(B / pivot).
    // Points at or below the pivot sit in the clamp region; points whose
    // normalized throughput is close to zero are dominated by the floor
    // anchored at the minimum observed sample. Neither constrains the
    // exponent, so both are excluded.
    let mut sum_xx = 0.0;
    let mut sum_xy = 0.0;
    let mut used = 0usize;
    for s in samples {
        if s.bitrate <= pivot {
            continue;
        }
        let norm = (s.throughput_mbps - c_min) / (c_max - c_min);
        if norm < 0.05 {
            continue;
        }
        let x = (s.bitrate / pivot).ln();
        let y = norm.min(1.0).ln();
        sum_xx += x * x;
        sum_xy += x * y;
        used += 1;
    }

    let (a, degenerate) = if used < 2 || sum_xx == 0.0 {
        (-1.0, true)
    } else {
        let a = sum_xy / sum_xx;
        if a < 0.0 {
            (a, false)
        } else {
            (-1.0, true)
        }
    };

    let model = ThroughputModel { c_min, c_max, a, c_thr: DEFAULT_WRITE_THROUGHPUT_MBPS, pivot };
    model.validate()?;
    Ok(ModelFit { model, degenerate })
}

/// Calibration samples file: one `B <float> S_MBps <float>` record per line.
pub fn write_calibration_samples(path: impl AsRef<Path>, samples: &[CalibrationSample]) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&format!("B {} S_MBps {}\n", s.bitrate, s.throughput_mbps));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_calibration_samples(path: impl AsRef<Path>) -> Result<Vec<CalibrationSample>> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "B" || parts[2] != "S_MBps" {
            return Err(Error::invalid(format!(
                "calibration line {} must read 'B <float> S_MBps <float>'",
                lineno + 1
            )));
        }
        let b: f64 = parts[1]
            .parse()
            .map_err(|e| Error::invalid(format!("calibration line {}: {e}", lineno + 1)))?;
        let s: f64 = parts[3]
            .parse()
            .map_err(|e| Error::invalid(format!("calibration line {}: {e}", lineno + 1)))?;
        samples.push(CalibrationSample::new(b, s)?);
    }
    Ok(samples)
}

/// Prediction of a partition's compressed bit-rate from a sampled
/// compression of a fraction of its points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    /// Predicted bits per value, headers amortized over the full size.
    pub bitrate_hat: f64,
    /// Fraction of points actually compressed for the estimate.
    pub sample_fraction: f64,
    /// Original bits per value over `bitrate_hat`.
    pub predicted_ratio: f64,
}

impl RatioEstimate {
    /// Predicted compressed size in bytes for `n` points.
    pub fn predicted_bytes(&self, n: u64) -> u64 {
        ((self.bitrate_hat * n as f64 / 8.0).ceil() as u64).max(1)
    }
}

// Slab sampling: a few runs of consecutive planes along the slowest axis,
// each compressed separately so prediction never crosses a sampling gap.
// Every slab is compressed twice, full and half thickness at the same
// start; their size difference prices the trailing planes alone. The
// half-slab shares the full slab's opening planes, so the cold-start
// plane and its Huffman-table dilution cancel out of the difference.
const SLAB_PLANES: usize = 6;
const MIN_SAMPLE_VALUES: usize = 512;

/// Estimate a partition's compressed bit-rate by compressing a strided
/// sample of roughly `sample_fraction` of its points with the real codec.
/// Cost is proportional to the fraction; partitions smaller than one
/// sample block fall back to exact full compression.
pub fn estimate_ratio(
    partition: &FieldPartition,
    cfg: &ErrorBoundConfig,
    sample_fraction: f64,
) -> Result<RatioEstimate> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "sample fraction must lie in (0, 1], got {sample_fraction}"
        )));
    }
    let n = partition.n();
    let b_ori = partition.bits_per_value() as f64;

    if sample_fraction >= 1.0 || n < MIN_SAMPLE_VALUES {
        let block = codec::compress(partition, cfg)?;
        let bitrate = block.bitrate();
        return Ok(RatioEstimate { bitrate_hat: bitrate, sample_fraction: 1.0, predicted_ratio: b_ori / bitrate });
    }

    // Sample at the bound the full partition would be compressed under; a
    // slab's own value range is narrower and would skew relative mode.
    let cfg = &ErrorBoundConfig {
        mode: crate::codec::BoundMode::Absolute,
        bound: codec::effective_bound(partition, cfg)?,
        max_quant_codes: cfg.max_quant_codes,
    };

    let [d0, d1, d2] = partition.dims.extents();
    let plane = d1 * d2;
    if plane > 1 && d0 < 4 {
        // Too shallow to carve slabs along axis 0.
        let block = codec::compress(partition, cfg)?;
        let bitrate = block.bitrate();
        return Ok(RatioEstimate { bitrate_hat: bitrate, sample_fraction: 1.0, predicted_ratio: b_ori / bitrate });
    }
    // Slabs thick enough to hold at least MIN_SAMPLE_VALUES points each.
    let thickness = SLAB_PLANES.max(MIN_SAMPLE_VALUES.div_ceil(plane)).min(d0);
    let context = (thickness / 2).max(1);
    let want_planes = ((sample_fraction * d0 as f64).round() as usize).max(1);
    let slab_count = (want_planes / thickness).clamp(1, d0 / thickness);

    let slice_values = |lo: usize, hi: usize| match &partition.values {
        FieldValues::F32(v) => FieldValues::F32(v[lo..hi].to_vec()),
        FieldValues::F64(v) => FieldValues::F64(v[lo..hi].to_vec()),
    };
    let compress_planes = |start: usize, planes: usize| -> Result<(f64, usize)> {
        let dims = Dims::new(&[planes, d1, d2])?;
        let lo = start * plane;
        let hi = (start + planes) * plane;
        let part =
            FieldPartition::new(partition.field_name.clone(), partition.rank, dims, slice_values(lo, hi))?;
        let block = codec::compress(&part, cfg)?;
        Ok(((block.payload().len() - block.overhead_bytes()) as f64, block.overhead_bytes()))
    };

    let mut scaling_bytes = 0.0f64;
    let mut overhead_sum = 0usize;
    let mut sampled_points = 0usize;
    let mut charged_points = 0usize;
    for s in 0..slab_count {
        // Evenly spaced slab starts; integer arithmetic keeps this exact.
        let start = if slab_count == 1 {
            (d0 - thickness) / 2
        } else {
            s * (d0 - thickness) / (slab_count - 1)
        };
        let (full_scaling, full_overhead) = compress_planes(start, thickness)?;
        overhead_sum += full_overhead;
        sampled_points += thickness * plane;

        if plane > 1 && thickness > context {
            let (ctx_scaling, _) = compress_planes(start, context)?;
            sampled_points += context * plane;
            let marginal = full_scaling - ctx_scaling;
            if marginal > 0.0 {
                scaling_bytes += marginal;
                charged_points += (thickness - context) * plane;
            } else {
                scaling_bytes += full_scaling;
                charged_points += thickness * plane;
            }
        } else {
            scaling_bytes += full_scaling;
            charged_points += thickness * plane;
        }
    }

    let mean_overhead = overhead_sum as f64 / slab_count as f64;
    // Per-value cost from the sample, one header's worth amortized over
    // the full partition.
    let bitrate_hat = 8.0 * scaling_bytes / charged_points as f64 + 8.0 * mean_overhead / n as f64;
    let achieved_fraction = sampled_points as f64 / n as f64;
    Ok(RatioEstimate {
        bitrate_hat,
        sample_fraction: achieved_fraction,
        predicted_ratio: b_ori / bitrate_hat,
    })
}

/// Convenience: estimate plus the exact block, for callers that need both.
pub fn exact_ratio(partition: &FieldPartition, cfg: &ErrorBoundConfig) -> Result<(RatioEstimate, CompressedBlock)> {
    let block = codec::compress(partition, cfg)?;
    let bitrate = block.bitrate();
    let est = RatioEstimate {
        bitrate_hat: bitrate,
        sample_fraction: 1.0,
        predicted_ratio: partition.bits_per_value() as f64 / bitrate,
    };
    Ok((est, block))
}

/// Measures sustained write throughput for a given payload size.
pub trait WriteThroughputProbe {
    fn measure_mbps(&mut self, bytes: u64) -> Result<f64>;
}

/// Probe that writes into a scratch file and times it.
pub struct FileWriteProbe {
    dir: std::path::PathBuf,
    chunk: Vec<u8>,
}

impl FileWriteProbe {
    pub fn new(dir: impl Into<std::path::PathBuf>) -> Self {
        FileWriteProbe { dir: dir.into(), chunk: vec![0xA5; 1 << 20] }
    }
}

impl WriteThroughputProbe for FileWriteProbe {
    fn measure_mbps(&mut self, bytes: u64) -> Result<f64> {
        let path = self.dir.join(format!("ocpw-probe-{bytes}.tmp"));
        let start = Instant::now();
        {
            let mut f = fs::File::create(&path)?;
            let mut left = bytes as usize;
            while left > 0 {
                let take = left.min(self.chunk.len());
                f.write_all(&self.chunk[..take])?;
                left -= take;
            }
            f.sync_all()?;
        }
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        fs::remove_file(&path).ok();
        Ok(bytes as f64 / MB / secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteCalibration {
    pub c_thr_mbps: f64,
    /// Set when the two largest sizes still disagree noticeably, i.e. the
    /// sweep never reached the throughput plateau.
    pub ramp_warning: bool,
}

/// Measure write throughput across `sizes` and return the plateau value:
/// the mean of the two largest sizes' throughputs.
pub fn calibrate_write_throughput(
    probe: &mut dyn WriteThroughputProbe,
    sizes: &[u64],
) -> Result<WriteCalibration> {
    if sizes.len() < 3 {
        return Err(Error::TooFewSamples(format!(
            "write calibration needs at least 3 sizes, got {}",
            sizes.len()
        )));
    }
    let mut sorted: Vec<u64> = sizes.to_vec();
    sorted.sort_unstable();
    let measured: Vec<(u64, f64)> =
        sorted.iter().map(|&s| probe.measure_mbps(s).map(|t| (s, t))).collect::<Result<_>>()?;
    let (_, t_last) = measured[measured.len() - 1];
    let (_, t_prev) = measured[measured.len() - 2];
    let c_thr = (t_last + t_prev) / 2.0;
    let spread = (t_last - t_prev).abs() / t_last.max(t_prev);
    Ok(WriteCalibration { c_thr_mbps: c_thr, ramp_warning: spread > 0.15 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{BoundMode, Dims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pivot_bitrate_hits_ceiling_exactly() {
        let m = ThroughputModel::default();
        assert_eq!(m.compression_throughput(3.0), m.c_max);
        // Below the pivot the raw curve exceeds c_max; the clamp holds it.
        assert_eq!(m.compression_throughput(0.5), m.c_max);
    }

    #[test]
    fn compression_time_matches_hand_evaluation() {
        let m = ThroughputModel { c_min: 101.7, c_max: 240.6, a: -1.716, c_thr: 400.0, pivot: 3.0 };
        let t = predict_compression_time(&m, 6.0, 1 << 24, 32).unwrap();
        // Separate straight-line evaluation of the same quantities.
        let s = (240.6 - 101.7) * (6.0f64 / 3.0).powf(-1.716) + 101.7;
        let expect = (32.0 * (1u64 << 24) as f64 / 8.0) / (s * 1.0e6);
        assert!((t - expect).abs() / expect < 1e-12);
        assert!((t - 0.466).abs() < 2e-3, "t = {t}");
    }

    #[test]
    fn high_bitrates_approach_floor_from_above() {
        let m = ThroughputModel::default();
        let s = m.compression_throughput(1.0e6);
        assert!(s >= m.c_min);
        assert!((s - m.c_min) / m.c_min < 1e-6);
        let d = 32.0 * (1u64 << 24) as f64 / 8.0;
        let t = predict_compression_time(&m, 1.0e6, 1 << 24, 32).unwrap();
        assert!(t <= d / (m.c_min * 1.0e6));
        assert!((t - d / (m.c_min * 1.0e6)).abs() / t < 1e-6);
    }

    #[test]
    fn write_time_examples() {
        let t = predict_write_time(2.0, 16_777_216, 400.0).unwrap();
        let expect = 4_194_304.0 / 400.0e6;
        assert_eq!(t, expect);
        assert!((t - 0.0105).abs() < 2e-4);

        // Linearity in n, exact.
        let one = predict_write_time(5.0, 1000, 123.0).unwrap();
        let two = predict_write_time(5.0, 2000, 123.0).unwrap();
        assert_eq!(two, one * 2.0);

        // Vanishing bit-rate, vanishing time.
        assert!(predict_write_time(1e-12, 1000, 100.0).unwrap() < 1e-15);
        assert!(predict_write_time(0.0, 1000, 100.0).is_err());
        assert!(predict_write_time(2.0, 0, 100.0).is_err());
    }

    #[test]
    fn throughput_curve_is_monotone_and_clamped() {
        let m = ThroughputModel::default();
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let b = i as f64 * 0.25;
            let s = m.compression_throughput(b);
            assert!(s <= prev + 1e-12);
            assert!(s >= m.c_min && s <= m.c_max);
            prev = s;
        }
    }

    #[test]
    fn fit_recovers_known_model_under_noise() {
        let truth = ThroughputModel { c_min: 100.0, c_max: 250.0, a: -1.5, c_thr: 400.0, pivot: 3.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // A realistic calibration sweep reaches deep into the tail, so the
        // minimum observed throughput sits close to the true floor.
        let samples: Vec<CalibrationSample> = [3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 13.0, 16.0, 22.0, 32.0, 64.0]
            .iter()
            .map(|&b| {
                let noise = 1.0 + rng.gen_range(-0.01..0.01);
                CalibrationSample::new(b, truth.compression_throughput(b) * noise).unwrap()
            })
            .collect();
        let fit = fit_throughput_model(&samples).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.model.a - truth.a).abs() <= 0.1, "a = {}", fit.model.a);
        // The fitted model reproduces each sample within 25%.
        for s in &samples {
            let predicted = fit.model.compression_throughput(s.bitrate);
            assert!((predicted - s.throughput_mbps).abs() / s.throughput_mbps < 0.25);
        }
    }

    #[test]
    fn fit_on_exact_samples_recovers_extremes() {
        let truth = ThroughputModel { c_min: 120.0, c_max: 260.0, a: -2.0, c_thr: 400.0, pivot: 3.0 };
        let samples: Vec<CalibrationSample> = [3.0, 6.0, 12.0, 24.0, 48.0]
            .iter()
            .map(|&b| CalibrationSample::new(b, truth.compression_throughput(b)).unwrap())
            .collect();
        let fit = fit_throughput_model(&samples).unwrap();
        assert_eq!(fit.model.c_max, truth.compression_throughput(3.0));
        assert_eq!(fit.model.c_min, truth.compression_throughput(48.0));
        assert!((fit.model.a - truth.a).abs() < 0.25);
    }

    #[test]
    fn fit_rejects_small_or_narrow_sets() {
        let s = |b, t| CalibrationSample::new(b, t).unwrap();
        assert!(matches!(
            fit_throughput_model(&[s(1.0, 100.0), s(1.0, 100.0)]),
            Err(Error::TooFewSamples(_))
        ));
        assert!(matches!(
            fit_throughput_model(&[s(2.0, 100.0), s(3.0, 120.0), s(4.0, 140.0)]),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn fit_flat_samples_degenerates_with_warning() {
        let s = |b| CalibrationSample::new(b, 150.0).unwrap();
        let fit = fit_throughput_model(&[s(1.0), s(2.0), s(4.0), s(8.0)]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.model.a, -1.0);
    }

    #[test]
    fn model_file_round_trip() {
        let m = ThroughputModel { c_min: 99.5, c_max: 300.25, a: -1.25, c_thr: 512.0, pivot: 3.0 };
        let text = m.to_key_values();
        assert_eq!(text.lines().count(), 5);
        let back = ThroughputModel::parse_key_values(&text).unwrap();
        assert_eq!(back, m);
        assert!(ThroughputModel::parse_key_values("c_min=1\nc_max=2\n").is_err());
        assert!(ThroughputModel::parse_key_values("nonsense").is_err());
    }

    fn smooth_partition(seed: u64, side: usize) -> FieldPartition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fx, fy, fz) = (rng.gen_range(0.02..0.2), rng.gen_range(0.02..0.2), rng.gen_range(0.02..0.2));
        let dims = Dims::new(&[side, side, side]).unwrap();
        let mut values = Vec::with_capacity(dims.product());
        for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    let v = (i as f64 * fx).sin() + (j as f64 * fy).cos() + (k as f64 * fz).sin();
                    values.push(v as f32);
                }
            }
        }
        FieldPartition::new("smooth", 0, dims, FieldValues::F32(values)).unwrap()
    }

    #[test]
    fn estimate_on_constant_field_is_nearly_exact() {
        let dims = Dims::new(&[32, 32, 32]).unwrap();
        let p = FieldPartition::new("c", 0, dims, FieldValues::F32(vec![2.5; dims.product()])).unwrap();
        let cfg = ErrorBoundConfig::absolute(1e-3);
        let exact = codec::compress(&p, &cfg).unwrap();
        let actual_ratio = exact.compression_ratio(32);
        for fraction in [0.02, 0.1, 0.5] {
            let est = estimate_ratio(&p, &cfg, fraction).unwrap();
            let rel = (est.predicted_ratio - actual_ratio).abs() / actual_ratio;
            assert!(rel < 0.02, "fraction {fraction}: predicted {} vs {actual_ratio}", est.predicted_ratio);
        }
    }

    #[test]
    fn full_fraction_estimate_equals_exact_bitrate() {
        let p = smooth_partition(3, 24);
        let cfg = ErrorBoundConfig::absolute(1e-3);
        let est = estimate_ratio(&p, &cfg, 1.0).unwrap();
        let exact = codec::compress(&p, &cfg).unwrap();
        assert_eq!(est.bitrate_hat, exact.bitrate());
        assert_eq!(est.sample_fraction, 1.0);
    }

    #[test]
    fn small_partition_falls_back_to_exact() {
        let dims = Dims::new(&[7, 7, 7]).unwrap();
        let p = FieldPartition::new(
            "tiny",
            0,
            dims,
            FieldValues::F64((0..343).map(|i| (i as f64).sin()).collect()),
        )
        .unwrap();
        let cfg = ErrorBoundConfig::absolute(1e-4);
        let est = estimate_ratio(&p, &cfg, 0.05).unwrap();
        let exact = codec::compress(&p, &cfg).unwrap();
        assert_eq!(est.bitrate_hat, exact.bitrate());
        assert_eq!(est.sample_fraction, 1.0);
    }

    #[test]
    fn sampled_estimate_tracks_exact_bitrate_on_smooth_fields() {
        let p = smooth_partition(17, 64);
        let cfg = ErrorBoundConfig {
            mode: BoundMode::PointwiseRelative,
            bound: 1e-3,
            max_quant_codes: 65_536,
        };
        let est = estimate_ratio(&p, &cfg, 0.05).unwrap();
        let exact = codec::compress(&p, &cfg).unwrap();
        let rel = (est.bitrate_hat - exact.bitrate()).abs() / exact.bitrate();
        assert!(rel <= 0.10, "estimate {} vs exact {} ({rel:.3})", est.bitrate_hat, exact.bitrate());
        assert!(est.sample_fraction < 0.15);
    }

    #[test]
    fn invalid_fractions_error() {
        let p = smooth_partition(1, 16);
        let cfg = ErrorBoundConfig::absolute(1e-3);
        assert!(estimate_ratio(&p, &cfg, 0.0).is_err());
        assert!(estimate_ratio(&p, &cfg, 1.5).is_err());
        assert!(estimate_ratio(&p, &cfg, -0.1).is_err());
    }

    struct ProgrammedProbe {
        plateau: f64,
        ramp_end: u64,
    }

    impl WriteThroughputProbe for ProgrammedProbe {
        fn measure_mbps(&mut self, bytes: u64) -> Result<f64> {
            let frac = (bytes as f64 / self.ramp_end as f64).min(1.0);
            Ok(self.plateau * frac)
        }
    }

    #[test]
    fn write_calibration_finds_plateau() {
        let mut probe = ProgrammedProbe { plateau: 400.0, ramp_end: 20_000_000 };
        let sizes = [5, 10, 20, 50, 100].map(|mb| mb * 1_000_000u64);
        let cal = calibrate_write_throughput(&mut probe, &sizes).unwrap();
        assert!((cal.c_thr_mbps - 400.0).abs() / 400.0 < 0.05);
        assert!(!cal.ramp_warning);
    }

    #[test]
    fn write_calibration_warns_in_ramp_region() {
        let mut probe = ProgrammedProbe { plateau: 400.0, ramp_end: 200_000_000 };
        let sizes = [1, 2, 5, 10].map(|mb| mb * 1_000_000u64);
        let cal = calibrate_write_throughput(&mut probe, &sizes).unwrap();
        assert!(cal.ramp_warning);
        // Mean of the two largest measured throughputs.
        let expect = (400.0 * 0.025 + 400.0 * 0.05) / 2.0;
        assert!((cal.c_thr_mbps - expect).abs() < 1e-9);
    }

    #[test]
    fn write_calibration_needs_three_sizes() {
        let mut probe = ProgrammedProbe { plateau: 400.0, ramp_end: 1 };
        assert!(matches!(
            calibrate_write_throughput(&mut probe, &[1_000_000]),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn calibration_samples_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.txt");
        let samples =
            vec![CalibrationSample::new(1.5, 240.0).unwrap(), CalibrationSample::new(12.0, 110.5).unwrap()];
        write_calibration_samples(&path, &samples).unwrap();
        let back = read_calibration_samples(&path).unwrap();
        assert_eq!(back, samples);
    }
}
