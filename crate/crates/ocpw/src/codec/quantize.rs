/// Outcome of linear quantization of a prediction residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantized {
    /// Signed interval index; 0 means "prediction already within bound".
    Code(i64),
    /// Residual falls outside the capped code alphabet; the original value
    /// is stored verbatim instead.
    Unpredictable,
}

/// Map a residual onto the quantization grid of step `2*bound`. Codes are
/// capped so the symbol alphabet (including the reserved unpredictable
/// marker) never exceeds `max_codes` entries; `max_codes` must be even so
/// the interval is symmetric around the prediction.
pub fn quantize_linear(residual: f64, bound: f64, max_codes: u32) -> Quantized {
    debug_assert!(bound > 0.0);
    let q = (residual / (2.0 * bound)).round();
    if !q.is_finite() || q.abs() >= 9.0e15 {
        return Quantized::Unpredictable;
    }
    let code = q as i64;
    if code_to_symbol(code) > (max_codes as u64).saturating_sub(1) {
        return Quantized::Unpredictable;
    }
    Quantized::Code(code)
}

/// Residual reconstructed from a quantization code: `2*bound*code`.
pub fn reconstruct_offset(bound: f64, code: i64) -> f64 {
    2.0 * bound * code as f64
}

/// Codes map to stream symbols by zigzag + 1; symbol 0 is the
/// unpredictable marker, so the alphabet stays dense and the decoder
/// needs no knowledge of the alphabet cap.
pub(crate) fn code_to_symbol(code: i64) -> u64 {
    (((code << 1) ^ (code >> 63)) as u64) + 1
}

pub(crate) fn symbol_to_code(symbol: u64) -> i64 {
    let z = symbol - 1;
    ((z >> 1) as i64) ^ -((z & 1) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_gets_center_code() {
        assert_eq!(quantize_linear(0.0, 1e-3, 65_536), Quantized::Code(0));
    }

    // Enumerate residuals across [-4b, 4b] in steps of b/10 and check that
    // every coded case reconstructs within the bound. Midpoint residuals
    // land exactly on the bound, so allow one part in 1e12 of rounding;
    // the compressor enforces the strict bound via its verbatim fallback.
    #[test]
    fn coded_residuals_reconstruct_within_bound() {
        let bound = 0.02;
        for step in -40..=40 {
            let residual = step as f64 * bound / 10.0;
            match quantize_linear(residual, bound, 65_536) {
                Quantized::Code(code) => {
                    let err = (residual - reconstruct_offset(bound, code)).abs();
                    assert!(err <= bound * (1.0 + 1e-12), "residual {residual}: err {err} > {bound}");
                }
                Quantized::Unpredictable => panic!("small residual {residual} must be coded"),
            }
        }
        // 2.5 bounds away lands one interval up.
        assert_eq!(quantize_linear(2.5 * bound, bound, 65_536), Quantized::Code(1));
    }

    #[test]
    fn residual_beyond_alphabet_is_unpredictable() {
        let bound = 1e-3;
        let max_codes = 256;
        // |residual| > max_codes * bound is guaranteed out of range.
        let residual = 257.0 * bound;
        assert_eq!(quantize_linear(residual, bound, max_codes), Quantized::Unpredictable);
        assert_eq!(quantize_linear(-residual, bound, max_codes), Quantized::Unpredictable);
        // Largest representable code for a 256-entry alphabet is +/-127.
        assert_eq!(quantize_linear(2.0 * bound * 127.0, bound, max_codes), Quantized::Code(127));
        assert_eq!(
            quantize_linear(2.0 * bound * 128.0, bound, max_codes),
            Quantized::Unpredictable
        );
    }

    #[test]
    fn symbol_mapping_round_trips() {
        for code in [-32_767i64, -100, -1, 0, 1, 99, 32_767] {
            assert_eq!(symbol_to_code(code_to_symbol(code)), code);
        }
        assert_eq!(code_to_symbol(0), 1);
        assert_eq!(code_to_symbol(-1), 2);
        assert_eq!(code_to_symbol(1), 3);
    }
}
