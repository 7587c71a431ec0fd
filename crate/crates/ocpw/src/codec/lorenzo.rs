use super::{Dims, Scalar};

/// First-order Lorenzo prediction of the point at `idx` from its causal
/// neighbors (lower index along each axis). Out-of-range neighbors count
/// as zero, so the very first point always predicts 0. Degenerate axes
/// (extent 1) drop out of the stencil, which makes the same formula serve
/// 1-D, 2-D, and 3-D data.
///
/// Neighbor values are widened to f64 before summing so that both the
/// compressor and the decompressor evaluate the exact same arithmetic.
pub fn lorenzo_predict<T: Scalar>(values: &[T], dims: Dims, idx: [usize; 3]) -> f64 {
    let [i, j, k] = idx;
    let at = |a: usize, b: usize, c: usize| values[dims.linear(a, b, c)].to_f64();

    let mut pred = 0.0;
    if i > 0 {
        pred += at(i - 1, j, k);
    }
    if j > 0 {
        pred += at(i, j - 1, k);
    }
    if k > 0 {
        pred += at(i, j, k - 1);
    }
    if i > 0 && j > 0 {
        pred -= at(i - 1, j - 1, k);
    }
    if i > 0 && k > 0 {
        pred -= at(i - 1, j, k - 1);
    }
    if j > 0 && k > 0 {
        pred -= at(i, j - 1, k - 1);
    }
    if i > 0 && j > 0 && k > 0 {
        pred += at(i - 1, j - 1, k - 1);
    }
    pred
}
