//! Byte-level run-length coding (PackBits framing) used as the lossless
//! stage after entropy coding. Runs cost 2 bytes for up to 128 repeats;
//! incompressible stretches cost 1 control byte per 128 literals.

use crate::error::{Error, Result};

const MAX_RUN: usize = 128;
const MAX_LITERAL: usize = 128;

pub fn rle_encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() / 4 + 16);
    let mut i = 0;
    let mut literal_start = i;

    let flush_literals = |out: &mut Vec<u8>, from: usize, to: usize| {
        let mut s = from;
        while s < to {
            let len = (to - s).min(MAX_LITERAL);
            out.push((len - 1) as u8);
            out.extend_from_slice(&data[s..s + len]);
            s += len;
        }
    };

    while i < data.len() {
        let mut run = 1;
        while i + run < data.len() && data[i + run] == data[i] && run < MAX_RUN {
            run += 1;
        }
        if run >= 3 {
            flush_literals(&mut out, literal_start, i);
            out.push((257 - run) as u8);
            out.push(data[i]);
            i += run;
            literal_start = i;
        } else {
            i += run;
        }
    }
    flush_literals(&mut out, literal_start, data.len());
    out
}

pub fn rle_decode(data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * 2);
    let mut i = 0;
    while i < data.len() {
        let control = data[i];
        i += 1;
        if control <= 127 {
            let len = control as usize + 1;
            if i + len > data.len() {
                return Err(Error::decode("run-length literal block truncated"));
            }
            out.extend_from_slice(&data[i..i + len]);
            i += len;
        } else if control == 128 {
            return Err(Error::decode("invalid run-length control byte 128"));
        } else {
            if i >= data.len() {
                return Err(Error::decode("run-length repeat block truncated"));
            }
            let len = 257 - control as usize;
            let byte = data[i];
            i += 1;
            out.extend(std::iter::repeat(byte).take(len));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn long_runs_collapse() {
        let data = vec![0u8; 10_000];
        let enc = rle_encode(&data);
        assert!(enc.len() <= 2 * (10_000 / 128 + 1));
        assert_eq!(rle_decode(&enc).unwrap(), data);
    }

    #[test]
    fn incompressible_data_expands_little() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<u8> = (0..4096).map(|_| rng.gen()).collect();
        let enc = rle_encode(&data);
        assert!(enc.len() <= data.len() + data.len() / 64 + 2);
        assert_eq!(rle_decode(&enc).unwrap(), data);
    }

    #[test]
    fn mixed_runs_round_trip() {
        let mut data = Vec::new();
        for i in 0..50u8 {
            data.extend(std::iter::repeat(i).take((i as usize * 7) % 300 + 1));
            data.push(i.wrapping_mul(31));
        }
        assert_eq!(rle_decode(&rle_encode(&data)).unwrap(), data);
        assert_eq!(rle_decode(&rle_encode(&[])).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn corrupt_streams_error() {
        assert!(rle_decode(&[128]).is_err());
        assert!(rle_decode(&[5, 1, 2]).is_err());
        assert!(rle_decode(&[200]).is_err());
    }
}
