//! PackBits run-length coding.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PackBitsError {
    #[error("decoded {actual} bytes, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("input ends inside a run")]
    Truncated,
}

pub fn decode_packbits(input: &[u8], expected_len: usize) -> Result<Vec<u8>, PackBitsError> {
    let mut out = Vec::with_capacity(expected_len);
    let mut i = 0;
    while i < input.len() {
        let n = input[i] as i8;
        i += 1;
        match n {
            -128 => {}
            0..=127 => {
                let count = n as usize + 1;
                let lit = input.get(i..i + count).ok_or(PackBitsError::Truncated)?;
                out.extend_from_slice(lit);
                i += count;
            }
            _ => {
                let b = *input.get(i).ok_or(PackBitsError::Truncated)?;
                i += 1;
                out.extend(std::iter::repeat_n(b, (1 - n as isize) as usize));
            }
        }
        if out.len() > expected_len {
            break;
        }
    }
    if out.len() != expected_len {
        return Err(PackBitsError::LengthMismatch {
            expected: expected_len,
            actual: out.len(),
        });
    }
    Ok(out)
}

/// Runs of three or more equal bytes become repeat packets; the rest is
/// emitted as literals of at most 128 bytes.
pub fn encode_packbits(input: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(input.len() + input.len() / 128 + 1);
    let mut lit_start = 0;
    let mut i = 0;
    let flush = |out: &mut Vec<u8>, lit: &[u8]| {
        for chunk in lit.chunks(128) {
            out.push((chunk.len() - 1) as u8);
            out.extend_from_slice(chunk);
        }
    };
    while i < input.len() {
        let b = input[i];
        let mut run = 1;
        while i + run < input.len() && input[i + run] == b && run < 128 {
            run += 1;
        }
        if run >= 3 {
            flush(&mut out, &input[lit_start..i]);
            out.push((1 - run as isize) as i8 as u8);
            out.push(b);
            i += run;
            lit_start = i;
        } else {
            i += run;
        }
    }
    flush(&mut out, &input[lit_start..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_examples() {
        assert_eq!(decode_packbits(&[0xFE, 0xAA], 3).unwrap(), vec![0xAA; 3]);
        assert_eq!(decode_packbits(&[0x02, 1, 2, 3], 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(decode_packbits(&[], 0).unwrap(), Vec::<u8>::new());
        assert_eq!(decode_packbits(&[0x80, 0x00, 7], 1).unwrap(), vec![7]);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode_packbits(&[0x02, 1], 3), Err(PackBitsError::Truncated));
        assert_eq!(decode_packbits(&[0xFF], 2), Err(PackBitsError::Truncated));
        assert!(matches!(
            decode_packbits(&[0xFE, 0xAA], 2),
            Err(PackBitsError::LengthMismatch { expected: 2, .. })
        ));
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_packbits(&[0xAA; 5]), vec![0xFC, 0xAA]);
        assert_eq!(encode_packbits(&[1]), vec![0, 1]);
        assert_eq!(encode_packbits(&[]), Vec::<u8>::new());
        assert_eq!(encode_packbits(&[1, 1, 2]), vec![2, 1, 1, 2]);
    }

    #[test]
    fn long_runs_and_literals_split() {
        let mut data = vec![9u8; 300];
        data.extend((0..=255u8).cycle().take(400));
        let enc = encode_packbits(&data);
        assert_eq!(decode_packbits(&enc, data.len()).unwrap(), data);
    }
}
