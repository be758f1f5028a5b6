use crate::error::{Error, Result};

/// One contiguous run of at most `segment_len` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteSegment<'a> {
    bytes: &'a [u8],
}

impl<'a> ByteSegment<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::EmptyInput("byte segment".into()));
        }
        Ok(Self { bytes })
    }

    pub fn bytes(&self) -> &'a [u8] {
        self.bytes
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.bytes.len()
    }
}

/// Per-segment entropies of one file, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyStream {
    pub values: Vec<f64>,
    pub source_len: usize,
}

pub fn segment_bytes(file_bytes: &[u8], segment_len: usize) -> Result<Vec<ByteSegment<'_>>> {
    if segment_len == 0 {
        return Err(Error::arg("segment length must be at least 1"));
    }
    if file_bytes.is_empty() {
        return Err(Error::EmptyInput("file contains no bytes".into()));
    }
    Ok(file_bytes
        .chunks(segment_len)
        .map(|bytes| ByteSegment { bytes })
        .collect())
}

/// Shannon entropy in bits over the byte-value histogram of the segment.
pub fn shannon_entropy(segment: &ByteSegment<'_>) -> f64 {
    let mut counts = [0u32; 256];
    for &b in segment.bytes {
        counts[b as usize] += 1;
    }
    let total = segment.bytes.len() as f64;
    let mut h = 0.0f64;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / total;
        h -= p * p.log2();
    }
    // A single-symbol segment yields -0.0.
    h.max(0.0)
}

pub fn entropy_stream(file_bytes: &[u8], segment_len: usize) -> Result<EntropyStream> {
    let values = segment_bytes(file_bytes, segment_len)?
        .iter()
        .map(shannon_entropy)
        .collect();
    Ok(EntropyStream {
        values,
        source_len: file_bytes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(bytes: &[u8]) -> ByteSegment<'_> {
        ByteSegment::new(bytes).unwrap()
    }

    #[test]
    fn segments_exact_division() {
        let data = vec![7u8; 400];
        let segs = segment_bytes(&data, 200).unwrap();
        assert_eq!(segs.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![200, 200]);
    }

    #[test]
    fn segments_with_remainder() {
        let data = vec![7u8; 450];
        let segs = segment_bytes(&data, 200).unwrap();
        assert_eq!(segs.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![200, 200, 50]);
    }

    #[test]
    fn single_byte_file_is_one_segment() {
        let segs = segment_bytes(&[1u8], 200).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 1);
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(segment_bytes(&[], 200), Err(Error::EmptyInput(_))));
        assert!(matches!(entropy_stream(&[], 200), Err(Error::EmptyInput(_))));
        assert!(ByteSegment::new(&[]).is_err());
    }

    #[test]
    fn zero_segment_length_is_rejected() {
        assert!(matches!(segment_bytes(&[1, 2], 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constant_segment_has_zero_entropy() {
        let h = shannon_entropy(&seg(&[0x41; 200]));
        assert_eq!(h, 0.0);
        assert!(h.is_sign_positive());
    }

    #[test]
    fn two_equiprobable_symbols_give_one_bit() {
        let mut data = vec![0x00u8; 100];
        data.extend(std::iter::repeat_n(0xFF, 100));
        assert_eq!(shannon_entropy(&seg(&data)), 1.0);
    }

    #[test]
    fn all_distinct_bytes_give_eight_bits() {
        let data: Vec<u8> = (0..=255u8).collect();
        assert_eq!(shannon_entropy(&seg(&data)), 8.0);
    }

    #[test]
    fn stream_of_identical_bytes() {
        let s = entropy_stream(&[9u8; 400], 200).unwrap();
        assert_eq!(s.values, vec![0.0, 0.0]);
        assert_eq!(s.source_len, 400);
    }

    #[test]
    fn stream_composes_segment_cases() {
        let mut data = vec![0x41u8; 200];
        data.extend(std::iter::repeat_n(0x00, 100));
        data.extend(std::iter::repeat_n(0xFF, 100));
        assert_eq!(entropy_stream(&data, 200).unwrap().values, vec![0.0, 1.0]);
    }

    #[test]
    fn random_ten_kilobyte_file_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut data = vec![0u8; 10_000];
        rng.fill_bytes(&mut data);
        let s = entropy_stream(&data, 200).unwrap();
        assert_eq!(s.values.len(), 50);
        for (i, &h) in s.values.iter().enumerate() {
            // independent recomputation via H = log2(n) - (1/n) sum c log2 c
            let chunk = &data[i * 200..(i + 1) * 200];
            let mut counts = std::collections::HashMap::new();
            for &b in chunk {
                *counts.entry(b).or_insert(0u32) += 1;
            }
            let n = chunk.len() as f64;
            let alt = n.log2() - counts.values().map(|&c| c as f64 * (c as f64).log2()).sum::<f64>() / n;
            assert!((h - alt).abs() < 1e-12);
            assert!((0.0..=8.0).contains(&h));
        }
    }

    proptest! {
        #[test]
        fn entropy_within_bounds(data in proptest::collection::vec(any::<u8>(), 1..600)) {
            let h = shannon_entropy(&seg(&data));
            let cap = 8.0f64.min((data.len() as f64).log2());
            prop_assert!(h >= 0.0);
            prop_assert!(h <= cap + 1e-12);
        }

        #[test]
        fn segments_reassemble(data in proptest::collection::vec(any::<u8>(), 1..1000), l in 1usize..300) {
            let segs = segment_bytes(&data, l).unwrap();
            let joined: Vec<u8> = segs.iter().flat_map(|s| s.bytes().iter().copied()).collect();
            prop_assert_eq!(&joined, &data);
            prop_assert_eq!(segs.len(), data.len().div_ceil(l));
            for s in &segs[..segs.len() - 1] {
                prop_assert_eq!(s.len(), l);
            }
        }

        #[test]
        fn padding_only_touches_the_tail(
            data in proptest::collection::vec(any::<u8>(), 1..2000),
            pad_len in 0usize..200,
            pad in any::<u8>(),
        ) {
            let before = entropy_stream(&data, 200).unwrap().values;
            let mut padded = data.clone();
            padded.extend(std::iter::repeat_n(pad, pad_len));
            let after = entropy_stream(&padded, 200).unwrap().values;
            prop_assert!(after.len() <= before.len() + 1);
            let stable = before.len() - 1;
            for i in 0..stable {
                prop_assert_eq!(before[i].to_bits(), after[i].to_bits());
            }
        }
    }
}
