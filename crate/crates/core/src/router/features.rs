use crate::lexical::tokenize;

pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;

/// Sorted, deduplicated `(index, value)` pairs with unit L2 norm (or empty).
pub type SparseFeatures = Vec<(u32, f64)>;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &byte in *part {
            h ^= u64::from(byte);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Signed hashing of unigrams and bigrams into `dim` buckets.
///
/// FNV-1a is used instead of the std hasher so that persisted models stay
/// valid across toolchains.
pub fn hashed_features(text: &str, dim: usize) -> SparseFeatures {
    assert!(dim > 0 && dim <= u32::MAX as usize, "feature dim out of range");
    let tokens = tokenize(text);
    let mut raw: Vec<(u32, f64)> = Vec::with_capacity(tokens.len() * 2);
    let mut push = |h: u64| {
        let index = (h % dim as u64) as u32;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        raw.push((index, sign));
    };
    for t in &tokens {
        push(fnv1a(&[b"u\x1f", t.as_bytes()]));
    }
    for pair in tokens.windows(2) {
        push(fnv1a(&[b"b\x1f", pair[0].as_bytes(), b"\x1f", pair[1].as_bytes()]));
    }
    raw.sort_by_key(|&(i, _)| i);

    let mut merged: SparseFeatures = Vec::with_capacity(raw.len());
    for (i, v) in raw {
        match merged.last_mut() {
            Some((j, acc)) if *j == i => *acc += v,
            _ => merged.push((i, v)),
        }
    }
    merged.retain(|&(_, v)| v != 0.0);
    let norm = merged.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut merged {
            *v /= norm;
        }
    }
    merged
}
