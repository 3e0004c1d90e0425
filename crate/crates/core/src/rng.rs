use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the given parts, separated so that ("ab","c") != ("a","bc").
pub(crate) fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in part.iter().chain(std::iter::once(&0xffu8)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Independent stream keyed by a seed and a tuple of indices.
pub(crate) fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let bytes: Vec<[u8; 8]> = keys.iter().map(|k| k.to_le_bytes()).collect();
    let mut parts: Vec<&[u8]> = vec![b"patreid"];
    parts.extend(bytes.iter().map(|b| b.as_slice()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stable_hash(&parts));
    rng
}
