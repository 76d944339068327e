use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent deterministic stream for `(seed, stream, index)`.
pub(crate) fn stream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(stream.wrapping_add(0x5851_f42d))));
    rng.set_stream(index);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `index` under `seed`.
pub(crate) fn derive(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index))
}
