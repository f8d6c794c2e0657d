use rand::seq::SliceRandom;

use crate::rng::seeded_rng;

/// Shuffles `0..len` with `shuffle_seed` and cuts it into batches of
/// `batch_size`; the last batch may be short.
pub fn batch_iterator(len: usize, batch_size: usize, shuffle_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seeded_rng(shuffle_seed));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
