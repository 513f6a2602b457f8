use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one episode: ChaCha8 keyed by `seed`, on stream `episode`.
///
/// ChaCha is counter-based, so every episode gets an independent substream
/// that does not depend on how episodes are scheduled across threads.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}
