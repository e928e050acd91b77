use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha stream `stream` under the master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const INIT: u64 = 1;
    pub const PARAMS: u64 = 10;
    pub const SPARSITY: u64 = 11;
    pub const RESPONSES: u64 = 12;
    pub const MISSINGNESS: u64 = 13;
}
