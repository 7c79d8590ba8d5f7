//! Seed handling: one master seed per run, one derived stream per event
//! source, so changing one component's draws never perturbs another's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Stream ids for the per-source generators.
pub mod stream {
    pub const RESOLVER_IDENTITIES: u64 = 1;
    pub const ATTACKER_GUESSES: u64 = 2;
    pub const ATTACKER_LABELS: u64 = 3;
    pub const AUTH_UPDATES: u64 = 4;
    pub const TTL_DRAWS: u64 = 5;
    pub const BENIGN_CLIENTS: u64 = 6;
    pub const NEGLIGENT: u64 = 7;
    pub const ARRIVALS: u64 = 8;
}

/// Derives an independent generator for `(master, stream)`.
pub fn derive(master: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Samples an exponential inter-event time with the given mean.
pub fn exp_sample<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    debug_assert!(mean > 0.0);
    // 1 - u is in (0, 1], keeping ln finite.
    let u: f64 = rng.gen();
    -mean * (1.0 - u).ln()
}

/// Samples uniformly from [lo, hi).
pub fn uniform_sample<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    debug_assert!(hi >= lo);
    lo + rng.gen::<f64>() * (hi - lo)
}
