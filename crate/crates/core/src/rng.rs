//! Named random streams.
//!
//! Every consumer of randomness in a run (environment noise, action
//! selection, option bookkeeping, minibatch sampling, network
//! initialisation) draws from its own ChaCha stream derived from the run
//! seed and a label. Adding a consumer therefore never perturbs the draws of
//! another, which is what makes reduction identities such as "no options
//! means plain DDQN" hold trajectory for trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a, used only to turn a stream label into a stream id.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A stream for `label` under run seed `seed`.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_hash(label));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: Vec<u32> = (0..8).map(|_| 0).scan(stream(7, "env"), |r, _: u32| Some(r.gen())).collect();
        let b: Vec<u32> = (0..8).map(|_| 0).scan(stream(7, "env"), |r, _: u32| Some(r.gen())).collect();
        let c: Vec<u32> = (0..8).map(|_| 0).scan(stream(7, "act"), |r, _: u32| Some(r.gen())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
