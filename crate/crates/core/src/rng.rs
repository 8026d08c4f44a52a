//! Deterministic random streams.
//!
//! Every random choice in the pipeline flows from a single 64-bit master
//! seed. Independent consumers (hole placement, batch sampling, scene
//! layout, ...) derive their own named stream with [`SeedStream::stream`], so
//! adding a draw to one consumer never perturbs another. The generator is
//! splitmix64 (Steele et al.'s `SplittableRandom` finalizer), chosen for its
//! tiny state and bit-stable output across platforms.

/// A splitmix64 generator plus stream derivation.
#[derive(Clone, Debug)]
pub struct SeedStream {
    state: u64,
}

/// FNV-1a hash of a label, used to salt derived streams.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SeedStream {
    pub fn new(seed: u64) -> SeedStream {
        SeedStream { state: seed }
    }

    /// Derive an independent child stream identified by `label`.
    ///
    /// The child seed mixes the parent state with the label hash, so streams
    /// with different labels (or from different parents) do not overlap.
    pub fn stream(&self, label: &str) -> SeedStream {
        let mut child = SeedStream {
            state: self.state ^ fnv1a(label),
        };
        // One warm-up step decorrelates children whose labels differ in few bits.
        child.next_u64();
        child
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in `0..n`. `n` must be nonzero.
    ///
    /// Plain modulo; the bias is below 2^-32 for every `n` used here.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Bernoulli draw with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = (self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
