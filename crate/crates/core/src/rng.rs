//! Pinned pseudo-random generator so seeded runs reproduce bit-for-bit on
//! every platform and from every binding.
//!
//! The generator is xoshiro256++ (Blackman/Vigna) seeded through splitmix64.
//! Both are defined purely by the integer constants below; no std RNG state
//! leaks in, so a 64-bit seed fully determines every draw.

/// splitmix64 stream, used to expand a 64-bit seed into generator state.
#[derive(Debug, Clone)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

/// xoshiro256++ generator.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Seed via splitmix64 so that nearby seeds give unrelated streams.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = SplitMix64(seed);
        Rng {
            s: [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()],
        }
    }

    /// Derive an independent stream for a labelled sub-task of this seed.
    pub fn derive(seed: u64, label: u64) -> Self {
        Rng::from_seed(mix(seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1): top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1].
    pub fn symmetric_unit(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform in the open interval (0, 1).
    pub fn positive_unit(&mut self) -> f64 {
        loop {
            let u = self.next_f64();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform integer in [0, n) by masked rejection; exact, no modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let mask = n.next_power_of_two().wrapping_sub(1);
        loop {
            let v = self.next_u64() & mask;
            if v < n {
                return v as usize;
            }
        }
    }
}

/// Collapse (seed, label) into a fresh seed; used wherever one user seed has
/// to fan out into many decorrelated sub-seeds (hierarchy levels, table
/// cells) without the draws of one sub-task shifting another's.
pub fn mix(seed: u64, label: u64) -> u64 {
    SplitMix64(seed ^ label.wrapping_mul(0x9e3779b97f4a7c15)).next_u64()
}
