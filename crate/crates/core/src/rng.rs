//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, step, particle, lane)`, so a
//! simulation produces the same numbers regardless of how its work is split
//! across threads. The generator is Philox4x32-10 (Salmon et al., SC'11).

#[allow(unused_imports)]
use num_traits::Float;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// One Philox4x32-10 block: 128-bit counter, 64-bit key.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(ctr[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(ctr[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// SplitMix64 finalizer, used to derive keys from `(seed, stream)`.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies an independent family of random numbers.
///
/// Runs that share a seed get distinct `stream` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
    key: [u32; 2],
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        let k = mix64(seed ^ mix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)));
        Self { seed, stream, key: [k as u32, (k >> 32) as u32] }
    }

    /// A key for a derived stream, e.g. one replica out of many.
    pub fn substream(&self, index: u64) -> Self {
        Self::new(self.seed, mix64(self.stream ^ mix64(index)))
    }

    pub fn block(&self, step: u64, particle: u32, lane: u32) -> [u32; 4] {
        philox4x32([step as u32, (step >> 32) as u32, particle, lane], self.key)
    }

    /// Two uniforms in the open interval (0, 1).
    pub fn uniform_pair(&self, step: u64, particle: u32, lane: u32) -> (f64, f64) {
        let b = self.block(step, particle, lane);
        (to_open_unit(b[0], b[1]), to_open_unit(b[2], b[3]))
    }

    pub fn uniform(&self, step: u64, particle: u32, lane: u32) -> f64 {
        self.uniform_pair(step, particle, lane).0
    }

    /// Two independent standard normals (Box–Muller).
    pub fn normal_pair(&self, step: u64, particle: u32, lane: u32) -> (f64, f64) {
        let (u1, u2) = self.uniform_pair(step, particle, lane);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (core::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fills `out` with standard normals for `(step, particle)`.
    pub fn fill_normals(&self, step: u64, particle: u32, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        let mut lane = 0u32;
        for pair in &mut chunks {
            let (a, b) = self.normal_pair(step, particle, lane);
            pair[0] = a;
            pair[1] = b;
            lane += 1;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair(step, particle, lane).0;
        }
    }
}

fn to_open_unit(lo: u32, hi: u32) -> f64 {
    let bits = ((u64::from(hi) << 32) | u64::from(lo)) >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Sequential generator over a [`StreamKey`], for code paths that do not need
/// random access (bootstrap resampling, sampling budgets).
#[derive(Debug, Clone)]
pub struct SequentialRng {
    key: StreamKey,
    counter: u64,
    buffer: [u32; 4],
    used: usize,
    spare_normal: Option<f64>,
}

impl SequentialRng {
    pub fn new(key: StreamKey) -> Self {
        Self { key, counter: 0, buffer: [0; 4], used: 4, spare_normal: None }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buffer = self.key.block(self.counter, u32::MAX, 0);
            self.counter += 1;
            self.used = 0;
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    pub fn uniform(&mut self) -> f64 {
        let lo = self.next_u32();
        let hi = self.next_u32();
        to_open_unit(lo, hi)
    }

    /// Uniform integer in `0..n` (`n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (core::f64::consts::TAU * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors from the Random123 distribution (kat_vectors).
    #[test]
    fn philox_known_answers() {
        assert_eq!(philox4x32([0, 0, 0, 0], [0, 0]), [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344], [0xa409_3822, 0x299f_31d0]),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn draws_are_pure_functions_of_their_coordinates() {
        let key = StreamKey::new(7, 3);
        assert_eq!(key.normal_pair(10, 4, 1), StreamKey::new(7, 3).normal_pair(10, 4, 1));
        assert_ne!(key.normal_pair(10, 4, 1), key.normal_pair(10, 5, 1));
        assert_ne!(key.normal_pair(10, 4, 1), StreamKey::new(7, 4).normal_pair(10, 4, 1));
    }

    #[test]
    fn normal_moments() {
        let key = StreamKey::new(1, 0);
        let n = 200_000u64;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for step in 0..n / 2 {
            let (a, b) = key.normal_pair(step, 0, 0);
            for z in [a, b] {
                s1 += z;
                s2 += z * z;
                s4 += z * z * z * z;
            }
        }
        let nf = n as f64;
        assert!((s1 / nf).abs() < 0.01);
        assert!((s2 / nf - 1.0).abs() < 0.015);
        assert!((s4 / nf - 3.0).abs() < 0.08);
    }

    #[test]
    fn fill_normals_handles_odd_lengths() {
        let key = StreamKey::new(2, 0);
        let mut out = [0.0; 3];
        key.fill_normals(0, 0, &mut out);
        let (a, b) = key.normal_pair(0, 0, 0);
        let (c, _) = key.normal_pair(0, 0, 1);
        assert_eq!(out, [a, b, c]);
    }

    #[test]
    fn sequential_uniforms_are_in_open_unit_interval() {
        let mut rng = SequentialRng::new(StreamKey::new(0, 0));
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
            assert!(rng.below(7) < 7);
        }
    }
}
