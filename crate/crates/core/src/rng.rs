//! Portable seeded random streams.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood): state advances by
//! `0x9E3779B97F4A7C15` and each output is the standard 64-bit finalizer.
//! Uniforms take the top 53 bits, `u = (z >> 11) * 2^-53`, so `u` lies in
//! `[0, 1)`. Normals use Box–Muller on a pair `(u1, u2)` drawn in that
//! order, with `u1` mapped to `1 - u1` so the logarithm stays finite:
//!
//! ```text
//! r = sqrt(-2 ln(1 - u1)),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)
//! ```
//!
//! `z0` is returned first and `z1` is cached for the following call. Any
//! implementation following these steps reproduces the same streams.

use libm::{cos, log, sin, sqrt};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[low, high)`.
    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `0..bound` (`bound > 0`), by rejection to avoid bias.
    pub fn below(&mut self, bound: usize) -> usize {
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = sqrt(-2.0 * log(1.0 - u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * sin(theta));
        r * cos(theta)
    }

    pub fn normal_vec(&mut self, len: usize) -> alloc::vec::Vec<f64> {
        (0..len).map(|_| self.standard_normal()).collect()
    }
}
