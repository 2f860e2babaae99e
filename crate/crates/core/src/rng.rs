//! Counter-based random numbers with one subsequence per agent.
//!
//! Every sample is `threefry2x32(key, global_counter)`. The 64-bit global
//! counter is split into a high half holding the subsequence index and a low
//! half holding the local counter, so agent `i` owns counters
//! `i * 2^32 .. (i + 1) * 2^32`. An agent only persists its 32-bit local
//! counter; the index is its id.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bits of the global counter reserved for the local (per-subsequence) counter.
pub const SUBSEQUENCE_BITS: u32 = 32;

/// Subsequence indices at or above this value are reserved for system-level
/// draws (population synthesis, initialization, event selection).
pub const SYSTEM_STREAM_BASE: u32 = 0xFFFF_0000;

const ROTATIONS: [u32; 8] = [13, 15, 26, 6, 17, 29, 16, 24];
const KS_PARITY: u32 = 0x1BD1_1BDA;
const ROUNDS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RngError {
    #[error("subsequence {index} exhausted its 2^32 samples")]
    Exhausted { index: u32 },
    #[error("invalid {distribution} parameters: {detail}")]
    InvalidParameters {
        distribution: &'static str,
        detail: String,
    },
}

/// Threefry-2x32 block function with 20 rounds.
pub fn threefry2x32(key: [u32; 2], ctr: [u32; 2]) -> [u32; 2] {
    let ks = [key[0], key[1], KS_PARITY ^ key[0] ^ key[1]];
    let mut x0 = ctr[0].wrapping_add(ks[0]);
    let mut x1 = ctr[1].wrapping_add(ks[1]);
    for round in 0..ROUNDS {
        x0 = x0.wrapping_add(x1);
        x1 = x1.rotate_left(ROTATIONS[round % 8]);
        x1 ^= x0;
        if round % 4 == 3 {
            let s = (round + 1) / 4;
            x0 = x0.wrapping_add(ks[s % 3]);
            x1 = x1.wrapping_add(ks[(s + 1) % 3]).wrapping_add(s as u32);
        }
    }
    [x0, x1]
}

/// Seed key of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngKey(pub u64);

impl RngKey {
    fn words(self) -> [u32; 2] {
        [self.0 as u32, (self.0 >> 32) as u32]
    }

    /// Raw 64-bit output for a global counter value.
    #[inline]
    pub fn hash(self, global_counter: u64) -> u64 {
        let out = threefry2x32(
            self.words(),
            [global_counter as u32, (global_counter >> 32) as u32],
        );
        u64::from(out[0]) | (u64::from(out[1]) << 32)
    }

    /// Derives an independent key, e.g. per ensemble member.
    pub fn derive(self, a: u64, b: u64) -> RngKey {
        let mixed = RngKey(self.0 ^ 0x9E37_79B9_7F4A_7C15).hash(a.rotate_left(17) ^ b);
        RngKey(RngKey(mixed).hash(b.wrapping_add(a)))
    }
}

/// Position inside one subsequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCursor {
    pub index: u32,
    pub counter: u32,
}

impl StreamCursor {
    pub fn new(index: u32) -> Self {
        StreamCursor { index, counter: 0 }
    }

    pub fn global_counter(&self) -> u64 {
        u64::from(self.counter) + (u64::from(self.index) << SUBSEQUENCE_BITS)
    }
}

/// Draws one word and advances the cursor.
pub fn generate(key: RngKey, cursor: &mut StreamCursor) -> Result<u64, RngError> {
    let mut counter = cursor.counter;
    let word = generate_at(key, cursor.index, &mut counter)?;
    cursor.counter = counter;
    Ok(word)
}

#[inline]
fn generate_at(key: RngKey, index: u32, counter: &mut u32) -> Result<u64, RngError> {
    if *counter == u32::MAX {
        return Err(RngError::Exhausted { index });
    }
    let global = u64::from(*counter) + (u64::from(index) << SUBSEQUENCE_BITS);
    *counter += 1;
    Ok(key.hash(global))
}

/// Anything that yields a stream of 64-bit words.
pub trait RandomSource {
    fn next_u64(&mut self) -> u64;

    /// Uniform sample in `[0, 1)` with 53 random mantissa bits.
    #[inline]
    fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`. Always consumes exactly one word.
    #[inline]
    fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform01() < p
    }

    /// Uniform integer in `0..n` (`n > 0`).
    fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Standard normal via Box-Muller; consumes exactly two words.
    fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Index drawn from (unnormalized) non-negative weights.
    fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut x = self.uniform01() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.len() - 1
    }
}

/// Stream view over an agent's persisted local counter.
pub struct AgentStream<'a> {
    key: RngKey,
    index: u32,
    counter: &'a mut u32,
}

impl<'a> AgentStream<'a> {
    pub fn new(key: RngKey, index: u32, counter: &'a mut u32) -> Self {
        debug_assert!(index < SYSTEM_STREAM_BASE);
        AgentStream {
            key,
            index,
            counter,
        }
    }

    pub fn try_next_u64(&mut self) -> Result<u64, RngError> {
        generate_at(self.key, self.index, self.counter)
    }
}

impl RandomSource for AgentStream<'_> {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.try_next_u64().expect("agent random stream exhausted")
    }
}

/// Owned stream on a reserved subsequence.
#[derive(Clone, Debug)]
pub struct SystemStream {
    key: RngKey,
    cursor: StreamCursor,
}

/// Purposes of the reserved system subsequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum SystemPurpose {
    Synthesis = 0,
    Initialization = 1,
    Vaccination = 2,
    Gatherings = 3,
}

impl SystemStream {
    pub fn new(key: RngKey, purpose: SystemPurpose) -> Self {
        SystemStream {
            key,
            cursor: StreamCursor::new(SYSTEM_STREAM_BASE + purpose as u32),
        }
    }

    pub fn cursor(&self) -> StreamCursor {
        self.cursor
    }
}

impl RandomSource for SystemStream {
    fn next_u64(&mut self) -> u64 {
        generate(self.key, &mut self.cursor).expect("system random stream exhausted")
    }
}

/// Exponential distribution with the given rate, sampled by inversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponential {
    rate: f64,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Self, RngError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(RngError::InvalidParameters {
                distribution: "exponential",
                detail: format!("rate must be positive, got {rate}"),
            });
        }
        Ok(Exponential { rate })
    }

    pub fn sample<R: RandomSource + ?Sized>(&self, rng: &mut R) -> f64 {
        -(1.0 - rng.uniform01()).ln() / self.rate
    }
}

/// Log-normal distribution parameterized by the mean and standard deviation
/// of the distribution itself (not of its logarithm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogNormalMoments", into = "LogNormalMoments")]
pub struct LogNormal {
    mean: f64,
    std: f64,
    mu: f64,
    sigma: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct LogNormalMoments {
    mean: f64,
    std: f64,
}

impl TryFrom<LogNormalMoments> for LogNormal {
    type Error = RngError;
    fn try_from(m: LogNormalMoments) -> Result<Self, RngError> {
        LogNormal::new(m.mean, m.std)
    }
}

impl From<LogNormal> for LogNormalMoments {
    fn from(d: LogNormal) -> Self {
        LogNormalMoments {
            mean: d.mean,
            std: d.std,
        }
    }
}

impl LogNormal {
    pub fn new(mean: f64, std: f64) -> Result<Self, RngError> {
        if !(mean > 0.0 && std >= 0.0 && mean.is_finite() && std.is_finite()) {
            return Err(RngError::InvalidParameters {
                distribution: "lognormal",
                detail: format!("need mean > 0 and std >= 0, got ({mean}, {std})"),
            });
        }
        let sigma2 = (1.0 + (std * std) / (mean * mean)).ln();
        Ok(LogNormal {
            mean,
            std,
            mu: mean.ln() - 0.5 * sigma2,
            sigma: sigma2.sqrt(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    /// Consumes two words (one normal draw).
    pub fn sample<R: RandomSource + ?Sized>(&self, rng: &mut R) -> f64 {
        (self.mu + self.sigma * rng.standard_normal()).exp()
    }
}

/// Gamma distribution with shape and scale.
///
/// Marsaglia-Tsang squeeze with counted rejection: each attempt consumes three
/// words, and the number of attempts depends only on the words drawn, so
/// replays stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaParams", into = "GammaParams")]
pub struct Gamma {
    shape: f64,
    scale: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct GammaParams {
    shape: f64,
    scale: f64,
}

impl TryFrom<GammaParams> for Gamma {
    type Error = RngError;
    fn try_from(p: GammaParams) -> Result<Self, RngError> {
        Gamma::new(p.shape, p.scale)
    }
}

impl From<Gamma> for GammaParams {
    fn from(g: Gamma) -> Self {
        GammaParams {
            shape: g.shape,
            scale: g.scale,
        }
    }
}

impl Gamma {
    pub fn new(shape: f64, scale: f64) -> Result<Self, RngError> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(RngError::InvalidParameters {
                distribution: "gamma",
                detail: format!("need shape > 0 and scale > 0, got ({shape}, {scale})"),
            });
        }
        Ok(Gamma { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn sample<R: RandomSource + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.shape < 1.0 {
            // boost: G(k) = G(k + 1) * U^(1/k)
            let g = Self::standard(self.shape + 1.0, rng);
            let u = rng.uniform01();
            return g * (1.0 - u).powf(1.0 / self.shape) * self.scale;
        }
        Self::standard(self.shape, rng) * self.scale
    }

    fn standard<R: RandomSource + ?Sized>(shape: f64, rng: &mut R) -> f64 {
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let z = rng.standard_normal();
            let u = rng.uniform01();
            let t = 1.0 + c * z;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            if (1.0 - u).ln() < 0.5 * z * z + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_layout_puts_index_in_high_word() {
        let c = StreamCursor {
            index: 3,
            counter: 7,
        };
        assert_eq!(c.global_counter(), (3u64 << 32) + 7);
    }

    #[test]
    fn exhausted_stream_reports_error() {
        let mut cursor = StreamCursor {
            index: 9,
            counter: u32::MAX,
        };
        assert_eq!(
            generate(RngKey(1), &mut cursor),
            Err(RngError::Exhausted { index: 9 })
        );
    }

    #[test]
    fn agent_stream_advances_persisted_counter() {
        let mut counter = 0u32;
        let a = {
            let mut s = AgentStream::new(RngKey(5), 2, &mut counter);
            s.next_u64()
        };
        assert_eq!(counter, 1);
        let mut cursor = StreamCursor::new(2);
        assert_eq!(generate(RngKey(5), &mut cursor).unwrap(), a);
    }

    #[test]
    fn invalid_distribution_parameters_rejected() {
        assert!(Exponential::new(0.0).is_err());
        assert!(LogNormal::new(-1.0, 1.0).is_err());
        assert!(Gamma::new(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_std_lognormal_is_constant() {
        let d = LogNormal::new(4.5, 0.0).unwrap();
        let mut s = SystemStream::new(RngKey(1), SystemPurpose::Synthesis);
        assert!((d.sample(&mut s) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = SystemStream::new(RngKey(11), SystemPurpose::Synthesis);
        for _ in 0..1000 {
            assert!(s.below(7) < 7);
        }
    }
}
