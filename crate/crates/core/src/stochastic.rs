//! Keyed random draws.
//!
//! Every draw is a pure function of a [`StreamKey`]: the key fields are hashed
//! into a 64-bit word and mapped to the target distribution. No generator
//! state is carried between draws, so agents can be updated in any order, on
//! any number of threads, and a run still reproduces bit for bit.

use std::f64::consts::TAU;

/// Floor applied to per-iteration and per-agent consumption rate draws.
pub const CONSUMPTION_FLOOR: f64 = 0.001;

/// Attempts made by [`sample_truncated_normal`] before falling back to `lo`.
pub const MAX_TRUNCATION_ATTEMPTS: u64 = 64;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Which quantity a draw feeds. Distinct channels never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    /// Per-agent, per-iteration consumption rate (Model 1A).
    ConsumptionDraw,
    /// Per-agent wage, fixed at initialization.
    WageTrait,
    /// Per-agent consumption propensity, fixed at initialization.
    ConsumptionTrait,
    /// Per-step growth/subsidy/competition rates of the city model.
    CityRates,
}

impl Channel {
    fn tag(self) -> u64 {
        match self {
            Channel::ConsumptionDraw => 0x436f_6e73_4472_6177,
            Channel::WageTrait => 0x5761_6765_5472_6169,
            Channel::ConsumptionTrait => 0x436f_6e73_5472_6169,
            Channel::CityRates => 0x4369_7479_5261_7465,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub agent_index: u64,
    pub iteration: u64,
    pub channel: Channel,
}

impl StreamKey {
    pub fn new(seed: u64, channel: Channel, agent_index: u64, iteration: u64) -> Self {
        StreamKey {
            seed,
            agent_index,
            iteration,
            channel,
        }
    }

    /// Key for a trait drawn once per agent before the first iteration.
    pub fn trait_init(seed: u64, channel: Channel, agent_index: u64) -> Self {
        Self::new(seed, channel, agent_index, 0)
    }

    fn base(&self) -> u64 {
        let mut h = mix64(self.seed.wrapping_add(GOLDEN));
        h = mix64(h ^ self.channel.tag());
        h = mix64(h ^ self.agent_index.wrapping_mul(GOLDEN).wrapping_add(1));
        mix64(h ^ self.iteration.wrapping_mul(0xd6e8_feb8_6659_fd93).wrapping_add(2))
    }

    /// The `counter`-th 64-bit word of this key's stream.
    pub fn word(&self, counter: u64) -> u64 {
        mix64(self.base() ^ mix64(counter.wrapping_add(GOLDEN)))
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&self, counter: u64) -> f64 {
        to_open_unit(self.word(counter))
    }
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn to_open_unit(w: u64) -> f64 {
    ((w >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Box-Muller on the word pair (2·attempt, 2·attempt + 1).
#[inline]
fn standard_normal(base: u64, attempt: u64) -> f64 {
    let u1 = to_open_unit(mix64(base ^ mix64((2 * attempt).wrapping_add(GOLDEN))));
    let u2 = to_open_unit(mix64(base ^ mix64((2 * attempt + 1).wrapping_add(GOLDEN))));
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Normal(mean, sd) draw determined entirely by `key`. `sd == 0` returns `mean`.
pub fn sample_normal(key: &StreamKey, mean: f64, sd: f64) -> f64 {
    debug_assert!(sd >= 0.0);
    if sd == 0.0 {
        return mean;
    }
    mean + sd * standard_normal(key.base(), 0)
}

/// Normal(mean, sd) conditioned on the result being at least `lo`.
///
/// Rejected attempts move on to fresh words of the same key. After
/// [`MAX_TRUNCATION_ATTEMPTS`] rejections the floor itself is returned.
pub fn sample_truncated_normal(key: &StreamKey, mean: f64, sd: f64, lo: f64) -> f64 {
    debug_assert!(sd >= 0.0);
    if sd == 0.0 {
        return mean.max(lo);
    }
    let base = key.base();
    for attempt in 0..MAX_TRUNCATION_ATTEMPTS {
        let x = mean + sd * standard_normal(base, attempt);
        if x >= lo {
            return x;
        }
    }
    lo
}

/// Uniform draw on [lo, hi).
pub fn sample_uniform(key: &StreamKey, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * key.uniform(0)
}
