//! Finite-blocklength AWGN link: capacity, dispersion, normal-approximation
//! packet error rate and independent Bernoulli erasures.

use rand_core::RngCore;

use crate::error::{invalid, Error, Result};

/// Link budget shared by uplink and downlink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Carrier bandwidth B (Hz).
    pub bandwidth: f64,
    /// Symbol rate (symbols/s).
    pub symbol_rate: f64,
    /// Linear SNR.
    pub snr: f64,
    /// Payload d (bits).
    pub payload_bits: u32,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth: 1000.0,
            symbol_rate: 1000.0,
            snr: 1.0,
            payload_bits: 64,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("symbol_rate", self.symbol_rate),
            ("snr", self.snr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.payload_bits == 0 {
            return Err(invalid("payload_bits", "must be >= 1"));
        }
        Ok(())
    }

    /// Symbols in one frame of length `t_ctr`.
    pub fn blocklength(&self, t_ctr: f64) -> f64 {
        self.symbol_rate * t_ctr
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Shannon capacity `B log2(1 + snr)` in bit/s.
pub fn capacity(params: &ChannelParams) -> f64 {
    params.bandwidth * params.snr.ln_1p() / std::f64::consts::LN_2
}

/// AWGN channel dispersion `1 - 1/(1 + snr)^2`.
pub fn dispersion(snr: f64) -> f64 {
    1.0 - 1.0 / ((1.0 + snr) * (1.0 + snr))
}

/// Gaussian tail probability `Q(x) = erfc(x / sqrt 2) / 2`.
///
/// Backed by the FreeBSD/musl `erfc` (error below one ulp), so the result
/// keeps full relative precision far into both tails.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Normal-approximation packet error rate for a frame of `t_ctr` seconds:
///
/// `eps = Q( sqrt(n / V) * ln 2 * (log2(1 + snr) - d / n) )`, `n = r_s t_ctr`.
///
/// The bits-to-nats factor multiplies the whole rate gap, so `eps = 1/2`
/// exactly at rate equal to capacity. No `log2(n) / (2n)` correction term.
pub fn per(params: &ChannelParams, t_ctr: f64) -> Result<f64> {
    params.validate()?;
    let n = params.blocklength(t_ctr);
    if !(n >= 1.0) {
        return Err(Error::BlocklengthTooShort { blocklength: n });
    }
    let spectral_efficiency = capacity(params) / params.bandwidth;
    let v = dispersion(params.snr);
    let gap = spectral_efficiency - f64::from(params.payload_bits) / n;
    let arg = (n / v).sqrt() * std::f64::consts::LN_2 * gap;
    Ok(q_function(arg).clamp(0.0, 1.0))
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Which random substream of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Uplink = 0,
    Downlink = 1,
    Sensor = 2,
}

/// SplitMix64 generator keyed by `(master seed, episode index, link)`.
///
/// Streams depend only on their origin, never on how many other streams
/// were drawn before, so episodes can run in any order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
    origin: (u64, u64, u64),
}

impl RngStream {
    pub fn new(master_seed: u64, episode_index: u64, link: u64) -> Self {
        let a = mix64(master_seed.wrapping_add(GOLDEN_GAMMA));
        let b = mix64(a ^ episode_index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0x632b_e59b_d9b4_e019));
        let state = mix64(b ^ link.wrapping_mul(0xd1b5_4a32_d192_ed03).wrapping_add(GOLDEN_GAMMA));
        Self {
            state,
            origin: (master_seed, episode_index, link),
        }
    }

    pub fn for_link(master_seed: u64, episode_index: u64, link: Link) -> Self {
        Self::new(master_seed, episode_index, link as u64)
    }

    pub fn origin(&self) -> (u64, u64, u64) {
        self.origin
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Bernoulli erasure with probability `eps`; consumes exactly one draw.
pub fn sample_loss(eps: f64, rng: &mut RngStream) -> bool {
    rng.uniform() < eps
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_core::RngCore;

    // mpmath erfc at 40 significant digits
    const Q_ORACLE: [(f64, f64); 17] = [
        (-8.0, 0.99999999999999938),
        (-5.0, 0.99999971334842812),
        (-3.0, 0.99865010196836991),
        (-1.5, 0.93319279873114193),
        (-0.25, 0.59870632568292372),
        (0.0, 0.5),
        (0.1, 0.46017216272297102),
        (0.5, 0.3085375387259869),
        (1.0, 0.15865525393145705),
        (1.7, 0.044565462758543039),
        (2.0, 0.022750131948179207),
        (2.1936, 0.014132089212648914),
        (3.0, 0.0013498980316300945),
        (4.0, 3.1671241833119921e-5),
        (5.5, 1.8989562465887719e-8),
        (6.5, 4.0160005838591178e-11),
        (8.0, 6.2209605742717841e-16),
    ];

    fn reference_link() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn capacity_examples() {
        let mut p = reference_link();
        assert_abs_diff_eq!(capacity(&p), 1000.0, epsilon = 1e-9);
        p.snr = 3.0;
        assert_abs_diff_eq!(capacity(&p), 2000.0, epsilon = 1e-9);
        p.snr = 1e-12;
        assert!(capacity(&p) < 1e-8);
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(1.0), 0.75);
        assert!((1.0 - dispersion(1e9)).abs() < 1e-12);
        assert!(dispersion(1e-12) < 1e-11);
    }

    #[test]
    fn q_function_matches_oracle() {
        for (x, q) in Q_ORACLE {
            let got = q_function(x);
            assert_abs_diff_eq!(got, q, epsilon = 1e-12);
            if q > 0.0 {
                assert!(((got - q) / q).abs() < 1e-13, "x={x}: {got} vs {q}");
            }
        }
    }

    #[test]
    fn q_function_symmetry() {
        assert_eq!(q_function(0.0), 0.5);
        for x in [0.5, 1.0, 2.0] {
            assert_abs_diff_eq!(q_function(-x) + q_function(x), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn per_at_ninety_symbols() {
        // argument sqrt(120) ln2 (1 - 64/90) = 2.19354689...; mpmath gives 0.0141340000311
        let eps = per(&reference_link(), 0.090).unwrap();
        assert_abs_diff_eq!(eps, 0.014134000031129648, epsilon = 1e-12);
        assert_abs_diff_eq!(eps, 0.01414, epsilon = 1e-3);
    }

    #[test]
    fn per_is_half_at_capacity() {
        let eps = per(&reference_link(), 0.064).unwrap();
        assert_abs_diff_eq!(eps, 0.5, epsilon = 1e-12);
        let p = ChannelParams {
            snr: 3.0,
            payload_bits: 128,
            ..reference_link()
        };
        assert_abs_diff_eq!(per(&p, 0.064).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn per_deep_inside_capacity() {
        assert!(per(&reference_link(), 10.0).unwrap() < 1e-12);
    }

    #[test]
    fn per_rejects_sub_symbol_frames() {
        assert!(matches!(
            per(&reference_link(), 0.0005),
            Err(Error::BlocklengthTooShort { .. })
        ));
    }

    #[test]
    fn per_strictly_decreasing_on_10ms_grid() {
        let p = reference_link();
        let eps: Vec<f64> = (1..=50).map(|i| per(&p, i as f64 * 0.01).unwrap()).collect();
        for w in eps.windows(2) {
            assert!(w[1] < w[0], "{} !< {}", w[1], w[0]);
        }
    }

    #[test]
    fn per_decreasing_in_snr_above_threshold() {
        let n = 90.0;
        let t = n / 1000.0;
        let mut last = 1.0;
        for db in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
            let p = ChannelParams {
                snr: db_to_linear(db),
                ..reference_link()
            };
            let eps = per(&p, t).unwrap();
            assert!(eps < last);
            last = eps;
        }
    }

    #[test]
    fn db_conversion() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert_abs_diff_eq!(db_to_linear(10.0), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn sample_loss_extremes() {
        let mut rng = RngStream::new(7, 0, 0);
        assert!((0..10_000).all(|_| !sample_loss(0.0, &mut rng)));
        assert!((0..10_000).all(|_| sample_loss(1.0, &mut rng)));
    }

    #[test]
    fn sample_loss_rate_within_three_sigma() {
        let mut rng = RngStream::new(2024, 3, 1);
        let draws = 100_000;
        let lost = (0..draws).filter(|_| sample_loss(0.3, &mut rng)).count();
        let rate = lost as f64 / draws as f64;
        let sigma = (0.3 * 0.7 / draws as f64).sqrt();
        assert!((rate - 0.3).abs() < 3.0 * sigma, "rate {rate}");
        assert!(3.0 * sigma < 0.0044);
    }

    #[test]
    fn streams_are_distinct_per_origin() {
        let mut seen = std::collections::HashSet::new();
        for seed in 0..4 {
            for ep in 0..50 {
                for link in 0..3 {
                    assert!(seen.insert(RngStream::new(seed, ep, link).next_u64()));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn same_origin_same_sequence(seed: u64, ep: u64, link in 0u64..3, eps in 0.0f64..=1.0) {
            let mut a = RngStream::new(seed, ep, link);
            let mut b = RngStream::new(seed, ep, link);
            for _ in 0..64 {
                prop_assert_eq!(sample_loss(eps, &mut a), sample_loss(eps, &mut b));
            }
        }

        #[test]
        fn per_is_a_probability(t in 0.001f64..5.0, db in -10.0f64..20.0, d in 1u32..512) {
            let p = ChannelParams { snr: db_to_linear(db), payload_bits: d, ..ChannelParams::default() };
            let eps = per(&p, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&eps));
            prop_assert_eq!(eps.to_bits(), per(&p, t).unwrap().to_bits());
        }

        #[test]
        fn per_decreasing_in_blocklength(n in 1.0f64..2000.0, dn in 0.5f64..50.0) {
            let p = ChannelParams::default();
            let a = per(&p, n / 1000.0).unwrap();
            let b = per(&p, (n + dn) / 1000.0).unwrap();
            // both saturate to exactly 1 or 0 in double precision far from capacity
            prop_assert!(b < a || (a == b && (a == 1.0 || a == 0.0)));
        }
    }
}
