//! Block-fading channel draws and deterministic random substreams.
//!
//! Every random quantity in a simulation comes from a ChaCha8 substream
//! addressed by `(master_seed, point_key, trial_index, label)`:
//!
//! * the 256-bit ChaCha key is `master_seed` (LE, bytes 0..8) followed by
//!   `point_key` (LE, bytes 8..16) and sixteen zero bytes;
//! * the 64-bit ChaCha stream id is `trial_index << 32 | label.code()`.
//!
//! `point_key` is a fingerprint of the experiment point (scheme and
//! system parameters), so a sweep row can be re-run on its own and
//! reproduce bit-for-bit. The mapping is injective for
//! `trial_index < 2^32` and user ids below `2^32 - 3`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::{standard_complex_normal, CMatrix};

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Channel,
    RbfBasis,
    PurcBasis,
    /// Per-user random codebook (or its statistical stand-in).
    RvqCodebook(u32),
}

impl StreamLabel {
    pub fn code(self) -> u32 {
        match self {
            StreamLabel::Channel => 0,
            StreamLabel::RbfBasis => 1,
            StreamLabel::PurcBasis => 2,
            StreamLabel::RvqCodebook(user) => {
                assert!(user < u32::MAX - 3, "user id {user} exceeds the stream label space");
                3 + user
            }
        }
    }
}

/// Source of per-trial substreams for one experiment point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub master_seed: u64,
    pub point_key: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64, point_key: u64) -> Self {
        SeedPolicy { master_seed, point_key }
    }

    pub fn stream(&self, trial_index: u64, label: StreamLabel) -> ChaCha8Rng {
        assert!(trial_index < 1 << 32, "trial index {trial_index} exceeds 2^32");
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.point_key.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(trial_index << 32 | u64::from(label.code()));
        rng
    }

    /// The per-trial view used by frame evaluators.
    pub fn trial(&self, trial_index: u64) -> TrialStreams {
        TrialStreams {
            policy: *self,
            trial_index,
        }
    }
}

/// Substreams belonging to a single trial (frame).
#[derive(Debug, Clone, Copy)]
pub struct TrialStreams {
    policy: SeedPolicy,
    trial_index: u64,
}

impl TrialStreams {
    pub fn get(&self, label: StreamLabel) -> ChaCha8Rng {
        self.policy.stream(self.trial_index, label)
    }

    pub fn trial_index(&self) -> u64 {
        self.trial_index
    }
}

/// Mixes a sequence of words into a 64-bit fingerprint (splitmix64 finalizer
/// applied after each word). Stable across platforms and toolchains.
pub fn fingerprint(words: &[u64]) -> u64 {
    let mut h: u64 = 0x6a09_e667_f3bc_c908;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// One block-fading frame: row `k` is user k's channel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CMatrix,
    pub frame_index: u64,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.h.rows()
    }

    pub fn antennas(&self) -> usize {
        self.h.cols()
    }
}

/// K×M i.i.d. CN(0,1) channel matrix.
pub fn draw_channel<R: rand::Rng + ?Sized>(k: usize, m: usize, frame_index: u64, rng: &mut R) -> ChannelRealization {
    assert!(m >= 1, "need at least one antenna");
    let mut h = CMatrix::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            h[(i, j)] = standard_complex_normal(rng);
        }
    }
    ChannelRealization { h, frame_index }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dot;
    use rand::RngCore;

    /// Gamma(n, 1) CDF for integer n: 1 - e^{-x} Σ_{k<n} x^k / k!.
    fn gamma_cdf(n: usize, x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..n {
            if k > 0 {
                term *= x / k as f64;
            }
            sum += term;
        }
        1.0 - (-x).exp() * sum
    }

    fn first_words(mut rng: ChaCha8Rng) -> Vec<u64> {
        (0..4).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn labels_are_distinct() {
        let labels = [
            StreamLabel::Channel,
            StreamLabel::RbfBasis,
            StreamLabel::PurcBasis,
            StreamLabel::RvqCodebook(0),
            StreamLabel::RvqCodebook(1),
        ];
        let codes: std::collections::HashSet<_> = labels.iter().map(|l| l.code()).collect();
        assert_eq!(codes.len(), labels.len());
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let p = SeedPolicy::new(7, 11);
        let a = first_words(p.stream(3, StreamLabel::Channel));
        assert_eq!(a, first_words(p.stream(3, StreamLabel::Channel)));
        for other in [
            p.stream(4, StreamLabel::Channel),
            p.stream(3, StreamLabel::RbfBasis),
            p.stream(3, StreamLabel::RvqCodebook(0)),
            SeedPolicy::new(8, 11).stream(3, StreamLabel::Channel),
            SeedPolicy::new(7, 12).stream(3, StreamLabel::Channel),
        ] {
            assert_ne!(first_words(other), a);
        }
    }

    #[test]
    fn draw_is_reproducible() {
        let p = SeedPolicy::new(1, 2);
        let a = draw_channel(5, 4, 0, &mut p.stream(9, StreamLabel::Channel));
        let b = draw_channel(5, 4, 0, &mut p.stream(9, StreamLabel::Channel));
        assert_eq!(a, b);
    }

    #[test]
    fn entry_and_norm_moments() {
        let m = 4;
        let n = 250_000; // users; 10^6 entries in total
        let ch = draw_channel(n, m, 0, &mut SeedPolicy::new(3, 0).stream(0, StreamLabel::Channel));
        let mut entry_sum = 0.0;
        let mut entry_sq = 0.0;
        let mut norm_sum = 0.0;
        let mut norm_sq = 0.0;
        for k in 0..n {
            let row = ch.h.row(k);
            for z in row {
                let e = z.norm_sqr();
                entry_sum += e;
                entry_sq += e * e;
            }
            let nn = dot(row, row).re;
            norm_sum += nn;
            norm_sq += nn * nn;
        }
        let ne = (n * m) as f64;
        let em = entry_sum / ne;
        let es = ((entry_sq / ne - em * em) / ne).sqrt();
        assert!((em - 1.0).abs() < 3.0 * es, "entry mean {em}");
        let nm = norm_sum / n as f64;
        let ns = ((norm_sq / n as f64 - nm * nm) / n as f64).sqrt();
        assert!((nm - m as f64).abs() < 3.0 * ns, "norm mean {nm}");
    }

    #[test]
    fn norm_follows_gamma_m_1() {
        // ‖h‖² = ½ χ²_{2M} = Gamma(shape M, rate 1). Kolmogorov-Smirnov test.
        let m = 4;
        let n = 20_000;
        let ch = draw_channel(n, m, 0, &mut SeedPolicy::new(4, 0).stream(0, StreamLabel::Channel));
        let mut norms: Vec<f64> = (0..n).map(|k| dot(ch.h.row(k), ch.h.row(k)).re).collect();
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nf = n as f64;
        let d = norms
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = gamma_cdf(m, x);
                (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at p = 0.01.
        let crit = 1.628 / nf.sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn directions_are_isotropic() {
        let m = 4;
        let n = 100_000;
        let ch = draw_channel(n, m, 0, &mut SeedPolicy::new(5, 0).stream(0, StreamLabel::Channel));
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let r = ch.h.row(k);
                r[0].norm_sqr() / dot(r, r).re
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let mf = m as f64;
        let sigma = ((mf - 1.0) / (mf * mf * (mf + 1.0)) / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * sigma);
    }

    #[test]
    fn fingerprint_depends_on_order_and_values() {
        assert_ne!(fingerprint(&[1, 2]), fingerprint(&[2, 1]));
        assert_ne!(fingerprint(&[1]), fingerprint(&[1, 0]));
        assert_eq!(fingerprint(&[5, 6, 7]), fingerprint(&[5, 6, 7]));
    }
}
