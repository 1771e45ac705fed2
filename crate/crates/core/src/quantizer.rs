//! Channel-direction codebooks and minimum-angle quantization.
//!
//! Three codebook families are supported: per-user random vector
//! quantization (RVQ) codebooks of i.i.d. isotropic unit vectors, the
//! shared orthonormal basis used by random beamforming, and PU²RC sets of
//! several orthonormal bases.
//!
//! RVQ can be realized in three ways that agree in distribution:
//! materializing the codebook, scanning streamed codewords in constant
//! memory, or sampling the winning codeword directly from the known law
//! of the RVQ quantization error. The last is the only option once B
//! reaches a few dozen bits.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{complex_normal_vector, dot, haar_orthonormal, norm_sqr, CVector, C64};

/// Largest B for which a codebook is ever enumerated.
pub const MAX_EXPLICIT_BITS: u32 = 30;
/// Above this many bits explicit RVQ switches from a stored codebook to a streaming scan.
pub const MAX_STORED_BITS: u32 = 20;
/// Largest B accepted by the statistical sampler (2^B must be a finite f64).
pub const MAX_STATISTICAL_BITS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    Rvq,
    Orthonormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    User(u32),
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub vectors: Vec<CVector>,
    pub kind: CodebookKind,
    pub owner: Owner,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    /// Feedback bits needed to index a codeword.
    pub fn index_bits(&self) -> u32 {
        index_bits(self.len())
    }
}

/// `⌈log₂ n⌉`, the index size for `n` codewords.
pub fn index_bits(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Several orthonormal codebooks shared by all users (PU²RC).
#[derive(Debug, Clone, PartialEq)]
pub struct PurcCodebookSet {
    pub codebooks: Vec<Codebook>,
}

impl PurcCodebookSet {
    pub fn len(&self) -> usize {
        self.codebooks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebooks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationResult {
    pub index: usize,
    /// sin² of the angle between the channel and the chosen codeword.
    pub sin_sq_error: f64,
}

/// Outcome of quantizing one user's channel against its RVQ codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqQuantization {
    /// Codeword index; `None` when the codebook was never materialized.
    pub index: Option<u64>,
    pub sin_sq_error: f64,
    pub codeword: CVector,
}

/// How an RVQ quantization is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RvqMode {
    /// Enumerate every codeword (stored for B ≤ 20, streamed up to B = 30).
    Explicit,
    /// Draw the winning codeword from the exact RVQ error distribution.
    Statistical,
    /// Explicit up to `max_explicit_bits`, statistical above.
    Auto { max_explicit_bits: u32 },
}

impl Default for RvqMode {
    fn default() -> Self {
        RvqMode::Auto { max_explicit_bits: 8 }
    }
}

impl RvqMode {
    pub fn is_explicit(self, bits: u32) -> bool {
        match self {
            RvqMode::Explicit => true,
            RvqMode::Statistical => false,
            RvqMode::Auto { max_explicit_bits } => bits <= max_explicit_bits,
        }
    }

    pub fn max_bits(self) -> u32 {
        match self {
            RvqMode::Explicit => MAX_EXPLICIT_BITS,
            _ => MAX_STATISTICAL_BITS,
        }
    }
}

fn check_bits(bits: u32, min: u32, max: u32) -> Result<()> {
    if bits < min || bits > max {
        return Err(Error::BitsOutOfRange { bits, min, max });
    }
    Ok(())
}

/// One isotropic unit vector: a normalized CN(0, I) draw.
fn isotropic_unit<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVector {
    loop {
        if let Some(v) = complex_normal_vector(m, rng).normalized() {
            return v;
        }
    }
}

pub fn build_rvq_codebook<R: Rng + ?Sized>(bits: u32, m: usize, owner: Owner, rng: &mut R) -> Result<Codebook> {
    check_bits(bits, 1, MAX_EXPLICIT_BITS)?;
    let n = 1usize << bits;
    Ok(Codebook {
        vectors: (0..n).map(|_| isotropic_unit(m, rng)).collect(),
        kind: CodebookKind::Rvq,
        owner,
    })
}

/// M orthonormal beams: the columns of a Haar unitary.
pub fn build_rbf_codebook<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Codebook {
    Codebook {
        vectors: haar_orthonormal(m, rng).columns(),
        kind: CodebookKind::Orthonormal,
        owner: Owner::Shared,
    }
}

/// `2^extra_bits` independent orthonormal bases.
pub fn build_purc_set<R: Rng + ?Sized>(extra_bits: u32, m: usize, rng: &mut R) -> Result<PurcCodebookSet> {
    check_bits(extra_bits, 0, MAX_EXPLICIT_BITS - index_bits(m))?;
    Ok(PurcCodebookSet {
        codebooks: (0..1usize << extra_bits).map(|_| build_rbf_codebook(m, rng)).collect(),
    })
}

/// Minimum-angle quantization; ties go to the lowest codeword index.
pub fn quantize(h: &[C64], codebook: &Codebook) -> Result<QuantizationResult> {
    let hn = norm_sqr(h);
    if hn == 0.0 {
        return Err(Error::ZeroVector);
    }
    if codebook.is_empty() {
        return Err(Error::DimensionMismatch {
            left: h.len(),
            right: 0,
        });
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, w) in codebook.vectors.iter().enumerate() {
        if w.len() != h.len() {
            return Err(Error::DimensionMismatch {
                left: h.len(),
                right: w.len(),
            });
        }
        let c = dot(h, w).norm_sqr();
        if c > best.1 {
            best = (i, c);
        }
    }
    Ok(QuantizationResult {
        index: best.0,
        sin_sq_error: sin_sq(best.1, hn),
    })
}

#[inline]
fn sin_sq(cos_num: f64, h_norm_sqr: f64) -> f64 {
    (1.0 - cos_num / h_norm_sqr).clamp(0.0, 1.0)
}

/// Quantize against a `2^bits` RVQ codebook generated codeword by codeword
/// from `rng`. Same draws, in the same order, as [`build_rvq_codebook`], so
/// both give identical results for the same stream.
pub fn quantize_rvq_streaming<R: Rng + ?Sized>(h: &[C64], bits: u32, rng: &mut R) -> Result<RvqQuantization> {
    check_bits(bits, 1, MAX_EXPLICIT_BITS)?;
    let hn = norm_sqr(h);
    if hn == 0.0 {
        return Err(Error::ZeroVector);
    }
    let m = h.len();
    let mut best: Option<(u64, f64, CVector)> = None;
    for i in 0..(1u64 << bits) {
        let w = isotropic_unit(m, rng);
        let c = dot(h, &w).norm_sqr();
        if best.as_ref().is_none_or(|b| c > b.1) {
            best = Some((i, c, w));
        }
    }
    let (index, c, codeword) = best.expect("codebook has at least two entries");
    Ok(RvqQuantization {
        index: Some(index),
        sin_sq_error: sin_sq(c, hn),
        codeword,
    })
}

/// Draw sin² of the best of `2^bits` isotropic codewords.
///
/// Each codeword's sin² against a fixed direction has CDF `x^(M-1)`, so
/// the minimum over N codewords is `(1 - V^(1/N))^(1/(M-1))` for uniform V.
pub fn sample_rvq_error<R: Rng + ?Sized>(bits: u32, m: usize, rng: &mut R) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    let n = 2f64.powi(bits as i32);
    // V in (0, 1]
    let v: f64 = 1.0 - rng.random::<f64>();
    let base = -(v.ln() / n).exp_m1();
    base.powf(1.0 / (m as f64 - 1.0)).clamp(0.0, 1.0)
}

/// Statistical RVQ: the winning codeword is `√(1-Z)·e^{jφ}·ĥ + √Z·s`,
/// with Z from [`sample_rvq_error`], φ uniform and s an isotropic unit
/// vector orthogonal to the channel direction ĥ.
pub fn sample_rvq_quantization<R: Rng + ?Sized>(h: &[C64], bits: u32, rng: &mut R) -> Result<RvqQuantization> {
    check_bits(bits, 1, MAX_STATISTICAL_BITS)?;
    let dir = CVector(h.to_vec()).normalized().ok_or(Error::ZeroVector)?;
    let m = dir.len();
    let z = sample_rvq_error(bits, m, rng);
    let phase = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
    let mut codeword = dir.scaled(phase * (1.0 - z).sqrt());
    if m > 1 && z > 0.0 {
        let s = loop {
            let mut s = complex_normal_vector(m, rng);
            let p = dot(&dir, &s);
            for (si, di) in s.iter_mut().zip(dir.iter()) {
                *si -= p * di;
            }
            if let Some(u) = s.normalized() {
                break u;
            }
        };
        let zs = z.sqrt();
        for (c, si) in codeword.iter_mut().zip(s.iter()) {
            *c += si * zs;
        }
    }
    Ok(RvqQuantization {
        index: None,
        sin_sq_error: z,
        codeword,
    })
}

/// Quantize `h` with a fresh RVQ codebook realized according to `mode`.
pub fn quantize_rvq<R: Rng + ?Sized>(
    h: &[C64],
    bits: u32,
    owner: Owner,
    mode: RvqMode,
    rng: &mut R,
) -> Result<RvqQuantization> {
    if !mode.is_explicit(bits) {
        return sample_rvq_quantization(h, bits, rng);
    }
    if bits > MAX_STORED_BITS {
        return quantize_rvq_streaming(h, bits, rng);
    }
    let cb = build_rvq_codebook(bits, h.len(), owner, rng)?;
    let q = quantize(h, &cb)?;
    Ok(RvqQuantization {
        index: Some(q.index as u64),
        sin_sq_error: q.sin_sq_error,
        codeword: cb.vectors[q.index].clone(),
    })
}

/// `[(M-1)/M · 2^(-B/(M-1)), 2^(-B/(M-1))]`, the sandwich on E[sin²] for RVQ.
pub fn rvq_error_bounds(bits: u32, m: usize) -> (f64, f64) {
    let mf = m as f64;
    let upper = 2f64.powf(-(bits as f64) / (mf - 1.0));
    ((mf - 1.0) / mf * upper, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rvq_codebook_shape() {
        let cb = build_rvq_codebook(1, 2, Owner::User(0), &mut rng(1)).unwrap();
        assert_eq!(cb.len(), 2);
        assert_ne!(cb.vectors[0], cb.vectors[1]);
        let cb = build_rvq_codebook(8, 4, Owner::User(3), &mut rng(2)).unwrap();
        assert_eq!(cb.len(), 256);
        assert_eq!(cb.index_bits(), 8);
        assert!(cb.vectors.iter().all(|v| v.is_unit(1e-12)));
    }

    #[test]
    fn rvq_bits_out_of_range() {
        assert!(matches!(
            build_rvq_codebook(0, 4, Owner::Shared, &mut rng(1)),
            Err(Error::BitsOutOfRange { .. })
        ));
        assert!(matches!(
            build_rvq_codebook(31, 4, Owner::Shared, &mut rng(1)),
            Err(Error::BitsOutOfRange { .. })
        ));
    }

    #[test]
    fn rbf_codebook_is_orthonormal() {
        let cb = build_rbf_codebook(4, &mut rng(3));
        assert_eq!(cb.len(), 4);
        assert_eq!(cb.index_bits(), 2);
        for i in 0..4 {
            for j in 0..4 {
                let g = dot(&cb.vectors[i], &cb.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - C64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rbf_codebook_differs_between_frames() {
        use crate::channel::{SeedPolicy, StreamLabel};
        let p = SeedPolicy::new(1, 0);
        let a = build_rbf_codebook(4, &mut p.stream(0, StreamLabel::RbfBasis));
        let b = build_rbf_codebook(4, &mut p.stream(1, StreamLabel::RbfBasis));
        assert_ne!(a, b);
    }

    #[test]
    fn exact_codeword_matches() {
        let cb = build_rvq_codebook(4, 4, Owner::User(0), &mut rng(4)).unwrap();
        let h = cb.vectors[3].scaled(C64::new(2.5, 0.0));
        let q = quantize(&h, &cb).unwrap();
        assert_eq!(q.index, 3);
        assert!(q.sin_sq_error < 1e-12);
    }

    #[test]
    fn elementary_basis_quantization() {
        let cb = Codebook {
            vectors: vec![CVector::basis(2, 0), CVector::basis(2, 1)],
            kind: CodebookKind::Orthonormal,
            owner: Owner::Shared,
        };
        let q = quantize(&CVector::from_reals(&[1.0, 0.0]), &cb).unwrap();
        assert_eq!(q.index, 0);
        assert_eq!(q.sin_sq_error, 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cb = Codebook {
            vectors: vec![CVector::basis(2, 0), CVector::basis(2, 1)],
            kind: CodebookKind::Orthonormal,
            owner: Owner::Shared,
        };
        let q = quantize(&CVector::from_reals(&[1.0, 1.0]), &cb).unwrap();
        assert_eq!(q.index, 0);
        assert!((q.sin_sq_error - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_rejected() {
        let cb = build_rbf_codebook(2, &mut rng(5));
        assert_eq!(quantize(&CVector::zeros(2), &cb).unwrap_err(), Error::ZeroVector);
        assert_eq!(
            sample_rvq_quantization(&CVector::zeros(2), 4, &mut rng(1)).unwrap_err(),
            Error::ZeroVector
        );
    }

    #[test]
    fn streaming_scan_matches_stored_codebook() {
        let mut r = rng(6);
        for bits in [1, 5, 9] {
            let h = complex_normal_vector(4, &mut r);
            let stored =
                quantize_rvq(&h, bits, Owner::User(0), RvqMode::Explicit, &mut rng(100 + bits as u64)).unwrap();
            let streamed = quantize_rvq_streaming(&h, bits, &mut rng(100 + bits as u64)).unwrap();
            assert_eq!(stored, streamed);
        }
    }

    #[test]
    fn statistical_codeword_has_requested_error() {
        let mut r = rng(7);
        for _ in 0..1000 {
            let h = complex_normal_vector(4, &mut r);
            let q = sample_rvq_quantization(&h, 6, &mut r).unwrap();
            assert!(q.codeword.is_unit(1e-12));
            let cos = dot(&h, &q.codeword).norm_sqr() / norm_sqr(&h);
            assert!((1.0 - cos - q.sin_sq_error).abs() < 1e-12);
        }
    }

    #[test]
    fn sandwich_bounds_values() {
        let (lo, hi) = rvq_error_bounds(10, 4);
        assert!((lo - 0.07441).abs() < 1e-4);
        assert!((hi - 0.09921).abs() < 1e-4);
        // B = 25, M = 4: about 99.7% of the direction is captured.
        let (_, hi) = rvq_error_bounds(25, 4);
        assert!((1.0 - hi - 0.9969).abs() < 1e-4);
    }

    #[test]
    fn index_bits_rounds_up() {
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(4), 2);
        assert_eq!(index_bits(6), 3);
        assert_eq!(index_bits(8), 3);
    }

    #[test]
    fn statistical_mode_accepts_huge_codebooks() {
        let h = CVector::from_reals(&[1.0, 0.0, 0.0, 0.0]);
        let q = quantize_rvq(&h, 250, Owner::User(0), RvqMode::default(), &mut rng(8)).unwrap();
        assert!(q.sin_sq_error < 1e-20);
        assert!(q.index.is_none());
    }
}
