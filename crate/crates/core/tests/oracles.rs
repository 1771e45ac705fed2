//! Implementations checked against independent brute-force or Monte Carlo oracles.

use fbtrade::channel::{draw_channel, SeedPolicy, StreamLabel};
use fbtrade::numerics::{complex_normal_vector, CMatrix, CVector, C64};
use fbtrade::quantizer::{
    build_rbf_codebook, build_rvq_codebook, quantize, quantize_rvq, sample_rvq_error, Codebook, CodebookKind, Owner,
    PurcCodebookSet, RvqMode,
};
use fbtrade::schemes::{
    estimated_zf_rate, greedy_select, purc_frame_with_set, rbf_frame_with_basis, zf_perfect_csit_frame, zf_rvq_frame,
    EstimatedChannel, Scheme, SystemParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean_sigma(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// sin² of the angle between h and w from real and imaginary parts directly.
fn sin_sq_oracle(h: &[C64], w: &[C64]) -> f64 {
    let (mut re, mut im, mut hh, mut ww) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in h.iter().zip(w) {
        // conj(a) * b
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
        hh += a.re * a.re + a.im * a.im;
        ww += b.re * b.re + b.im * b.im;
    }
    1.0 - (re * re + im * im) / (hh * ww)
}

#[test]
fn quantize_equals_exhaustive_scan() {
    let mut r = rng(11);
    for trial in 0..1000 {
        let bits = 1 + trial % 12;
        let m = 2 + trial as usize % 5;
        let cb = build_rvq_codebook(bits, m, Owner::User(0), &mut r).unwrap();
        let h = complex_normal_vector(m, &mut r);
        let q = quantize(&h, &cb).unwrap();
        let (best, err) = cb
            .vectors
            .iter()
            .enumerate()
            .map(|(i, w)| (i, sin_sq_oracle(&h, w)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        assert_eq!(q.index, best, "trial {trial}");
        assert!((q.sin_sq_error - err).abs() < 1e-12);
    }
}

#[test]
fn quantization_error_is_phase_invariant() {
    let mut r = rng(12);
    let cb = build_rvq_codebook(8, 4, Owner::User(0), &mut r).unwrap();
    for k in 0..500 {
        let h = complex_normal_vector(4, &mut r);
        let rotated = h.scaled(C64::from_polar(1.0, 0.05 * k as f64));
        let a = quantize(&h, &cb).unwrap();
        let b = quantize(&rotated, &cb).unwrap();
        assert_eq!(a.index, b.index);
        assert!((a.sin_sq_error - b.sin_sq_error).abs() < 1e-12);
    }
}

#[test]
fn statistical_rvq_matches_explicit_codebooks() {
    // Two realizations of the same ensemble: enumerate 2^B codewords, or
    // draw the winner from the closed-form error law.
    let m = 4;
    for bits in [4u32, 7] {
        let n = 20_000;
        let mut r = rng(13 + bits as u64);
        let explicit: Vec<f64> = (0..n)
            .map(|_| {
                let h = complex_normal_vector(m, &mut r);
                quantize_rvq(&h, bits, Owner::User(0), RvqMode::Explicit, &mut r)
                    .unwrap()
                    .sin_sq_error
            })
            .collect();
        let statistical: Vec<f64> = (0..n).map(|_| sample_rvq_error(bits, m, &mut r)).collect();
        let (me, se) = mean_sigma(&explicit);
        let (ms, ss) = mean_sigma(&statistical);
        let s = (se * se + ss * ss).sqrt();
        assert!((me - ms).abs() < 3.0 * s, "B={bits}: explicit {me}, statistical {ms}");
    }
    // For M = 2 the error is the min of N uniforms, with mean 1/(N+1).
    let n = 40_000;
    let mut r = rng(99);
    let v: Vec<f64> = (0..n).map(|_| sample_rvq_error(5, 2, &mut r)).collect();
    let (mv, sv) = mean_sigma(&v);
    assert!((mv - 1.0 / 33.0).abs() < 3.0 * sv);
}

#[test]
fn statistical_and_explicit_give_same_zf_rate() {
    let params = SystemParams::new(Scheme::ZfRvq, 4, 10.0, 60, Some(6)).unwrap();
    let policy = SeedPolicy::new(5, 1);
    let n = 4000;
    let run = |mode: RvqMode, offset: u64| -> Vec<f64> {
        (0..n)
            .map(|t| {
                let s = policy.trial(t + offset);
                let ch = draw_channel(params.k, params.m, t, &mut s.get(StreamLabel::Channel));
                zf_rvq_frame(&ch, &params, mode, &s).unwrap()
            })
            .collect()
    };
    let (me, se) = mean_sigma(&run(RvqMode::Explicit, 0));
    let (ms, ss) = mean_sigma(&run(RvqMode::Statistical, n));
    assert!((me - ms).abs() < 3.0 * (se * se + ss * ss).sqrt(), "{me} vs {ms}");
}

#[test]
fn mean_error_decreases_with_bits() {
    let mut prev = f64::INFINITY;
    let mut r = rng(14);
    for bits in 1..=8 {
        let v: Vec<f64> = (0..10_000)
            .map(|_| {
                let h = complex_normal_vector(4, &mut r);
                quantize_rvq(&h, bits, Owner::User(0), RvqMode::Explicit, &mut r)
                    .unwrap()
                    .sin_sq_error
            })
            .collect();
        let (m, _) = mean_sigma(&v);
        assert!(m < prev, "B={bits}: {m} !< {prev}");
        prev = m;
    }
}

fn all_subsets_best(est: &[EstimatedChannel], p: f64, max_size: usize) -> Vec<u32> {
    let k = est.len();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for mask in 1u32..(1 << k) {
        if mask.count_ones() as usize > max_size {
            continue;
        }
        let members: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let rows: Vec<CVector> = members.iter().map(|&i| est[i].g.clone()).collect();
        if let Ok(r) = estimated_zf_rate(&rows, p) {
            if r > best.1 {
                best = (members.iter().map(|&i| est[i].user).collect(), r);
            }
        }
    }
    best.0
}

#[test]
fn greedy_agrees_with_subset_search_most_of_the_time() {
    let mut r = rng(15);
    let frames = 1000;
    let mut agree = 0;
    for _ in 0..frames {
        let est: Vec<EstimatedChannel> = (0..6)
            .map(|u| EstimatedChannel {
                user: u,
                g: complex_normal_vector(2, &mut r),
            })
            .collect();
        let plan = greedy_select(&est, 10.0, 2).unwrap();
        let mut chosen = plan.users();
        chosen.sort();
        if chosen == all_subsets_best(&est, 10.0, 2) {
            agree += 1;
        }
    }
    let rate = agree as f64 / frames as f64;
    // Regression statistic: 0.811 measured with this seed; an independent
    // numpy reimplementation gives 0.81 at 10 dB and 0.95 only near 0 dB.
    assert!(rate >= 0.80, "agreement {rate}");
}

#[test]
fn perfect_csit_dominates_and_is_approached() {
    let p = 10.0;
    let policy = SeedPolicy::new(16, 0);
    let n = 4000;
    let mut perfect = Vec::with_capacity(n);
    let mut coarse = Vec::with_capacity(n);
    let mut fine = Vec::with_capacity(n);
    let coarse_params = SystemParams::new(Scheme::ZfRvq, 4, p, 40, Some(10)).unwrap();
    let fine_params = SystemParams::new(Scheme::ZfRvq, 4, p, 120, Some(30)).unwrap();
    for t in 0..n as u64 {
        let s = policy.trial(t);
        let ch = draw_channel(4, 4, t, &mut s.get(StreamLabel::Channel));
        perfect.push(zf_perfect_csit_frame(&ch, p).unwrap());
        coarse.push(zf_rvq_frame(&ch, &coarse_params, RvqMode::default(), &s).unwrap());
        fine.push(zf_rvq_frame(&ch, &fine_params, RvqMode::default(), &s).unwrap());
    }
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    // Paired differences on common channels.
    let (d_coarse, s_coarse) = mean_sigma(&diff(&perfect, &coarse));
    assert!(d_coarse > 3.0 * s_coarse, "perfect - B10 = {d_coarse} ± {s_coarse}");
    let (d_fine, s_fine) = mean_sigma(&diff(&perfect, &fine));
    assert!(d_fine > -3.0 * s_fine);
    assert!(d_fine < 0.2, "perfect - B30 = {d_fine}");
}

#[test]
fn rbf_rate_does_not_depend_on_basis_choice() {
    let elementary = Codebook {
        vectors: (0..4).map(|i| CVector::basis(4, i)).collect(),
        kind: CodebookKind::Orthonormal,
        owner: Owner::Shared,
    };
    let mut r = rng(17);
    let n = 10_000;
    let mut fixed = Vec::with_capacity(n);
    let mut redrawn = Vec::with_capacity(n);
    for _ in 0..n {
        let ch = draw_channel(10, 4, 0, &mut r);
        fixed.push(rbf_frame_with_basis(&ch.h, &elementary, 10.0));
        let ch = draw_channel(10, 4, 0, &mut r);
        let basis = build_rbf_codebook(4, &mut r);
        redrawn.push(rbf_frame_with_basis(&ch.h, &basis, 10.0));
    }
    let (a, sa) = mean_sigma(&fixed);
    let (b, sb) = mean_sigma(&redrawn);
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
}

#[test]
fn rbf_rate_grows_with_users() {
    let mut r = rng(18);
    let n = 5000;
    let mut prev: Option<(f64, f64)> = None;
    for k in [2usize, 5, 10, 25, 50] {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let ch = draw_channel(k, 4, 0, &mut r);
                let basis = build_rbf_codebook(4, &mut r);
                rbf_frame_with_basis(&ch.h, &basis, 10.0)
            })
            .collect();
        let cur = mean_sigma(&v);
        if let Some((pm, ps)) = prev {
            assert!(
                cur.0 > pm - 3.0 * (ps * ps + cur.1 * cur.1).sqrt(),
                "K={k}: {} < {pm}",
                cur.0
            );
        }
        prev = Some(cur);
    }
}

#[test]
fn single_basis_purc_is_rbf_in_distribution() {
    let mut r = rng(19);
    let n = 10_000;
    let mut purc = Vec::with_capacity(n);
    let mut rbf = Vec::with_capacity(n);
    for _ in 0..n {
        let ch = draw_channel(20, 4, 0, &mut r);
        let set = PurcCodebookSet {
            codebooks: vec![build_rbf_codebook(4, &mut r)],
        };
        purc.push(purc_frame_with_set(&ch.h, &set, 10.0));
        let ch = draw_channel(20, 4, 0, &mut r);
        rbf.push(rbf_frame_with_basis(&ch.h, &build_rbf_codebook(4, &mut r), 10.0));
    }
    let (a, sa) = mean_sigma(&purc);
    let (b, sb) = mean_sigma(&rbf);
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt());
}

#[test]
fn zf_perfect_single_user_closed_form() {
    let mut r = rng(20);
    let h = complex_normal_vector(4, &mut r);
    let ch = fbtrade::channel::ChannelRealization {
        h: CMatrix::from_rows(std::slice::from_ref(&h)).unwrap(),
        frame_index: 0,
    };
    let rate = zf_perfect_csit_frame(&ch, 10.0).unwrap();
    assert!((rate - (1.0 + 10.0 * h.norm_sqr()).log2()).abs() < 1e-12);
}
