//! Per-frame evaluation of the feedback/transmission strategies.
//!
//! * RBF: shared orthonormal beams, users report best beam + SINR, the best
//!   user per beam is served.
//! * ZF-RVQ: users report an RVQ codeword + ‖h‖², the transmitter runs
//!   greedy selection on the quantized channels and zero-forces them.
//! * PU²RC: RBF over several shared orthonormal bases; the transmitter
//!   serves the basis with the largest rate.
//! * Perfect-CSIT ZF: greedy selection and ZF on the true channels.
//!
//! Power is split evenly over served streams. ZF-RVQ rates are computed
//! on the true channels, so quantization error shows up as residual
//! interference.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, StreamLabel, TrialStreams};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm_sqr, CMatrix, CVector, C64, RANK_TOL};
use crate::quantizer::{
    build_purc_set, build_rbf_codebook, index_bits, quantize_rvq, Codebook, Owner, PurcCodebookSet, RvqMode,
    MAX_EXPLICIT_BITS,
};

/// Most extra bits PU²RC may spend on selecting among bases.
pub const MAX_PURC_EXTRA_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Rbf,
    ZfRvq,
    Purc,
    ZfPerfect,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rbf => "rbf",
            Scheme::ZfRvq => "zf-rvq",
            Scheme::Purc => "purc",
            Scheme::ZfPerfect => "zf-perfect",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Scheme::Rbf => 1,
            Scheme::ZfRvq => 2,
            Scheme::Purc => 3,
            Scheme::ZfPerfect => 4,
        }
    }

    /// Smallest admissible bits per user at `m` antennas.
    pub fn min_bits(self, m: usize) -> u32 {
        match self {
            Scheme::Rbf | Scheme::Purc => index_bits(m),
            Scheme::ZfRvq => (1.0 + (m as f64).log2()).ceil() as u32,
            Scheme::ZfPerfect => 1,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rbf" => Ok(Scheme::Rbf),
            "zf-rvq" | "rvq" => Ok(Scheme::ZfRvq),
            "purc" | "pu2rc" => Ok(Scheme::Purc),
            "zf-perfect" | "perfect" => Ok(Scheme::ZfPerfect),
            other => Err(Error::config(
                "scheme",
                format!("unknown scheme `{other}` (expected rbf, zf-rvq, purc or zf-perfect)"),
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Resolved, validated system parameters of one experiment point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub scheme: Scheme,
    /// Transmit antennas.
    pub m: usize,
    /// Total transmit power, linear (noise has unit variance).
    pub p: f64,
    /// Total feedback budget in bits.
    pub t: u32,
    /// Feedback bits per user.
    pub b: u32,
    /// Users feeding back: `floor(T / B)`.
    pub k: usize,
}

impl SystemParams {
    /// Validate and resolve. `b = None` is allowed for RBF (index bits)
    /// and perfect-CSIT ZF (one bit, i.e. a pool of T users).
    pub fn new(scheme: Scheme, m: usize, p: f64, t: u32, b: Option<u32>) -> Result<Self> {
        if m == 0 || m > 64 {
            return Err(Error::config("M", "antenna count must be in 1..=64"));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::config("snr_db", "transmit power must be positive and finite"));
        }
        if t == 0 {
            return Err(Error::config("T", "feedback budget must be positive"));
        }
        let log2m = (m as f64).log2();
        let b = match scheme {
            Scheme::Rbf => {
                if m < 2 {
                    return Err(Error::config("M", "RBF needs at least 2 antennas"));
                }
                let idx = index_bits(m);
                match b {
                    Some(b) if b != idx => {
                        return Err(Error::config(
                            "B",
                            format!("RBF uses exactly ceil(log2(M)) = {idx} bits per user"),
                        ))
                    }
                    _ => idx,
                }
            }
            Scheme::ZfRvq => {
                let b = b.ok_or_else(|| Error::config("B", "ZF-RVQ needs bits per user"))?;
                if (b as f64) < 1.0 + log2m {
                    return Err(Error::config("B", format!("B below 1+log2(M) = {:.3}", 1.0 + log2m)));
                }
                if b as usize * m > t as usize {
                    return Err(Error::config("B", format!("B above T/M = {:.3}", t as f64 / m as f64)));
                }
                if b > RvqMode::Statistical.max_bits() {
                    return Err(Error::config("B", "B too large for the RVQ sampler"));
                }
                b
            }
            Scheme::Purc => {
                if m < 2 {
                    return Err(Error::config("M", "PU2RC needs at least 2 antennas"));
                }
                let b = b.ok_or_else(|| Error::config("B", "PU2RC needs bits per user"))?;
                let idx = index_bits(m);
                if b < idx {
                    return Err(Error::config("B", format!("B below ceil(log2(M)) = {idx}")));
                }
                if b - idx > MAX_PURC_EXTRA_BITS || b > MAX_EXPLICIT_BITS {
                    return Err(Error::config(
                        "B",
                        format!("B above ceil(log2(M)) + {MAX_PURC_EXTRA_BITS} (codebook set too large)"),
                    ));
                }
                b
            }
            Scheme::ZfPerfect => b.unwrap_or(1).max(1),
        };
        if b > t {
            return Err(Error::config("B", "B above T leaves no user to feed back"));
        }
        Ok(SystemParams {
            scheme,
            m,
            p,
            t,
            b,
            k: (t / b) as usize,
        })
    }
}

/// What one user sends back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackReport {
    pub user: u32,
    /// PU²RC basis index, 0 otherwise.
    pub codebook_id: u32,
    /// `None` when the RVQ codebook is implicit (statistical mode).
    pub codeword: Option<u64>,
    /// ‖h‖² for ZF-RVQ, SINR for RBF / PU²RC.
    pub scalar: f64,
}

/// ZF-RVQ feedback as the transmitter reconstructs it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedChannel {
    pub report: FeedbackReport,
    /// Unit-norm codeword.
    pub direction: CVector,
    /// Receiver-side sin² error; never available to the transmitter.
    pub sin_sq_error: f64,
}

impl QuantizedChannel {
    /// `‖h‖ · ŵ`, the channel the transmitter acts on.
    pub fn estimate(&self) -> EstimatedChannel {
        EstimatedChannel {
            user: self.report.user,
            g: self.direction.scaled(C64::new(self.report.scalar.sqrt(), 0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedChannel {
    pub user: u32,
    pub g: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitPlan {
    pub served: Vec<(u32, CVector)>,
    pub per_user_power: f64,
}

impl TransmitPlan {
    pub fn users(&self) -> Vec<u32> {
        self.served.iter().map(|(u, _)| *u).collect()
    }
}

// ---------------------------------------------------------------------------
// Random beamforming and PU²RC

/// `|h^H w_m|²` for every beam.
pub fn beam_gains(h: &[C64], beams: &[CVector]) -> Vec<f64> {
    beams.iter().map(|w| dot(h, w).norm_sqr()).collect()
}

/// SINR on beam `idx` with the other beams as interference:
/// `g_idx / (M/P + Σ_{n≠idx} g_n)`.
pub fn beam_sinr(gains: &[f64], idx: usize, p: f64) -> f64 {
    let m = gains.len() as f64;
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != idx)
        .map(|(_, g)| g)
        .sum();
    gains[idx] / (m / p + interference)
}

/// Same SINR via the completeness identity `Σ_{n≠m} g_n = ‖h‖² − g_m`;
/// valid only for a full orthonormal basis.
pub fn beam_sinr_from_norm(h_norm_sqr: f64, gain: f64, m: usize, p: f64) -> f64 {
    gain / (m as f64 / p + (h_norm_sqr - gain).max(0.0))
}

/// Each user's best beam of one orthonormal codebook.
pub fn rbf_feedback(h: &CMatrix, beams: &Codebook, p: f64) -> Vec<FeedbackReport> {
    (0..h.rows())
        .map(|k| {
            let gains = beam_gains(h.row(k), &beams.vectors);
            let (best, sinr) = best_beam(&gains, p);
            FeedbackReport {
                user: k as u32,
                codebook_id: 0,
                codeword: Some(best as u64),
                scalar: sinr,
            }
        })
        .collect()
}

fn best_beam(gains: &[f64], p: f64) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for m in 0..gains.len() {
        let s = beam_sinr(gains, m, p);
        if s > best.1 {
            best = (m, s);
        }
    }
    best
}

/// Per-beam winner (highest reported SINR, lowest user id on ties)
/// among `reports` restricted to `codebook_id`.
pub fn rbf_select(reports: &[FeedbackReport], codebook_id: u32, beams: usize) -> Vec<Option<(u32, f64)>> {
    let mut winners: Vec<Option<(u32, f64)>> = vec![None; beams];
    for r in reports.iter().filter(|r| r.codebook_id == codebook_id) {
        let Some(beam) = r.codeword else { continue };
        let slot = &mut winners[beam as usize];
        match slot {
            Some((u, s)) if r.scalar < *s || (r.scalar == *s && r.user > *u) => {}
            _ => *slot = Some((r.user, r.scalar)),
        }
    }
    winners
}

fn winners_rate(winners: &[Option<(u32, f64)>]) -> f64 {
    winners.iter().flatten().map(|(_, s)| (1.0 + s).log2()).sum()
}

/// RBF with a given basis.
pub fn rbf_frame_with_basis(h: &CMatrix, beams: &Codebook, p: f64) -> f64 {
    if h.rows() == 0 {
        return 0.0;
    }
    let reports = rbf_feedback(h, beams, p);
    winners_rate(&rbf_select(&reports, 0, beams.len()))
}

/// RBF frame: a fresh Haar basis per frame from the trial's RBF stream.
pub fn rbf_frame(ch: &ChannelRealization, params: &SystemParams, streams: &TrialStreams) -> f64 {
    let beams = build_rbf_codebook(params.m, &mut streams.get(StreamLabel::RbfBasis));
    rbf_frame_with_basis(&ch.h, &beams, params.p)
}

/// Each user's best (basis, beam, SINR) over the whole PU²RC set, with
/// interference from the same basis only. Ties go to the lowest basis,
/// then the lowest beam.
pub fn purc_feedback(h: &CMatrix, set: &PurcCodebookSet, p: f64) -> Vec<FeedbackReport> {
    (0..h.rows())
        .map(|k| {
            let mut best = (0u32, 0usize, f64::NEG_INFINITY);
            for (g, cb) in set.codebooks.iter().enumerate() {
                let gains = beam_gains(h.row(k), &cb.vectors);
                let (m, s) = best_beam(&gains, p);
                if s > best.2 {
                    best = (g as u32, m, s);
                }
            }
            FeedbackReport {
                user: k as u32,
                codebook_id: best.0,
                codeword: Some(best.1 as u64),
                scalar: best.2,
            }
        })
        .collect()
}

/// Candidate rate of every basis; a basis nobody reported scores 0.
pub fn purc_candidate_rates(reports: &[FeedbackReport], set: &PurcCodebookSet) -> Vec<f64> {
    set.codebooks
        .iter()
        .enumerate()
        .map(|(g, cb)| winners_rate(&rbf_select(reports, g as u32, cb.len())))
        .collect()
}

pub fn purc_frame_with_set(h: &CMatrix, set: &PurcCodebookSet, p: f64) -> f64 {
    if h.rows() == 0 {
        return 0.0;
    }
    let reports = purc_feedback(h, set, p);
    purc_candidate_rates(&reports, set).into_iter().fold(0.0, f64::max)
}

pub fn purc_frame(ch: &ChannelRealization, params: &SystemParams, streams: &TrialStreams) -> Result<f64> {
    let extra = params.b - index_bits(params.m);
    let set = build_purc_set(extra, params.m, &mut streams.get(StreamLabel::PurcBasis))?;
    Ok(purc_frame_with_set(&ch.h, &set, params.p))
}

// ---------------------------------------------------------------------------
// Zero forcing

/// Every user quantizes its channel with its own fresh RVQ codebook and
/// reports the codeword plus ‖h‖².
pub fn zf_rvq_feedback(
    ch: &ChannelRealization,
    params: &SystemParams,
    mode: RvqMode,
    streams: &TrialStreams,
) -> Result<Vec<QuantizedChannel>> {
    (0..ch.users())
        .map(|k| {
            let user = k as u32;
            let h = ch.h.row(k);
            let mut rng = streams.get(StreamLabel::RvqCodebook(user));
            let q = quantize_rvq(h, params.b, Owner::User(user), mode, &mut rng)?;
            Ok(QuantizedChannel {
                report: FeedbackReport {
                    user,
                    codebook_id: 0,
                    codeword: q.index,
                    scalar: norm_sqr(h),
                },
                direction: q.codeword,
                sin_sq_error: q.sin_sq_error,
            })
        })
        .collect()
}

/// ZF sum rate the transmitter predicts for `set`, treating the estimates
/// as true channels (no residual interference), equal power.
pub fn estimated_zf_rate(set: &[CVector], p: f64) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let g = CMatrix::from_rows(set)?;
    let beams = crate::numerics::zf_directions(&g)?;
    let pu = p / set.len() as f64;
    Ok(set
        .iter()
        .zip(&beams)
        .map(|(gi, wi)| (1.0 + pu * dot(gi, wi).norm_sqr()).log2())
        .sum())
}

/// Greedy user selection with zero forcing on the estimated channels.
///
/// Users are added one at a time, each time picking the candidate that
/// maximizes the predicted ZF sum rate of the enlarged set, until the set
/// holds M users or no candidate improves the rate. Ties go to the lowest
/// user id; candidates that make the set rank deficient are skipped.
///
/// Per-user ZF gains are `1 / [Γ⁻¹]_ii` with Γ the Gram matrix of the
/// selected estimates; Γ⁻¹ is grown by a Schur-complement update, so each
/// candidate costs O(|S|²).
pub fn greedy_select(est: &[EstimatedChannel], p: f64, m: usize) -> Result<TransmitPlan> {
    if est.is_empty() {
        return Err(Error::NoUsers);
    }
    let mut order: Vec<usize> = (0..est.len()).collect();
    order.sort_by_key(|&i| est[i].user);
    let norms: Vec<f64> = est.iter().map(|e| e.g.norm_sqr()).collect();

    let mut selected: Vec<usize> = Vec::with_capacity(m);
    let mut in_set = vec![false; est.len()];
    // Row-major |S|×|S| inverse Gram matrix.
    let mut ainv: Vec<C64> = Vec::new();
    // cross[u][i] = inner(g_{S_i}, g_u)
    let mut cross: Vec<Vec<C64>> = vec![Vec::with_capacity(m); est.len()];
    let mut rate = 0.0;
    let mut b = vec![C64::new(0.0, 0.0); m];

    while selected.len() < m {
        let s = selected.len();
        let pu = p / (s + 1) as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        for &u in &order {
            if in_set[u] || norms[u] <= 0.0 {
                continue;
            }
            let a = &cross[u];
            let mut quad = 0.0;
            for i in 0..s {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..s {
                    acc += ainv[i * s + j] * a[j];
                }
                b[i] = acc;
                quad += (a[i].conj() * acc).re;
            }
            let delta = norms[u] - quad;
            if delta <= RANK_TOL * norms[u] {
                continue;
            }
            let mut r = (1.0 + pu * delta).log2();
            for i in 0..s {
                let d = ainv[i * s + i].re + b[i].norm_sqr() / delta;
                r += (1.0 + pu / d).log2();
            }
            if best.is_none_or(|(_, br, _)| r > br) {
                best = Some((u, r, delta));
            }
        }
        let Some((u, r, delta)) = best else { break };
        if r <= rate {
            break;
        }
        // b = Γ⁻¹ a for the winner.
        let a = cross[u].clone();
        for i in 0..s {
            b[i] = (0..s).map(|j| ainv[i * s + j] * a[j]).sum();
        }
        let n = s + 1;
        let mut next = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..s {
            for j in 0..s {
                next[i * n + j] = ainv[i * s + j] + b[i] * b[j].conj() / delta;
            }
            next[i * n + s] = -b[i] / delta;
            next[s * n + i] = -b[i].conj() / delta;
        }
        next[s * n + s] = C64::new(1.0 / delta, 0.0);
        ainv = next;
        selected.push(u);
        in_set[u] = true;
        rate = r;
        for (v, c) in cross.iter_mut().enumerate() {
            if !in_set[v] {
                c.push(dot(&est[u].g, &est[v].g));
            }
        }
    }

    let n = selected.len();
    if n == 0 {
        return Err(Error::NoUsers);
    }
    let dim = est[selected[0]].g.len();
    let mut served = Vec::with_capacity(n);
    for j in 0..n {
        let mut x = CVector::zeros(dim);
        for (k, &sk) in selected.iter().enumerate() {
            let c = ainv[k * n + j];
            for (xi, gk) in x.iter_mut().zip(est[sk].g.iter()) {
                *xi += gk * c;
            }
        }
        let w = x.normalized().ok_or(Error::RankDeficient { pivot: 0.0 })?;
        served.push((est[selected[j]].user, w));
    }
    Ok(TransmitPlan {
        served,
        per_user_power: p / n as f64,
    })
}

/// Sum rate actually delivered on the true channels:
/// `SINR_k = p|h_k^H w_k|² / (1 + p Σ_{j≠k} |h_k^H w_j|²)`.
pub fn zf_true_rate(h: &CMatrix, plan: &TransmitPlan) -> f64 {
    let p = plan.per_user_power;
    plan.served
        .iter()
        .map(|(k, wk)| {
            let hk = h.row(*k as usize);
            let signal = p * dot(hk, wk).norm_sqr();
            let interference: f64 = plan
                .served
                .iter()
                .filter(|(j, _)| j != k)
                .map(|(_, wj)| p * dot(hk, wj).norm_sqr())
                .sum();
            (1.0 + signal / (1.0 + interference)).log2()
        })
        .sum()
}

pub fn zf_rvq_frame(
    ch: &ChannelRealization,
    params: &SystemParams,
    mode: RvqMode,
    streams: &TrialStreams,
) -> Result<f64> {
    if ch.users() == 0 {
        return Ok(0.0);
    }
    let fb = zf_rvq_feedback(ch, params, mode, streams)?;
    let est: Vec<EstimatedChannel> = fb.iter().map(QuantizedChannel::estimate).collect();
    let plan = greedy_select(&est, params.p, params.m)?;
    Ok(zf_true_rate(&ch.h, &plan))
}

/// Greedy ZF with the true channels known at the transmitter.
pub fn zf_perfect_csit_frame(ch: &ChannelRealization, p: f64) -> Result<f64> {
    if ch.users() == 0 {
        return Ok(0.0);
    }
    let est: Vec<EstimatedChannel> = (0..ch.users())
        .map(|k| EstimatedChannel {
            user: k as u32,
            g: ch.h.row_vector(k),
        })
        .collect();
    let plan = greedy_select(&est, p, ch.antennas())?;
    Ok(zf_true_rate(&ch.h, &plan))
}

/// One frame of the configured scheme.
pub fn frame_rate(
    ch: &ChannelRealization,
    params: &SystemParams,
    mode: RvqMode,
    streams: &TrialStreams,
) -> Result<f64> {
    match params.scheme {
        Scheme::Rbf => Ok(rbf_frame(ch, params, streams)),
        Scheme::ZfRvq => zf_rvq_frame(ch, params, mode, streams),
        Scheme::Purc => purc_frame(ch, params, streams),
        Scheme::ZfPerfect => zf_perfect_csit_frame(ch, params.p),
    }
}
