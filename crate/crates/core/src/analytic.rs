//! Closed-form throughput approximation and the bits-per-user optimizers.
//!
//! With `L = log₂(T/B)` and `E = 2^{-B/(M-1)}` the approximate ZF-RVQ rate is
//!
//! ```text
//! R(B) = M·log₂((P/M)·L) − M·log₂(1 + (P/M)·L·E)
//! ```
//!
//! The first term is the multi-user diversity of T/B users, the second the
//! loss from quantization error. Dropping the constant `log₂(P/M)` and the
//! factor M leaves the objective
//!
//! ```text
//! h(B) = log₂(L) − log₂(1 + (P/M)·L·E)
//! ```
//!
//! maximized by brute force over integers or by bisection on the sign of
//! its exact derivative over the reals.

use serde::Serialize;

use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxModelInput {
    /// Linear SNR.
    pub p: f64,
    pub m: usize,
    pub t: f64,
    /// Bits per user; real-valued in the continuous solver.
    pub b: f64,
}

impl ApproxModelInput {
    pub fn new(p: f64, m: usize, t: f64, b: f64) -> Self {
        ApproxModelInput { p, m, t, b }
    }

    fn check(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Domain("need M >= 2".into()));
        }
        if self.p.is_nan() || self.p <= 0.0 {
            return Err(Error::Domain("need P > 0".into()));
        }
        if !(self.b > 0.0 && self.t / self.b > 1.0) {
            return Err(Error::Domain(format!("need T/B > 1 (T = {}, B = {})", self.t, self.b)));
        }
        Ok(())
    }

    /// `log₂(T/B)`
    fn users_log(&self) -> f64 {
        (self.t / self.b).log2()
    }

    /// `2^{-B/(M-1)}`
    fn error_factor(&self) -> f64 {
        2f64.powf(-self.b / (self.m as f64 - 1.0))
    }
}

/// The two terms of the approximate rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxRate {
    pub diversity: f64,
    pub loss: f64,
}

impl ApproxRate {
    pub fn total(&self) -> f64 {
        self.diversity - self.loss
    }
}

pub fn rate_approx_terms(input: &ApproxModelInput) -> Result<ApproxRate> {
    input.check()?;
    let snr_div = input.p / input.m as f64 * input.users_log();
    if snr_div <= 1.0 {
        return Err(Error::Domain(format!("(P/M)·log2(T/B) = {snr_div:.4} must exceed 1")));
    }
    let mf = input.m as f64;
    Ok(ApproxRate {
        diversity: mf * snr_div.log2(),
        loss: mf * (1.0 + snr_div * input.error_factor()).log2(),
    })
}

/// Approximate ZF-RVQ sum rate in bits/s/Hz.
pub fn rate_approx(input: &ApproxModelInput) -> Result<f64> {
    rate_approx_terms(input).map(|r| r.total())
}

/// The optimizer objective `h(B)`.
pub fn objective(p: f64, m: usize, t: f64, b: f64) -> Result<f64> {
    let input = ApproxModelInput::new(p, m, t, b);
    input.check()?;
    let l = input.users_log();
    Ok(l.log2() - (1.0 + p / m as f64 * l * input.error_factor()).log2())
}

/// Exact `dh/dB`.
pub fn objective_derivative(p: f64, m: usize, t: f64, b: f64) -> Result<f64> {
    let input = ApproxModelInput::new(p, m, t, b);
    input.check()?;
    let c = p / m as f64;
    let l = input.users_log();
    let dl = -1.0 / (b * LN2);
    let e = input.error_factor();
    let de = -e * LN2 / (m as f64 - 1.0);
    Ok((dl / l - c * (dl * e + l * de) / (1.0 + c * l * e)) / LN2)
}

/// Residual of the closed-form stationarity condition
/// `(P/(M(M−1)))·2^{-B/(M-1)}·B·ln²(T/B) = 1`, which follows from `h'(B) = 0`
/// when the interference term is small. Diagnostic only.
pub fn stationarity_residual(p: f64, m: usize, t: f64, b: f64) -> f64 {
    let mf = m as f64;
    p / (mf * (mf - 1.0)) * 2f64.powf(-b / (mf - 1.0)) * b * (t / b).ln().powi(2) - 1.0
}

/// Feasible real interval `[1 + log₂M, T/M]`.
pub fn feasible_interval(m: usize, t: f64) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::Domain("need M >= 2".into()));
    }
    let lo = 1.0 + (m as f64).log2();
    let hi = t / m as f64;
    if lo > hi {
        return Err(Error::EmptyRange(format!("1+log2(M) = {lo:.3} exceeds T/M = {hi:.3}")));
    }
    Ok((lo, hi))
}

/// Feasible integer range `[⌈1 + log₂M⌉, ⌊T/M⌋]`.
pub fn feasible_bits(m: usize, t: u32) -> Result<std::ops::RangeInclusive<u32>> {
    let (lo, hi) = feasible_interval(m, t as f64)?;
    let (lo, hi) = (lo.ceil() as u32, hi.floor() as u32);
    if lo > hi {
        return Err(Error::EmptyRange(format!("no integer B in [{lo}, {hi}]")));
    }
    Ok(lo..=hi)
}

/// Integer argmax of `h(B)`; ties go to the smaller B.
pub fn bopt_bruteforce(p: f64, m: usize, t: u32) -> Result<u32> {
    let mut best: Option<(u32, f64)> = None;
    for b in feasible_bits(m, t)? {
        let Ok(v) = objective(p, m, t as f64, b as f64) else {
            continue;
        };
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((b, v));
        }
    }
    best.map(|(b, _)| b)
        .ok_or_else(|| Error::EmptyRange("objective undefined on the whole range".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub b: f64,
    /// The derivative kept one sign; `b` is the better endpoint.
    pub boundary: bool,
}

/// Root of `h'(B)` on the feasible interval, by bisection.
pub fn bopt_stationary(p: f64, m: usize, t: u32) -> Result<StationaryPoint> {
    let (mut lo, mut hi) = feasible_interval(m, t as f64)?;
    let d_lo = objective_derivative(p, m, t as f64, lo)?;
    let d_hi = objective_derivative(p, m, t as f64, hi)?;
    if !(d_lo > 0.0 && d_hi < 0.0) {
        let (a, b) = (lo, hi);
        let pick = if objective(p, m, t as f64, b)? > objective(p, m, t as f64, a)? {
            b
        } else {
            a
        };
        return Ok(StationaryPoint {
            b: pick,
            boundary: true,
        });
    }
    // Bisect well past 0.01 in B so the derivative itself is ~0 at the root.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = objective_derivative(p, m, t as f64, mid)?;
        if d == 0.0 {
            return Ok(StationaryPoint {
                b: mid,
                boundary: false,
            });
        }
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(StationaryPoint {
        b: 0.5 * (lo + hi),
        boundary: false,
    })
}

/// One row of the optimal-bits table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "P_dB")]
    pub p_db: f64,
    #[serde(rename = "T")]
    pub t: u32,
    #[serde(rename = "B_hat")]
    pub b_hat: f64,
    #[serde(rename = "B_brute")]
    pub b_brute: u32,
    pub objective_value: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `B̂` and the brute-force optimum over the grid, in (M, P, T) order.
pub fn scaling_study(p_db: &[f64], ms: &[usize], ts: &[u32]) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(p_db.len() * ms.len() * ts.len());
    for &m in ms {
        for &pdb in p_db {
            let p = db_to_linear(pdb);
            for &t in ts {
                let st = bopt_stationary(p, m, t)?;
                rows.push(ScalingRow {
                    m,
                    p_db: pdb,
                    t,
                    b_hat: st.b,
                    b_brute: bopt_bruteforce(p, m, t)?,
                    objective_value: objective(p, m, t as f64, st.b)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
