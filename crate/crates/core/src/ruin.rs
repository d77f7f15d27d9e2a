//! Closed-form analytics for the 1-D absorbing walk (Gambler's ruin).
//!
//! Cells `1..a-1` are free and walls sit at `0` and `a`. The walker starts at
//! `z` and steps toward wall `0` with probability `q = p_toward`, away with
//! `p = 1 - q`. "Ruin" is absorption at wall `0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::RuinError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuinParams {
    pub z: u32,
    pub a: u32,
    pub p_toward: f64,
}

impl RuinParams {
    pub fn new(z: u32, a: u32, p_toward: f64) -> Result<Self, RuinError> {
        if !(z > 0 && z < a) {
            return Err(RuinError::InvalidParams(format!("need 0 < z < a, got z={z}, a={a}")));
        }
        if !(p_toward > 0.0 && p_toward < 1.0) {
            return Err(RuinError::InvalidParams(format!("need 0 < p_toward < 1, got {p_toward}")));
        }
        Ok(RuinParams { z, a, p_toward })
    }

    fn q(&self) -> f64 {
        self.p_toward
    }

    fn p(&self) -> f64 {
        1.0 - self.p_toward
    }

    fn is_fair(&self) -> bool {
        self.p_toward == 0.5
    }
}

/// Probability of absorption at the near wall.
///
/// Evaluated as `((q/p)^a - (q/p)^z) / ((q/p)^a - 1)` with every power
/// written so its exponent is non-positive, which keeps large `a` finite.
pub fn ruin_probability(params: &RuinParams) -> f64 {
    let (z, a) = (params.z as f64, params.a as f64);
    if params.is_fair() {
        return 1.0 - z / a;
    }
    let lr = (params.q() / params.p()).ln();
    if lr > 0.0 {
        // divide through by r^a
        ((z - a) * lr).exp_m1() / (-a * lr).exp_m1()
    } else {
        ((a * lr).exp_m1() - (z * lr).exp_m1()) / (a * lr).exp_m1()
    }
}

/// Expected number of steps until either wall is hit.
pub fn expected_duration(params: &RuinParams) -> f64 {
    let (z, a) = (params.z as f64, params.a as f64);
    if params.is_fair() {
        return z * (a - z);
    }
    let (q, p) = (params.q(), params.p());
    let lr = (q / p).ln();
    // (1 - r^z) / (1 - r^a)
    let ratio = if lr > 0.0 {
        ((z - a) * lr).exp() * (-z * lr).exp_m1() / (-a * lr).exp_m1()
    } else {
        (z * lr).exp_m1() / (a * lr).exp_m1()
    };
    z / (q - p) - a / (q - p) * ratio
}

/// Probability that the walk reaches the near wall in exactly `z` steps.
pub fn shortest_path_probability(params: &RuinParams) -> Result<f64, RuinError> {
    if 2 * params.z > params.a {
        return Err(RuinError::FarSide { z: params.z, a: params.a });
    }
    Ok(params.q().powi(params.z as i32))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Probability that ruin happens exactly at step `t`:
///
/// `a^-1 2^t p^((t-z)/2) q^((t+z)/2) sum_{v=1}^{a-1} cos^(t-1)(pi v/a) sin(pi v/a) sin(pi z v/a)`
///
/// Terms are formed in log space and scaled by the largest magnitude before
/// summation. The terms for `v` and `a - v` are equal whenever `t` and `z`
/// share parity, so each such pair is summed once and doubled. If the
/// compensated sum cannot be trusted to 1e-6 relative accuracy, a
/// [`RuinError::PrecisionLoss`] is returned instead of a value.
pub fn ruin_time_pmf(params: &RuinParams, t: u64) -> Result<f64, RuinError> {
    let z = params.z as u64;
    let a = params.a as u64;
    if t < z || (t - z) % 2 == 1 {
        return Ok(0.0);
    }
    let (q, p) = (params.q(), params.p());
    let tf = t as f64;
    let zf = z as f64;
    let af = a as f64;
    let log_prefactor = tf * std::f64::consts::LN_2 + 0.5 * (tf - zf) * p.ln() + 0.5 * (tf + zf) * q.ln() - af.ln();

    // (log magnitude, sign)
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(a as usize / 2 + 1);
    for v in 1..=a / 2 {
        let mult: f64 = if 2 * v == a { 1.0 } else { 2.0 };
        let theta = std::f64::consts::PI * v as f64 / af;
        let c = theta.cos();
        let s = theta.sin();
        let sz = (theta * zf).sin();
        if s == 0.0 || sz == 0.0 {
            continue;
        }
        let (log_cos, sign_cos) = if t == 1 {
            (0.0, 1.0)
        } else if c == 0.0 {
            continue;
        } else {
            let sign = if c < 0.0 && (t - 1) % 2 == 1 { -1.0 } else { 1.0 };
            ((tf - 1.0) * c.abs().ln(), sign)
        };
        let log_mag = log_cos + s.ln() + sz.abs().ln() + mult.ln();
        terms.push((log_mag, sign_cos * sz.signum()));
    }
    let Some(max_log) = terms.iter().map(|&(l, _)| l).reduce(f64::max) else {
        return Ok(0.0);
    };
    let mut sum = CompensatedSum::default();
    let mut abs_sum = 0.0;
    for &(l, sign) in &terms {
        let m = (l - max_log).exp();
        sum.add(sign * m);
        abs_sum += m;
    }
    let scaled = sum.value();
    // each term carries a few ulps of error from the trig and exp evaluations
    let err_bound = 8.0 * f64::EPSILON * abs_sum * terms.len() as f64;
    if !(scaled > 0.0) || err_bound > 1e-6 * scaled {
        return Err(RuinError::PrecisionLoss { t });
    }
    Ok((log_prefactor + max_log + scaled.ln()).exp())
}

/// Parameters for direct simulation; unlike [`RuinParams`] a deterministic
/// walker (`p_toward` of 0 or 1) is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorbingWalk {
    pub z: u32,
    pub a: u32,
    pub p_toward: f64,
}

impl AbsorbingWalk {
    pub fn new(z: u32, a: u32, p_toward: f64) -> Result<Self, RuinError> {
        if !(z > 0 && z < a) {
            return Err(RuinError::InvalidParams(format!("need 0 < z < a, got z={z}, a={a}")));
        }
        if !(0.0..=1.0).contains(&p_toward) {
            return Err(RuinError::InvalidParams(format!("need p_toward in [0, 1], got {p_toward}")));
        }
        Ok(AbsorbingWalk { z, a, p_toward })
    }
}

impl From<RuinParams> for AbsorbingWalk {
    fn from(p: RuinParams) -> Self {
        AbsorbingWalk { z: p.z, a: p.a, p_toward: p.p_toward }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n_episodes: u64,
    pub ruined: u64,
    pub gained: u64,
    /// Episodes still running after `t_max` steps.
    pub censored: u64,
    /// Ruin count per step, indexed by step `0..=t_max`.
    pub ruin_histogram: Vec<u64>,
    duration_sum: u64,
}

impl McSummary {
    pub fn ruin_fraction(&self) -> f64 {
        self.ruined as f64 / self.n_episodes as f64
    }

    /// Mean duration over absorbed (uncensored) episodes.
    pub fn mean_time(&self) -> f64 {
        let done = self.ruined + self.gained;
        if done == 0 {
            f64::NAN
        } else {
            self.duration_sum as f64 / done as f64
        }
    }

    /// Fraction of all episodes ruined at exactly step `t`.
    pub fn ruin_frequency(&self, t: usize) -> f64 {
        self.ruin_histogram.get(t).map_or(0.0, |&c| c as f64 / self.n_episodes as f64)
    }

    fn merge(mut self, other: McSummary) -> McSummary {
        self.n_episodes += other.n_episodes;
        self.ruined += other.ruined;
        self.gained += other.gained;
        self.censored += other.censored;
        self.duration_sum += other.duration_sum;
        for (a, b) in self.ruin_histogram.iter_mut().zip(other.ruin_histogram) {
            *a += b;
        }
        self
    }
}

const MC_STREAMS: u64 = 64;

/// Direct simulation, split over a fixed number of RNG streams so the result
/// does not depend on the thread count.
pub fn mc_absorbing_walk(walk: &AbsorbingWalk, n_episodes: u64, seed: u64, t_max: u64) -> McSummary {
    let empty = || McSummary {
        n_episodes: 0,
        ruined: 0,
        gained: 0,
        censored: 0,
        ruin_histogram: vec![0; t_max as usize + 1],
        duration_sum: 0,
    };
    (0..MC_STREAMS)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let n = n_episodes / MC_STREAMS + u64::from(stream < n_episodes % MC_STREAMS);
            let mut s = empty();
            s.n_episodes = n;
            for _ in 0..n {
                let mut pos = walk.z as i64;
                let mut t = 0u64;
                while pos > 0 && pos < walk.a as i64 && t < t_max {
                    pos += if rng.gen_bool(walk.p_toward) { -1 } else { 1 };
                    t += 1;
                }
                if pos == 0 {
                    s.ruined += 1;
                    s.ruin_histogram[t as usize] += 1;
                    s.duration_sum += t;
                } else if pos == walk.a as i64 {
                    s.gained += 1;
                    s.duration_sum += t;
                } else {
                    s.censored += 1;
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(empty(), McSummary::merge)
}

/// Row of the short-path table: how often ruin happens within a few steps of
/// the shortest possible time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShortPathRow {
    pub z: u32,
    pub p_toward: f64,
    pub exact: f64,
    pub within_2: f64,
    pub within_4: f64,
}

/// `P(T = z)`, `P(T <= z + 2)` and `P(T <= z + 4)` for a range of starts.
pub fn short_path_table(a: u32, p_towards: &[f64], zs: impl IntoIterator<Item = u32> + Clone) -> Result<Vec<ShortPathRow>, RuinError> {
    let mut rows = Vec::new();
    for &q in p_towards {
        for z in zs.clone() {
            let params = RuinParams::new(z, a, q)?;
            let pmf = |t: u64| ruin_time_pmf(&params, t);
            let zt = z as u64;
            let exact = pmf(zt)?;
            let within_2 = exact + pmf(zt + 2)?;
            let within_4 = within_2 + pmf(zt + 4)?;
            rows.push(ShortPathRow { z, p_toward: q, exact, within_2, within_4 });
        }
    }
    Ok(rows)
}
