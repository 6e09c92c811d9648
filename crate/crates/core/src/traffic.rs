//! Traffic generation.
//!
//! Each replication first draws the per-provider call rates from a jointly
//! Gaussian distribution (mean, stddev and correlation from the config,
//! clamped at zero), then expands each rate into a Poisson arrival process
//! with exponential holding times. Every provider's arrival and holding
//! sequences come from their own named random streams, so perturbing one
//! provider never changes another's calls.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::config::{ConfigError, ScenarioConfig};
use crate::rng::{self, Stream};

/// One generated call before it enters the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallDraw {
    pub arrival_time: f64,
    pub holding_time: f64,
}

/// All calls of one replication, grouped per provider in arrival order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrivalSchedule {
    pub per_provider: Vec<Vec<CallDraw>>,
}

impl ArrivalSchedule {
    pub fn total_calls(&self) -> usize {
        self.per_provider.iter().map(Vec::len).sum()
    }
}

/// Pivot tolerance of the semi-definite Cholesky factorization, relative to
/// the largest diagonal entry.
const CHOLESKY_PIVOT_TOL: f64 = 1e-9;
/// Residual tolerance for columns under a zero pivot.
const CHOLESKY_RESIDUAL_TOL: f64 = 1e-7;

/// Lower-triangular factor `L` with `L * L^T = m` for a symmetric positive
/// semi-definite matrix, or `None` if the matrix is indefinite.
///
/// Exactly singular matrices (for example an all-ones correlation) are
/// accepted: a zero pivot produces a zero column after checking that the
/// remaining column entries are consistent with singularity.
pub fn psd_cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let scale = m
        .iter()
        .enumerate()
        .map(|(i, row)| row[i].abs())
        .fold(1.0_f64, f64::max);
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = m[j][j] - l[j][..j].iter().map(|v| v * v).sum::<f64>();
        if d < -CHOLESKY_PIVOT_TOL * scale {
            return None;
        }
        if d <= CHOLESKY_PIVOT_TOL * scale {
            // Semi-definite direction: the whole column must vanish too.
            for i in (j + 1)..n {
                let dot: f64 = l[i][..j].iter().zip(&l[j][..j]).map(|(a, b)| a * b).sum();
                if (m[i][j] - dot).abs() > CHOLESKY_RESIDUAL_TOL * scale {
                    return None;
                }
            }
        } else {
            let s = d.sqrt();
            l[j][j] = s;
            for i in (j + 1)..n {
                let dot: f64 = l[i][..j].iter().zip(&l[j][..j]).map(|(a, b)| a * b).sum();
                l[i][j] = (m[i][j] - dot) / s;
            }
        }
    }
    Some(l)
}

/// Draws the per-provider rates for one replication: `max(0, mu + L z)` with
/// `L` the factor of the covariance built from `rate_stddevs` and
/// `rate_correlation`, and `z` i.i.d. standard normals.
///
/// Expects a resolved config (all vector fields filled).
pub fn draw_correlated_rates(
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, ConfigError> {
    let n = config.n_providers as usize;
    let sd = &config.rate_stddevs;
    let cov: Vec<Vec<f64>> = config
        .rate_correlation
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &c)| sd[i] * sd[j] * c)
                .collect()
        })
        .collect();
    let l = psd_cholesky(&cov).ok_or(ConfigError::CorrelationNotPsd)?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n)
        .map(|i| {
            let mut v = config.mean_rates[i];
            for k in 0..n {
                v += l[i][k] * z[k];
            }
            v.max(0.0)
        })
        .collect())
}

/// Expands realized rates into per-provider call sequences over `[0, horizon]`.
///
/// Inter-arrival gaps are exponential with rate `rates[p]`; holding times are
/// exponential with mean `mean_holding`. Arrival times are strictly
/// increasing and holding times strictly positive.
pub fn generate_arrivals(
    rates: &[f64],
    mean_holding: f64,
    horizon: f64,
    seed: u64,
) -> ArrivalSchedule {
    let mut per_provider = Vec::with_capacity(rates.len());
    for (p, &rate) in rates.iter().enumerate() {
        let mut calls = Vec::new();
        if rate > 0.0 {
            let mut arrivals = rng::stream_rng(seed, Stream::Arrivals(p as u32));
            let mut holdings = rng::stream_rng(seed, Stream::Holding(p as u32));
            let gap = Exp::new(rate).expect("positive rate");
            let hold = Exp::new(1.0 / mean_holding).expect("positive holding mean");
            let mut t = 0.0;
            loop {
                t += gap.sample(&mut arrivals).max(f64::MIN_POSITIVE);
                if t > horizon {
                    break;
                }
                let h: f64 = hold.sample(&mut holdings);
                calls.push(CallDraw {
                    arrival_time: t,
                    holding_time: h.max(f64::MIN_POSITIVE),
                });
            }
        }
        per_provider.push(calls);
    }
    ArrivalSchedule { per_provider }
}
