//! Parameter sweeps and paired sharing on/off comparisons.
//!
//! A sweep runs the base scenario once per (parameter value, sharing group
//! size, replication) with per-replication seeds `base_seed + replication`.
//! The sharing group size caps how many providers participate in borrowing,
//! so a sweep contrasts isolated operation (group 1) with progressively
//! wider coalitions while every provider keeps generating traffic.
//!
//! Replications are independent, so they may run on a thread pool; rows are
//! ordered by job index either way and the output is identical regardless of
//! thread count.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::{ConfigError, ScenarioConfig};
use crate::engine::{run, RunError};
use crate::report::MetricReport;
use crate::stats::{mean, sample_stddev, sign_test_one_sided};

/// Which scalar the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Subscriber population. Offered rates scale proportionally with the
    /// value relative to the base config's `n_nodes`.
    NNodes,
    /// Provider count; rate/price vectors truncate to the first N providers.
    NProviders,
    /// Direct multiplier on every mean rate (and stddev).
    MeanRateScale,
}

impl SweepParameter {
    fn name(self) -> &'static str {
        match self {
            SweepParameter::NNodes => "n_nodes",
            SweepParameter::NProviders => "n_providers",
            SweepParameter::MeanRateScale => "mean_rate_scale",
        }
    }
}

fn default_groups() -> Vec<u32> {
    vec![1, 3, 5]
}

fn default_replications() -> u32 {
    30
}

/// Declarative sweep description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Sharing group sizes to contrast at every value.
    #[serde(default = "default_groups")]
    pub provider_groups: Vec<u32>,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub base_config: ScenarioConfig,
}

impl SweepSpec {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Validates against the resolved base config.
    fn validate(&self, base: &ScenarioConfig) -> Result<(), ConfigError> {
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(ConfigError::SweepValues);
        }
        match self.parameter {
            SweepParameter::NNodes | SweepParameter::NProviders => {
                for &v in &self.values {
                    if v.fract() != 0.0 {
                        return Err(ConfigError::SweepIntegerValue {
                            param: self.parameter.name(),
                            got: v,
                        });
                    }
                }
            }
            SweepParameter::MeanRateScale => {}
        }
        if self.parameter == SweepParameter::NProviders {
            for &v in &self.values {
                if v > base.n_providers as f64 {
                    return Err(ConfigError::SweepProviderValue {
                        max: base.n_providers,
                        got: v,
                    });
                }
            }
        }
        let max_group = base.n_providers;
        if self.provider_groups.is_empty() {
            return Err(ConfigError::SweepGroup {
                max: max_group,
                got: 0,
            });
        }
        for &g in &self.provider_groups {
            // A group may exceed a reduced provider count mid-sweep (it is
            // clamped there), but never the base population.
            if g == 0 || g > max_group {
                return Err(ConfigError::SweepGroup {
                    max: max_group,
                    got: g,
                });
            }
        }
        if self.replications == 0 {
            return Err(ConfigError::SweepReplications);
        }
        Ok(())
    }
}

/// One replication's metrics at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub provider_group: u32,
    pub replication: u32,
    #[serde(rename = "R_BL")]
    pub r_bl: f64,
    pub eta_sys: f64,
    pub eta_s: f64,
    pub c_e: f64,
    pub interference_mhz: f64,
    pub active_users_peak: u32,
    pub traffic_load: f64,
    pub seed: u64,
}

/// Replication statistics for one (value, group) sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub param_value: f64,
    pub provider_group: u32,
    pub replications: u32,
    pub mean_r_bl: f64,
    pub std_r_bl: f64,
    pub mean_eta_sys: f64,
    pub std_eta_sys: f64,
    pub mean_eta_s: f64,
    pub std_eta_s: f64,
    pub mean_c_e: f64,
    pub std_c_e: f64,
    pub mean_interference_mhz: f64,
    pub std_interference_mhz: f64,
}

/// Full sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
}

impl SweepResult {
    /// Per-replication CSV.
    pub fn rows_to_csv(&self) -> String {
        let mut out = String::from(
            "param_value,provider_group,replication,R_BL,eta_sys,eta_s,c_e,interference_mhz,active_users_peak,traffic_load,seed\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.param_value,
                r.provider_group,
                r.replication,
                r.r_bl,
                r.eta_sys,
                r.eta_s,
                r.c_e,
                r.interference_mhz,
                r.active_users_peak,
                r.traffic_load,
                r.seed
            ));
        }
        out
    }

    /// Mean/stddev CSV aggregated over replications.
    pub fn summary_to_csv(&self) -> String {
        let mut out = String::from(
            "param_value,provider_group,replications,mean_R_BL,std_R_BL,mean_eta_sys,std_eta_sys,mean_eta_s,std_eta_s,mean_c_e,std_c_e,mean_interference_mhz,std_interference_mhz\n",
        );
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                s.param_value,
                s.provider_group,
                s.replications,
                s.mean_r_bl,
                s.std_r_bl,
                s.mean_eta_sys,
                s.std_eta_sys,
                s.mean_eta_s,
                s.std_eta_s,
                s.mean_c_e,
                s.std_c_e,
                s.mean_interference_mhz,
                s.std_interference_mhz
            ));
        }
        out
    }
}

/// Specializes the base config to one sweep point. The base must be
/// resolved.
pub fn apply_sweep_point(
    base: &ScenarioConfig,
    parameter: SweepParameter,
    value: f64,
    group: u32,
) -> ScenarioConfig {
    let mut cfg = base.clone();
    match parameter {
        SweepParameter::NNodes => {
            let scale = value / base.n_nodes as f64;
            cfg.n_nodes = value as u32;
            for r in &mut cfg.mean_rates {
                *r *= scale;
            }
            for s in &mut cfg.rate_stddevs {
                *s *= scale;
            }
        }
        SweepParameter::NProviders => {
            let n = value as usize;
            cfg.n_providers = n as u32;
            cfg.mean_rates.truncate(n);
            cfg.rate_stddevs.truncate(n);
            cfg.unit_prices.truncate(n);
            cfg.rate_correlation.truncate(n);
            for row in &mut cfg.rate_correlation {
                row.truncate(n);
            }
        }
        SweepParameter::MeanRateScale => {
            for r in &mut cfg.mean_rates {
                *r *= value;
            }
            for s in &mut cfg.rate_stddevs {
                *s *= value;
            }
        }
    }
    cfg.sharing_group_size = Some(group.min(cfg.n_providers));
    cfg
}

#[cfg(feature = "parallel")]
fn map_jobs<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Runs the full sweep. Row order is (value, group, replication) in spec
/// order and does not depend on the thread pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, RunError> {
    let base = spec.base_config.resolved()?;
    spec.validate(&base)?;
    let mut jobs = Vec::new();
    for &value in &spec.values {
        for &group in &spec.provider_groups {
            for rep in 0..spec.replications {
                jobs.push((value, group, rep));
            }
        }
    }
    let outcomes = map_jobs(jobs.len(), |i| {
        let (value, group, rep) = jobs[i];
        let mut cfg = apply_sweep_point(&base, spec.parameter, value, group);
        cfg.seed = base.seed + rep as u64;
        run(&cfg).map(|r| SweepRow {
            param_value: value,
            provider_group: group,
            replication: rep,
            r_bl: r.aggregate.r_bl,
            eta_sys: r.aggregate.eta_sys,
            eta_s: r.aggregate.eta_s,
            c_e: r.aggregate.c_e,
            interference_mhz: r.aggregate.interference_mhz,
            active_users_peak: r.active_users_peak,
            traffic_load: r.traffic_load_erlang,
            seed: cfg.seed,
        })
    });
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        rows.push(o?);
    }

    let mut summary = Vec::new();
    for &value in &spec.values {
        for &group in &spec.provider_groups {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.param_value == value && r.provider_group == group)
                .collect();
            let pick =
                |f: fn(&SweepRow) -> f64| -> Vec<f64> { cell.iter().map(|r| f(r)).collect() };
            let r_bl = pick(|r| r.r_bl);
            let eta_sys = pick(|r| r.eta_sys);
            let eta_s = pick(|r| r.eta_s);
            let c_e = pick(|r| r.c_e);
            let interf = pick(|r| r.interference_mhz);
            summary.push(SweepSummaryRow {
                param_value: value,
                provider_group: group,
                replications: cell.len() as u32,
                mean_r_bl: mean(&r_bl),
                std_r_bl: sample_stddev(&r_bl),
                mean_eta_sys: mean(&eta_sys),
                std_eta_sys: sample_stddev(&eta_sys),
                mean_eta_s: mean(&eta_s),
                std_eta_s: sample_stddev(&eta_s),
                mean_c_e: mean(&c_e),
                std_c_e: sample_stddev(&c_e),
                mean_interference_mhz: mean(&interf),
                std_interference_mhz: sample_stddev(&interf),
            });
        }
    }
    Ok(SweepResult { rows, summary })
}

/// One matched-seed pair of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePair {
    pub replication: u32,
    pub seed: u64,
    pub with_sharing: MetricReport,
    pub without_sharing: MetricReport,
    /// Blocking without sharing minus blocking with sharing; positive means
    /// sharing helped.
    pub blocking_delta: f64,
}

/// Paired-comparison statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub replications: u32,
    pub mean_r_bl_with: f64,
    pub mean_r_bl_without: f64,
    pub mean_blocking_delta: f64,
    /// Pairs where sharing strictly lowered blocking.
    pub sharing_better: u64,
    pub sharing_worse: u64,
    pub ties: u64,
    /// One-sided sign test on better vs worse (ties excluded).
    pub sign_test_p: f64,
    pub mean_eta_sys_with: f64,
    pub mean_eta_sys_without: f64,
    pub mean_eta_s_with: f64,
    pub mean_eta_s_without: f64,
}

/// Output of [`compare_sharing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResult {
    pub pairs: Vec<ComparePair>,
    pub summary: CompareSummary,
}

impl CompareResult {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("compare result serializes")
    }
}

/// Runs `replications` matched-seed pairs of the scenario with sharing
/// forced on and off, and summarises the paired blocking deltas.
pub fn compare_sharing(
    config: &ScenarioConfig,
    replications: u32,
) -> Result<CompareResult, RunError> {
    if replications == 0 {
        return Err(RunError::Config(ConfigError::SweepReplications));
    }
    let base = config.resolved()?;
    let outcomes = map_jobs(replications as usize, |rep| {
        let seed = base.seed + rep as u64;
        let on = run(&ScenarioConfig {
            sharing_enabled: true,
            seed,
            ..base.clone()
        })?;
        let off = run(&ScenarioConfig {
            sharing_enabled: false,
            seed,
            ..base.clone()
        })?;
        Ok::<ComparePair, RunError>(ComparePair {
            replication: rep as u32,
            seed,
            blocking_delta: off.aggregate.r_bl - on.aggregate.r_bl,
            with_sharing: on.aggregate,
            without_sharing: off.aggregate,
        })
    });
    let mut pairs = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        pairs.push(o?);
    }
    let (mut better, mut worse, mut ties) = (0u64, 0u64, 0u64);
    for p in &pairs {
        if p.blocking_delta > 0.0 {
            better += 1;
        } else if p.blocking_delta < 0.0 {
            worse += 1;
        } else {
            ties += 1;
        }
    }
    let pick = |f: fn(&ComparePair) -> f64| -> Vec<f64> { pairs.iter().map(f).collect() };
    let summary = CompareSummary {
        replications,
        mean_r_bl_with: mean(&pick(|p| p.with_sharing.r_bl)),
        mean_r_bl_without: mean(&pick(|p| p.without_sharing.r_bl)),
        mean_blocking_delta: mean(&pick(|p| p.blocking_delta)),
        sharing_better: better,
        sharing_worse: worse,
        ties,
        sign_test_p: sign_test_one_sided(better, worse),
        mean_eta_sys_with: mean(&pick(|p| p.with_sharing.eta_sys)),
        mean_eta_sys_without: mean(&pick(|p| p.without_sharing.eta_sys)),
        mean_eta_s_with: mean(&pick(|p| p.with_sharing.eta_s)),
        mean_eta_s_without: mean(&pick(|p| p.without_sharing.eta_s)),
    };
    Ok(CompareResult { pairs, summary })
}
