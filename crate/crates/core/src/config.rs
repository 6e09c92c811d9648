//! Scenario configuration.
//!
//! A [`ScenarioConfig`] describes one simulated deployment: the provider
//! population, their licensed channels, the traffic model, the hex grid and
//! the sensing/sharing parameters. Configs deserialize from JSON where every
//! field is optional; [`ScenarioConfig::resolved`] fills the remaining
//! defaults and validates the result.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::traffic;

/// Largest supported provider population.
pub const MAX_PROVIDERS: u32 = 5;
/// Per-provider mean call rate (calls/s) used when `mean_rates` is omitted.
pub const DEFAULT_MEAN_RATE: f64 = 0.15;
/// Rate stddev as a fraction of the mean, used when `rate_stddevs` is omitted.
pub const DEFAULT_RATE_CV: f64 = 0.2;
/// Per-channel unit price used when `unit_prices` is omitted.
pub const DEFAULT_UNIT_PRICE: f64 = 0.02;

/// Rectangular hex-cell grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: u32,
    pub cols: u32,
}

/// Which efficiency enters the cost-efficiency product `alpha * t * eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaKind {
    /// Spectrum utilization (busy-channel time fraction).
    Spectrum,
    /// System efficiency (carried/offered traffic).
    System,
}

/// Attribute override for a single channel; only meaningful when
/// `uniform_channel_params` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelOverride {
    /// Global channel id, `0..n_providers * channels_per_provider`.
    pub channel: u32,
    #[serde(default)]
    pub availability_probability: Option<f64>,
    #[serde(default)]
    pub interference_level: Option<f64>,
    #[serde(default)]
    pub cost: Option<f64>,
}

/// Full description of one simulation scenario.
///
/// All fields have defaults, so `{}` is a valid config. Vector fields left
/// empty are expanded by [`ScenarioConfig::resolved`]: `mean_rates` to
/// [`DEFAULT_MEAN_RATE`] per provider, `rate_stddevs` to
/// [`DEFAULT_RATE_CV`] times the mean, `rate_correlation` to the identity
/// matrix and `unit_prices` to [`DEFAULT_UNIT_PRICE`] per provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of service providers, `1..=5`. All providers place one
    /// infrastructure in every cell of the grid.
    pub n_providers: u32,
    /// Nominal subscriber population. Descriptive only within a single run;
    /// sweeps over the node count scale `mean_rates` proportionally.
    pub n_nodes: u32,
    /// Licensed channels per provider.
    pub channels_per_provider: u32,
    /// Concurrent calls one channel carries in one cell.
    pub users_per_channel: u32,
    /// Mean call arrival rate per provider (calls/s). Empty: default per
    /// provider.
    pub mean_rates: Vec<f64>,
    /// Stddev of each provider's rate draw. Empty: `0.2 * mean`.
    pub rate_stddevs: Vec<f64>,
    /// Correlation matrix of the joint rate draw. Empty: identity.
    pub rate_correlation: Vec<Vec<f64>>,
    /// Mean call holding time (s).
    pub mean_holding_time: f64,
    /// Simulated horizon (s). Calls arriving before the horizon are always
    /// resolved; metrics are frozen at the horizon.
    pub horizon_t: f64,
    /// Base random seed.
    pub seed: u64,
    /// Period of the CR node sensing scan (s).
    pub sensing_period: f64,
    /// Hex cell circumradius (m). CR nodes sit on cell vertices and their
    /// sensing range equals this radius.
    pub cell_radius: f64,
    /// Grid size in cells.
    pub grid_dims: GridDims,
    /// Master switch for channel borrowing.
    pub sharing_enabled: bool,
    /// Number of providers that participate in sharing (providers `1..=g`).
    /// `None` means all of them. Non-participants still generate traffic but
    /// never borrow or lend.
    pub sharing_group_size: Option<u32>,
    /// Revenue per owned channel per busy second, one entry per provider.
    /// Empty: default per provider.
    pub unit_prices: Vec<f64>,
    /// Centre frequency of channel 0 (MHz).
    pub base_frequency_mhz: f64,
    /// Spacing between adjacent channel centre frequencies (MHz).
    pub channel_spacing_mhz: f64,
    /// Relay depth of the CR query broadcast. 1 reaches direct neighbours.
    pub max_hops: u32,
    /// One-hop message latency (s).
    pub message_delay: f64,
    /// Prior availability probability of every channel.
    pub availability_probability: f64,
    /// Static interference level attribute of every channel.
    pub interference_level: f64,
    /// Static cost attribute of every channel.
    pub channel_cost: f64,
    /// When true (default) all channels share the three attributes above and
    /// `channel_overrides` must be empty.
    pub uniform_channel_params: bool,
    /// Per-channel attribute overrides, applied only when
    /// `uniform_channel_params` is false.
    pub channel_overrides: Vec<ChannelOverride>,
    /// Efficiency used in the reported cost-efficiency product.
    pub cost_efficiency_eta: EtaKind,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_providers: 5,
            n_nodes: 150,
            channels_per_provider: 3,
            users_per_channel: 10,
            mean_rates: Vec::new(),
            rate_stddevs: Vec::new(),
            rate_correlation: Vec::new(),
            mean_holding_time: 100.0,
            horizon_t: 2000.0,
            seed: 1,
            sensing_period: 1.0,
            cell_radius: 500.0,
            grid_dims: GridDims { rows: 1, cols: 1 },
            sharing_enabled: true,
            sharing_group_size: None,
            unit_prices: Vec::new(),
            base_frequency_mhz: 900.0,
            channel_spacing_mhz: 5.0,
            max_hops: 1,
            message_delay: 1e-3,
            availability_probability: 1.0,
            interference_level: 0.0,
            channel_cost: 0.0,
            uniform_channel_params: true,
            channel_overrides: Vec::new(),
            cost_efficiency_eta: EtaKind::Spectrum,
        }
    }
}

/// Rejected configuration, naming the offending field.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("n_providers must be in 1..={MAX_PROVIDERS}, got {0}")]
    NProviders(u32),
    #[error("n_nodes must be >= 1, got {0}")]
    NNodes(u32),
    #[error("channels_per_provider must be >= 1, got {0}")]
    ChannelsPerProvider(u32),
    #[error("users_per_channel must be >= 1, got {0}")]
    UsersPerChannel(u32),
    #[error("grid_dims must contain at least one cell, got {rows}x{cols}")]
    EmptyGrid { rows: u32, cols: u32 },
    #[error("{field} must have n_providers = {expected} entries, got {got}")]
    ProviderVectorLen {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mean_rates[{index}] must be >= 0 and finite, got {got}")]
    MeanRate { index: usize, got: f64 },
    #[error("rate_stddevs[{index}] must be >= 0 and finite, got {got}")]
    RateStddev { index: usize, got: f64 },
    #[error("unit_prices[{index}] must be >= 0 and finite, got {got}")]
    UnitPrice { index: usize, got: f64 },
    #[error("rate_correlation must be a {n}x{n} matrix")]
    CorrelationShape { n: usize },
    #[error("rate_correlation[{i}][{i}] must be 1.0, got {got}")]
    CorrelationDiagonal { i: usize, got: f64 },
    #[error("rate_correlation must be symmetric: [{i}][{j}] = {a} but [{j}][{i}] = {b}")]
    CorrelationSymmetry { i: usize, j: usize, a: f64, b: f64 },
    #[error("rate_correlation entries must be finite and within [-1, 1], got [{i}][{j}] = {got}")]
    CorrelationEntry { i: usize, j: usize, got: f64 },
    #[error("rate_correlation is not positive semi-definite")]
    CorrelationNotPsd,
    #[error("{field} must be > 0 and finite, got {got}")]
    NonPositive { field: &'static str, got: f64 },
    #[error("availability_probability must be within [0, 1], got {0}")]
    Availability(f64),
    #[error("interference_level must be >= 0 and finite, got {0}")]
    InterferenceLevel(f64),
    #[error("channel_cost must be >= 0 and finite, got {0}")]
    ChannelCost(f64),
    #[error("sharing_group_size must be in 1..=n_providers = {max}, got {got}")]
    SharingGroup { max: u32, got: u32 },
    #[error("channel_overrides requires uniform_channel_params = false")]
    OverridesWithUniform,
    #[error(
        "channel_overrides[{index}].channel {channel} is out of range (have {n_channels} channels)"
    )]
    OverrideChannel {
        index: usize,
        channel: u32,
        n_channels: u32,
    },
    #[error(
        "channel_overrides[{index}].availability_probability must be within [0, 1], got {got}"
    )]
    OverrideAvailability { index: usize, got: f64 },
    #[error("max_hops must be >= 1, got {0}")]
    MaxHops(u32),
    #[error("sweep values must be non-empty, finite and > 0")]
    SweepValues,
    #[error("sweep over {param} needs integer values, got {got}")]
    SweepIntegerValue { param: &'static str, got: f64 },
    #[error("sweep over n_providers allows at most the base n_providers = {max}, got {got}")]
    SweepProviderValue { max: u32, got: f64 },
    #[error("provider_groups entries must be in 1..=n_providers = {max}, got {got}")]
    SweepGroup { max: u32, got: u32 },
    #[error("replications must be >= 1")]
    SweepReplications,
}

impl ScenarioConfig {
    /// Loads a config from a JSON string.
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Loads a config from a JSON file.
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Total number of channels across all providers.
    pub fn n_channels(&self) -> u32 {
        self.n_providers * self.channels_per_provider
    }

    /// Number of providers that take part in sharing.
    pub fn sharing_group(&self) -> u32 {
        self.sharing_group_size.unwrap_or(self.n_providers)
    }

    /// Returns a copy with every empty vector field expanded to its default
    /// and all constraints checked.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        let mut cfg = self.clone();
        let n = cfg.n_providers as usize;
        if cfg.n_providers == 0 || cfg.n_providers > MAX_PROVIDERS {
            return Err(ConfigError::NProviders(cfg.n_providers));
        }
        if cfg.mean_rates.is_empty() {
            cfg.mean_rates = vec![DEFAULT_MEAN_RATE; n];
        }
        if cfg.rate_stddevs.is_empty() {
            cfg.rate_stddevs = cfg.mean_rates.iter().map(|r| DEFAULT_RATE_CV * r).collect();
        }
        if cfg.rate_correlation.is_empty() {
            cfg.rate_correlation = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
        }
        if cfg.unit_prices.is_empty() {
            cfg.unit_prices = vec![DEFAULT_UNIT_PRICE; n];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every constraint without filling defaults. Vector fields must
    /// already have one entry per provider.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_providers == 0 || self.n_providers > MAX_PROVIDERS {
            return Err(ConfigError::NProviders(self.n_providers));
        }
        if self.n_nodes == 0 {
            return Err(ConfigError::NNodes(self.n_nodes));
        }
        if self.channels_per_provider == 0 {
            return Err(ConfigError::ChannelsPerProvider(self.channels_per_provider));
        }
        if self.users_per_channel == 0 {
            return Err(ConfigError::UsersPerChannel(self.users_per_channel));
        }
        if self.grid_dims.rows == 0 || self.grid_dims.cols == 0 {
            return Err(ConfigError::EmptyGrid {
                rows: self.grid_dims.rows,
                cols: self.grid_dims.cols,
            });
        }
        if self.max_hops == 0 {
            return Err(ConfigError::MaxHops(self.max_hops));
        }
        let n = self.n_providers as usize;
        for (field, v) in [
            ("mean_rates", &self.mean_rates),
            ("rate_stddevs", &self.rate_stddevs),
            ("unit_prices", &self.unit_prices),
        ] {
            if v.len() != n {
                return Err(ConfigError::ProviderVectorLen {
                    field,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        for (i, &r) in self.mean_rates.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                return Err(ConfigError::MeanRate { index: i, got: r });
            }
        }
        for (i, &s) in self.rate_stddevs.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(ConfigError::RateStddev { index: i, got: s });
            }
        }
        for (i, &p) in self.unit_prices.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(ConfigError::UnitPrice { index: i, got: p });
            }
        }
        self.validate_correlation()?;
        for (field, got) in [
            ("mean_holding_time", self.mean_holding_time),
            ("horizon_t", self.horizon_t),
            ("sensing_period", self.sensing_period),
            ("cell_radius", self.cell_radius),
            ("message_delay", self.message_delay),
            ("base_frequency_mhz", self.base_frequency_mhz),
            ("channel_spacing_mhz", self.channel_spacing_mhz),
        ] {
            if !got.is_finite() || got <= 0.0 {
                return Err(ConfigError::NonPositive { field, got });
            }
        }
        if !self.availability_probability.is_finite()
            || !(0.0..=1.0).contains(&self.availability_probability)
        {
            return Err(ConfigError::Availability(self.availability_probability));
        }
        if !self.interference_level.is_finite() || self.interference_level < 0.0 {
            return Err(ConfigError::InterferenceLevel(self.interference_level));
        }
        if !self.channel_cost.is_finite() || self.channel_cost < 0.0 {
            return Err(ConfigError::ChannelCost(self.channel_cost));
        }
        if let Some(g) = self.sharing_group_size {
            if g == 0 || g > self.n_providers {
                return Err(ConfigError::SharingGroup {
                    max: self.n_providers,
                    got: g,
                });
            }
        }
        if self.uniform_channel_params && !self.channel_overrides.is_empty() {
            return Err(ConfigError::OverridesWithUniform);
        }
        let n_channels = self.n_channels();
        for (index, o) in self.channel_overrides.iter().enumerate() {
            if o.channel >= n_channels {
                return Err(ConfigError::OverrideChannel {
                    index,
                    channel: o.channel,
                    n_channels,
                });
            }
            if let Some(a) = o.availability_probability {
                if !a.is_finite() || !(0.0..=1.0).contains(&a) {
                    return Err(ConfigError::OverrideAvailability { index, got: a });
                }
            }
        }
        Ok(())
    }

    fn validate_correlation(&self) -> Result<(), ConfigError> {
        let n = self.n_providers as usize;
        let m = &self.rate_correlation;
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(ConfigError::CorrelationShape { n });
        }
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                    return Err(ConfigError::CorrelationEntry { i, j, got: v });
                }
            }
        }
        for (i, row) in m.iter().enumerate() {
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(ConfigError::CorrelationDiagonal { i, got: row[i] });
            }
        }
        for (i, row) in m.iter().enumerate() {
            for (j, &a) in row.iter().enumerate().skip(i + 1) {
                let b = m[j][i];
                if (a - b).abs() > 1e-12 {
                    return Err(ConfigError::CorrelationSymmetry { i, j, a, b });
                }
            }
        }
        if traffic::psd_cholesky(m).is_none() {
            return Err(ConfigError::CorrelationNotPsd);
        }
        Ok(())
    }
}
