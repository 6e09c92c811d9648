//! Metric definitions and accumulators.
//!
//! Four headline metrics are reported per provider and in aggregate:
//!
//! - blocking rate: blocked calls over processed calls,
//! - system efficiency: carried traffic over offered traffic, where each
//!   call contributes its full holding time,
//! - spectrum utilization: time-averaged fraction of owned channels busy,
//! - cost efficiency: `unit_price * horizon * efficiency`.
//!
//! Interference is the spread (max minus min centre frequency) of the
//! channels in simultaneous use.
//!
//! The accumulator is updated incrementally by the engine; every quantity is
//! also recomputable from the event trace, and the two must agree to float
//! precision.

/// Outcome of the frequency-spread computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interference {
    /// `f_max - f_min` over the in-use channels, in MHz.
    pub mhz: f64,
    /// True when no channel was in use (spread reported as 0).
    pub idle: bool,
}

/// Frequency spread of a set of in-use channel centre frequencies.
pub fn interference<I: IntoIterator<Item = f64>>(freqs: I) -> Interference {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for f in freqs {
        any = true;
        min = min.min(f);
        max = max.max(f);
    }
    if any {
        Interference {
            mhz: max - min,
            idle: false,
        }
    } else {
        Interference {
            mhz: 0.0,
            idle: true,
        }
    }
}

/// Cost efficiency of one provider: unit price times observation time times
/// the chosen efficiency.
pub fn cost_efficiency(unit_price: f64, t: f64, eta: f64) -> f64 {
    unit_price * t * eta
}

/// Per-provider tallies, updated by the engine as events resolve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProviderTally {
    /// Calls that arrived (offered).
    pub arrivals: u64,
    /// Calls fully handled: accepted + blocked.
    pub processed: u64,
    pub accepted: u64,
    pub blocked: u64,
    /// Sum of holding times of all offered calls (s).
    pub offered_holding: f64,
    /// Sum of holding times of accepted calls (s).
    pub carried_holding: f64,
    /// Busy time integrated over this provider's owned channels (channel-s).
    pub busy_channel_time: f64,
    /// Revenue accrued: unit price times busy channel time.
    pub revenue: f64,
    /// Channels licensed to this provider.
    pub owned_channels: u32,
    /// Unit price of this provider.
    pub unit_price: f64,
}

/// Blocking rate with a flag for the no-traffic case.
pub fn blocking_rate(blocked: u64, processed: u64) -> (f64, bool) {
    if processed == 0 {
        (0.0, true)
    } else {
        (blocked as f64 / processed as f64, false)
    }
}

/// Carried over offered traffic. With nothing offered the provider wasted
/// nothing, so the efficiency is 1 with the flag set.
pub fn system_efficiency(carried_holding: f64, offered_holding: f64) -> (f64, bool) {
    if offered_holding == 0.0 {
        (1.0, true)
    } else {
        (carried_holding / offered_holding, false)
    }
}

/// Time-averaged fraction of `owned_channels` that were busy.
pub fn spectrum_utilization(busy_channel_time: f64, owned_channels: u32, t: f64) -> f64 {
    if owned_channels == 0 || t <= 0.0 {
        0.0
    } else {
        busy_channel_time / (owned_channels as f64 * t)
    }
}

/// Incremental metric accumulator for one run.
///
/// The engine must call [`MetricsAccumulator::advance`] before every
/// occupancy change; busy-channel time then integrates piecewise-constant
/// counts. Time past the horizon is not credited, so calls resolving during
/// settlement still count while the integrals stay frozen at the horizon.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    pub per_provider: Vec<ProviderTally>,
    horizon: f64,
    last_time: f64,
    /// Currently busy owned channels per provider (owner-attributed).
    busy_now: Vec<u32>,
}

impl MetricsAccumulator {
    pub fn new(owned_channels: &[u32], unit_prices: &[f64], horizon: f64) -> Self {
        assert_eq!(owned_channels.len(), unit_prices.len());
        let per_provider = owned_channels
            .iter()
            .zip(unit_prices)
            .map(|(&oc, &up)| ProviderTally {
                owned_channels: oc,
                unit_price: up,
                ..Default::default()
            })
            .collect();
        Self {
            per_provider,
            horizon,
            last_time: 0.0,
            busy_now: vec![0; owned_channels.len()],
        }
    }

    /// Integrates busy time up to `now` (clamped to the horizon).
    pub fn advance(&mut self, now: f64) {
        let to = now.min(self.horizon);
        if to > self.last_time {
            let dt = to - self.last_time;
            for (tally, &busy) in self.per_provider.iter_mut().zip(&self.busy_now) {
                let add = busy as f64 * dt;
                tally.busy_channel_time += add;
                tally.revenue += tally.unit_price * add;
            }
            self.last_time = to;
        }
    }

    /// Records one offered call (provider index is 0-based).
    pub fn on_offered(&mut self, provider: usize, holding: f64) {
        let t = &mut self.per_provider[provider];
        t.arrivals += 1;
        t.offered_holding += holding;
    }

    pub fn on_accepted(&mut self, provider: usize, holding: f64) {
        let t = &mut self.per_provider[provider];
        t.processed += 1;
        t.accepted += 1;
        t.carried_holding += holding;
    }

    pub fn on_blocked(&mut self, provider: usize) {
        let t = &mut self.per_provider[provider];
        t.processed += 1;
        t.blocked += 1;
    }

    /// A channel owned by `owner` (0-based) turned busy or idle. Call
    /// [`advance`](Self::advance) first.
    pub fn channel_busy_changed(&mut self, owner: usize, now_busy: bool) {
        if now_busy {
            self.busy_now[owner] += 1;
            assert!(
                self.busy_now[owner] <= self.per_provider[owner].owned_channels,
                "more busy channels than owned"
            );
        } else {
            assert!(
                self.busy_now[owner] > 0,
                "idle transition without busy channel"
            );
            self.busy_now[owner] -= 1;
        }
    }

    /// Closes the integrals at the horizon.
    pub fn finalize(&mut self) {
        let h = self.horizon;
        self.advance(h);
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Aggregate (blocked, processed) over providers.
    pub fn totals(&self) -> (u64, u64) {
        let blocked = self.per_provider.iter().map(|t| t.blocked).sum();
        let processed = self.per_provider.iter().map(|t| t.processed).sum();
        (blocked, processed)
    }
}
