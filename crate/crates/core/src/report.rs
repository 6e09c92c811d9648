//! Run results and their JSON/CSV serializations.
//!
//! Serialization goes through serde structs with a fixed field order, so a
//! rerun of the same scenario produces byte-identical output.

use serde::{Deserialize, Serialize};

/// The four headline metrics plus the frequency spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Blocked over processed calls.
    #[serde(rename = "R_BL")]
    pub r_bl: f64,
    /// Carried over offered traffic.
    pub eta_sys: f64,
    /// Time-averaged fraction of owned channels busy.
    pub eta_s: f64,
    /// Unit price times horizon times the configured efficiency.
    pub c_e: f64,
    /// Peak spread of simultaneously used channel centre frequencies.
    pub interference_mhz: f64,
    /// True when no call was processed (blocking reported as 0).
    pub no_traffic: bool,
}

/// Call totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Totals {
    pub arrivals: u64,
    pub accepted: u64,
    pub blocked: u64,
    pub processed: u64,
}

/// Per-provider slice of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReport {
    /// 1-based provider id.
    pub provider: u32,
    pub totals: Totals,
    pub metrics: MetricReport,
    /// Offered traffic in Erlang: summed holding over horizon.
    pub offered_erlang: f64,
    /// Carried traffic in Erlang.
    pub carried_erlang: f64,
    /// Accrued revenue: unit price times busy channel time.
    pub revenue: f64,
    /// Revenue over offered Erlang (0 with no traffic).
    pub revenue_per_erlang: f64,
}

/// Counters of the CR query protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ProtocolStats {
    pub requests_issued: u64,
    pub requests_resolved: u64,
    pub broadcasts_sent: u64,
    pub responses_delivered: u64,
    pub responses_late: u64,
    pub max_responses_per_request: u64,
    pub borrows: u64,
    pub releases: u64,
    pub migrations: u64,
    pub claim_conflicts: u64,
    pub wait_queue_peak: u64,
}

/// Full result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub horizon_t: f64,
    pub sharing_enabled: bool,
    pub sharing_group_size: u32,
    /// Post-clamp rate draw of this replication (calls/s per provider).
    pub realized_rates: Vec<f64>,
    pub totals: Totals,
    pub aggregate: MetricReport,
    pub per_provider: Vec<ProviderReport>,
    /// Peak frequency spread per cell, row-major.
    pub per_cell_interference_mhz: Vec<f64>,
    /// Peak number of simultaneously active calls.
    pub active_users_peak: u32,
    /// Total offered traffic in Erlang.
    pub traffic_load_erlang: f64,
    pub events_processed: u64,
    pub peak_queue_len: u64,
    pub protocol: ProtocolStats,
}

impl RunResult {
    /// Canonical pretty JSON; identical bytes for identical runs.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV with one aggregate row and one row per provider.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "scope,provider,R_BL,eta_sys,eta_s,c_e,interference_mhz,arrivals,accepted,blocked,processed\n",
        );
        let mut push_row = |scope: &str, provider: String, m: &MetricReport, t: &Totals| {
            out.push_str(&format!(
                "{scope},{provider},{},{},{},{},{},{},{},{},{}\n",
                m.r_bl,
                m.eta_sys,
                m.eta_s,
                m.c_e,
                m.interference_mhz,
                t.arrivals,
                t.accepted,
                t.blocked,
                t.processed
            ));
        };
        push_row("aggregate", String::new(), &self.aggregate, &self.totals);
        for p in &self.per_provider {
            push_row("provider", p.provider.to_string(), &p.metrics, &p.totals);
        }
        out
    }
}

/// One call-lifecycle or channel-transfer event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTraceRow {
    pub time: f64,
    /// arrival | accept | block | depart | borrow | release | migrate_out |
    /// migrate_in
    pub kind: &'static str,
    /// 1-based provider id of the subscriber (borrow/release: the borrower).
    pub provider: u32,
    pub cell: u32,
    pub channel: Option<u32>,
    pub call: Option<u64>,
    pub holding: Option<f64>,
    /// accepted | blocked for accept/block rows, empty otherwise.
    pub outcome: &'static str,
}

/// One protocol message, logged at send time.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTraceRow {
    pub time: f64,
    /// request | broadcast | response
    pub msg_type: &'static str,
    /// `infra:N` or `node:N`
    pub src: String,
    pub dst: String,
    pub request_id: u64,
    /// Channels carried by a response; 0 for request/broadcast.
    pub entry_count: usize,
}

fn opt_u32(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Event trace CSV: `time,kind,provider,cell,channel,call,holding,outcome`.
pub fn event_trace_to_csv(rows: &[EventTraceRow]) -> String {
    let mut out = String::from("time,kind,provider,cell,channel,call,holding,outcome\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.time,
            r.kind,
            r.provider,
            r.cell,
            opt_u32(r.channel),
            opt_u64(r.call),
            opt_f64(r.holding),
            r.outcome
        ));
    }
    out
}

/// Message trace CSV: `time,msg_type,src,dst,request_id,entry_count`.
pub fn message_trace_to_csv(rows: &[MessageTraceRow]) -> String {
    let mut out = String::from("time,msg_type,src,dst,request_id,entry_count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.time, r.msg_type, r.src, r.dst, r.request_id, r.entry_count
        ));
    }
    out
}
