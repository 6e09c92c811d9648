//! Cognitive-radio sensing nodes and the channel-query protocol.
//!
//! Each node periodically scans the channels of the infrastructures within
//! its sensing range and keeps a short idle/busy history per channel. An
//! overloaded infrastructure sends a [`ChannelRequest`] to its nearest node;
//! that node answers with the idle channels it knows about and relays the
//! query to its neighbours as a [`BroadcastQuery`] with a hop budget.
//! Responses travel back to the requester, which merges them with
//! [`aggregate_responses`].
//!
//! Nodes are deliberately ignorant of who participates in sharing: they
//! report every idle channel not licensed to the requester, and the engine
//! applies policy when choosing what to borrow.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::model::{Channel, ChannelId, CrNode, CrNodeId, InfraId, ProviderId};

/// Sliding-window length of the per-channel idle history.
pub const AVAILABILITY_WINDOW: usize = 10;

/// Channel-query id, unique within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId(pub u64);

/// Engine-side view of current occupancy. Channel `ch` is busy for a node
/// when any infrastructure within the node's sensing range hosts at least
/// one call on `ch`.
pub trait OccupancyView {
    fn busy(&self, node: CrNodeId, channel: ChannelId) -> bool;
}

/// One channel's entry in an availability response.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityEntry {
    pub channel: ChannelId,
    /// Idle fraction over the reporting node's recent scans, or the
    /// channel's configured prior if the node has no history yet.
    pub availability: f64,
    pub interference_level: f64,
    pub cost: f64,
    pub reported_by: CrNodeId,
}

/// Query from an overloaded infrastructure to its nearest CR node.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRequest {
    pub id: RequestId,
    pub origin_infra: InfraId,
    pub requester: ProviderId,
    pub issue_time: f64,
}

/// Relayed copy of a request travelling across the CR mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastQuery {
    pub id: RequestId,
    pub origin_infra: InfraId,
    pub requester: ProviderId,
    /// Hops taken so far; never exceeds the configured maximum.
    pub hop_count: u32,
}

/// Answer sent back to the requesting infrastructure.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityResponse {
    pub id: RequestId,
    pub reported_by: CrNodeId,
    pub entries: Vec<AvailabilityEntry>,
}

/// Mutable sensing state of one CR node.
#[derive(Debug, Clone, Default)]
pub struct NodeState {
    /// Busy flag per mapped channel from the latest scan.
    occupancy: BTreeMap<ChannelId, bool>,
    /// Recent idle flags per mapped channel, oldest first.
    history: BTreeMap<ChannelId, VecDeque<bool>>,
    /// Queries already answered or relayed.
    seen: BTreeSet<RequestId>,
    last_sense: Option<f64>,
}

impl NodeState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scans every mapped channel and records the result.
    pub fn sense(&mut self, info: &CrNode, world: &dyn OccupancyView, now: f64) {
        for &ch in &info.mapped_channels {
            let busy = world.busy(info.id, ch);
            self.occupancy.insert(ch, busy);
            let h = self.history.entry(ch).or_default();
            h.push_back(!busy);
            if h.len() > AVAILABILITY_WINDOW {
                h.pop_front();
            }
        }
        self.last_sense = Some(now);
    }

    pub fn last_sense(&self) -> Option<f64> {
        self.last_sense
    }

    /// True when this node has already seen the query id.
    pub fn has_seen(&self, id: RequestId) -> bool {
        self.seen.contains(&id)
    }

    /// Licensee permission prior times the idle fraction of the recent
    /// scans (1.0 without history). A channel whose licensee never permits
    /// secondary use (prior 0) therefore always estimates 0.
    pub fn availability_estimate(&self, channel: &Channel) -> f64 {
        let observed = match self.history.get(&channel.id) {
            Some(h) if !h.is_empty() => {
                h.iter().filter(|idle| **idle).count() as f64 / h.len() as f64
            }
            // No observations yet: fall back to the licensee's prior alone.
            _ => 1.0,
        };
        channel.availability_probability * observed
    }

    /// Idle mapped channels not licensed to the requester, in channel order.
    /// Channels with a zero availability estimate are withheld: the licensee
    /// does not offer them for secondary use.
    fn idle_entries(
        &self,
        info: &CrNode,
        channels: &[Channel],
        requester: ProviderId,
    ) -> Vec<AvailabilityEntry> {
        info.mapped_channels
            .iter()
            .filter(|ch| matches!(self.occupancy.get(ch), Some(false)))
            .map(|&ch| &channels[ch.0 as usize])
            .filter(|c| c.owner != requester)
            .map(|c| AvailabilityEntry {
                channel: c.id,
                availability: self.availability_estimate(c),
                interference_level: c.interference_level,
                cost: c.cost,
                reported_by: info.id,
            })
            .filter(|e| e.availability > 0.0)
            .collect()
    }

    /// Handles a direct request from an infrastructure.
    ///
    /// A stale occupancy map (older than two sensing periods, or never
    /// scanned) triggers a fresh scan first. Returns the node's own response
    /// plus the broadcast copies for its neighbours.
    pub fn handle_request(
        &mut self,
        info: &CrNode,
        channels: &[Channel],
        world: &dyn OccupancyView,
        request: &ChannelRequest,
        now: f64,
        sensing_period: f64,
    ) -> (AvailabilityResponse, Vec<(CrNodeId, BroadcastQuery)>) {
        let stale = match self.last_sense {
            None => true,
            Some(t) => now - t > 2.0 * sensing_period,
        };
        if stale {
            self.sense(info, world, now);
        }
        self.seen.insert(request.id);
        let response = AvailabilityResponse {
            id: request.id,
            reported_by: info.id,
            entries: self.idle_entries(info, channels, request.requester),
        };
        let forwards = info
            .neighbors
            .iter()
            .map(|&nb| {
                (
                    nb,
                    BroadcastQuery {
                        id: request.id,
                        origin_infra: request.origin_infra,
                        requester: request.requester,
                        hop_count: 1,
                    },
                )
            })
            .collect();
        (response, forwards)
    }

    /// Handles a relayed query: answers from the current map (no fresh scan)
    /// and relays further while hop budget remains. Duplicate ids are
    /// dropped.
    pub fn handle_broadcast(
        &mut self,
        info: &CrNode,
        channels: &[Channel],
        query: &BroadcastQuery,
        max_hops: u32,
    ) -> Option<(AvailabilityResponse, Vec<(CrNodeId, BroadcastQuery)>)> {
        if !self.seen.insert(query.id) {
            return None;
        }
        let response = AvailabilityResponse {
            id: query.id,
            reported_by: info.id,
            entries: self.idle_entries(info, channels, query.requester),
        };
        let forwards = if query.hop_count < max_hops {
            info.neighbors
                .iter()
                .map(|&nb| {
                    (
                        nb,
                        BroadcastQuery {
                            hop_count: query.hop_count + 1,
                            ..query.clone()
                        },
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        Some((response, forwards))
    }
}

/// Merges responses into one candidate list, keyed by channel and sorted by
/// channel id. When several nodes report the same channel the entry with the
/// highest interference level wins (worst-case estimate); earlier responses
/// win exact ties.
pub fn aggregate_responses(responses: &[AvailabilityResponse]) -> Vec<AvailabilityEntry> {
    let mut merged: BTreeMap<ChannelId, AvailabilityEntry> = BTreeMap::new();
    for r in responses {
        for e in &r.entries {
            match merged.get(&e.channel) {
                Some(old) if old.interference_level >= e.interference_level => {}
                _ => {
                    merged.insert(e.channel, e.clone());
                }
            }
        }
    }
    merged.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    struct FakeWorld {
        busy: BTreeSet<(CrNodeId, ChannelId)>,
    }

    impl OccupancyView for FakeWorld {
        fn busy(&self, node: CrNodeId, channel: ChannelId) -> bool {
            self.busy.contains(&(node, channel))
        }
    }

    fn channel(id: u32, owner: u32) -> Channel {
        Channel {
            id: ChannelId(id),
            owner: ProviderId(owner),
            center_frequency_mhz: 900.0 + 5.0 * id as f64,
            availability_probability: 0.8,
            interference_level: 0.0,
            cost: 0.0,
        }
    }

    /// Two providers with two channels each, one node mapping all of them.
    fn fixture() -> (CrNode, Vec<Channel>) {
        let node = CrNode {
            id: CrNodeId(0),
            position: crate::model::Point { x: 0.0, y: 0.0 },
            sensing_range: 500.0,
            neighbors: vec![CrNodeId(1), CrNodeId(2)],
            in_range_infras: vec![InfraId(0), InfraId(1)],
            mapped_channels: (0..4).map(ChannelId).collect(),
        };
        let channels = vec![channel(0, 1), channel(1, 1), channel(2, 2), channel(3, 2)];
        (node, channels)
    }

    fn request(id: u64, requester: u32) -> ChannelRequest {
        ChannelRequest {
            id: RequestId(id),
            origin_infra: InfraId(0),
            requester: ProviderId(requester),
            issue_time: 0.0,
        }
    }

    #[test]
    fn sense_matches_brute_force_oracle() {
        let (node, _) = fixture();
        let world = FakeWorld {
            busy: [(CrNodeId(0), ChannelId(1)), (CrNodeId(0), ChannelId(2))]
                .into_iter()
                .collect(),
        };
        let mut state = NodeState::new();
        state.sense(&node, &world, 0.0);
        for &ch in &node.mapped_channels {
            let expect = world.busy(node.id, ch);
            assert_eq!(state.occupancy.get(&ch), Some(&expect), "{ch:?}");
        }
    }

    #[test]
    fn availability_is_prior_times_observed_idle_fraction() {
        let (node, channels) = fixture();
        let mut state = NodeState::new();
        // Without history only the prior remains.
        assert_eq!(state.availability_estimate(&channels[0]), 0.8);
        // Three scans: busy, idle, idle.
        for busy_now in [true, false, false] {
            let world = FakeWorld {
                busy: if busy_now {
                    [(CrNodeId(0), ChannelId(0))].into_iter().collect()
                } else {
                    BTreeSet::new()
                },
            };
            state.sense(&node, &world, 0.0);
        }
        let est = state.availability_estimate(&channels[0]);
        assert!((est - 0.8 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_prior_channels_are_never_offered() {
        let (node, mut channels) = fixture();
        channels[2].availability_probability = 0.0;
        let world = FakeWorld {
            busy: BTreeSet::new(),
        };
        let mut state = NodeState::new();
        let (response, _) =
            state.handle_request(&node, &channels, &world, &request(1, 1), 0.0, 1.0);
        // All channels are idle; provider 1 owns 0 and 1, so only the
        // foreign channels 2 and 3 are candidates, and 2 is withheld.
        let offered: Vec<u32> = response.entries.iter().map(|e| e.channel.0).collect();
        assert_eq!(offered, vec![3]);
    }

    #[test]
    fn availability_window_is_bounded() {
        let (node, channels) = fixture();
        let mut state = NodeState::new();
        let busy_world = FakeWorld {
            busy: [(CrNodeId(0), ChannelId(0))].into_iter().collect(),
        };
        let idle_world = FakeWorld {
            busy: BTreeSet::new(),
        };
        state.sense(&node, &busy_world, 0.0);
        for _ in 0..AVAILABILITY_WINDOW {
            state.sense(&node, &idle_world, 0.0);
        }
        // The initial busy scan fell out of the window, leaving a fully idle
        // history scaled by the 0.8 prior.
        assert_eq!(state.availability_estimate(&channels[0]), 0.8);
    }

    #[test]
    fn request_reports_only_foreign_idle_channels() {
        let (node, channels) = fixture();
        // Channel 2 busy; channels 0, 1 belong to the requester.
        let world = FakeWorld {
            busy: [(CrNodeId(0), ChannelId(2))].into_iter().collect(),
        };
        let mut state = NodeState::new();
        let (resp, forwards) =
            state.handle_request(&node, &channels, &world, &request(1, 1), 0.0, 1.0);
        let reported: Vec<u32> = resp.entries.iter().map(|e| e.channel.0).collect();
        assert_eq!(reported, vec![3]);
        assert_eq!(forwards.len(), 2);
        assert!(forwards.iter().all(|(_, q)| q.hop_count == 1));
    }

    #[test]
    fn request_with_everything_busy_reports_nothing() {
        let (node, channels) = fixture();
        let world = FakeWorld {
            busy: (0..4).map(|c| (CrNodeId(0), ChannelId(c))).collect(),
        };
        let mut state = NodeState::new();
        let (resp, _) = state.handle_request(&node, &channels, &world, &request(1, 1), 0.0, 1.0);
        assert!(resp.entries.is_empty());
    }

    #[test]
    fn filter_matches_brute_force_on_mixed_worlds() {
        let (node, channels) = fixture();
        for mask in 0u32..16 {
            let world = FakeWorld {
                busy: (0..4)
                    .filter(|c| mask & (1 << c) != 0)
                    .map(|c| (CrNodeId(0), ChannelId(c)))
                    .collect(),
            };
            let mut state = NodeState::new();
            let (resp, _) =
                state.handle_request(&node, &channels, &world, &request(1, 2), 0.0, 1.0);
            let got: Vec<u32> = resp.entries.iter().map(|e| e.channel.0).collect();
            let want: Vec<u32> = (0..4)
                .filter(|c| mask & (1 << c) == 0)
                .filter(|c| channels[*c as usize].owner != ProviderId(2))
                .collect();
            assert_eq!(got, want, "mask {mask:04b}");
        }
    }

    #[test]
    fn stale_map_triggers_rescan_fresh_map_does_not() {
        let (node, channels) = fixture();
        let idle = FakeWorld {
            busy: BTreeSet::new(),
        };
        let busy = FakeWorld {
            busy: (0..4).map(|c| (CrNodeId(0), ChannelId(c))).collect(),
        };
        let mut state = NodeState::new();
        state.sense(&node, &idle, 0.0);
        // World changed, but the map at t=1.5 is fresh (age <= 2 periods).
        let (resp, _) = state.handle_request(&node, &channels, &busy, &request(1, 1), 1.5, 1.0);
        assert_eq!(resp.entries.len(), 2);
        // At t=2.5 the map is stale, so the request rescans and sees busy.
        let (resp, _) = state.handle_request(&node, &channels, &busy, &request(2, 1), 2.5, 1.0);
        assert!(resp.entries.is_empty());
    }

    #[test]
    fn unscanned_node_scans_on_first_request() {
        let (node, channels) = fixture();
        let world = FakeWorld {
            busy: BTreeSet::new(),
        };
        let mut state = NodeState::new();
        let (resp, _) = state.handle_request(&node, &channels, &world, &request(1, 1), 0.0, 1.0);
        assert_eq!(resp.entries.len(), 2);
        assert_eq!(state.last_sense(), Some(0.0));
    }

    #[test]
    fn duplicate_broadcast_is_dropped() {
        let (node, channels) = fixture();
        let world = FakeWorld {
            busy: BTreeSet::new(),
        };
        let mut state = NodeState::new();
        state.sense(&node, &world, 0.0);
        let q = BroadcastQuery {
            id: RequestId(9),
            origin_infra: InfraId(0),
            requester: ProviderId(1),
            hop_count: 1,
        };
        assert!(state.handle_broadcast(&node, &channels, &q, 2).is_some());
        assert!(state.handle_broadcast(&node, &channels, &q, 2).is_none());
    }

    #[test]
    fn request_then_echoed_broadcast_is_dropped() {
        let (node, channels) = fixture();
        let world = FakeWorld {
            busy: BTreeSet::new(),
        };
        let mut state = NodeState::new();
        let _ = state.handle_request(&node, &channels, &world, &request(4, 1), 0.0, 1.0);
        let echo = BroadcastQuery {
            id: RequestId(4),
            origin_infra: InfraId(0),
            requester: ProviderId(1),
            hop_count: 1,
        };
        assert!(state.handle_broadcast(&node, &channels, &echo, 1).is_none());
    }

    #[test]
    fn hop_budget_stops_relaying() {
        let (node, channels) = fixture();
        let world = FakeWorld {
            busy: BTreeSet::new(),
        };
        let mut state = NodeState::new();
        state.sense(&node, &world, 0.0);
        let at_budget = BroadcastQuery {
            id: RequestId(5),
            origin_infra: InfraId(0),
            requester: ProviderId(1),
            hop_count: 1,
        };
        let (_, forwards) = state
            .handle_broadcast(&node, &channels, &at_budget, 1)
            .unwrap();
        assert!(forwards.is_empty(), "hop budget reached, no relay");
        let below_budget = BroadcastQuery {
            id: RequestId(6),
            ..at_budget
        };
        let (_, forwards) = state
            .handle_broadcast(&node, &channels, &below_budget, 2)
            .unwrap();
        assert_eq!(forwards.len(), 2);
        assert!(forwards.iter().all(|(_, q)| q.hop_count == 2));
    }

    #[test]
    fn aggregate_of_nothing_is_empty() {
        assert!(aggregate_responses(&[]).is_empty());
    }

    #[test]
    fn aggregate_merges_disjoint_and_keeps_worst_interference() {
        let mk = |ch: u32, interference: f64, node: u32| AvailabilityEntry {
            channel: ChannelId(ch),
            availability: 0.5,
            interference_level: interference,
            cost: 0.0,
            reported_by: CrNodeId(node),
        };
        let r1 = AvailabilityResponse {
            id: RequestId(1),
            reported_by: CrNodeId(0),
            entries: vec![mk(0, 1.0, 0), mk(2, 0.5, 0)],
        };
        let r2 = AvailabilityResponse {
            id: RequestId(1),
            reported_by: CrNodeId(1),
            entries: vec![mk(1, 0.0, 1), mk(2, 2.0, 1)],
        };
        let merged = aggregate_responses(&[r1, r2]);
        let ids: Vec<u32> = merged.iter().map(|e| e.channel.0).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        let ch2 = merged.iter().find(|e| e.channel.0 == 2).unwrap();
        assert_eq!(ch2.interference_level, 2.0);
        assert_eq!(ch2.reported_by, CrNodeId(1));
    }

    proptest! {
        #[test]
        fn aggregate_matches_map_oracle(
            entries in proptest::collection::vec(
                (0u32..6, 0.0f64..3.0, 0u32..4),
                0..24,
            ),
        ) {
            // Split the flat entry list into responses of up to 4 entries.
            let mk = |(ch, intf, node): (u32, f64, u32)| AvailabilityEntry {
                channel: ChannelId(ch),
                availability: 0.5,
                interference_level: intf,
                cost: 0.0,
                reported_by: CrNodeId(node),
            };
            let responses: Vec<AvailabilityResponse> = entries
                .chunks(4)
                .map(|chunk| AvailabilityResponse {
                    id: RequestId(0),
                    reported_by: CrNodeId(0),
                    entries: chunk.iter().cloned().map(mk).collect(),
                })
                .collect();
            let merged = aggregate_responses(&responses);

            // Oracle: strictly-greater-interference replacement per channel.
            let mut oracle: BTreeMap<u32, AvailabilityEntry> = BTreeMap::new();
            for e in entries.iter().cloned().map(mk) {
                let slot = oracle.entry(e.channel.0);
                match slot {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(e);
                    }
                    std::collections::btree_map::Entry::Occupied(mut o) => {
                        if e.interference_level > o.get().interference_level {
                            o.insert(e);
                        }
                    }
                }
            }
            let want: Vec<AvailabilityEntry> = oracle.into_values().collect();
            prop_assert_eq!(merged, want);
        }
    }
}
