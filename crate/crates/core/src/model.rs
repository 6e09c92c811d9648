//! Static world model: providers, channels, infrastructures, cells and the
//! CR sensing nodes placed on the vertices of a hexagonal cell grid.
//!
//! Everything in this module is immutable once [`Topology::build`] returns;
//! all run-time state (slot occupancy, borrows, sensing maps) lives in the
//! engine. This keeps replications trivially shareable across threads.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::config::{ConfigError, ScenarioConfig};

/// Service provider id, 1-based to match reporting.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ProviderId(pub u32);

/// Global channel id, 0-based. Channel `c` is licensed to provider
/// `c / channels_per_provider + 1`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ChannelId(pub u32);

/// Base-station infrastructure id, 0-based, row-major over (cell, provider).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct InfraId(pub u32);

/// CR sensing node id, 0-based in vertex discovery order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct CrNodeId(pub u32);

/// Hex cell id, 0-based row-major.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct CellId(pub u32);

/// Call id, 0-based in global arrival order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct CallId(pub u64);

/// Planar position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One licensed channel and its static attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub owner: ProviderId,
    pub center_frequency_mhz: f64,
    /// Prior probability that the channel is free, used by CR nodes before
    /// they have sensing history.
    pub availability_probability: f64,
    /// Static interference attribute reported alongside availability.
    pub interference_level: f64,
    /// Static cost attribute reported alongside availability.
    pub cost: f64,
}

/// One service provider and its license.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceProvider {
    pub id: ProviderId,
    /// Licensed channels, ascending.
    pub channels: Vec<ChannelId>,
    /// Revenue per owned channel per busy second.
    pub unit_price: f64,
    /// This provider's infrastructure in every cell, ascending.
    pub infrastructures: Vec<InfraId>,
}

/// One base station. Every provider has exactly one per cell and they are
/// co-located at the cell centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infrastructure {
    pub id: InfraId,
    pub provider: ProviderId,
    pub cell: CellId,
    pub position: Point,
}

/// One hex cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub row: u32,
    pub col: u32,
    pub center: Point,
}

/// Static description of one CR sensing node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrNode {
    pub id: CrNodeId,
    pub position: Point,
    /// Sensing radius in metres; equals the cell circumradius, which covers
    /// the centres of all cells incident to this vertex.
    pub sensing_range: f64,
    /// Nodes one hex side away, ascending.
    pub neighbors: Vec<CrNodeId>,
    /// Infrastructures within sensing range, ascending.
    pub in_range_infras: Vec<InfraId>,
    /// Channels of those infrastructures' providers, ascending and deduped.
    pub mapped_channels: Vec<ChannelId>,
}

/// Immutable scenario topology shared by every replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub providers: Vec<ServiceProvider>,
    pub channels: Vec<Channel>,
    pub infrastructures: Vec<Infrastructure>,
    pub cells: Vec<Cell>,
    pub cr_nodes: Vec<CrNode>,
    /// Nearest CR node per infrastructure (lowest id on distance ties).
    pub infra_nearest_node: Vec<CrNodeId>,
}

/// Distance below which two hex-corner points are the same vertex (m).
pub const VERTEX_MERGE_TOL_M: f64 = 1e-6;
/// Slack added to range and side-length comparisons (m).
pub const RANGE_TOL_M: f64 = 1e-6;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Centre of the cell at `(row, col)` in an odd-row-shifted layout of
/// pointy-top hexagons with circumradius `r`.
fn hex_center(row: u32, col: u32, r: f64) -> Point {
    let shift = if row % 2 == 1 { 0.5 } else { 0.0 };
    Point {
        x: SQRT3 * r * (col as f64 + shift),
        y: 1.5 * r * row as f64,
    }
}

/// Corner `k` (0..6) of a pointy-top hexagon centred at `c`.
fn hex_corner(c: Point, r: f64, k: u32) -> Point {
    let angle = (60.0 * k as f64 + 30.0).to_radians();
    Point {
        x: c.x + r * angle.cos(),
        y: c.y + r * angle.sin(),
    }
}

/// Merges near-coincident corner points into canonical vertices.
///
/// Points are bucketed on a `VERTEX_MERGE_TOL_M` grid and compared against
/// the 3x3 neighbourhood, so two points within tolerance always merge even
/// when they round to different buckets. Returns each vertex once, in first
/// appearance order, plus the vertex index of every input point.
fn merge_vertices(points: &[Point]) -> (Vec<Point>, Vec<usize>) {
    let mut vertices: Vec<Point> = Vec::new();
    let mut index_of: Vec<usize> = Vec::with_capacity(points.len());
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: &Point| {
        (
            (p.x / VERTEX_MERGE_TOL_M).round() as i64,
            (p.y / VERTEX_MERGE_TOL_M).round() as i64,
        )
    };
    for p in points {
        let (kx, ky) = key(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = buckets.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        if vertices[id].distance(p) <= VERTEX_MERGE_TOL_M {
                            found = Some(id);
                            break 'search;
                        }
                    }
                }
            }
        }
        let id = found.unwrap_or_else(|| {
            vertices.push(*p);
            buckets
                .entry((kx, ky))
                .or_default()
                .push(vertices.len() - 1);
            vertices.len() - 1
        });
        index_of.push(id);
    }
    (vertices, index_of)
}

impl Topology {
    /// Builds the full static topology for a scenario.
    ///
    /// The config is resolved and validated first, so partially specified
    /// configs are accepted and invalid ones are rejected with the offending
    /// field named.
    pub fn build(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        let cfg = config.resolved()?;
        let n_providers = cfg.n_providers;
        let per = cfg.channels_per_provider;
        let r = cfg.cell_radius;

        let mut channels = Vec::with_capacity((n_providers * per) as usize);
        for c in 0..n_providers * per {
            let mut availability = cfg.availability_probability;
            let mut interference = cfg.interference_level;
            let mut cost = cfg.channel_cost;
            if !cfg.uniform_channel_params {
                for o in &cfg.channel_overrides {
                    if o.channel == c {
                        if let Some(a) = o.availability_probability {
                            availability = a;
                        }
                        if let Some(i) = o.interference_level {
                            interference = i;
                        }
                        if let Some(k) = o.cost {
                            cost = k;
                        }
                    }
                }
            }
            channels.push(Channel {
                id: ChannelId(c),
                owner: ProviderId(c / per + 1),
                center_frequency_mhz: cfg.base_frequency_mhz + cfg.channel_spacing_mhz * c as f64,
                availability_probability: availability,
                interference_level: interference,
                cost,
            });
        }

        let mut cells = Vec::new();
        for row in 0..cfg.grid_dims.rows {
            for col in 0..cfg.grid_dims.cols {
                cells.push(Cell {
                    id: CellId(cells.len() as u32),
                    row,
                    col,
                    center: hex_center(row, col, r),
                });
            }
        }

        // One infrastructure per (cell, provider), co-located at the centre.
        let mut infrastructures = Vec::new();
        let mut providers: Vec<ServiceProvider> = (1..=n_providers)
            .map(|p| ServiceProvider {
                id: ProviderId(p),
                channels: ((p - 1) * per..p * per).map(ChannelId).collect(),
                unit_price: cfg.unit_prices[(p - 1) as usize],
                infrastructures: Vec::new(),
            })
            .collect();
        for cell in &cells {
            for p in 1..=n_providers {
                let id = InfraId(infrastructures.len() as u32);
                infrastructures.push(Infrastructure {
                    id,
                    provider: ProviderId(p),
                    cell: cell.id,
                    position: cell.center,
                });
                providers[(p - 1) as usize].infrastructures.push(id);
            }
        }

        // CR nodes sit on the deduped hex vertices.
        let mut corner_points = Vec::with_capacity(cells.len() * 6);
        for cell in &cells {
            for k in 0..6 {
                corner_points.push(hex_corner(cell.center, r, k));
            }
        }
        let (vertex_points, _) = merge_vertices(&corner_points);

        let mut cr_nodes: Vec<CrNode> = vertex_points
            .iter()
            .enumerate()
            .map(|(i, &position)| CrNode {
                id: CrNodeId(i as u32),
                position,
                sensing_range: r,
                neighbors: Vec::new(),
                in_range_infras: Vec::new(),
                mapped_channels: Vec::new(),
            })
            .collect();
        for i in 0..cr_nodes.len() {
            for j in 0..cr_nodes.len() {
                if i == j {
                    continue;
                }
                let d = cr_nodes[i].position.distance(&cr_nodes[j].position);
                if (d - r).abs() <= RANGE_TOL_M {
                    let jj = CrNodeId(j as u32);
                    cr_nodes[i].neighbors.push(jj);
                }
            }
            cr_nodes[i].neighbors.sort_unstable();
        }
        for node in &mut cr_nodes {
            let mut provider_seen = vec![false; n_providers as usize];
            for infra in &infrastructures {
                if infra.position.distance(&node.position) <= node.sensing_range + RANGE_TOL_M {
                    node.in_range_infras.push(infra.id);
                    provider_seen[(infra.provider.0 - 1) as usize] = true;
                }
            }
            for (pi, seen) in provider_seen.iter().enumerate() {
                if *seen {
                    node.mapped_channels
                        .extend(providers[pi].channels.iter().copied());
                }
            }
            node.mapped_channels.sort_unstable();
        }

        let infra_nearest_node = infrastructures
            .iter()
            .map(|infra| {
                cr_nodes
                    .iter()
                    .map(|n| (n.position.distance(&infra.position), n.id))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, id)| id)
                    .expect("grid has at least one cell, so at least one vertex")
            })
            .collect();

        Ok(Topology {
            providers,
            channels,
            infrastructures,
            cells,
            cr_nodes,
            infra_nearest_node,
        })
    }

    pub fn channel(&self, id: ChannelId) -> &Channel {
        &self.channels[id.0 as usize]
    }

    pub fn provider(&self, id: ProviderId) -> &ServiceProvider {
        &self.providers[(id.0 - 1) as usize]
    }

    pub fn infra(&self, id: InfraId) -> &Infrastructure {
        &self.infrastructures[id.0 as usize]
    }

    pub fn cr_node(&self, id: CrNodeId) -> &CrNode {
        &self.cr_nodes[id.0 as usize]
    }

    pub fn n_channels(&self) -> u32 {
        self.channels.len() as u32
    }
}
