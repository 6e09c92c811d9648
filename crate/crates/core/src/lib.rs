//! Discrete-event simulator of several cellular service providers that
//! opportunistically share each other's licensed spectrum through a network
//! of cognitive-radio (CR) sensing nodes placed on the cell grid.
//!
//! An overloaded provider asks the nearest CR node for idle foreign channels;
//! the node answers from its sensed occupancy map and relays the query to its
//! neighbours. The provider then borrows the best reported channel until its
//! own load drops again. The simulator measures call blocking, system and
//! spectrum efficiency, cost efficiency, and the frequency spread of the
//! channels in simultaneous use.
//!
//! Module map:
//! - [`config`]: scenario configuration, JSON loading and validation
//! - [`model`]: providers, channels, infrastructures, hex grid topology
//! - [`traffic`]: correlated rate draws and Poisson call generation
//! - [`crnet`]: CR node state, sensing and the request/broadcast protocol
//! - [`engine`]: event queue, admission, borrowing and release
//! - [`metrics`]: metric accumulators and the reported formulas
//! - [`report`]: result structs plus JSON/CSV serialization
//! - [`sweep`]: parameter sweeps and paired sharing on/off comparisons
//! - [`stats`]: small statistics helpers (mean, stddev, sign test)
//! - [`rng`]: named, independent random streams

pub mod config;
pub mod crnet;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod stats;
pub mod sweep;
pub mod traffic;

pub use config::{ConfigError, GridDims, ScenarioConfig};
pub use engine::{run, run_with_options, RunError, RunOptions, RunOutput};
pub use report::RunResult;
