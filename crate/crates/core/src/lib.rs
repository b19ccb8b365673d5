//! Discrete-event simulator for SOME/IP service discovery over in-vehicle
//! Ethernet, either with plain learning switches or under an SDN controller.
//!
//! ```
//! use sdsim_core::{run_scenario, Mode, ScenarioConfig};
//!
//! let metrics = run_scenario(&ScenarioConfig::new(Mode::Ethernet, 1, 1, 1)).unwrap();
//! assert_eq!(metrics.positive_acks, 1);
//! ```

pub mod control_plane;
pub mod data_plane;
pub mod error;
pub mod host_model;
pub mod scenario;
pub mod sd_codec;
pub mod sim_engine;
pub mod topology;

pub use error::SimError;
pub use scenario::{run_scenario, run_sweep, Mode, ScenarioConfig, SweepGrid, SweepOutcome, SweepResult, Timing};
pub use sd_codec::{Endpoint, SdKind, SdMessage, ServiceIdentity};
pub use sim_engine::{Counters, RunMetrics, SimTime};
pub use topology::{Attachment, HostId, PortId, SwitchId, Topology};
