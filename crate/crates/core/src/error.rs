use std::net::Ipv4Addr;

use thiserror::Error;

use crate::sim_engine::SimTime;
use crate::topology::SwitchId;

/// Errors that abort a simulation run or reject a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled at {requested}s but the clock is already at {now}s")]
    TimeTravel { now: SimTime, requested: SimTime },
    #[error("run did not complete by {limit}s: {unfinished} consumer queries unfinished, {pending_events} events pending")]
    Timeout {
        limit: SimTime,
        unfinished: usize,
        pending_events: usize,
    },
    #[error("endpoint {0} is not attached to any switch")]
    UnattachedEndpoint(Ipv4Addr),
    #[error("no path from switch {from} to switch {to}")]
    NoPath { from: SwitchId, to: SwitchId },
    #[error("{field} = {value} is outside {min}..={max}")]
    InvalidRange {
        field: &'static str,
        value: u64,
        min: u64,
        max: u64,
    },
}
