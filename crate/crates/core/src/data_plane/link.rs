use crate::sim_engine::SimTime;

/// Time to clock `bits` onto a link of `rate_bps`, rounded up to whole ns.
pub fn serialization_delay(bits: u64, rate_bps: u64) -> SimTime {
    let ns = (u128::from(bits) * 1_000_000_000).div_ceil(u128::from(rate_bps));
    SimTime::from_nanos(ns as u64)
}

/// Timing of one frame on a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub start: SimTime,
    pub done: SimTime,
    pub arrival: SimTime,
}

/// One direction of a link: a FIFO transmitter.
#[derive(Debug, Clone)]
pub struct EgressPort {
    pub rate_bps: u64,
    pub propagation: SimTime,
    busy_until: SimTime,
}

impl EgressPort {
    pub fn new(rate_bps: u64, propagation: SimTime) -> Self {
        Self {
            rate_bps,
            propagation,
            busy_until: SimTime::ZERO,
        }
    }

    /// Queues a frame of `bits` handed to the port at `now`.
    pub fn transmit(&mut self, bits: u64, now: SimTime) -> Transmission {
        let start = now.max(self.busy_until);
        let done = start + serialization_delay(bits, self.rate_bps);
        self.busy_until = done;
        Transmission {
            start,
            done,
            arrival: done + self.propagation,
        }
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }
}
