use std::collections::BTreeMap;

use super::flow::{Action, FlowModOp, FlowRule, FlowTable, FlowTableError};
use super::frame::{Frame, MacAddr};
use crate::sim_engine::SimTime;
use crate::topology::{PortId, SwitchId};

/// Learned source MAC to port bindings.
pub type MacTable = BTreeMap<MacAddr, PortId>;

/// Forwarding state: a flow table under SDN control or a learning bridge.
#[derive(Debug, Clone)]
pub enum Forwarding {
    FlowTable(FlowTable),
    Learning(MacTable),
}

/// One consequence of a frame arriving at a switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchOutput {
    /// Hand the frame to the egress FIFO of `port` at `at`.
    Egress { port: PortId, at: SimTime },
    /// Send the frame to the controller at `at`.
    PacketIn { at: SimTime },
    /// Discarded by a drop action.
    Drop,
}

#[derive(Debug, Clone)]
struct PendingMod {
    effective_at: SimTime,
    op: FlowModOp,
    rule: FlowRule,
}

#[derive(Debug, Clone)]
pub struct SwitchModel {
    pub id: SwitchId,
    pub port_count: usize,
    pub forwarding: Forwarding,
    pub forwarding_delay: SimTime,
    pending: Vec<PendingMod>,
}

impl SwitchModel {
    pub const DEFAULT_FORWARDING_DELAY: SimTime = SimTime::from_micros(8);

    pub fn sdn(id: SwitchId, port_count: usize, forwarding_delay: SimTime) -> Self {
        Self {
            id,
            port_count,
            forwarding: Forwarding::FlowTable(FlowTable::new()),
            forwarding_delay,
            pending: Vec::new(),
        }
    }

    pub fn learning(id: SwitchId, port_count: usize, forwarding_delay: SimTime) -> Self {
        Self {
            id,
            port_count,
            forwarding: Forwarding::Learning(MacTable::new()),
            forwarding_delay,
            pending: Vec::new(),
        }
    }

    pub fn flow_table(&self) -> Option<&FlowTable> {
        match &self.forwarding {
            Forwarding::FlowTable(t) => Some(t),
            Forwarding::Learning(_) => None,
        }
    }

    pub fn mac_table(&self) -> Option<&MacTable> {
        match &self.forwarding {
            Forwarding::Learning(t) => Some(t),
            Forwarding::FlowTable(_) => None,
        }
    }

    fn all_but(&self, ingress: PortId) -> impl Iterator<Item = PortId> + '_ {
        (0..self.port_count as u16).map(PortId).filter(move |p| *p != ingress)
    }

    /// Processes a frame that finished arriving on `ingress` at `now`.
    ///
    /// Returns the outputs and whether the frame was flooded.
    pub fn forward(&mut self, frame: &Frame, ingress: PortId, now: SimTime) -> (Vec<SwitchOutput>, bool) {
        let _ = self.commit_due(now);
        let at = now + self.forwarding_delay;
        match &mut self.forwarding {
            Forwarding::Learning(macs) => {
                if !frame.src_mac.is_multicast() {
                    macs.insert(frame.src_mac, ingress);
                }
                let known = if frame.dst_mac.is_multicast() {
                    None
                } else {
                    macs.get(&frame.dst_mac).copied()
                };
                match known {
                    // A frame whose destination sits behind its ingress is filtered.
                    Some(port) if port == ingress => (vec![SwitchOutput::Drop], false),
                    Some(port) => (vec![SwitchOutput::Egress { port, at }], false),
                    None => (
                        self.all_but(ingress).map(|port| SwitchOutput::Egress { port, at }).collect(),
                        true,
                    ),
                }
            }
            Forwarding::FlowTable(table) => {
                let Some(rule) = table.lookup(frame, ingress) else {
                    return (vec![SwitchOutput::PacketIn { at }], false);
                };
                let mut out = Vec::with_capacity(rule.actions.len());
                for action in &rule.actions {
                    match *action {
                        Action::Output(port) if port != ingress => out.push(SwitchOutput::Egress { port, at }),
                        Action::Output(_) => {}
                        Action::PacketIn => out.push(SwitchOutput::PacketIn { at }),
                        Action::Drop => {
                            out.clear();
                            out.push(SwitchOutput::Drop);
                            break;
                        }
                    }
                }
                if out.is_empty() {
                    out.push(SwitchOutput::Drop);
                }
                (out, false)
            }
        }
    }

    /// Accepts a flow modification that takes effect `processing` after `now`.
    /// Returns the instant the table changes.
    pub fn apply_flow_mod(&mut self, rule: FlowRule, op: FlowModOp, now: SimTime, processing: SimTime) -> SimTime {
        let effective_at = now + processing;
        self.pending.push(PendingMod { effective_at, op, rule });
        effective_at
    }

    /// Applies every pending modification due at or before `now`, in
    /// submission order. Returns the outcome of each.
    pub fn commit_due(&mut self, now: SimTime) -> Vec<(FlowModOp, FlowRule, Result<(), FlowTableError>)> {
        if self.pending.is_empty() {
            return Vec::new();
        }
        let Forwarding::FlowTable(table) = &mut self.forwarding else {
            self.pending.clear();
            return Vec::new();
        };
        let mut done = Vec::new();
        let mut i = 0;
        while i < self.pending.len() {
            if self.pending[i].effective_at <= now {
                let m = self.pending.remove(i);
                let res = table.apply(m.op, m.rule.clone());
                if let Err(e) = &res {
                    log::warn!("switch {}: {e}", self.id);
                }
                done.push((m.op, m.rule, res));
            } else {
                i += 1;
            }
        }
        done
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }
}
