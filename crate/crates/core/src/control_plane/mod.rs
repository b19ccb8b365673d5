//! SDN controller applications and the actions they emit.

mod aware;
mod paths;
mod vanilla;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use aware::{
    FindCacheEntry, ServiceRegistryEntry, SomeIpController, SubscriptionRecord, SubscriptionState,
    CONTROLLER_SD_ENDPOINT, PUNT_PRIORITY, PUNT_RULE_ID,
};
pub use paths::{path_is_connected, FlowSpec, Hop, PathRule, PathRules, PATH_PRIORITY};
pub use vanilla::{VanillaController, L2_PRIORITY};

use crate::data_plane::{FlowModOp, FlowRule, Frame, RuleId};
use crate::sd_codec::{Endpoint, SdMessage};
use crate::sim_engine::SimTime;
use crate::topology::{Attachment, PortId, SwitchId, Topology};

/// Output of a controller handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlAction {
    /// Emit `frame` on `ports` of `switch`, bypassing its flow table.
    PacketOut {
        switch: SwitchId,
        ports: Vec<PortId>,
        frame: Frame,
    },
    FlowMod {
        switch: SwitchId,
        rule: FlowRule,
        op: FlowModOp,
    },
    /// Deliver `msg` to the host owning `to`, via a packet-out on the
    /// switch port where that host is attached.
    SendSd { to: Endpoint, msg: SdMessage },
}

impl ControlAction {
    /// `time action switch detail`
    pub fn trace_line(&self, now: SimTime, switch: Option<SwitchId>) -> String {
        let sw = switch.map_or_else(|| "-".to_owned(), |s| s.to_string());
        let mut line = String::new();
        match self {
            ControlAction::PacketOut { switch, ports, frame } => {
                let ports: Vec<String> = ports.iter().map(|p| p.0.to_string()).collect();
                let _ = write!(line, "{now} packet_out {switch} ports={} {frame}", ports.join(","));
            }
            ControlAction::FlowMod { switch, rule, op } => {
                let _ = write!(line, "{now} flow_mod {switch} {} {rule}", op.name());
            }
            ControlAction::SendSd { to, msg } => {
                let _ = write!(line, "{now} send_sd {sw} to={to} {msg}");
            }
        }
        line
    }
}

/// Per-switch rule id counter. Id 0 is reserved for static rules.
#[derive(Debug, Clone, Default)]
pub struct RuleIdAllocator {
    next: BTreeMap<SwitchId, u64>,
}

impl RuleIdAllocator {
    pub fn next(&mut self, switch: SwitchId) -> RuleId {
        let n = self.next.entry(switch).or_insert(0);
        *n += 1;
        RuleId(*n)
    }
}

/// Packet-outs delivering `frame` to every host except the one at `exclude`.
pub fn flood_to_hosts(topology: &Topology, frame: &Frame, exclude: Attachment) -> Vec<ControlAction> {
    topology
        .switches()
        .iter()
        .filter_map(|sw| {
            let ports: Vec<PortId> = topology
                .host_ports(sw.id)
                .into_iter()
                .filter(|p| Attachment::new(sw.id, *p) != exclude)
                .collect();
            (!ports.is_empty()).then(|| ControlAction::PacketOut {
                switch: sw.id,
                ports,
                frame: frame.clone(),
            })
        })
        .collect()
}
