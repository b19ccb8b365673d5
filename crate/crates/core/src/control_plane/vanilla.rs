//! SD-unaware reactive L2 controller.
//!
//! Behaves like the classic OpenFlow learning-switch application: every
//! table miss is sent to the controller, which learns the source MAC on the
//! reporting switch and installs a rule on that switch only. Rules match the
//! (source MAC, destination MAC) pair: a known unicast destination gets an
//! output rule, multicast and unknown destinations get a flood rule.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::data_plane::{Action, FlowMatch, FlowModOp, FlowRule, Frame, MacAddr};
use crate::topology::{Attachment, PortId, SwitchId, Topology};

use super::{ControlAction, RuleIdAllocator};

/// Priority of reactive L2 rules.
pub const L2_PRIORITY: u16 = 10;

#[derive(Debug, Clone)]
pub struct VanillaController {
    topology: Arc<Topology>,
    macs: BTreeMap<(SwitchId, MacAddr), PortId>,
    installed: BTreeSet<(SwitchId, FlowMatch)>,
    ids: RuleIdAllocator,
    floods: u64,
}

impl VanillaController {
    pub fn new(topology: Arc<Topology>) -> Self {
        Self {
            topology,
            macs: BTreeMap::new(),
            installed: BTreeSet::new(),
            ids: RuleIdAllocator::default(),
            floods: 0,
        }
    }

    /// Port on which `mac` was last seen by `switch`.
    pub fn learned(&self, switch: SwitchId, mac: MacAddr) -> Option<PortId> {
        self.macs.get(&(switch, mac)).copied()
    }

    /// Number of flood decisions taken.
    pub fn floods(&self) -> u64 {
        self.floods
    }

    pub fn installed_rules(&self) -> usize {
        self.installed.len()
    }

    pub fn handle_packet_in_vanilla(&mut self, frame: &Frame, ingress: Attachment) -> Vec<ControlAction> {
        let sw = ingress.switch;
        if !frame.src_mac.is_multicast() {
            self.macs.insert((sw, frame.src_mac), ingress.port);
        }
        let known = if frame.dst_mac.is_multicast() {
            None
        } else {
            self.learned(sw, frame.dst_mac)
        };
        let pair = FlowMatch {
            src_mac: Some(frame.src_mac),
            dst_mac: Some(frame.dst_mac),
            ..FlowMatch::default()
        };
        let (matcher, ports) = match known {
            Some(port) if port == ingress.port => return Vec::new(),
            Some(port) => (pair, vec![port]),
            None => {
                self.floods += 1;
                (pair, self.topology.ports(sw).filter(|p| *p != ingress.port).collect())
            }
        };
        let mut actions = Vec::with_capacity(2);
        if self.installed.insert((sw, matcher)) {
            let rule = FlowRule::new(
                self.ids.next(sw),
                L2_PRIORITY,
                matcher,
                ports.iter().map(|p| Action::Output(*p)).collect(),
            );
            actions.push(ControlAction::FlowMod {
                switch: sw,
                rule,
                op: FlowModOp::Add,
            });
        }
        if !ports.is_empty() {
            actions.push(ControlAction::PacketOut {
                switch: sw,
                ports,
                frame: frame.clone(),
            });
        }
        actions
    }
}
