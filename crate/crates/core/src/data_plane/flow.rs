use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

use super::frame::{Frame, MacAddr};
use crate::topology::PortId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleId(pub u64);

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Match fields. `None` is a wildcard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowMatch {
    pub src_mac: Option<MacAddr>,
    pub dst_mac: Option<MacAddr>,
    pub dst_addr: Option<Ipv4Addr>,
    pub dst_port: Option<u16>,
    pub in_port: Option<PortId>,
}

impl FlowMatch {
    pub fn matches(&self, frame: &Frame, in_port: PortId) -> bool {
        self.src_mac.is_none_or(|m| m == frame.src_mac)
            && self.dst_mac.is_none_or(|m| m == frame.dst_mac)
            && self.dst_addr.is_none_or(|a| a == *frame.dst.ip())
            && self.dst_port.is_none_or(|p| p == frame.dst.port())
            && self.in_port.is_none_or(|p| p == in_port)
    }
}

impl fmt::Display for FlowMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(m) = self.src_mac {
            parts.push(format!("dl_src={m}"));
        }
        if let Some(m) = self.dst_mac {
            parts.push(format!("dl_dst={m}"));
        }
        if let Some(a) = self.dst_addr {
            parts.push(format!("nw_dst={a}"));
        }
        if let Some(p) = self.dst_port {
            parts.push(format!("tp_dst={p}"));
        }
        if let Some(p) = self.in_port {
            parts.push(format!("in_port={p}"));
        }
        if parts.is_empty() {
            f.write_str("*")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Output(PortId),
    PacketIn,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRule {
    pub id: RuleId,
    pub priority: u16,
    pub matcher: FlowMatch,
    pub actions: Vec<Action>,
}

impl FlowRule {
    pub fn new(id: RuleId, priority: u16, matcher: FlowMatch, actions: Vec<Action>) -> Self {
        Self {
            id,
            priority,
            matcher,
            actions,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.actions.iter().filter(|a| **a == Action::PacketIn).count() <= 1
    }

    pub fn output_ports(&self) -> impl Iterator<Item = PortId> + '_ {
        self.actions.iter().filter_map(|a| match a {
            Action::Output(p) => Some(*p),
            _ => None,
        })
    }
}

impl fmt::Display for FlowRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} prio={} match={} actions=", self.id, self.priority, self.matcher)?;
        let acts: Vec<String> = self
            .actions
            .iter()
            .map(|a| match a {
                Action::Output(p) => format!("output:{}", p.0),
                Action::PacketIn => "controller".to_owned(),
                Action::Drop => "drop".to_owned(),
            })
            .collect();
        f.write_str(&acts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowModOp {
    Add,
    Modify,
    Remove,
}

impl FlowModOp {
    pub fn name(self) -> &'static str {
        match self {
            FlowModOp::Add => "add",
            FlowModOp::Modify => "modify",
            FlowModOp::Remove => "remove",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowTableError {
    #[error("remove of absent rule {0}")]
    RemoveNonexistent(RuleId),
    #[error("rule {0} has more than one packet-in action")]
    Malformed(RuleId),
}

/// Rules kept sorted by (priority desc, id asc).
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    rules: Vec<FlowRule>,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[FlowRule] {
        &self.rules
    }

    pub fn get(&self, id: RuleId) -> Option<&FlowRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Highest-priority matching rule; ties go to the lowest id.
    pub fn lookup(&self, frame: &Frame, in_port: PortId) -> Option<&FlowRule> {
        self.rules.iter().find(|r| r.matcher.matches(frame, in_port))
    }

    fn insert_sorted(&mut self, rule: FlowRule) {
        let key = (std::cmp::Reverse(rule.priority), rule.id);
        let at = self
            .rules
            .partition_point(|r| (std::cmp::Reverse(r.priority), r.id) < key);
        self.rules.insert(at, rule);
    }

    /// Add and modify both replace any rule with the same id.
    pub fn apply(&mut self, op: FlowModOp, rule: FlowRule) -> Result<(), FlowTableError> {
        if !rule.is_well_formed() {
            return Err(FlowTableError::Malformed(rule.id));
        }
        let existing = self.rules.iter().position(|r| r.id == rule.id);
        match op {
            FlowModOp::Add | FlowModOp::Modify => {
                if let Some(i) = existing {
                    self.rules.remove(i);
                }
                self.insert_sorted(rule);
                Ok(())
            }
            FlowModOp::Remove => match existing {
                Some(i) => {
                    self.rules.remove(i);
                    Ok(())
                }
                None => Err(FlowTableError::RemoveNonexistent(rule.id)),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bytes::Bytes;
    use proptest::prelude::*;
    use std::net::SocketAddrV4;

    fn frame_to(port: u16) -> Frame {
        Frame::new(
            SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 1000),
            SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 2), port),
            Bytes::from_static(&[0; 8]),
        )
    }

    fn rule(id: u64, priority: u16, dst_port: Option<u16>) -> FlowRule {
        FlowRule::new(
            RuleId(id),
            priority,
            FlowMatch {
                dst_port,
                ..FlowMatch::default()
            },
            vec![Action::Output(PortId(id as u16))],
        )
    }

    #[test]
    fn highest_priority_wins() {
        let mut t = FlowTable::new();
        t.apply(FlowModOp::Add, rule(1, 10, None)).unwrap();
        t.apply(FlowModOp::Add, rule(2, 20, Some(7))).unwrap();
        assert_eq!(t.lookup(&frame_to(7), PortId(0)).unwrap().id, RuleId(2));
        assert_eq!(t.lookup(&frame_to(8), PortId(0)).unwrap().id, RuleId(1));
    }

    #[test]
    fn modify_replaces_actions() {
        let mut t = FlowTable::new();
        t.apply(FlowModOp::Add, rule(1, 10, None)).unwrap();
        let mut wider = rule(1, 10, None);
        wider.actions.push(Action::Output(PortId(4)));
        t.apply(FlowModOp::Modify, wider).unwrap();
        let hit = t.lookup(&frame_to(1), PortId(0)).unwrap();
        assert_eq!(hit.output_ports().collect::<Vec<_>>(), vec![PortId(1), PortId(4)]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn removing_an_absent_rule_is_reported() {
        let mut t = FlowTable::new();
        t.apply(FlowModOp::Add, rule(1, 10, None)).unwrap();
        assert_eq!(
            t.apply(FlowModOp::Remove, rule(9, 10, None)),
            Err(FlowTableError::RemoveNonexistent(RuleId(9)))
        );
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn double_packet_in_is_rejected() {
        let mut t = FlowTable::new();
        let bad = FlowRule::new(RuleId(1), 1, FlowMatch::default(), vec![Action::PacketIn, Action::PacketIn]);
        assert_eq!(t.apply(FlowModOp::Add, bad), Err(FlowTableError::Malformed(RuleId(1))));
    }

    proptest! {
        #[test]
        fn lookup_agrees_with_brute_force(
            specs in prop::collection::vec((0u16..4, prop::option::of(0u16..3), prop::option::of(0u16..3)), 0..12),
            dst_port in 0u16..3,
            in_port in 0u16..3,
        ) {
            let mut t = FlowTable::new();
            let mut all = Vec::new();
            for (i, (prio, dp, ip)) in specs.into_iter().enumerate() {
                let r = FlowRule::new(
                    RuleId(i as u64 * 7 % 13),
                    prio,
                    FlowMatch { dst_port: dp, in_port: ip.map(PortId), ..FlowMatch::default() },
                    vec![Action::Drop],
                );
                all.retain(|x: &FlowRule| x.id != r.id);
                all.push(r.clone());
                t.apply(FlowModOp::Add, r).unwrap();
            }
            let f = frame_to(dst_port);
            let expected = all
                .iter()
                .filter(|r| r.matcher.matches(&f, PortId(in_port)))
                .min_by_key(|r| (std::cmp::Reverse(r.priority), r.id))
                .map(|r| r.id);
            prop_assert_eq!(t.lookup(&f, PortId(in_port)).map(|r| r.id), expected);
        }
    }
}
