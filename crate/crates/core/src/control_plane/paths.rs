use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;

use crate::data_plane::{Action, FlowMatch, FlowModOp, FlowRule, FlowTable, Frame, RuleId};
use crate::error::SimError;
use crate::sd_codec::{Endpoint, ServiceIdentity};
use crate::topology::{Attachment, PortId, PortPeer, SwitchId, Topology};

use super::RuleIdAllocator;

/// Priority of controller-installed data-path rules.
pub const PATH_PRIORITY: u16 = 100;

/// Destination of a publish-subscribe data flow: the event group of one
/// service instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowSpec {
    pub dst_addr: Ipv4Addr,
    pub dst_port: u16,
}

impl FlowSpec {
    /// Event group of an instance: 239.<service hi>.<service lo>.<instance lo>
    /// on the provider's port.
    pub fn for_instance(identity: &ServiceIdentity, provider: &Endpoint) -> Self {
        let [hi, lo] = identity.service_id.to_be_bytes();
        Self {
            dst_addr: Ipv4Addr::new(239, hi, lo, identity.instance_id as u8),
            dst_port: provider.port,
        }
    }

    pub fn matcher(&self) -> FlowMatch {
        FlowMatch {
            dst_addr: Some(self.dst_addr),
            dst_port: Some(self.dst_port),
            ..FlowMatch::default()
        }
    }
}

impl fmt::Display for FlowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dst_addr, self.dst_port)
    }
}

/// One switch of an installed path and the port it outputs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hop {
    pub switch: SwitchId,
    pub out_port: PortId,
}

/// A rule change the controller must push to a switch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathRule {
    pub switch: SwitchId,
    pub rule: FlowRule,
    pub op: FlowModOp,
}

#[derive(Debug, Clone)]
struct SharedRule {
    id: RuleId,
    /// Output port -> number of subscriptions using it.
    ports: BTreeMap<PortId, u32>,
}

/// Controller-side view of data-path rules. A flow has at most one rule per
/// switch; subscribers sharing a segment share that rule's output ports.
#[derive(Debug, Clone, Default)]
pub struct PathRules {
    rules: BTreeMap<(SwitchId, FlowSpec), SharedRule>,
}

impl PathRules {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of (switch, flow) rules currently installed.
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn rule_for(&self, sw: SwitchId, flow: FlowSpec) -> FlowRule {
        let shared = &self.rules[&(sw, flow)];
        FlowRule::new(
            shared.id,
            PATH_PRIORITY,
            flow.matcher(),
            shared.ports.keys().map(|p| Action::Output(*p)).collect(),
        )
    }

    /// Hops from `provider_at` to `subscriber_at` along the shortest switch path.
    pub fn hops(topology: &Topology, provider_at: Attachment, subscriber_at: Attachment) -> Result<Vec<Hop>, SimError> {
        let path = topology.shortest_path(provider_at.switch, subscriber_at.switch)?;
        let mut hops = Vec::with_capacity(path.len());
        for w in path.windows(2) {
            let out_port = topology
                .port_towards(w[0], w[1])
                .ok_or(SimError::NoPath { from: w[0], to: w[1] })?;
            hops.push(Hop { switch: w[0], out_port });
        }
        hops.push(Hop {
            switch: subscriber_at.switch,
            out_port: subscriber_at.port,
        });
        Ok(hops)
    }

    /// Rules that carry `flow` from the provider to the subscriber.
    ///
    /// A switch that already holds a rule for `flow` gets a modify carrying
    /// the union of output ports; other switches get a new rule.
    pub fn install_path(
        &mut self,
        topology: &Topology,
        ids: &mut RuleIdAllocator,
        provider_at: Attachment,
        subscriber_at: Attachment,
        flow: FlowSpec,
    ) -> Result<(Vec<Hop>, Vec<PathRule>), SimError> {
        let hops = Self::hops(topology, provider_at, subscriber_at)?;
        let mut out = Vec::with_capacity(hops.len());
        for hop in &hops {
            let key = (hop.switch, flow);
            let op = match self.rules.get_mut(&key) {
                Some(shared) => {
                    *shared.ports.entry(hop.out_port).or_insert(0) += 1;
                    FlowModOp::Modify
                }
                None => {
                    self.rules.insert(
                        key,
                        SharedRule {
                            id: ids.next(hop.switch),
                            ports: BTreeMap::from([(hop.out_port, 1)]),
                        },
                    );
                    FlowModOp::Add
                }
            };
            out.push(PathRule {
                switch: hop.switch,
                rule: self.rule_for(hop.switch, flow),
                op,
            });
        }
        Ok((hops, out))
    }

    /// Releases one subscription's use of `hops`. Shared rules lose only the
    /// ports no other subscription needs; unused rules are removed.
    pub fn remove_path(&mut self, hops: &[Hop], flow: FlowSpec) -> Vec<PathRule> {
        let mut out = Vec::new();
        for hop in hops {
            let key = (hop.switch, flow);
            let Some(shared) = self.rules.get_mut(&key) else {
                continue;
            };
            let mut changed = false;
            if let Some(n) = shared.ports.get_mut(&hop.out_port) {
                *n -= 1;
                if *n == 0 {
                    shared.ports.remove(&hop.out_port);
                    changed = true;
                }
            }
            if shared.ports.is_empty() {
                let id = shared.id;
                self.rules.remove(&key);
                out.push(PathRule {
                    switch: hop.switch,
                    rule: FlowRule::new(id, PATH_PRIORITY, flow.matcher(), Vec::new()),
                    op: FlowModOp::Remove,
                });
            } else if changed {
                out.push(PathRule {
                    switch: hop.switch,
                    rule: self.rule_for(hop.switch, flow),
                    op: FlowModOp::Modify,
                });
            }
        }
        out
    }
}

/// Do the switches' tables carry `flow` from `provider_at` to `subscriber_at`?
///
/// Follows matching rules hop by hop from the provider's switch, exploring
/// every output, and succeeds if some branch leaves on the subscriber's port.
pub fn path_is_connected<'a>(
    topology: &Topology,
    table: impl Fn(SwitchId) -> Option<&'a FlowTable>,
    flow: FlowSpec,
    provider_at: Attachment,
    subscriber_at: Attachment,
) -> bool {
    let probe = Frame::new(
        std::net::SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, 1),
        std::net::SocketAddrV4::new(flow.dst_addr, flow.dst_port),
        bytes::Bytes::new(),
    );
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([provider_at]);
    while let Some(at) = queue.pop_front() {
        if !seen.insert(at) {
            continue;
        }
        let Some(rule) = table(at.switch).and_then(|t| t.lookup(&probe, at.port)) else {
            continue;
        };
        for port in rule.output_ports() {
            let out = Attachment::new(at.switch, port);
            if out == subscriber_at {
                return true;
            }
            if let PortPeer::Switch(next) = topology.peer(out) {
                queue.push_back(next);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LinkSpec;

    /// Chain of `n` switches with one host on each.
    fn chain(n: usize) -> (Topology, Vec<Attachment>) {
        let mut t = Topology::new(LinkSpec::GIGABIT);
        let s: Vec<_> = (0..n).map(|_| t.add_switch()).collect();
        for w in s.windows(2) {
            t.connect(w[0], w[1]);
        }
        let hosts = s
            .iter()
            .enumerate()
            .map(|(i, sw)| {
                let h = t.add_host(Ipv4Addr::new(10, 0, 9, i as u8 + 1), *sw);
                t.host(h).attachment
            })
            .collect();
        (t, hosts)
    }

    fn flow() -> FlowSpec {
        FlowSpec::for_instance(
            &ServiceIdentity::new(0x1001, 1, 1, 0),
            &Endpoint::udp(Ipv4Addr::new(10, 0, 1, 1), 30509),
        )
    }

    /// All simple switch paths between two switches, by exhaustive DFS.
    fn brute_force_paths(t: &Topology, from: SwitchId, to: SwitchId) -> Vec<Vec<SwitchId>> {
        fn dfs(t: &Topology, cur: SwitchId, to: SwitchId, path: &mut Vec<SwitchId>, out: &mut Vec<Vec<SwitchId>>) {
            if cur == to {
                out.push(path.clone());
                return;
            }
            for peer in &t.switches()[cur.0].ports {
                if let PortPeer::Switch(a) = peer {
                    if !path.contains(&a.switch) {
                        path.push(a.switch);
                        dfs(t, a.switch, to, path, out);
                        path.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        dfs(t, from, to, &mut vec![from], &mut out);
        out
    }

    #[test]
    fn five_switch_chain_needs_five_rules() {
        let (t, hosts) = chain(5);
        let shortest = brute_force_paths(&t, hosts[0].switch, hosts[4].switch)
            .into_iter()
            .min_by_key(|p| p.len())
            .unwrap();
        let mut paths = PathRules::new();
        let mut ids = RuleIdAllocator::default();
        let (hops, rules) = paths.install_path(&t, &mut ids, hosts[0], hosts[4], flow()).unwrap();
        assert_eq!(rules.len(), shortest.len());
        assert_eq!(rules.len(), 5);
        assert!(rules.iter().all(|r| r.op == FlowModOp::Add));
        assert_eq!(hops.iter().map(|h| h.switch).collect::<Vec<_>>(), shortest);
        assert_eq!(hops.last().unwrap().out_port, hosts[4].port);
    }

    #[test]
    fn same_switch_needs_one_rule() {
        let mut t = Topology::new(LinkSpec::GIGABIT);
        let s = t.add_switch();
        let a = t.add_host(Ipv4Addr::new(10, 0, 1, 1), s);
        let b = t.add_host(Ipv4Addr::new(10, 0, 2, 1), s);
        let mut paths = PathRules::new();
        let (_, rules) = paths
            .install_path(&t, &mut RuleIdAllocator::default(), t.host(a).attachment, t.host(b).attachment, flow())
            .unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].rule.output_ports().collect::<Vec<_>>(), vec![t.host(b).attachment.port]);
    }

    #[test]
    fn second_subscriber_updates_shared_segment() {
        // Subscriber A behind s4, subscriber B behind s5: B's path shares s1..s4.
        let (t, hosts) = chain(5);
        let first = brute_force_paths(&t, hosts[0].switch, hosts[3].switch).remove(0);
        let second = brute_force_paths(&t, hosts[0].switch, hosts[4].switch).remove(0);
        let shared: Vec<_> = second.iter().filter(|s| first.contains(s)).collect();
        let fresh: Vec<_> = second.iter().filter(|s| !first.contains(s)).collect();

        let mut paths = PathRules::new();
        let mut ids = RuleIdAllocator::default();
        paths.install_path(&t, &mut ids, hosts[0], hosts[3], flow()).unwrap();
        let (_, rules) = paths.install_path(&t, &mut ids, hosts[0], hosts[4], flow()).unwrap();
        let modified = rules.iter().filter(|r| r.op == FlowModOp::Modify).count();
        let added = rules.iter().filter(|r| r.op == FlowModOp::Add).count();
        assert_eq!((modified, added), (shared.len(), fresh.len()));
        assert_eq!((modified, added), (4, 1));
        // s4 now feeds both its host and s5.
        let s4 = rules.iter().find(|r| r.switch == SwitchId(3)).unwrap();
        assert_eq!(s4.rule.output_ports().count(), 2);
    }

    #[test]
    fn removal_narrows_then_deletes() {
        let (t, hosts) = chain(3);
        let mut paths = PathRules::new();
        let mut ids = RuleIdAllocator::default();
        let (h1, _) = paths.install_path(&t, &mut ids, hosts[0], hosts[1], flow()).unwrap();
        let (h2, _) = paths.install_path(&t, &mut ids, hosts[0], hosts[2], flow()).unwrap();
        let narrowed = paths.remove_path(&h2, flow());
        // s1 still needed by the first subscriber, s2 loses the port toward s3, s3 goes away.
        assert_eq!(narrowed.len(), 2);
        assert_eq!(narrowed[0].op, FlowModOp::Modify);
        assert_eq!(narrowed[0].switch, SwitchId(1));
        assert_eq!(narrowed[1].op, FlowModOp::Remove);
        let rest = paths.remove_path(&h1, flow());
        assert!(rest.iter().all(|r| r.op == FlowModOp::Remove));
        assert!(paths.is_empty());
    }

    #[test]
    fn connectivity_check_follows_tables() {
        let (t, hosts) = chain(3);
        let mut paths = PathRules::new();
        let mut ids = RuleIdAllocator::default();
        let (_, rules) = paths.install_path(&t, &mut ids, hosts[0], hosts[2], flow()).unwrap();
        let mut tables = vec![FlowTable::new(); 3];
        for r in &rules {
            tables[r.switch.0].apply(r.op, r.rule.clone()).unwrap();
        }
        assert!(path_is_connected(&t, |s| tables.get(s.0), flow(), hosts[0], hosts[2]));
        tables[1] = FlowTable::new();
        assert!(!path_is_connected(&t, |s| tables.get(s.0), flow(), hosts[0], hosts[2]));
    }
}
