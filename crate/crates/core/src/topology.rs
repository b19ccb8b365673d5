//! Switches, hosts and the links between them.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;

use crate::data_plane::MacAddr;
use crate::error::SimError;
use crate::sim_engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SwitchId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostId(pub usize);

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0 + 1)
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

/// A switch port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attachment {
    pub switch: SwitchId,
    pub port: PortId,
}

impl Attachment {
    pub const fn new(switch: SwitchId, port: PortId) -> Self {
        Self { switch, port }
    }
}

impl fmt::Display for Attachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.switch, self.port)
    }
}

/// What sits on the far side of a switch port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortPeer {
    Switch(Attachment),
    Host(HostId),
}

/// Rate and propagation delay shared by every data link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkSpec {
    pub rate_bps: u64,
    pub propagation: SimTime,
}

impl LinkSpec {
    pub const GIGABIT: LinkSpec = LinkSpec {
        rate_bps: 1_000_000_000,
        propagation: SimTime::ZERO,
    };
}

#[derive(Debug, Clone)]
pub struct SwitchNode {
    pub id: SwitchId,
    pub ports: Vec<PortPeer>,
}

#[derive(Debug, Clone)]
pub struct HostNode {
    pub id: HostId,
    pub address: Ipv4Addr,
    pub mac: MacAddr,
    pub attachment: Attachment,
}

/// Network graph plus the host attachment map.
#[derive(Debug, Clone)]
pub struct Topology {
    pub link: LinkSpec,
    switches: Vec<SwitchNode>,
    hosts: Vec<HostNode>,
    by_address: BTreeMap<Ipv4Addr, HostId>,
}

impl Topology {
    pub fn new(link: LinkSpec) -> Self {
        Self {
            link,
            switches: Vec::new(),
            hosts: Vec::new(),
            by_address: BTreeMap::new(),
        }
    }

    pub fn add_switch(&mut self) -> SwitchId {
        let id = SwitchId(self.switches.len());
        self.switches.push(SwitchNode { id, ports: Vec::new() });
        id
    }

    fn next_port(&self, sw: SwitchId) -> PortId {
        PortId(self.switches[sw.0].ports.len() as u16)
    }

    /// Links two switches, returning the port used on each side.
    pub fn connect(&mut self, a: SwitchId, b: SwitchId) -> (PortId, PortId) {
        let pa = self.next_port(a);
        let pb = if a == b { PortId(pa.0 + 1) } else { self.next_port(b) };
        self.switches[a.0].ports.push(PortPeer::Switch(Attachment::new(b, pb)));
        self.switches[b.0].ports.push(PortPeer::Switch(Attachment::new(a, pa)));
        (pa, pb)
    }

    /// Attaches a new host to the next free port of `sw`.
    pub fn add_host(&mut self, address: Ipv4Addr, sw: SwitchId) -> HostId {
        let id = HostId(self.hosts.len());
        let port = self.next_port(sw);
        self.switches[sw.0].ports.push(PortPeer::Host(id));
        self.hosts.push(HostNode {
            id,
            address,
            mac: MacAddr::for_host(address),
            attachment: Attachment::new(sw, port),
        });
        self.by_address.insert(address, id);
        id
    }

    pub fn switches(&self) -> &[SwitchNode] {
        &self.switches
    }

    pub fn hosts(&self) -> &[HostNode] {
        &self.hosts
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn host(&self, id: HostId) -> &HostNode {
        &self.hosts[id.0]
    }

    pub fn host_by_address(&self, address: Ipv4Addr) -> Option<HostId> {
        self.by_address.get(&address).copied()
    }

    /// Switch port where the host owning `address` is attached.
    pub fn attachment_of(&self, address: Ipv4Addr) -> Result<Attachment, SimError> {
        self.host_by_address(address)
            .map(|h| self.hosts[h.0].attachment)
            .ok_or(SimError::UnattachedEndpoint(address))
    }

    pub fn peer(&self, at: Attachment) -> PortPeer {
        self.switches[at.switch.0].ports[at.port.0 as usize]
    }

    pub fn port_count(&self, sw: SwitchId) -> usize {
        self.switches[sw.0].ports.len()
    }

    /// All data ports of `sw` in ascending order.
    pub fn ports(&self, sw: SwitchId) -> impl Iterator<Item = PortId> + '_ {
        (0..self.switches[sw.0].ports.len()).map(|p| PortId(p as u16))
    }

    /// Ports of `sw` that lead to hosts.
    pub fn host_ports(&self, sw: SwitchId) -> Vec<PortId> {
        self.switches[sw.0]
            .ports
            .iter()
            .enumerate()
            .filter(|(_, peer)| matches!(peer, PortPeer::Host(_)))
            .map(|(p, _)| PortId(p as u16))
            .collect()
    }

    /// Port of `from` whose link leads directly to `to`.
    pub fn port_towards(&self, from: SwitchId, to: SwitchId) -> Option<PortId> {
        self.switches[from.0]
            .ports
            .iter()
            .position(|peer| matches!(peer, PortPeer::Switch(a) if a.switch == to))
            .map(|p| PortId(p as u16))
    }

    fn neighbours(&self, sw: SwitchId) -> Vec<SwitchId> {
        let mut n: Vec<SwitchId> = self.switches[sw.0]
            .ports
            .iter()
            .filter_map(|peer| match peer {
                PortPeer::Switch(a) => Some(a.switch),
                PortPeer::Host(_) => None,
            })
            .collect();
        n.sort();
        n.dedup();
        n
    }

    /// Shortest switch sequence from `from` to `to` by hop count.
    ///
    /// Breadth-first search expanding neighbours in ascending id order, so
    /// among equal-length paths the one through lower switch ids wins.
    pub fn shortest_path(&self, from: SwitchId, to: SwitchId) -> Result<Vec<SwitchId>, SimError> {
        let n = self.switches.len();
        if from.0 >= n || to.0 >= n {
            return Err(SimError::NoPath { from, to });
        }
        let mut parent: Vec<Option<SwitchId>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([from]);
        seen[from.0] = true;
        while let Some(sw) = queue.pop_front() {
            if sw == to {
                let mut path = vec![to];
                let mut cur = to;
                while let Some(p) = parent[cur.0] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Ok(path);
            }
            for next in self.neighbours(sw) {
                if !seen[next.0] {
                    seen[next.0] = true;
                    parent[next.0] = Some(sw);
                    queue.push_back(next);
                }
            }
        }
        Err(SimError::NoPath { from, to })
    }

    pub fn is_connected(&self) -> bool {
        if self.switches.is_empty() {
            return true;
        }
        let root = SwitchId(0);
        (0..self.switches.len()).all(|i| self.shortest_path(root, SwitchId(i)).is_ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_paths_follow_the_chain() {
        let mut t = Topology::new(LinkSpec::GIGABIT);
        let s: Vec<_> = (0..5).map(|_| t.add_switch()).collect();
        for w in s.windows(2) {
            t.connect(w[0], w[1]);
        }
        assert_eq!(t.shortest_path(s[0], s[4]).unwrap(), s);
        assert_eq!(t.shortest_path(s[2], s[2]).unwrap(), vec![s[2]]);
        assert!(t.is_connected());
    }

    #[test]
    fn ties_prefer_lower_switch_ids() {
        // Diamond: 0-1-3 and 0-2-3.
        let mut t = Topology::new(LinkSpec::GIGABIT);
        let s: Vec<_> = (0..4).map(|_| t.add_switch()).collect();
        t.connect(s[0], s[2]);
        t.connect(s[0], s[1]);
        t.connect(s[2], s[3]);
        t.connect(s[1], s[3]);
        assert_eq!(t.shortest_path(s[0], s[3]).unwrap(), vec![s[0], s[1], s[3]]);
    }

    #[test]
    fn disconnected_switches_have_no_path() {
        let mut t = Topology::new(LinkSpec::GIGABIT);
        let a = t.add_switch();
        let b = t.add_switch();
        assert_eq!(t.shortest_path(a, b), Err(SimError::NoPath { from: a, to: b }));
        assert!(!t.is_connected());
    }

    #[test]
    fn hosts_get_sequential_ports() {
        let mut t = Topology::new(LinkSpec::GIGABIT);
        let a = t.add_switch();
        let b = t.add_switch();
        t.connect(a, b);
        let h = t.add_host(Ipv4Addr::new(10, 0, 1, 1), a);
        assert_eq!(t.host(h).attachment, Attachment::new(a, PortId(1)));
        assert_eq!(t.host_ports(a), vec![PortId(1)]);
        assert_eq!(t.port_towards(a, b), Some(PortId(0)));
        assert_eq!(
            t.attachment_of(Ipv4Addr::new(10, 9, 9, 9)),
            Err(SimError::UnattachedEndpoint(Ipv4Addr::new(10, 9, 9, 9)))
        );
    }
}
