//! The simulated network: hosts, switches, control channels and controller
//! wired to one event queue.

use std::sync::Arc;

use crate::control_plane::{ControlAction, SomeIpController, VanillaController};
use crate::data_plane::{EgressPort, FlowModOp, FlowRule, Frame, SwitchModel, SwitchOutput};
use crate::error::SimError;
use crate::host_model::{ConsumerApp, Outgoing, ProducerApp, QueryState};
use crate::sd_codec::{SdKind, SD_MULTICAST_ADDR};
use crate::sim_engine::{self, Counters, Event, EventQueue, Model, RunMetrics, SimTime};
use crate::topology::{Attachment, HostId, PortId, PortPeer, SwitchId, Topology};

use super::Mode;

/// Timing parameters of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub link_rate_bps: u64,
    pub propagation: SimTime,
    pub forwarding_delay: SimTime,
    pub controller_processing: SimTime,
    pub switch_processing: SimTime,
    /// Size of every packet-in, packet-out and flow-mod message.
    pub control_message_bytes: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            link_rate_bps: 1_000_000_000,
            propagation: SimTime::ZERO,
            forwarding_delay: SimTime::from_micros(8),
            controller_processing: SimTime::from_micros(100),
            switch_processing: SimTime::from_micros(100),
            control_message_bytes: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub enum HostApp {
    Producer(ProducerApp),
    Consumer(ConsumerApp),
}

#[derive(Debug, Clone)]
pub enum ControllerApp {
    Aware(SomeIpController),
    Vanilla(VanillaController),
}

/// Controller-to-switch OpenFlow message.
#[derive(Debug, Clone)]
enum OpenFlow {
    FlowMod { rule: FlowRule, op: FlowModOp },
    PacketOut { ports: Vec<PortId>, frame: Frame },
}

#[derive(Debug, Clone)]
pub enum NetEvent {
    Activate(HostId),
    Withdraw(HostId),
    Inject(HostId, Outgoing),
    SwitchEgress { at: Attachment, frame: Frame },
    ArriveSwitch { at: Attachment, frame: Frame },
    ArriveHost { host: HostId, frame: Frame },
    PacketIn { from: Attachment, frame: Frame },
    ArriveController { from: Attachment, frame: Frame },
    ControllerDone { from: Attachment, frame: Frame },
    ArriveOpenFlow { switch: SwitchId, msg: Box<OpenFlowMsg> },
    PacketOutDone { switch: SwitchId, ports: Vec<PortId>, frame: Frame },
    FlowModCommit { switch: SwitchId },
}

/// Opaque wrapper so the OpenFlow message type stays private.
#[derive(Debug, Clone)]
pub struct OpenFlowMsg(OpenFlow);

/// Network state driven by the event loop.
pub struct Network {
    pub mode: Mode,
    pub timing: Timing,
    pub topology: Arc<Topology>,
    pub switches: Vec<SwitchModel>,
    pub hosts: Vec<HostApp>,
    pub controller: Option<ControllerApp>,
    host_tx: Vec<EgressPort>,
    switch_tx: Vec<Vec<EgressPort>>,
    control_up: Vec<EgressPort>,
    control_down: Vec<EgressPort>,
    counters: Counters,
    first_event_time: Option<SimTime>,
    last_ack_time: SimTime,
    positive_acks: u64,
    nacks: u64,
    trace: Option<Vec<String>>,
}

impl Network {
    pub fn new(mode: Mode, timing: Timing, topology: Topology, hosts: Vec<HostApp>) -> Result<Self, SimError> {
        assert_eq!(hosts.len(), topology.hosts().len(), "one app per topology host");
        let topology = Arc::new(topology);
        let port = || EgressPort::new(timing.link_rate_bps, timing.propagation);
        let switches: Vec<SwitchModel> = topology
            .switches()
            .iter()
            .map(|sw| {
                let n = sw.ports.len();
                if mode == Mode::Ethernet {
                    SwitchModel::learning(sw.id, n, timing.forwarding_delay)
                } else {
                    SwitchModel::sdn(sw.id, n, timing.forwarding_delay)
                }
            })
            .collect();
        let controller = match mode {
            Mode::Ethernet => None,
            Mode::SdnVanilla => Some(ControllerApp::Vanilla(VanillaController::new(topology.clone()))),
            Mode::SdnOptimized => Some(ControllerApp::Aware(SomeIpController::new(topology.clone()))),
        };
        let mut net = Self {
            mode,
            timing,
            host_tx: topology.hosts().iter().map(|_| port()).collect(),
            switch_tx: topology.switches().iter().map(|s| s.ports.iter().map(|_| port()).collect()).collect(),
            control_up: topology.switches().iter().map(|_| port()).collect(),
            control_down: topology.switches().iter().map(|_| port()).collect(),
            topology,
            switches,
            hosts,
            controller,
            counters: Counters::default(),
            first_event_time: None,
            last_ack_time: SimTime::ZERO,
            positive_acks: 0,
            nacks: 0,
            trace: None,
        };
        if mode == Mode::SdnOptimized {
            for sw in &mut net.switches {
                sw.apply_flow_mod(SomeIpController::punt_rule(), FlowModOp::Add, SimTime::ZERO, SimTime::ZERO);
                sw.commit_due(SimTime::ZERO);
            }
        }
        Ok(net)
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.take().unwrap_or_default()
    }

    pub fn trace(&self) -> Option<&[String]> {
        self.trace.as_deref()
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.push(line());
        }
    }

    fn control_bits(&self) -> u64 {
        self.timing.control_message_bytes * 8
    }

    /// Puts `frame` on the host's uplink at `now`.
    fn host_send(&mut self, host: HostId, out: Outgoing, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        let frame = Frame::sd(&out.msg, out.to);
        self.log(|| format!("{now} {host} tx {frame}"));
        let at = self.topology.host(host).attachment;
        let tx = self.host_tx[host.0].transmit(frame.length_bits(), now);
        self.counters.frames_sent += 1;
        q.schedule_in(tx.arrival - now, NetEvent::ArriveSwitch { at, frame });
    }

    /// Puts `frame` on a switch port FIFO at `now`.
    fn switch_send(&mut self, at: Attachment, frame: Frame, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        let tx = self.switch_tx[at.switch.0][at.port.0 as usize].transmit(frame.length_bits(), now);
        self.counters.frames_sent += 1;
        let delay = tx.arrival - now;
        match self.topology.peer(at) {
            PortPeer::Host(host) => q.schedule_in(delay, NetEvent::ArriveHost { host, frame }),
            PortPeer::Switch(next) => q.schedule_in(delay, NetEvent::ArriveSwitch { at: next, frame }),
        };
    }

    fn send_openflow(&mut self, switch: SwitchId, msg: OpenFlow, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        let bits = self.control_bits();
        let tx = self.control_down[switch.0].transmit(bits, now);
        q.schedule_in(
            tx.arrival - now,
            NetEvent::ArriveOpenFlow {
                switch,
                msg: Box::new(OpenFlowMsg(msg)),
            },
        );
    }

    fn on_activate(&mut self, host: HostId, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        let outs = match &mut self.hosts[host.0] {
            HostApp::Producer(p) => {
                self.first_event_time = Some(self.first_event_time.map_or(now, |t| t.min(now)));
                vec![p.on_activate(now)]
            }
            HostApp::Consumer(c) => c.on_start(now),
        };
        for out in outs {
            self.host_send(host, out, q);
        }
    }

    fn on_host_frame(&mut self, host: HostId, frame: Frame, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        let node = self.topology.host(host);
        let accepted = frame.dst_mac == node.mac || (frame.dst_mac.is_multicast() && *frame.dst.ip() == SD_MULTICAST_ADDR);
        if !accepted || !frame.is_sd() {
            self.counters.frames_dropped += 1;
            return;
        }
        let msg = match frame.decode_sd() {
            Ok(m) => m,
            Err(_) => {
                self.counters.malformed += 1;
                self.counters.frames_dropped += 1;
                return;
            }
        };
        self.counters.frames_delivered += 1;
        self.log(|| format!("{now} {host} rx {frame}"));
        let reply = match &mut self.hosts[host.0] {
            HostApp::Producer(p) => p.on_sd_message(&msg, now),
            HostApp::Consumer(c) => {
                let before = c.unfinished();
                let reply = c.on_sd_message(&msg, now);
                if msg.kind == SdKind::SubscribeAck {
                    if c.unfinished() < before {
                        self.positive_acks += 1;
                        self.last_ack_time = now;
                    } else if msg.ttl_seconds == 0 && c.states.contains(&QueryState::Nacked(msg.identity)) {
                        self.nacks += 1;
                    }
                }
                reply
            }
        };
        if let Some(out) = reply {
            self.host_send(host, out, q);
        }
    }

    fn on_switch_frame(&mut self, at: Attachment, frame: Frame, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        self.log(|| format!("{now} {} rx {} {frame}", at.switch, at.port));
        let (outputs, flooded) = self.switches[at.switch.0].forward(&frame, at.port, now);
        if flooded {
            self.counters.floods += 1;
        }
        if outputs == [SwitchOutput::Drop] {
            self.counters.frames_dropped += 1;
            return;
        }
        self.counters.frames_delivered += 1;
        for out in outputs {
            match out {
                SwitchOutput::Egress { port, at: when } => {
                    let egress = Attachment::new(at.switch, port);
                    q.schedule(when, NetEvent::SwitchEgress { at: egress, frame: frame.clone() })
                        .expect("egress is never in the past");
                }
                SwitchOutput::PacketIn { at: when } => {
                    q.schedule(when, NetEvent::PacketIn { from: at, frame: frame.clone() })
                        .expect("packet-in is never in the past");
                }
                SwitchOutput::Drop => {}
            }
        }
    }

    fn on_packet_in(&mut self, from: Attachment, frame: Frame, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        self.counters.packet_ins += 1;
        self.log(|| format!("{now} {} packet_in {} {frame}", from.switch, from.port));
        let bits = self.control_bits();
        let tx = self.control_up[from.switch.0].transmit(bits, now);
        q.schedule_in(tx.arrival - now, NetEvent::ArriveController { from, frame });
    }

    fn on_controller_done(&mut self, from: Attachment, frame: Frame, q: &mut EventQueue<NetEvent>) -> Result<(), SimError> {
        let now = q.now();
        let actions = match self.controller.as_mut() {
            Some(ControllerApp::Aware(c)) => match c.handle_packet_in(&frame, from, now)? {
                Some(actions) => actions,
                None => {
                    self.counters.malformed += 1;
                    Vec::new()
                }
            },
            Some(ControllerApp::Vanilla(c)) => {
                let before = c.floods();
                let actions = c.handle_packet_in_vanilla(&frame, from);
                self.counters.floods += c.floods() - before;
                actions
            }
            None => Vec::new(),
        };
        for action in actions {
            self.dispatch(action, q)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, action: ControlAction, q: &mut EventQueue<NetEvent>) -> Result<(), SimError> {
        let now = q.now();
        match action {
            ControlAction::FlowMod { switch, rule, op } => {
                self.log(|| ControlAction::FlowMod { switch, rule: rule.clone(), op }.trace_line(now, Some(switch)));
                self.send_openflow(switch, OpenFlow::FlowMod { rule, op }, q);
            }
            ControlAction::PacketOut { switch, ports, frame } => {
                self.log(|| {
                    ControlAction::PacketOut {
                        switch,
                        ports: ports.clone(),
                        frame: frame.clone(),
                    }
                    .trace_line(now, Some(switch))
                });
                self.send_openflow(switch, OpenFlow::PacketOut { ports, frame }, q);
            }
            ControlAction::SendSd { to, msg } => {
                let at = self.topology.attachment_of(to.address)?;
                self.log(|| ControlAction::SendSd { to, msg: msg.clone() }.trace_line(now, Some(at.switch)));
                let frame = Frame::sd(&msg, to);
                self.send_openflow(
                    at.switch,
                    OpenFlow::PacketOut {
                        ports: vec![at.port],
                        frame,
                    },
                    q,
                );
            }
        }
        Ok(())
    }

    fn on_openflow(&mut self, switch: SwitchId, msg: OpenFlow, q: &mut EventQueue<NetEvent>) {
        let now = q.now();
        let processing = self.timing.switch_processing;
        match msg {
            OpenFlow::FlowMod { rule, op } => {
                self.counters.flow_mods += 1;
                let effective = self.switches[switch.0].apply_flow_mod(rule, op, now, processing);
                q.schedule(effective, NetEvent::FlowModCommit { switch })
                    .expect("commit is never in the past");
            }
            OpenFlow::PacketOut { ports, frame } => {
                self.counters.packet_outs += 1;
                q.schedule_in(processing, NetEvent::PacketOutDone { switch, ports, frame });
            }
        }
    }

    fn on_flow_mod_commit(&mut self, switch: SwitchId, q: &EventQueue<NetEvent>) {
        let now = q.now();
        for (op, rule, res) in self.switches[switch.0].commit_due(now) {
            if res.is_err() {
                self.counters.remove_nonexistent += 1;
            }
            self.log(|| format!("{now} {switch} table_{} {rule}", op.name()));
        }
    }
}

impl Model for Network {
    type Payload = NetEvent;

    fn handle(&mut self, event: Event<NetEvent>, q: &mut EventQueue<NetEvent>) -> Result<(), SimError> {
        self.counters.events += 1;
        match event.payload {
            NetEvent::Activate(host) => self.on_activate(host, q),
            NetEvent::Withdraw(host) => {
                if let HostApp::Producer(p) = &mut self.hosts[host.0] {
                    let out = p.withdraw();
                    self.host_send(host, out, q);
                }
            }
            NetEvent::Inject(host, out) => self.host_send(host, out, q),
            NetEvent::SwitchEgress { at, frame } => self.switch_send(at, frame, q),
            NetEvent::ArriveSwitch { at, frame } => self.on_switch_frame(at, frame, q),
            NetEvent::ArriveHost { host, frame } => self.on_host_frame(host, frame, q),
            NetEvent::PacketIn { from, frame } => self.on_packet_in(from, frame, q),
            NetEvent::ArriveController { from, frame } => {
                q.schedule_in(self.timing.controller_processing, NetEvent::ControllerDone { from, frame });
            }
            NetEvent::ControllerDone { from, frame } => self.on_controller_done(from, frame, q)?,
            NetEvent::ArriveOpenFlow { switch, msg } => self.on_openflow(switch, msg.0, q),
            NetEvent::PacketOutDone { switch, ports, frame } => {
                let now = q.now();
                self.log(|| format!("{now} {switch} packet_out_done {frame}"));
                for port in ports {
                    self.switch_send(Attachment::new(switch, port), frame.clone(), q);
                }
            }
            NetEvent::FlowModCommit { switch } => self.on_flow_mod_commit(switch, q),
        }
        Ok(())
    }

    fn unfinished(&self) -> usize {
        self.hosts
            .iter()
            .map(|h| match h {
                HostApp::Consumer(c) => c.unfinished(),
                HostApp::Producer(_) => 0,
            })
            .sum()
    }

    fn metrics(&self, q: &EventQueue<NetEvent>) -> RunMetrics {
        let mut counters = self.counters;
        counters.events = q.processed();
        RunMetrics::new(
            self.first_event_time.unwrap_or(SimTime::ZERO),
            self.last_ack_time,
            self.positive_acks,
            self.nacks,
            counters,
        )
    }
}

/// A network plus its event queue.
pub struct Simulation {
    pub network: Network,
    pub queue: EventQueue<NetEvent>,
    pub limit: SimTime,
}

impl Simulation {
    pub fn new(network: Network, limit: SimTime) -> Self {
        Self {
            network,
            queue: EventQueue::new(),
            limit,
        }
    }

    /// Cold start: every producer, then every consumer, activates at `at`.
    pub fn activate_all(&mut self, at: SimTime) -> Result<(), SimError> {
        let (producers, consumers): (Vec<_>, Vec<_>) = (0..self.network.hosts.len())
            .map(HostId)
            .partition(|h| matches!(self.network.hosts[h.0], HostApp::Producer(_)));
        for h in producers.into_iter().chain(consumers) {
            self.queue.schedule(at, NetEvent::Activate(h))?;
        }
        Ok(())
    }

    /// Every producer withdraws its offer at `at`.
    pub fn withdraw_all_offers(&mut self, at: SimTime) -> Result<(), SimError> {
        for h in 0..self.network.hosts.len() {
            if matches!(self.network.hosts[h], HostApp::Producer(_)) {
                self.queue.schedule(at, NetEvent::Withdraw(HostId(h)))?;
            }
        }
        Ok(())
    }

    /// Sends `out` from `host` at `at`.
    pub fn inject(&mut self, host: HostId, out: Outgoing, at: SimTime) -> Result<(), SimError> {
        self.queue.schedule(at, NetEvent::Inject(host, out))?;
        Ok(())
    }

    pub fn run(&mut self) -> Result<RunMetrics, SimError> {
        sim_engine::run_until_quiescent(&mut self.network, &mut self.queue, self.limit)
    }

    /// Runs until the queue drains, ignoring unfinished consumer queries.
    pub fn run_to_quiescence(&mut self) -> Result<RunMetrics, SimError> {
        while let Some(t) = self.queue.peek_time() {
            if t > self.limit {
                return Err(SimError::Timeout {
                    limit: self.limit,
                    unfinished: self.network.unfinished(),
                    pending_events: self.queue.len(),
                });
            }
            let ev = self.queue.pop().expect("peeked");
            self.network.handle(ev, &mut self.queue)?;
        }
        Ok(self.network.metrics(&self.queue))
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }
}
