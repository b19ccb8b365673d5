//! Producer and consumer SD state machines.
//!
//! Hosts are pure: each handler takes a received message and returns what to
//! send and where. Host processing takes zero simulated time.

use crate::sd_codec::{matches, Endpoint, SdKind, SdMessage, ServiceIdentity};
use crate::sim_engine::SimTime;

/// An SD message and its destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Endpoint,
    pub msg: SdMessage,
}

impl Outgoing {
    pub fn multicast(msg: SdMessage) -> Self {
        Self {
            to: Endpoint::sd_multicast(),
            msg,
        }
    }
}

/// Offers one concrete service instance.
#[derive(Debug, Clone)]
pub struct ProducerApp {
    pub identity: ServiceIdentity,
    /// Where events are published from.
    pub endpoint: Endpoint,
    /// SD endpoint of the host.
    pub sd_endpoint: Endpoint,
    pub offer_ttl: u32,
    pub activation_time: SimTime,
    /// Active subscribers' event endpoints.
    pub subscribers: Vec<Endpoint>,
    session: u16,
}

impl ProducerApp {
    pub fn new(identity: ServiceIdentity, endpoint: Endpoint, offer_ttl: u32, activation_time: SimTime) -> Self {
        debug_assert!(identity.is_concrete());
        Self {
            identity,
            endpoint,
            sd_endpoint: Endpoint::sd(endpoint.address),
            offer_ttl,
            activation_time,
            subscribers: Vec::new(),
            session: 0,
        }
    }

    fn next_session(&mut self) -> u16 {
        self.session = self.session.wrapping_add(1);
        self.session
    }

    fn offer(&mut self, ttl: u32) -> SdMessage {
        let session = self.next_session();
        SdMessage::offer(self.identity, ttl, self.endpoint, self.sd_endpoint, session)
    }

    /// Multicast offer sent when the service comes up.
    pub fn on_activate(&mut self, _now: SimTime) -> Outgoing {
        let msg = self.offer(self.offer_ttl);
        Outgoing::multicast(msg)
    }

    /// Multicast offer with TTL 0.
    pub fn withdraw(&mut self) -> Outgoing {
        self.subscribers.clear();
        let msg = self.offer(0);
        Outgoing::multicast(msg)
    }

    pub fn on_sd_message(&mut self, msg: &SdMessage, _now: SimTime) -> Option<Outgoing> {
        match msg.kind {
            SdKind::Find if matches(&msg.identity, &self.identity) => {
                let offer = self.offer(self.offer_ttl);
                Some(Outgoing { to: msg.sender, msg: offer })
            }
            SdKind::Subscribe if msg.identity == self.identity => {
                let consumer = msg.consumer_endpoint?;
                if msg.ttl_seconds == 0 {
                    self.subscribers.retain(|s| *s != consumer);
                    return None;
                }
                if !self.subscribers.contains(&consumer) {
                    self.subscribers.push(consumer);
                }
                let session = self.next_session();
                let ack = SdMessage::subscribe_ack(self.identity, msg.ttl_seconds, consumer, self.sd_endpoint, session);
                Some(Outgoing { to: msg.sender, msg: ack })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryState {
    Idle,
    Finding,
    /// Subscribe sent to this instance.
    Subscribing(ServiceIdentity),
    Subscribed(ServiceIdentity),
    Nacked(ServiceIdentity),
}

/// Wants a list of services and subscribes once to the first matching offer
/// for each.
#[derive(Debug, Clone)]
pub struct ConsumerApp {
    pub wanted: Vec<ServiceIdentity>,
    pub states: Vec<QueryState>,
    /// Event reception endpoint.
    pub endpoint: Endpoint,
    pub sd_endpoint: Endpoint,
    pub find_ttl: u32,
    pub subscribe_ttl: u32,
    /// Time each query reached `Subscribed`.
    pub completed_at: Vec<Option<SimTime>>,
    /// Subscribes with TTL > 0 emitted, per instance.
    pub subscribes_sent: Vec<ServiceIdentity>,
    session: u16,
}

impl ConsumerApp {
    pub fn new(wanted: Vec<ServiceIdentity>, endpoint: Endpoint, find_ttl: u32, subscribe_ttl: u32) -> Self {
        let n = wanted.len();
        Self {
            wanted,
            states: vec![QueryState::Idle; n],
            endpoint,
            sd_endpoint: Endpoint::sd(endpoint.address),
            find_ttl,
            subscribe_ttl,
            completed_at: vec![None; n],
            subscribes_sent: Vec::new(),
            session: 0,
        }
    }

    fn next_session(&mut self) -> u16 {
        self.session = self.session.wrapping_add(1);
        self.session
    }

    /// One multicast find per wanted query.
    pub fn on_start(&mut self, _now: SimTime) -> Vec<Outgoing> {
        let mut out = Vec::with_capacity(self.wanted.len());
        for i in 0..self.wanted.len() {
            self.states[i] = QueryState::Finding;
            let session = self.next_session();
            out.push(Outgoing::multicast(SdMessage::find(
                self.wanted[i],
                self.find_ttl,
                self.sd_endpoint,
                session,
            )));
        }
        out
    }

    fn query_bound_to(&self, instance: &ServiceIdentity) -> Option<usize> {
        self.states.iter().position(|s| match s {
            QueryState::Subscribing(id) | QueryState::Subscribed(id) | QueryState::Nacked(id) => id == instance,
            _ => false,
        })
    }

    pub fn on_sd_message(&mut self, msg: &SdMessage, now: SimTime) -> Option<Outgoing> {
        match msg.kind {
            SdKind::Offer if msg.ttl_seconds > 0 => {
                if self.query_bound_to(&msg.identity).is_some() {
                    return None;
                }
                let i = (0..self.wanted.len())
                    .find(|&i| self.states[i] == QueryState::Finding && matches(&self.wanted[i], &msg.identity))?;
                let provider = msg.provider_endpoint?;
                self.states[i] = QueryState::Subscribing(msg.identity);
                self.subscribes_sent.push(msg.identity);
                let session = self.next_session();
                let sub = SdMessage::subscribe(msg.identity, self.subscribe_ttl, self.endpoint, self.sd_endpoint, session);
                Some(Outgoing {
                    to: Endpoint::sd(provider.address),
                    msg: sub,
                })
            }
            SdKind::SubscribeAck => {
                if msg.consumer_endpoint != Some(self.endpoint) {
                    return None;
                }
                let i = self
                    .states
                    .iter()
                    .position(|s| *s == QueryState::Subscribing(msg.identity))?;
                if msg.ttl_seconds > 0 {
                    self.states[i] = QueryState::Subscribed(msg.identity);
                    self.completed_at[i] = Some(now);
                } else {
                    self.states[i] = QueryState::Nacked(msg.identity);
                }
                None
            }
            _ => None,
        }
    }

    pub fn unfinished(&self) -> usize {
        self.states
            .iter()
            .filter(|s| !matches!(s, QueryState::Subscribed(_)))
            .count()
    }

    /// Instances this consumer holds an acknowledged subscription to.
    pub fn subscribed(&self) -> Vec<ServiceIdentity> {
        self.states
            .iter()
            .filter_map(|s| match s {
                QueryState::Subscribed(id) => Some(*id),
                _ => None,
            })
            .collect()
    }
}
