//! SOME/IP SD-aware controller application.
//!
//! Keeps three tables (service registry, find cache, subscription registry)
//! and reacts to every intercepted SD entry according to the table state:
//!
//! | message      | state          | reaction                                              |
//! |--------------|----------------|-------------------------------------------------------|
//! | find         | known          | unicast offer(s) to the requester                     |
//! | find         | not known      | cache the find, forward to the multicast group        |
//! | offer        | requested      | update registry, forward to the cached requesters     |
//! | offer        | not requested  | update registry, forward to the multicast group       |
//! | subscribe    | known          | record the subscription, forward to the provider      |
//! | subscribe    | not known      | negative acknowledgement to the subscriber            |
//! | subscribeAck | subscribed     | activate, install the data path, forward to subscriber|
//! | subscribeAck | not subscribed | drop                                                  |

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::Arc;

use crate::data_plane::{Action, FlowMatch, FlowRule, Frame, RuleId};
use crate::error::SimError;
use crate::sd_codec::{matches, Endpoint, SdKind, SdMessage, ServiceIdentity, SD_PORT};
use crate::sim_engine::SimTime;
use crate::topology::{Attachment, SwitchId, Topology};

use super::paths::{FlowSpec, Hop, PathRules};
use super::{flood_to_hosts, ControlAction, RuleIdAllocator};

/// Priority of the static rule that sends SD traffic to the controller.
pub const PUNT_PRIORITY: u16 = 1000;
/// Rule id reserved for the punt rule on every switch.
pub const PUNT_RULE_ID: RuleId = RuleId(0);
/// Source of negative acknowledgements generated by the controller.
pub const CONTROLLER_SD_ENDPOINT: Endpoint = Endpoint::sd(Ipv4Addr::new(10, 0, 0, 254));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceRegistryEntry {
    pub identity: ServiceIdentity,
    pub provider_endpoint: Endpoint,
    /// SD endpoint the offer came from.
    pub sd_endpoint: Endpoint,
    pub ttl_seconds: u32,
    pub session_id: u16,
    pub attachment: Attachment,
    pub expiry_time: SimTime,
}

impl ServiceRegistryEntry {
    /// Offer equivalent to the one this entry was learned from.
    pub fn offer(&self) -> SdMessage {
        SdMessage::offer(
            self.identity,
            self.ttl_seconds,
            self.provider_endpoint,
            self.sd_endpoint,
            self.session_id,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindCacheEntry {
    pub query: ServiceIdentity,
    pub requester: Endpoint,
    pub requester_attachment: Attachment,
    pub issued_at: SimTime,
    pub deadline: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscriptionState {
    Requested,
    Active,
    Withdrawn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriptionRecord {
    pub identity: ServiceIdentity,
    pub subscriber_endpoint: Endpoint,
    /// SD endpoint of the subscriber, where acks go.
    pub subscriber_sd: Endpoint,
    pub provider_endpoint: Endpoint,
    pub provider_sd: Endpoint,
    pub provider_attachment: Attachment,
    pub subscriber_attachment: Attachment,
    pub state: SubscriptionState,
    pub installed_rules: Vec<(SwitchId, RuleId)>,
    pub hops: Vec<Hop>,
}

impl SubscriptionRecord {
    pub fn flow(&self) -> FlowSpec {
        FlowSpec::for_instance(&self.identity, &self.provider_endpoint)
    }

    fn transition(&mut self, to: SubscriptionState) {
        use SubscriptionState::*;
        debug_assert!(
            matches!((self.state, to), (Requested, Active) | (Requested, Withdrawn) | (Active, Withdrawn)),
            "illegal subscription transition {:?} -> {to:?}",
            self.state
        );
        self.state = to;
    }
}

type SubscriptionKey = ((u16, u16), Endpoint);

/// The SD-aware controller application.
#[derive(Debug, Clone)]
pub struct SomeIpController {
    topology: Arc<Topology>,
    registry: BTreeMap<(u16, u16), ServiceRegistryEntry>,
    find_cache: Vec<FindCacheEntry>,
    subscriptions: BTreeMap<SubscriptionKey, SubscriptionRecord>,
    paths: PathRules,
    ids: RuleIdAllocator,
    session: u16,
}

impl SomeIpController {
    pub fn new(topology: Arc<Topology>) -> Self {
        Self {
            topology,
            registry: BTreeMap::new(),
            find_cache: Vec::new(),
            subscriptions: BTreeMap::new(),
            paths: PathRules::new(),
            ids: RuleIdAllocator::default(),
            session: 0,
        }
    }

    /// The static rule that punts every SD datagram to the controller.
    pub fn punt_rule() -> FlowRule {
        FlowRule::new(
            PUNT_RULE_ID,
            PUNT_PRIORITY,
            FlowMatch {
                dst_port: Some(SD_PORT),
                ..FlowMatch::default()
            },
            vec![Action::PacketIn],
        )
    }

    pub fn registry(&self) -> impl Iterator<Item = &ServiceRegistryEntry> {
        self.registry.values()
    }

    pub fn find_cache(&self) -> &[FindCacheEntry] {
        &self.find_cache
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &SubscriptionRecord> {
        self.subscriptions.values()
    }

    pub fn path_rules(&self) -> &PathRules {
        &self.paths
    }

    /// Non-expired registry entries matching `query`, by (service, instance).
    pub fn lookup_service(&self, query: &ServiceIdentity, now: SimTime) -> Vec<&ServiceRegistryEntry> {
        self.registry
            .values()
            .filter(|e| now <= e.expiry_time && matches(query, &e.identity))
            .collect()
    }

    fn expire(&mut self, now: SimTime) {
        self.find_cache.retain(|f| now <= f.deadline);
    }

    fn next_session(&mut self) -> u16 {
        self.session = self.session.wrapping_add(1);
        self.session
    }

    /// Decodes an intercepted frame and handles it. Undecodable frames are
    /// dropped and reported as `Ok(None)`.
    pub fn handle_packet_in(
        &mut self,
        frame: &Frame,
        ingress: Attachment,
        now: SimTime,
    ) -> Result<Option<Vec<ControlAction>>, SimError> {
        match frame.decode_sd() {
            Ok(msg) => self.handle_sd_message(&msg, ingress, now).map(Some),
            Err(e) => {
                log::debug!("controller: dropping malformed SD frame from {}: {e}", frame.src);
                Ok(None)
            }
        }
    }

    /// Reacts to one intercepted SD entry that entered the network at `ingress`.
    pub fn handle_sd_message(
        &mut self,
        msg: &SdMessage,
        ingress: Attachment,
        now: SimTime,
    ) -> Result<Vec<ControlAction>, SimError> {
        self.topology.attachment_of(msg.sender.address)?;
        self.expire(now);
        if msg.is_withdrawal() {
            return self.handle_withdrawal(msg, ingress, now);
        }
        match msg.kind {
            SdKind::Find => Ok(self.on_find(msg, ingress, now)),
            SdKind::Offer => Ok(self.on_offer(msg, ingress, now)),
            SdKind::Subscribe => Ok(self.on_subscribe(msg, now)),
            SdKind::SubscribeAck => self.on_subscribe_ack(msg),
        }
    }

    fn on_find(&mut self, msg: &SdMessage, ingress: Attachment, now: SimTime) -> Vec<ControlAction> {
        let known = self.lookup_service(&msg.identity, now);
        if !known.is_empty() {
            return known
                .into_iter()
                .map(|e| ControlAction::SendSd {
                    to: msg.sender,
                    msg: e.offer(),
                })
                .collect();
        }
        self.find_cache.push(FindCacheEntry {
            query: msg.identity,
            requester: msg.sender,
            requester_attachment: ingress,
            issued_at: now,
            deadline: now + SimTime::from_secs(u64::from(msg.ttl_seconds)),
        });
        flood_to_hosts(&self.topology, &Frame::sd(msg, Endpoint::sd_multicast()), ingress)
    }

    fn on_offer(&mut self, msg: &SdMessage, ingress: Attachment, now: SimTime) -> Vec<ControlAction> {
        let Some(provider_endpoint) = msg.provider_endpoint else {
            return Vec::new();
        };
        self.registry.insert(
            msg.identity.key(),
            ServiceRegistryEntry {
                identity: msg.identity,
                provider_endpoint,
                sd_endpoint: msg.sender,
                ttl_seconds: msg.ttl_seconds,
                session_id: msg.session_id,
                attachment: ingress,
                expiry_time: now + SimTime::from_secs(u64::from(msg.ttl_seconds)),
            },
        );
        let (answered, open): (Vec<_>, Vec<_>) = std::mem::take(&mut self.find_cache)
            .into_iter()
            .partition(|f| matches(&f.query, &msg.identity));
        self.find_cache = open;
        if answered.is_empty() {
            return flood_to_hosts(&self.topology, &Frame::sd(msg, Endpoint::sd_multicast()), ingress);
        }
        let mut requesters: Vec<Endpoint> = Vec::with_capacity(answered.len());
        for f in answered {
            if !requesters.contains(&f.requester) {
                requesters.push(f.requester);
            }
        }
        requesters
            .into_iter()
            .map(|to| ControlAction::SendSd { to, msg: msg.clone() })
            .collect()
    }

    fn on_subscribe(&mut self, msg: &SdMessage, now: SimTime) -> Vec<ControlAction> {
        let Some(subscriber_endpoint) = msg.consumer_endpoint else {
            return Vec::new();
        };
        let provider = self
            .lookup_service(&msg.identity, now)
            .into_iter()
            .find(|e| e.identity == msg.identity)
            .cloned();
        let Some(provider) = provider else {
            let session = self.next_session();
            let nack = SdMessage::subscribe_ack(msg.identity, 0, subscriber_endpoint, CONTROLLER_SD_ENDPOINT, session);
            return vec![ControlAction::SendSd {
                to: msg.sender,
                msg: nack,
            }];
        };
        let Ok(subscriber_attachment) = self.topology.attachment_of(subscriber_endpoint.address) else {
            return Vec::new();
        };
        let key = (msg.identity.key(), subscriber_endpoint);
        let refresh = self
            .subscriptions
            .get(&key)
            .is_some_and(|r| r.state != SubscriptionState::Withdrawn);
        if !refresh {
            self.subscriptions.insert(
                key,
                SubscriptionRecord {
                    identity: msg.identity,
                    subscriber_endpoint,
                    subscriber_sd: msg.sender,
                    provider_endpoint: provider.provider_endpoint,
                    provider_sd: provider.sd_endpoint,
                    provider_attachment: provider.attachment,
                    subscriber_attachment,
                    state: SubscriptionState::Requested,
                    installed_rules: Vec::new(),
                    hops: Vec::new(),
                },
            );
        }
        vec![ControlAction::SendSd {
            to: provider.sd_endpoint,
            msg: msg.clone(),
        }]
    }

    fn on_subscribe_ack(&mut self, msg: &SdMessage) -> Result<Vec<ControlAction>, SimError> {
        let Some(consumer) = msg.consumer_endpoint else {
            return Ok(Vec::new());
        };
        let Some(record) = self.subscriptions.get_mut(&(msg.identity.key(), consumer)) else {
            return Ok(Vec::new());
        };
        let forward = ControlAction::SendSd {
            to: record.subscriber_sd,
            msg: msg.clone(),
        };
        match record.state {
            SubscriptionState::Withdrawn => Ok(Vec::new()),
            SubscriptionState::Active => Ok(vec![forward]),
            SubscriptionState::Requested if msg.ttl_seconds == 0 => {
                record.transition(SubscriptionState::Withdrawn);
                Ok(vec![forward])
            }
            SubscriptionState::Requested => {
                let (hops, rules) = self.paths.install_path(
                    &self.topology,
                    &mut self.ids,
                    record.provider_attachment,
                    record.subscriber_attachment,
                    record.flow(),
                )?;
                record.transition(SubscriptionState::Active);
                record.installed_rules = rules.iter().map(|r| (r.switch, r.rule.id)).collect();
                record.hops = hops;
                let mut actions: Vec<ControlAction> = rules
                    .into_iter()
                    .map(|r| ControlAction::FlowMod {
                        switch: r.switch,
                        rule: r.rule,
                        op: r.op,
                    })
                    .collect();
                actions.push(forward);
                Ok(actions)
            }
        }
    }

    /// Offer or subscribe with TTL 0.
    pub fn handle_withdrawal(
        &mut self,
        msg: &SdMessage,
        ingress: Attachment,
        _now: SimTime,
    ) -> Result<Vec<ControlAction>, SimError> {
        debug_assert!(msg.is_withdrawal());
        let mut actions = Vec::new();
        match msg.kind {
            SdKind::Offer => {
                self.registry.remove(&msg.identity.key());
                let affected: Vec<SubscriptionKey> = self
                    .subscriptions
                    .iter()
                    .filter(|(k, r)| k.0 == msg.identity.key() && r.state != SubscriptionState::Withdrawn)
                    .map(|(k, _)| *k)
                    .collect();
                for key in affected {
                    actions.extend(self.withdraw_subscription(&key));
                }
                actions.extend(flood_to_hosts(
                    &self.topology,
                    &Frame::sd(msg, Endpoint::sd_multicast()),
                    ingress,
                ));
            }
            SdKind::Subscribe => {
                let Some(consumer) = msg.consumer_endpoint else {
                    return Ok(actions);
                };
                let key = (msg.identity.key(), consumer);
                let provider_sd = match self.subscriptions.get(&key) {
                    Some(r) => Some(r.provider_sd),
                    None => self.registry.get(&msg.identity.key()).map(|e| e.sd_endpoint),
                };
                if self
                    .subscriptions
                    .get(&key)
                    .is_some_and(|r| r.state != SubscriptionState::Withdrawn)
                {
                    actions.extend(self.withdraw_subscription(&key));
                }
                if let Some(to) = provider_sd {
                    actions.push(ControlAction::SendSd { to, msg: msg.clone() });
                }
            }
            _ => {}
        }
        Ok(actions)
    }

    fn withdraw_subscription(&mut self, key: &SubscriptionKey) -> Vec<ControlAction> {
        let Some(record) = self.subscriptions.get_mut(key) else {
            return Vec::new();
        };
        let was_active = record.state == SubscriptionState::Active;
        record.transition(SubscriptionState::Withdrawn);
        if !was_active {
            return Vec::new();
        }
        let hops = std::mem::take(&mut record.hops);
        record.installed_rules.clear();
        let flow = record.flow();
        self.paths
            .remove_path(&hops, flow)
            .into_iter()
            .map(|r| ControlAction::FlowMod {
                switch: r.switch,
                rule: r.rule,
                op: r.op,
            })
            .collect()
    }
}
