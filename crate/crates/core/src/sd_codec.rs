//! SOME/IP service-discovery message model and its binary wire format.
//!
//! Every SD message carries exactly one entry and is encoded as a fixed
//! 32-byte big-endian record:
//!
//! ```text
//! offset  size  field
//!      0     1  kind (0x00 find, 0x01 offer, 0x06 subscribe, 0x07 subscribeAck)
//!      1     1  flags (bit 0: endpoint option present, bits 1..7 reserved = 0)
//!      2     2  service id
//!      4     2  instance id          (0xFFFF = any)
//!      6     1  major version        (0xFF = any)
//!      7     3  ttl in seconds       (0 = withdrawal / negative ack)
//!     10     4  minor version        (0xFFFFFFFF = any)
//!     14     4  endpoint IPv4 address
//!     18     2  endpoint port
//!     20     1  endpoint L4 protocol (0x11 UDP, 0x06 TCP)
//!     21     4  sender IPv4 address
//!     25     2  sender port
//!     27     1  sender L4 protocol
//!     28     2  session id
//!     30     2  padding (zero)
//! ```
//!
//! The endpoint option holds the provider endpoint for offers and the
//! consumer endpoint for subscribe and subscribeAck entries. Finds carry no
//! endpoint option and its bytes must be zero.

use std::fmt;
use std::net::Ipv4Addr;

use bytes::{Buf, BufMut};
use thiserror::Error;

/// Wildcard instance id ("any instance").
pub const ANY_INSTANCE: u16 = 0xFFFF;
/// Wildcard major version.
pub const ANY_MAJOR: u8 = 0xFF;
/// Wildcard minor version.
pub const ANY_MINOR: u32 = 0xFFFF_FFFF;
/// Largest TTL representable in the 24-bit field.
pub const MAX_TTL: u32 = 0x00FF_FFFF;

/// Well-known SD UDP port.
pub const SD_PORT: u16 = 30490;
/// SD multicast group shared by every host.
pub const SD_MULTICAST_ADDR: Ipv4Addr = Ipv4Addr::new(224, 224, 224, 245);

/// Encoded size of one SD record. Identical for every kind.
pub const SD_RECORD_LEN: usize = 32;

const FLAG_ENDPOINT: u8 = 0x01;
const PROTO_UDP: u8 = 0x11;
const PROTO_TCP: u8 = 0x06;

/// Service id, instance id and major/minor version of a SOME/IP service.
///
/// Instance and versions may hold their all-ones wildcard value in a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServiceIdentity {
    pub service_id: u16,
    pub instance_id: u16,
    pub major_version: u8,
    pub minor_version: u32,
}

impl ServiceIdentity {
    pub const fn new(service_id: u16, instance_id: u16, major_version: u8, minor_version: u32) -> Self {
        Self {
            service_id,
            instance_id,
            major_version,
            minor_version,
        }
    }

    /// Query for any instance and any version of `service_id`.
    pub const fn any(service_id: u16) -> Self {
        Self::new(service_id, ANY_INSTANCE, ANY_MAJOR, ANY_MINOR)
    }

    /// True when no field holds a wildcard.
    pub fn is_concrete(&self) -> bool {
        self.instance_id != ANY_INSTANCE && self.major_version != ANY_MAJOR && self.minor_version != ANY_MINOR
    }

    /// Registry key: service and instance.
    pub fn key(&self) -> (u16, u16) {
        (self.service_id, self.instance_id)
    }
}

impl fmt::Display for ServiceIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}.", self.service_id)?;
        if self.instance_id == ANY_INSTANCE {
            f.write_str("*")?;
        } else {
            write!(f, "{:#06x}", self.instance_id)?;
        }
        f.write_str(" v")?;
        if self.major_version == ANY_MAJOR {
            f.write_str("*")?;
        } else {
            write!(f, "{}", self.major_version)?;
        }
        f.write_str(".")?;
        if self.minor_version == ANY_MINOR {
            f.write_str("*")
        } else {
            write!(f, "{}", self.minor_version)
        }
    }
}

/// Does `candidate` satisfy `query`?
///
/// The service id must be equal; instance, major and minor must be equal or
/// wildcarded in the query. `candidate` is expected to be concrete.
pub fn matches(query: &ServiceIdentity, candidate: &ServiceIdentity) -> bool {
    query.service_id == candidate.service_id
        && (query.instance_id == ANY_INSTANCE || query.instance_id == candidate.instance_id)
        && (query.major_version == ANY_MAJOR || query.major_version == candidate.major_version)
        && (query.minor_version == ANY_MINOR || query.minor_version == candidate.minor_version)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transport {
    Udp,
    Tcp,
}

impl Transport {
    fn wire(self) -> u8 {
        match self {
            Transport::Udp => PROTO_UDP,
            Transport::Tcp => PROTO_TCP,
        }
    }

    fn from_wire(b: u8) -> Option<Self> {
        match b {
            PROTO_UDP => Some(Transport::Udp),
            PROTO_TCP => Some(Transport::Tcp),
            _ => None,
        }
    }
}

/// IPv4 transport endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub address: Ipv4Addr,
    pub port: u16,
    pub transport: Transport,
}

impl Endpoint {
    pub const fn udp(address: Ipv4Addr, port: u16) -> Self {
        Self {
            address,
            port,
            transport: Transport::Udp,
        }
    }

    /// The SD endpoint of the host at `address`.
    pub const fn sd(address: Ipv4Addr) -> Self {
        Self::udp(address, SD_PORT)
    }

    /// The SD multicast endpoint.
    pub const fn sd_multicast() -> Self {
        Self::udp(SD_MULTICAST_ADDR, SD_PORT)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let proto = match self.transport {
            Transport::Udp => "udp",
            Transport::Tcp => "tcp",
        };
        write!(f, "{}:{}/{}", self.address, self.port, proto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SdKind {
    Find,
    Offer,
    Subscribe,
    SubscribeAck,
}

impl SdKind {
    pub fn tag(self) -> u8 {
        match self {
            SdKind::Find => 0x00,
            SdKind::Offer => 0x01,
            SdKind::Subscribe => 0x06,
            SdKind::SubscribeAck => 0x07,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0x00 => Some(SdKind::Find),
            0x01 => Some(SdKind::Offer),
            0x06 => Some(SdKind::Subscribe),
            0x07 => Some(SdKind::SubscribeAck),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SdKind::Find => "find",
            SdKind::Offer => "offer",
            SdKind::Subscribe => "subscribe",
            SdKind::SubscribeAck => "subscribeAck",
        }
    }
}

/// One SOME/IP SD entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdMessage {
    pub kind: SdKind,
    pub identity: ServiceIdentity,
    pub ttl_seconds: u32,
    /// Present on offers.
    pub provider_endpoint: Option<Endpoint>,
    /// Present on subscribe and subscribeAck.
    pub consumer_endpoint: Option<Endpoint>,
    /// SD endpoint of the host that originated the entry.
    pub sender: Endpoint,
    pub session_id: u16,
}

impl SdMessage {
    pub fn find(query: ServiceIdentity, ttl_seconds: u32, sender: Endpoint, session_id: u16) -> Self {
        Self {
            kind: SdKind::Find,
            identity: query,
            ttl_seconds,
            provider_endpoint: None,
            consumer_endpoint: None,
            sender,
            session_id,
        }
    }

    pub fn offer(
        identity: ServiceIdentity,
        ttl_seconds: u32,
        provider: Endpoint,
        sender: Endpoint,
        session_id: u16,
    ) -> Self {
        Self {
            kind: SdKind::Offer,
            identity,
            ttl_seconds,
            provider_endpoint: Some(provider),
            consumer_endpoint: None,
            sender,
            session_id,
        }
    }

    pub fn subscribe(
        identity: ServiceIdentity,
        ttl_seconds: u32,
        consumer: Endpoint,
        sender: Endpoint,
        session_id: u16,
    ) -> Self {
        Self {
            kind: SdKind::Subscribe,
            identity,
            ttl_seconds,
            provider_endpoint: None,
            consumer_endpoint: Some(consumer),
            sender,
            session_id,
        }
    }

    pub fn subscribe_ack(
        identity: ServiceIdentity,
        ttl_seconds: u32,
        consumer: Endpoint,
        sender: Endpoint,
        session_id: u16,
    ) -> Self {
        Self {
            kind: SdKind::SubscribeAck,
            identity,
            ttl_seconds,
            provider_endpoint: None,
            consumer_endpoint: Some(consumer),
            sender,
            session_id,
        }
    }

    /// Offer or subscribe with TTL 0.
    pub fn is_withdrawal(&self) -> bool {
        self.ttl_seconds == 0 && matches!(self.kind, SdKind::Offer | SdKind::Subscribe)
    }

    /// SubscribeAck with TTL 0.
    pub fn is_nack(&self) -> bool {
        self.ttl_seconds == 0 && self.kind == SdKind::SubscribeAck
    }

    /// The endpoint carried in the option slot, if any.
    pub fn option_endpoint(&self) -> Option<Endpoint> {
        self.provider_endpoint.or(self.consumer_endpoint)
    }

    /// Checks the structural invariants of the entry.
    pub fn validate(&self) -> Result<(), MalformedMessage> {
        if self.ttl_seconds > MAX_TTL {
            return Err(MalformedMessage::Invalid("ttl exceeds 24 bits"));
        }
        if self.sender.port == 0 {
            return Err(MalformedMessage::Invalid("sender port is zero"));
        }
        let (provider, consumer) = match self.kind {
            SdKind::Find => (false, false),
            SdKind::Offer => (true, false),
            SdKind::Subscribe | SdKind::SubscribeAck => (false, true),
        };
        if self.provider_endpoint.is_some() != provider {
            return Err(MalformedMessage::Invalid("provider endpoint presence does not match kind"));
        }
        if self.consumer_endpoint.is_some() != consumer {
            return Err(MalformedMessage::Invalid("consumer endpoint presence does not match kind"));
        }
        if self.option_endpoint().is_some_and(|ep| ep.port == 0) {
            return Err(MalformedMessage::Invalid("endpoint port is zero"));
        }
        if self.kind != SdKind::Find && !self.identity.is_concrete() {
            return Err(MalformedMessage::Invalid("wildcard identity outside a find"));
        }
        Ok(())
    }
}

impl fmt::Display for SdMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) ttl={} from={}", self.kind.name(), self.identity, self.ttl_seconds, self.sender)?;
        if let Some(ep) = self.option_endpoint() {
            write!(f, " ep={ep}")?;
        }
        Ok(())
    }
}

/// A frame payload that cannot be decoded into an [`SdMessage`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedMessage {
    #[error("SD record is {0} bytes, expected {SD_RECORD_LEN}")]
    WrongLength(usize),
    #[error("unknown SD entry kind {0:#04x}")]
    UnknownKind(u8),
    #[error("reserved bits set at offset {0}")]
    ReservedBits(usize),
    #[error("unknown transport protocol {0:#04x}")]
    UnknownTransport(u8),
    #[error("invalid SD entry: {0}")]
    Invalid(&'static str),
}

/// Encoded length of a message of `kind`.
pub const fn encoded_len(_kind: SdKind) -> usize {
    SD_RECORD_LEN
}

fn put_endpoint(buf: &mut Vec<u8>, ep: Option<Endpoint>) {
    match ep {
        Some(ep) => {
            buf.put_slice(&ep.address.octets());
            buf.put_u16(ep.port);
            buf.put_u8(ep.transport.wire());
        }
        None => buf.put_bytes(0, 7),
    }
}

/// Serializes `msg` into its fixed-size record.
pub fn encode(msg: &SdMessage) -> Vec<u8> {
    debug_assert!(msg.validate().is_ok(), "encoding invalid SD message: {msg:?}");
    let mut buf = Vec::with_capacity(SD_RECORD_LEN);
    let endpoint = msg.option_endpoint();
    buf.put_u8(msg.kind.tag());
    buf.put_u8(if endpoint.is_some() { FLAG_ENDPOINT } else { 0 });
    buf.put_u16(msg.identity.service_id);
    buf.put_u16(msg.identity.instance_id);
    buf.put_u8(msg.identity.major_version);
    buf.put_uint(u64::from(msg.ttl_seconds & MAX_TTL), 3);
    buf.put_u32(msg.identity.minor_version);
    put_endpoint(&mut buf, endpoint);
    put_endpoint(&mut buf, Some(msg.sender));
    buf.put_u16(msg.session_id);
    buf.put_bytes(0, 2);
    debug_assert_eq!(buf.len(), SD_RECORD_LEN);
    buf
}

fn get_endpoint(buf: &mut &[u8], offset: usize) -> Result<Endpoint, MalformedMessage> {
    let mut octets = [0u8; 4];
    buf.copy_to_slice(&mut octets);
    let port = buf.get_u16();
    let proto = buf.get_u8();
    let transport = Transport::from_wire(proto).ok_or(MalformedMessage::UnknownTransport(proto))?;
    if port == 0 {
        return Err(MalformedMessage::Invalid(if offset == 14 {
            "endpoint port is zero"
        } else {
            "sender port is zero"
        }));
    }
    Ok(Endpoint {
        address: Ipv4Addr::from(octets),
        port,
        transport,
    })
}

/// Parses a record produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<SdMessage, MalformedMessage> {
    if bytes.len() != SD_RECORD_LEN {
        return Err(MalformedMessage::WrongLength(bytes.len()));
    }
    let mut buf = bytes;
    let tag = buf.get_u8();
    let kind = SdKind::from_tag(tag).ok_or(MalformedMessage::UnknownKind(tag))?;
    let flags = buf.get_u8();
    if flags & !FLAG_ENDPOINT != 0 {
        return Err(MalformedMessage::ReservedBits(1));
    }
    let service_id = buf.get_u16();
    let instance_id = buf.get_u16();
    let major_version = buf.get_u8();
    let ttl_seconds = buf.get_uint(3) as u32;
    let minor_version = buf.get_u32();
    let endpoint = if flags & FLAG_ENDPOINT != 0 {
        Some(get_endpoint(&mut buf, 14)?)
    } else {
        if buf[..7].iter().any(|&b| b != 0) {
            return Err(MalformedMessage::ReservedBits(14));
        }
        buf.advance(7);
        None
    };
    let sender = get_endpoint(&mut buf, 21)?;
    let session_id = buf.get_u16();
    if buf.iter().any(|&b| b != 0) {
        return Err(MalformedMessage::ReservedBits(30));
    }

    let identity = ServiceIdentity::new(service_id, instance_id, major_version, minor_version);
    let (provider_endpoint, consumer_endpoint) = match kind {
        SdKind::Offer => (endpoint, None),
        SdKind::Subscribe | SdKind::SubscribeAck => (None, endpoint),
        SdKind::Find => (None, endpoint),
    };
    let msg = SdMessage {
        kind,
        identity,
        ttl_seconds,
        provider_endpoint,
        consumer_endpoint,
        sender,
        session_id,
    };
    msg.validate()?;
    Ok(msg)
}
