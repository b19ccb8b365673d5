use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};

use bytes::Bytes;

use crate::sd_codec::{self, Endpoint, MalformedMessage, SdMessage, SD_PORT};

/// Ethernet (14) + IPv4 (20) + UDP (8) + SOME/IP header (16) + FCS (4).
pub const FRAME_OVERHEAD_BYTES: usize = 62;
/// Minimum Ethernet frame including header and FCS.
pub const MIN_FRAME_BYTES: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Locally administered unicast MAC derived from a host address.
    pub fn for_host(address: Ipv4Addr) -> Self {
        let [a, b, c, d] = address.octets();
        MacAddr([0x02, 0x00, a, b, c, d])
    }

    /// IPv4 multicast MAC (01:00:5e + low 23 address bits).
    pub fn for_group(group: Ipv4Addr) -> Self {
        let [_, b, c, d] = group.octets();
        MacAddr([0x01, 0x00, 0x5e, b & 0x7f, c, d])
    }

    pub fn for_destination(address: Ipv4Addr) -> Self {
        if address.is_multicast() {
            Self::for_group(address)
        } else {
            Self::for_host(address)
        }
    }

    pub fn is_multicast(&self) -> bool {
        self.0[0] & 0x01 != 0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", m[0], m[1], m[2], m[3], m[4], m[5])
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A UDP/IPv4 Ethernet frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src: SocketAddrV4,
    pub dst: SocketAddrV4,
    pub payload: Bytes,
}

impl Frame {
    pub fn new(src: SocketAddrV4, dst: SocketAddrV4, payload: Bytes) -> Self {
        Self {
            src_mac: MacAddr::for_host(*src.ip()),
            dst_mac: MacAddr::for_destination(*dst.ip()),
            src,
            dst,
            payload,
        }
    }

    /// Frame carrying `msg` from its sender to `to`.
    pub fn sd(msg: &SdMessage, to: Endpoint) -> Self {
        Self::new(
            SocketAddrV4::new(msg.sender.address, msg.sender.port),
            SocketAddrV4::new(to.address, to.port),
            Bytes::from(sd_codec::encode(msg)),
        )
    }

    pub fn is_sd(&self) -> bool {
        self.dst.port() == SD_PORT
    }

    pub fn decode_sd(&self) -> Result<SdMessage, MalformedMessage> {
        sd_codec::decode(&self.payload)
    }

    /// On-wire size including header and FCS, padded to the Ethernet minimum.
    pub fn length_bytes(&self) -> usize {
        (FRAME_OVERHEAD_BYTES + self.payload.len()).max(MIN_FRAME_BYTES)
    }

    pub fn length_bits(&self) -> u64 {
        self.length_bytes() as u64 * 8
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)?;
        if self.is_sd() {
            if let Ok(msg) = self.decode_sd() {
                write!(f, " {}({})", msg.kind.name(), msg.identity)?;
                if msg.ttl_seconds == 0 {
                    f.write_str(" ttl=0")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sd_codec::ServiceIdentity;

    #[test]
    fn sd_frames_have_fixed_size() {
        let msg = SdMessage::find(ServiceIdentity::any(1), 3, Endpoint::sd(Ipv4Addr::new(10, 0, 2, 1)), 1);
        let frame = Frame::sd(&msg, Endpoint::sd_multicast());
        assert_eq!(frame.length_bytes(), 94);
        assert_eq!(frame.length_bits(), 752);
        assert!(frame.dst_mac.is_multicast());
        assert_eq!(frame.dst_mac.to_string(), "01:00:5e:60:e0:f5");
        assert_eq!(frame.decode_sd().unwrap(), msg);
    }

    #[test]
    fn short_frames_are_padded() {
        let frame = Frame::new(
            SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 1), 1),
            SocketAddrV4::new(Ipv4Addr::new(10, 0, 0, 2), 2),
            Bytes::new(),
        );
        assert_eq!(frame.length_bytes(), MIN_FRAME_BYTES);
        assert_eq!(frame.length_bits(), 512);
        assert!(!frame.dst_mac.is_multicast());
    }
}
