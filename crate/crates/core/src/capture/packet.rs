use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CaptureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub addr: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(addr: Ipv4Addr, port: u16) -> Self {
        Endpoint { addr, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.addr, self.port)
    }
}

/// The configured client side of the session. Direction is decided by
/// address; a port, when given, additionally filters which flows count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalEndpoint {
    pub addr: Ipv4Addr,
    pub port: Option<u16>,
}

impl LocalEndpoint {
    pub fn new(addr: Ipv4Addr) -> Self {
        LocalEndpoint { addr, port: None }
    }

    pub fn with_port(addr: Ipv4Addr, port: u16) -> Self {
        LocalEndpoint { addr, port: Some(port) }
    }

    fn matches(&self, ep: &Endpoint) -> bool {
        ep.addr == self.addr && self.port.is_none_or(|p| p == ep.port)
    }
}

impl FromStr for LocalEndpoint {
    type Err = CaptureError;

    /// Accepts `a.b.c.d` or `a.b.c.d:port`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CaptureError::InvalidEndpoint(s.to_string());
        match s.split_once(':') {
            Some((ip, port)) => Ok(LocalEndpoint::with_port(
                ip.parse().map_err(|_| bad())?,
                port.parse().map_err(|_| bad())?,
            )),
            None => Ok(LocalEndpoint::new(s.parse().map_err(|_| bad())?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transport {
    Tcp,
    Udp,
}

impl Transport {
    pub fn ip_protocol(self) -> u8 {
        match self {
            Transport::Tcp => 6,
            Transport::Udp => 17,
        }
    }
}

/// TCP flag byte, bit layout as on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;
    pub const ECE: u8 = 0x40;
    pub const CWR: u8 = 0x80;

    pub const NONE: TcpFlags = TcpFlags(0);

    pub fn has(self, flag: u8) -> bool {
        self.0 & flag != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, flag: u8) -> Self {
        TcpFlags(self.0 | flag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Local to remote.
    Forward,
    /// Remote to local.
    Backward,
}

/// A decoded frame before direction normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPacket {
    pub ts_us: u64,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub transport: Transport,
    /// Bytes on the wire.
    pub frame_len: u32,
    /// IP plus transport header bytes.
    pub header_len: u32,
    /// Bytes above the transport header.
    pub payload_len: u32,
    pub tcp_flags: TcpFlags,
    pub tcp_window: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts_us: u64,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub transport: Transport,
    pub frame_len: u32,
    pub header_len: u32,
    pub payload_len: u32,
    pub tcp_flags: TcpFlags,
    pub tcp_window: u16,
    pub direction: Direction,
}

impl PacketRecord {
    pub fn is_forward(&self) -> bool {
        self.direction == Direction::Forward
    }

    pub fn is_tcp(&self) -> bool {
        self.transport == Transport::Tcp
    }

    /// The (local, remote) endpoint pair.
    pub fn local_remote(&self) -> (Endpoint, Endpoint) {
        match self.direction {
            Direction::Forward => (self.src, self.dst),
            Direction::Backward => (self.dst, self.src),
        }
    }

    pub fn raw(&self) -> RawPacket {
        RawPacket {
            ts_us: self.ts_us,
            src: self.src,
            dst: self.dst,
            transport: self.transport,
            frame_len: self.frame_len,
            header_len: self.header_len,
            payload_len: self.payload_len,
            tcp_flags: self.tcp_flags,
            tcp_window: self.tcp_window,
        }
    }
}

/// Assigns a direction relative to the local endpoint.
pub fn normalize_direction(raw: RawPacket, local: &LocalEndpoint) -> Result<PacketRecord, CaptureError> {
    let direction = if local.matches(&raw.src) {
        Direction::Forward
    } else if local.matches(&raw.dst) {
        Direction::Backward
    } else {
        return Err(CaptureError::UnknownEndpoint {
            src: raw.src,
            dst: raw.dst,
        });
    };
    Ok(PacketRecord {
        ts_us: raw.ts_us,
        src: raw.src,
        dst: raw.dst,
        transport: raw.transport,
        frame_len: raw.frame_len,
        header_len: raw.header_len,
        payload_len: raw.payload_len,
        tcp_flags: raw.tcp_flags,
        tcp_window: raw.tcp_window,
        direction,
    })
}
