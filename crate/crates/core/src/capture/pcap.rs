//! Classic libpcap reader and writer (microsecond timestamps, Ethernet).

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::packet::{Endpoint, LocalEndpoint, PacketRecord, RawPacket, TcpFlags, Transport};
use super::{normalize_direction, CaptureError};

pub const MAGIC_USEC: u32 = 0xa1b2_c3d4;
pub const MAGIC_USEC_SWAPPED: u32 = 0xd4c3_b2a1;
pub const LINKTYPE_ETHERNET: u32 = 1;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETH_HEADER_LEN: usize = 14;
const VLAN_TAG_LEN: usize = 4;
const IPV4_HEADER_LEN: u32 = 20;
const TCP_HEADER_LEN: u32 = 20;
const UDP_HEADER_LEN: u32 = 8;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

/// Why a frame was not turned into a record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub non_ipv4: usize,
    pub non_tcp_udp: usize,
    pub fragments: usize,
    pub stacked_vlan: usize,
    pub short_frames: usize,
    /// Frames whose endpoints do not involve the local endpoint.
    pub foreign: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.non_ipv4 + self.non_tcp_udp + self.fragments + self.stacked_vlan + self.short_frames + self.foreign
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCapture {
    pub records: Vec<PacketRecord>,
    pub skipped: SkipCounts,
}

#[derive(Debug, Clone, Copy)]
struct Endian {
    big: bool,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let arr = [b[0], b[1], b[2], b[3]];
        if self.big {
            u32::from_be_bytes(arr)
        } else {
            u32::from_le_bytes(arr)
        }
    }
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn ipv4(b: &[u8]) -> Ipv4Addr {
    Ipv4Addr::new(b[0], b[1], b[2], b[3])
}

enum Decoded {
    Packet(RawPacket),
    Skip(fn(&mut SkipCounts)),
}

/// Decodes every TCP/UDP-over-IPv4 frame, in file order, without assigning
/// direction.
pub fn read_raw_packets(bytes: &[u8]) -> Result<(Vec<RawPacket>, SkipCounts), CaptureError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::MalformedCapture(format!(
            "global header needs {GLOBAL_HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let magic = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let endian = match magic {
        MAGIC_USEC => Endian { big: false },
        MAGIC_USEC_SWAPPED => Endian { big: true },
        other => {
            return Err(CaptureError::MalformedCapture(format!(
                "unsupported magic {other:#010x} (only microsecond pcap)"
            )))
        }
    };
    let linktype = endian.u32(&bytes[20..24]);
    if linktype != LINKTYPE_ETHERNET {
        return Err(CaptureError::MalformedCapture(format!("link type {linktype} is not Ethernet")));
    }

    let mut packets = Vec::new();
    let mut skipped = SkipCounts::default();
    let mut offset = GLOBAL_HEADER_LEN;
    let mut index = 0usize;
    while offset < bytes.len() {
        let remaining = bytes.len() - offset;
        if remaining < RECORD_HEADER_LEN {
            return Err(CaptureError::TruncatedRecord {
                index,
                offset,
                needed: RECORD_HEADER_LEN,
                available: remaining,
            });
        }
        let hdr = &bytes[offset..offset + RECORD_HEADER_LEN];
        let ts_sec = endian.u32(&hdr[0..4]) as u64;
        let ts_usec = endian.u32(&hdr[4..8]) as u64;
        let incl_len = endian.u32(&hdr[8..12]) as usize;
        let orig_len = endian.u32(&hdr[12..16]);
        let body_start = offset + RECORD_HEADER_LEN;
        if incl_len > bytes.len() - body_start {
            return Err(CaptureError::TruncatedRecord {
                index,
                offset,
                needed: incl_len,
                available: bytes.len() - body_start,
            });
        }
        let frame = &bytes[body_start..body_start + incl_len];
        match decode_frame(frame, ts_sec * 1_000_000 + ts_usec, orig_len.max(incl_len as u32)) {
            Decoded::Packet(p) => packets.push(p),
            Decoded::Skip(bump) => bump(&mut skipped),
        }
        offset = body_start + incl_len;
        index += 1;
    }
    Ok((packets, skipped))
}

fn decode_frame(frame: &[u8], ts_us: u64, frame_len: u32) -> Decoded {
    if frame.len() < ETH_HEADER_LEN {
        return Decoded::Skip(|s| s.short_frames += 1);
    }
    let mut ethertype = be16(&frame[12..14]);
    let mut l3 = ETH_HEADER_LEN;
    if ethertype == ETHERTYPE_QINQ {
        return Decoded::Skip(|s| s.stacked_vlan += 1);
    }
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < ETH_HEADER_LEN + VLAN_TAG_LEN {
            return Decoded::Skip(|s| s.short_frames += 1);
        }
        ethertype = be16(&frame[16..18]);
        l3 += VLAN_TAG_LEN;
        if ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
            return Decoded::Skip(|s| s.stacked_vlan += 1);
        }
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Decoded::Skip(|s| s.non_ipv4 += 1);
    }
    let ip = &frame[l3..];
    if ip.len() < IPV4_HEADER_LEN as usize || ip[0] >> 4 != 4 {
        return Decoded::Skip(|s| s.non_ipv4 += 1);
    }
    let ihl = u32::from(ip[0] & 0x0f) * 4;
    if ihl < IPV4_HEADER_LEN || ip.len() < ihl as usize {
        return Decoded::Skip(|s| s.short_frames += 1);
    }
    let total_len = u32::from(be16(&ip[2..4]));
    let frag = be16(&ip[6..8]) & 0x1fff;
    if frag != 0 {
        return Decoded::Skip(|s| s.fragments += 1);
    }
    let src_ip = ipv4(&ip[12..16]);
    let dst_ip = ipv4(&ip[16..20]);
    let l4 = &ip[ihl as usize..];
    let (transport, thl, src_port, dst_port, flags, window) = match ip[9] {
        6 => {
            if l4.len() < TCP_HEADER_LEN as usize {
                return Decoded::Skip(|s| s.short_frames += 1);
            }
            let thl = u32::from(l4[12] >> 4) * 4;
            if thl < TCP_HEADER_LEN {
                return Decoded::Skip(|s| s.short_frames += 1);
            }
            (Transport::Tcp, thl, be16(&l4[0..2]), be16(&l4[2..4]), TcpFlags(l4[13]), be16(&l4[14..16]))
        }
        17 => {
            if l4.len() < UDP_HEADER_LEN as usize {
                return Decoded::Skip(|s| s.short_frames += 1);
            }
            (Transport::Udp, UDP_HEADER_LEN, be16(&l4[0..2]), be16(&l4[2..4]), TcpFlags::NONE, 0)
        }
        _ => return Decoded::Skip(|s| s.non_tcp_udp += 1),
    };
    let header_len = ihl + thl;
    let payload_len = total_len.saturating_sub(header_len).min(frame_len);
    Decoded::Packet(RawPacket {
        ts_us,
        src: Endpoint::new(src_ip, src_port),
        dst: Endpoint::new(dst_ip, dst_port),
        transport,
        frame_len,
        header_len,
        payload_len,
        tcp_flags: flags,
        tcp_window: window,
    })
}

/// Parses a capture and assigns directions relative to `local`. Frames that
/// involve neither side of `local` are counted as foreign and skipped.
pub fn parse_pcap(bytes: &[u8], local: &LocalEndpoint) -> Result<ParsedCapture, CaptureError> {
    let (raw, mut skipped) = read_raw_packets(bytes)?;
    let mut records = Vec::with_capacity(raw.len());
    for p in raw {
        match normalize_direction(p, local) {
            Ok(r) => records.push(r),
            Err(CaptureError::UnknownEndpoint { .. }) => skipped.foreign += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(ParsedCapture { records, skipped })
}

/// Streams frames into an in-memory classic pcap (little-endian,
/// microsecond, Ethernet). Payload and padding bytes are zero.
#[derive(Debug)]
pub struct PcapWriter {
    buf: Vec<u8>,
}

impl Default for PcapWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl PcapWriter {
    pub fn new() -> Self {
        let mut buf = Vec::with_capacity(1 << 16);
        buf.extend_from_slice(&MAGIC_USEC.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(&4u16.to_le_bytes());
        buf.extend_from_slice(&0i32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&65_535u32.to_le_bytes());
        buf.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        PcapWriter { buf }
    }

    pub fn write(&mut self, p: &RawPacket) -> Result<(), CaptureError> {
        let thl = p.header_len.checked_sub(IPV4_HEADER_LEN).ok_or_else(|| invalid(p, "header shorter than IPv4"))?;
        match p.transport {
            Transport::Tcp if !(TCP_HEADER_LEN..=60).contains(&thl) || thl % 4 != 0 => {
                return Err(invalid(p, "TCP header length must be 20..=60 and a multiple of 4"))
            }
            Transport::Udp if thl != UDP_HEADER_LEN => return Err(invalid(p, "UDP header must be 8 bytes")),
            Transport::Udp if !p.tcp_flags.is_empty() => return Err(invalid(p, "UDP datagram with TCP flags")),
            _ => {}
        }
        let ip_total = p.header_len + p.payload_len;
        if ip_total > u32::from(u16::MAX) {
            return Err(invalid(p, "IPv4 total length overflow"));
        }
        let min_frame = ETH_HEADER_LEN as u32 + ip_total;
        if p.frame_len < min_frame {
            return Err(invalid(p, "frame_len smaller than headers plus payload"));
        }

        let frame_len = p.frame_len as usize;
        let ts_sec = u32::try_from(p.ts_us / 1_000_000).map_err(|_| invalid(p, "timestamp beyond 2106"))?;
        let ts_usec = (p.ts_us % 1_000_000) as u32;
        self.buf.extend_from_slice(&ts_sec.to_le_bytes());
        self.buf.extend_from_slice(&ts_usec.to_le_bytes());
        self.buf.extend_from_slice(&p.frame_len.to_le_bytes());
        self.buf.extend_from_slice(&p.frame_len.to_le_bytes());

        let start = self.buf.len();
        self.buf.resize(start + frame_len, 0);
        let f = &mut self.buf[start..];
        f[0..6].copy_from_slice(&[0x02, 0, 0, 0, 0, 0x02]);
        f[6..12].copy_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        f[12..14].copy_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

        let ip = &mut f[ETH_HEADER_LEN..];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&(ip_total as u16).to_be_bytes());
        ip[6..8].copy_from_slice(&0x4000u16.to_be_bytes());
        ip[8] = 64;
        ip[9] = p.transport.ip_protocol();
        ip[12..16].copy_from_slice(&p.src.addr.octets());
        ip[16..20].copy_from_slice(&p.dst.addr.octets());
        let csum = ipv4_checksum(&ip[..IPV4_HEADER_LEN as usize]);
        ip[10..12].copy_from_slice(&csum.to_be_bytes());

        let l4 = &mut ip[IPV4_HEADER_LEN as usize..];
        l4[0..2].copy_from_slice(&p.src.port.to_be_bytes());
        l4[2..4].copy_from_slice(&p.dst.port.to_be_bytes());
        match p.transport {
            Transport::Tcp => {
                l4[12] = ((thl / 4) as u8) << 4;
                l4[13] = p.tcp_flags.0;
                l4[14..16].copy_from_slice(&p.tcp_window.to_be_bytes());
            }
            Transport::Udp => {
                l4[4..6].copy_from_slice(&((UDP_HEADER_LEN + p.payload_len) as u16).to_be_bytes());
            }
        }
        Ok(())
    }

    pub fn write_all<'a>(&mut self, packets: impl IntoIterator<Item = &'a RawPacket>) -> Result<(), CaptureError> {
        packets.into_iter().try_for_each(|p| self.write(p))
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

fn invalid(p: &RawPacket, why: &'static str) -> CaptureError {
    CaptureError::InvalidRecord {
        ts_us: p.ts_us,
        reason: why,
    }
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .enumerate()
        .filter(|(i, _)| *i != 5)
        .map(|(_, c)| u32::from(be16(c)))
        .sum();
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
