//! Packet capture decoding and conversation assembly.

mod conversation;
mod packet;
mod pcap;

pub use conversation::{assemble_conversations, Conversation, ConversationKey};
pub use packet::{normalize_direction, Direction, Endpoint, LocalEndpoint, PacketRecord, RawPacket, TcpFlags, Transport};
pub use pcap::{parse_pcap, read_raw_packets, ParsedCapture, PcapWriter, SkipCounts};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("malformed capture: {0}")]
    MalformedCapture(String),
    #[error("record {index} at byte {offset} needs {needed} bytes, only {available} remain")]
    TruncatedRecord {
        index: usize,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("packet {src} -> {dst} does not involve the local endpoint")]
    UnknownEndpoint { src: Endpoint, dst: Endpoint },
    #[error("invalid local endpoint {0:?}")]
    InvalidEndpoint(String),
    #[error("cannot encode packet at {ts_us}us: {reason}")]
    InvalidRecord { ts_us: u64, reason: &'static str },
}
