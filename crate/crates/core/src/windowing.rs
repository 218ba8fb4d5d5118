//! Fixed-length, half-open time windows over conversations, plus the label
//! sidecar format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::{Activity, ActivitySet};
use crate::capture::{Conversation, PacketRecord};

pub const DEFAULT_WINDOW_US: u64 = 30_000_000;
pub const LABEL_HEADER: [&str; 6] = ["start_us", "download", "browsing", "notepad", "youtube", "clipboard"];

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("no label row for window starting at {0}us")]
    MissingLabel(u64),
    #[error("label file line {line}: {reason}")]
    LabelSchemaError { line: u64, reason: String },
    #[error("window length must be positive")]
    ZeroLength,
}

/// Where window boundaries are anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Origin {
    /// First packet timestamp, rounded down to the whole second.
    #[default]
    FirstPacket,
    Absolute(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_us: u64,
    pub length_us: u64,
    /// Conversation slices restricted to `[start, start + length)`.
    pub conversations: Vec<Conversation>,
    pub labels: Option<ActivitySet>,
    /// The capture ends well before this window does.
    pub partial: bool,
}

impl Window {
    pub fn end_us(&self) -> u64 {
        self.start_us + self.length_us
    }

    pub fn packet_count(&self) -> usize {
        self.conversations.iter().map(|c| c.packets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.packet_count() == 0
    }

    /// All packets of all conversations merged in time order.
    pub fn packets(&self) -> Vec<&PacketRecord> {
        let mut all: Vec<&PacketRecord> = self.conversations.iter().flat_map(|c| c.packets.iter()).collect();
        all.sort_by_key(|p| p.ts_us);
        all
    }

    /// TCP packets only, time ordered.
    pub fn tcp_packets(&self) -> Vec<&PacketRecord> {
        let mut all: Vec<&PacketRecord> = self
            .conversations
            .iter()
            .filter(|c| c.is_tcp())
            .flat_map(|c| c.packets.iter())
            .collect();
        all.sort_by_key(|p| p.ts_us);
        all
    }

    pub fn has_tcp(&self) -> bool {
        self.conversations.iter().any(|c| c.is_tcp() && !c.packets.is_empty())
    }
}

/// Slices conversations into half-open windows `[origin + k·len, origin + (k+1)·len)`.
/// Windows without packets are omitted; packets before the origin are dropped.
pub fn segment_windows(conversations: &[Conversation], window_len: u64, origin: Origin) -> Result<Vec<Window>, WindowError> {
    if window_len == 0 {
        return Err(WindowError::ZeroLength);
    }
    let Some(first) = conversations.iter().filter_map(|c| c.first_ts()).min() else {
        return Ok(Vec::new());
    };
    let origin = match origin {
        Origin::FirstPacket => first - first % 1_000_000,
        Origin::Absolute(t0) => t0,
    };

    let mut slots: BTreeMap<u64, Vec<Conversation>> = BTreeMap::new();
    let mut last_ts = None;
    for conv in conversations {
        for p in conv.packets.iter().filter(|p| p.ts_us >= origin) {
            let k = (p.ts_us - origin) / window_len;
            let bucket = slots.entry(k).or_default();
            match bucket.iter_mut().find(|c| c.key == conv.key) {
                Some(c) => c.packets.push(p.clone()),
                None => bucket.push(Conversation {
                    key: conv.key,
                    packets: vec![p.clone()],
                }),
            }
            last_ts = last_ts.max(Some(p.ts_us));
        }
    }

    let last_k = slots.keys().next_back().copied();
    let windows = slots
        .into_iter()
        .map(|(k, conversations)| {
            let start_us = origin + k * window_len;
            let partial = Some(k) == last_k && last_ts.is_some_and(|t| t - start_us < window_len - window_len / 10);
            Window {
                start_us,
                length_us: window_len,
                conversations,
                labels: None,
                partial,
            }
        })
        .collect();
    Ok(windows)
}

/// Parsed label sidecar: window start → activity bits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTable {
    pub rows: BTreeMap<u64, ActivitySet>,
}

impl LabelTable {
    pub fn parse(text: &str) -> Result<Self, WindowError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let schema_err = |line: u64, reason: String| WindowError::LabelSchemaError { line, reason };
        let header = reader.headers().map_err(|e| schema_err(1, e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names != LABEL_HEADER {
            return Err(schema_err(1, format!("expected header {}, got {}", LABEL_HEADER.join(","), names.join(","))));
        }
        let mut rows = BTreeMap::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| schema_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != LABEL_HEADER.len() {
                return Err(schema_err(line, format!("expected 6 columns, found {}", rec.len())));
            }
            let start: u64 = rec[0].parse().map_err(|_| schema_err(line, format!("bad start_us {:?}", &rec[0])))?;
            let mut set = ActivitySet::EMPTY;
            for (a, field) in Activity::ALL.iter().zip(rec.iter().skip(1)) {
                match field {
                    "1" => set.insert(*a),
                    "0" => {}
                    other => return Err(schema_err(line, format!("label must be 0 or 1, got {other:?}"))),
                }
            }
            rows.insert(start, set);
        }
        Ok(LabelTable { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = LABEL_HEADER.join(",");
        out.push('\n');
        for (start, set) in &self.rows {
            out.push_str(&start.to_string());
            for b in set.0 {
                out.push_str(if b { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Attaches label bits to every window by exact start time.
pub fn attach_labels(mut windows: Vec<Window>, labels: &str) -> Result<Vec<Window>, WindowError> {
    let table = LabelTable::parse(labels)?;
    for w in &mut windows {
        let set = table.rows.get(&w.start_us).ok_or(WindowError::MissingLabel(w.start_us))?;
        w.labels = Some(*set);
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{assemble_conversations, Direction, Endpoint, TcpFlags, Transport};

    fn rec(ts: u64) -> PacketRecord {
        PacketRecord {
            ts_us: ts,
            src: Endpoint::new([10, 0, 0, 1].into(), 50000),
            dst: Endpoint::new([10, 0, 0, 2].into(), 3389),
            transport: Transport::Tcp,
            frame_len: 60,
            header_len: 40,
            payload_len: 0,
            tcp_flags: TcpFlags::NONE,
            tcp_window: 0,
            direction: Direction::Forward,
        }
    }

    #[test]
    fn ninety_seconds_makes_three_windows() {
        let convs = assemble_conversations((0..90).map(|s| rec(s * 1_000_000 + 500)));
        let ws = segment_windows(&convs, DEFAULT_WINDOW_US, Origin::FirstPacket).unwrap();
        assert_eq!(ws.len(), 3);
        assert_eq!(ws.iter().map(|w| w.packet_count()).sum::<usize>(), 90);
        assert_eq!(ws[1].start_us, 30_000_000);
        assert!(!ws[2].partial);
    }

    #[test]
    fn boundary_packet_goes_to_next_window() {
        let convs = assemble_conversations(vec![rec(0), rec(30_000_000)]);
        let ws = segment_windows(&convs, DEFAULT_WINDOW_US, Origin::Absolute(0)).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1].packets()[0].ts_us, 30_000_000);
    }

    #[test]
    fn empty_input_gives_no_windows() {
        assert!(segment_windows(&[], DEFAULT_WINDOW_US, Origin::FirstPacket).unwrap().is_empty());
    }

    #[test]
    fn gaps_are_omitted_and_tail_flagged() {
        let convs = assemble_conversations(vec![rec(1_000), rec(95_000_000)]);
        let ws = segment_windows(&convs, DEFAULT_WINDOW_US, Origin::FirstPacket).unwrap();
        assert_eq!(ws.iter().map(|w| w.start_us).collect::<Vec<_>>(), [0, 90_000_000]);
        assert!(ws[1].partial);
    }

    #[test]
    fn packets_before_origin_dropped() {
        let convs = assemble_conversations(vec![rec(1), rec(10_000_000)]);
        let ws = segment_windows(&convs, DEFAULT_WINDOW_US, Origin::Absolute(5)).unwrap();
        assert_eq!(ws.iter().map(|w| w.packet_count()).sum::<usize>(), 1);
        assert_eq!(ws[0].start_us, 5);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(matches!(segment_windows(&[], 0, Origin::FirstPacket), Err(WindowError::ZeroLength)));
    }

    #[test]
    fn labels_attach_by_start() {
        let convs = assemble_conversations(vec![rec(10)]);
        let ws = segment_windows(&convs, DEFAULT_WINDOW_US, Origin::FirstPacket).unwrap();
        let csv = "start_us,download,browsing,notepad,youtube,clipboard\n0,1,0,0,0,0\n";
        let ws = attach_labels(ws, csv).unwrap();
        assert_eq!(ws[0].labels, Some(ActivitySet::from_activities(&[Activity::Download])));
    }

    #[test]
    fn missing_label_row() {
        let convs = assemble_conversations(vec![rec(40_000_000)]);
        let ws = segment_windows(&convs, DEFAULT_WINDOW_US, Origin::Absolute(0)).unwrap();
        let csv = "start_us,download,browsing,notepad,youtube,clipboard\n0,1,0,0,0,0\n";
        assert!(matches!(attach_labels(ws, csv), Err(WindowError::MissingLabel(30_000_000))));
    }

    #[test]
    fn short_label_row_is_schema_error() {
        let csv = "start_us,download,browsing,notepad,youtube,clipboard\n0,1,0,0,0\n";
        assert!(matches!(LabelTable::parse(csv), Err(WindowError::LabelSchemaError { .. })));
    }

    #[test]
    fn label_table_roundtrip() {
        let mut t = LabelTable::default();
        t.rows.insert(0, ActivitySet::from_activities(&[Activity::Notepad, Activity::YouTube]));
        t.rows.insert(30_000_000, ActivitySet::EMPTY);
        assert_eq!(LabelTable::parse(&t.to_csv()).unwrap(), t);
    }
}
