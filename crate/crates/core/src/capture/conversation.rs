use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::packet::{Endpoint, PacketRecord, Transport};

/// Canonical 5-tuple, local side first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConversationKey {
    pub local: Endpoint,
    pub remote: Endpoint,
    pub transport: Transport,
}

impl ConversationKey {
    pub fn of(p: &PacketRecord) -> Self {
        let (local, remote) = p.local_remote();
        ConversationKey {
            local,
            remote,
            transport: p.transport,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub key: ConversationKey,
    /// Sorted by timestamp; equal timestamps keep capture order.
    pub packets: Vec<PacketRecord>,
}

impl Conversation {
    pub fn first_ts(&self) -> Option<u64> {
        self.packets.first().map(|p| p.ts_us)
    }

    pub fn last_ts(&self) -> Option<u64> {
        self.packets.last().map(|p| p.ts_us)
    }

    pub fn is_tcp(&self) -> bool {
        self.key.transport == Transport::Tcp
    }
}

/// Groups direction-normalized records by canonical 5-tuple. Conversations
/// come out in order of first appearance.
pub fn assemble_conversations(records: impl IntoIterator<Item = PacketRecord>) -> Vec<Conversation> {
    let mut index: HashMap<ConversationKey, usize> = HashMap::new();
    let mut convs: Vec<Conversation> = Vec::new();
    for r in records {
        let key = ConversationKey::of(&r);
        let slot = *index.entry(key).or_insert_with(|| {
            convs.push(Conversation { key, packets: Vec::new() });
            convs.len() - 1
        });
        convs[slot].packets.push(r);
    }
    for c in &mut convs {
        // stable: ties stay in capture order
        c.packets.sort_by_key(|p| p.ts_us);
    }
    convs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{Direction, TcpFlags};

    fn rec(ts: u64, transport: Transport, remote_port: u16, dir: Direction) -> PacketRecord {
        let local = Endpoint::new([10, 0, 0, 1].into(), 50000);
        let remote = Endpoint::new([10, 0, 0, 2].into(), remote_port);
        let (src, dst) = match dir {
            Direction::Forward => (local, remote),
            Direction::Backward => (remote, local),
        };
        PacketRecord {
            ts_us: ts,
            src,
            dst,
            transport,
            frame_len: 60,
            header_len: 40,
            payload_len: 0,
            tcp_flags: TcpFlags::NONE,
            tcp_window: 0,
            direction: dir,
        }
    }

    #[test]
    fn tcp_only_session_is_one_conversation() {
        let recs = vec![
            rec(0, Transport::Tcp, 3389, Direction::Forward),
            rec(5, Transport::Tcp, 3389, Direction::Backward),
            rec(9, Transport::Tcp, 3389, Direction::Forward),
        ];
        let convs = assemble_conversations(recs);
        assert_eq!(convs.len(), 1);
        assert_eq!(convs[0].packets.len(), 3);
    }

    #[test]
    fn mixed_session_is_two_conversations() {
        let recs = vec![
            rec(0, Transport::Tcp, 3389, Direction::Forward),
            rec(1, Transport::Udp, 3389, Direction::Backward),
            rec(2, Transport::Udp, 3389, Direction::Forward),
            rec(3, Transport::Tcp, 3389, Direction::Backward),
        ];
        let convs = assemble_conversations(recs);
        assert_eq!(convs.len(), 2);
        assert!(convs[0].is_tcp());
        assert!(!convs[1].is_tcp());
    }

    #[test]
    fn distinct_remote_ports_split() {
        let recs = vec![
            rec(0, Transport::Tcp, 3389, Direction::Forward),
            rec(1, Transport::Tcp, 13389, Direction::Forward),
        ];
        assert_eq!(assemble_conversations(recs).len(), 2);
    }

    #[test]
    fn sort_is_stable_on_ties() {
        let mut a = rec(7, Transport::Tcp, 3389, Direction::Forward);
        a.frame_len = 92;
        let mut b = rec(7, Transport::Tcp, 3389, Direction::Forward);
        b.frame_len = 97;
        let c = rec(3, Transport::Tcp, 3389, Direction::Forward);
        let convs = assemble_conversations(vec![a, b, c]);
        let lens: Vec<_> = convs[0].packets.iter().map(|p| p.frame_len).collect();
        assert_eq!(lens, [60, 92, 97]);
    }

    #[test]
    fn empty_input() {
        assert!(assemble_conversations(Vec::new()).is_empty());
    }
}
