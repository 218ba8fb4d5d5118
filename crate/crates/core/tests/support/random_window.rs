use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdpscope_core::capture::{assemble_conversations, Endpoint, PacketRecord, TcpFlags, Transport};
use rdpscope_core::windowing::{segment_windows, Origin};
use rdpscope_core::{Direction, Window};

/// A window of 1..=`max_packets` packets over TCP and UDP with clustered
/// timestamps, so that activity, subflow and bulk boundaries all occur.
pub fn random_window(seed: u64, max_packets: usize) -> Window {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_packets);
    let local = Endpoint::new([10, 0, 0, 2].into(), 50000);
    let remote = Endpoint::new([10, 0, 0, 1].into(), 3389);
    let udp_local = Endpoint::new([10, 0, 0, 2].into(), 50001);
    let use_udp = rng.random_bool(0.5);
    let mut t: u64 = rng.random_range(0..1_000_000);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        // mostly tight gaps, sometimes >1 s, occasionally >5 s
        let gap = match rng.random_range(0..20) {
            0 => rng.random_range(5_000_001..8_000_000),
            1 | 2 => rng.random_range(1_000_001..3_000_000),
            3..=5 => 0,
            _ => rng.random_range(1..400_000),
        };
        t += gap;
        if t >= 30_000_000 {
            break;
        }
        let direction = if rng.random_bool(0.5) { Direction::Forward } else { Direction::Backward };
        let transport = if use_udp && rng.random_bool(0.3) { Transport::Udp } else { Transport::Tcp };
        let (lo, rem) = match transport {
            Transport::Tcp => (local, remote),
            Transport::Udp => (udp_local, remote),
        };
        let (src, dst) = match direction {
            Direction::Forward => (lo, rem),
            Direction::Backward => (rem, lo),
        };
        let payload_len = if rng.random_bool(0.3) { 0 } else { rng.random_range(1..1461) };
        let header_len = match transport {
            Transport::Tcp => 20 + 4 * rng.random_range(5..=15u32),
            Transport::Udp => 28,
        };
        let tcp_flags = match transport {
            Transport::Tcp => TcpFlags(rng.random()),
            Transport::Udp => TcpFlags::NONE,
        };
        out.push(PacketRecord {
            ts_us: t,
            src,
            dst,
            transport,
            frame_len: (14 + header_len + payload_len).max(60),
            header_len,
            payload_len,
            tcp_flags,
            tcp_window: if transport == Transport::Tcp { rng.random() } else { 0 },
            direction,
        });
    }
    let convs = assemble_conversations(out);
    let mut ws = segment_windows(&convs, 30_000_000, Origin::Absolute(0)).expect("positive length");
    ws.remove(0)
}
