//! Straightforward per-attribute reference for the flow-meter block and the
//! frame markers. Every statistic is recomputed from explicit lists.

use std::collections::BTreeMap;

use rdpscope_core::capture::{PacketRecord, TcpFlags, Transport};
use rdpscope_core::{Direction, Window};

const ACTIVITY_TIMEOUT: u64 = 5_000_000;
const BULK_MIN: usize = 4;
const BULK_GAP: u64 = 1_000_000;
const SUBFLOW_GAP: u64 = 1_000_000;

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().cloned().reduce(f64::max).unwrap_or(0.0)
}

fn min(v: &[f64]) -> f64 {
    v.iter().cloned().reduce(f64::min).unwrap_or(0.0)
}

fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn gaps(ts: &[u64]) -> Vec<f64> {
    ts.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
}

/// (bulk count, bytes, packets, duration) for one direction. A run is a
/// maximal sequence of consecutive payload packets in the same direction
/// with gaps of at most 1 s; zero-payload packets are invisible to runs.
fn bulks(pkts: &[&PacketRecord], dir: Direction) -> (f64, f64, f64, f64) {
    let data: Vec<&&PacketRecord> = pkts.iter().filter(|p| p.payload_len > 0).collect();
    let mut runs: Vec<Vec<&PacketRecord>> = Vec::new();
    for p in data {
        let extend = runs.last().and_then(|r| r.last()).is_some_and(|last: &&PacketRecord| {
            last.direction == p.direction && p.ts_us - last.ts_us <= BULK_GAP
        });
        if extend {
            runs.last_mut().unwrap().push(p);
        } else {
            runs.push(vec![p]);
        }
    }
    let kept: Vec<&Vec<&PacketRecord>> = runs
        .iter()
        .filter(|r| r.len() >= BULK_MIN && r[0].direction == dir)
        .collect();
    let count = kept.len() as f64;
    let bytes: f64 = kept.iter().flat_map(|r| r.iter()).map(|p| p.payload_len as f64).sum();
    let packets: f64 = kept.iter().map(|r| r.len() as f64).sum();
    let duration: f64 = kept.iter().map(|r| (r.last().unwrap().ts_us - r[0].ts_us) as f64).sum();
    (count, bytes, packets, duration)
}

pub fn flow_oracle(w: &Window) -> BTreeMap<&'static str, f64> {
    let pkts: Vec<&PacketRecord> = w.packets();
    let fwd: Vec<&PacketRecord> = pkts.iter().copied().filter(|p| p.direction == Direction::Forward).collect();
    let bwd: Vec<&PacketRecord> = pkts.iter().copied().filter(|p| p.direction == Direction::Backward).collect();
    let tcp: Vec<&PacketRecord> = pkts.iter().copied().filter(|p| p.transport == Transport::Tcp).collect();
    let lens = |v: &[&PacketRecord]| v.iter().map(|p| p.payload_len as f64).collect::<Vec<_>>();
    let times = |v: &[&PacketRecord]| v.iter().map(|p| p.ts_us).collect::<Vec<_>>();
    let (all_l, fwd_l, bwd_l) = (lens(&pkts), lens(&fwd), lens(&bwd));
    let (flow_g, fwd_g, bwd_g) = (gaps(&times(&pkts)), gaps(&times(&fwd)), gaps(&times(&bwd)));
    let duration = (pkts.last().unwrap().ts_us - pkts[0].ts_us) as f64;
    let secs = duration / 1e6;
    let per_s = |x: f64| if duration == 0.0 { 0.0 } else { x / secs };
    let flag = |bit: u8| tcp.iter().filter(|p| p.tcp_flags.0 & bit != 0).count() as f64;
    let dir_flag = |d: Direction, bit: u8| {
        tcp.iter()
            .filter(|p| p.direction == d && p.tcp_flags.0 & bit != 0)
            .count() as f64
    };
    let init_win = |d: Direction| {
        tcp.iter()
            .find(|p| p.direction == d)
            .map_or(-1.0, |p| p.tcp_window as f64)
    };

    // active periods: maximal runs separated by gaps above the timeout
    let mut segments: Vec<(u64, u64)> = vec![(pkts[0].ts_us, pkts[0].ts_us)];
    let mut idle = Vec::new();
    for pair in pkts.windows(2) {
        let g = pair[1].ts_us - pair[0].ts_us;
        if g > ACTIVITY_TIMEOUT {
            idle.push(g as f64);
            segments.push((pair[1].ts_us, pair[1].ts_us));
        } else {
            segments.last_mut().unwrap().1 = pair[1].ts_us;
        }
    }
    let active: Vec<f64> = segments
        .iter()
        .filter(|(a, b)| b > a)
        .map(|(a, b)| (b - a) as f64)
        .collect();

    let subflows = 1.0 + flow_g.iter().filter(|g| **g > SUBFLOW_GAP as f64).count() as f64;
    let (fb_n, fb_bytes, fb_pkts, fb_dur) = bulks(&pkts, Direction::Forward);
    let (bb_n, bb_bytes, bb_pkts, bb_dur) = bulks(&pkts, Direction::Backward);
    let rate = |bytes: f64, dur: f64| if dur == 0.0 { 0.0 } else { bytes / (dur / 1e6) };
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let hdr = |v: &[&PacketRecord]| v.iter().map(|p| p.header_len as f64).sum::<f64>();

    let mut m = BTreeMap::new();
    m.insert("ACK Flag Cnt", flag(TcpFlags::ACK));
    m.insert("Active Max", max(&active));
    m.insert("Active Mean", mean(&active));
    m.insert("Active Min", min(&active));
    m.insert("Active Std", var(&active).sqrt());
    m.insert("Bwd Blk Rate Avg", rate(bb_bytes, bb_dur));
    m.insert("Bwd Byts/b Avg", div(bb_bytes, bb_n));
    m.insert("Bwd Header Len", hdr(&bwd));
    m.insert("Bwd IAT Max", max(&bwd_g));
    m.insert("Bwd IAT Mean", mean(&bwd_g));
    m.insert("Bwd IAT Min", min(&bwd_g));
    m.insert("Bwd IAT Std", var(&bwd_g).sqrt());
    m.insert("Bwd IAT Tot", sum(&bwd_g));
    m.insert("Bwd PSH Flags", dir_flag(Direction::Backward, TcpFlags::PSH));
    m.insert("Bwd Pkt Len Max", max(&bwd_l));
    m.insert("Bwd Pkt Len Mean", mean(&bwd_l));
    m.insert("Bwd Pkt Len Min", min(&bwd_l));
    m.insert("Bwd Pkt Len Std", var(&bwd_l).sqrt());
    m.insert("Bwd Pkts/b Avg", div(bb_pkts, bb_n));
    m.insert("Bwd Pkts/s", per_s(bwd.len() as f64));
    m.insert("Bwd Seg Size Avg", mean(&bwd_l));
    m.insert("Bwd URG Flags", dir_flag(Direction::Backward, TcpFlags::URG));
    m.insert("CWE Flag Count", flag(TcpFlags::CWR));
    m.insert("ECE Flag Cnt", flag(TcpFlags::ECE));
    m.insert("FIN Flag Cnt", flag(TcpFlags::FIN));
    m.insert("Flow Byts/s", per_s(sum(&all_l)));
    m.insert("Flow Duration", duration);
    m.insert("Flow IAT Max", max(&flow_g));
    m.insert("Flow IAT Mean", mean(&flow_g));
    m.insert("Flow IAT Min", min(&flow_g));
    m.insert("Flow IAT Std", var(&flow_g).sqrt());
    m.insert("Flow Pkts/s", per_s(pkts.len() as f64));
    m.insert("Fwd Blk Rate Avg", rate(fb_bytes, fb_dur));
    m.insert("Fwd Byts/b Avg", div(fb_bytes, fb_n));
    m.insert("Fwd Header Len", hdr(&fwd));
    m.insert("Fwd IAT Max", max(&fwd_g));
    m.insert("Fwd IAT Mean", mean(&fwd_g));
    m.insert("Fwd IAT Min", min(&fwd_g));
    m.insert("Fwd IAT Std", var(&fwd_g).sqrt());
    m.insert("Fwd IAT Tot", sum(&fwd_g));
    m.insert("Fwd PSH Flags", dir_flag(Direction::Forward, TcpFlags::PSH));
    m.insert("Fwd Pkt Len Max", max(&fwd_l));
    m.insert("Fwd Pkt Len Mean", mean(&fwd_l));
    m.insert("Fwd Pkt Len Min", min(&fwd_l));
    m.insert("Fwd Pkt Len Std", var(&fwd_l).sqrt());
    m.insert("Fwd Pkts/b Avg", div(fb_pkts, fb_n));
    m.insert("Fwd Pkts/s", per_s(fwd.len() as f64));
    m.insert("Fwd Seg Size Avg", mean(&fwd_l));
    m.insert("Fwd URG Flags", dir_flag(Direction::Forward, TcpFlags::URG));
    m.insert("Idle Max", max(&idle));
    m.insert("Idle Mean", mean(&idle));
    m.insert("Idle Min", min(&idle));
    m.insert("Idle Std", var(&idle).sqrt());
    m.insert("Init Bwd Win Byts", init_win(Direction::Backward));
    m.insert("Init Fwd Win Byts", init_win(Direction::Forward));
    m.insert("PSH Flag Cnt", flag(TcpFlags::PSH));
    m.insert("Pkt Len Max", max(&all_l));
    m.insert("Pkt Len Mean", mean(&all_l));
    m.insert("Pkt Len Min", min(&all_l));
    m.insert("Pkt Len Std", var(&all_l).sqrt());
    m.insert("Pkt Len Var", var(&all_l));
    m.insert("Pkt Size Avg", mean(&all_l));
    m.insert("RST Flag Cnt", flag(TcpFlags::RST));
    m.insert("SYN Flag Cnt", flag(TcpFlags::SYN));
    m.insert("Subflow Bwd Byts", sum(&bwd_l) / subflows);
    m.insert("Subflow Bwd Pkts", bwd.len() as f64 / subflows);
    m.insert("Subflow Fwd Byts", sum(&fwd_l) / subflows);
    m.insert("Subflow Fwd Pkts", fwd.len() as f64 / subflows);
    m.insert("Tot Bwd Pkts", bwd.len() as f64);
    m.insert("Tot Fwd Pkts", fwd.len() as f64);
    m.insert("TotLen Bwd Pkts", sum(&bwd_l));
    m.insert("TotLen Fwd Pkts", sum(&fwd_l));
    m.insert("URG Flag Cnt", flag(TcpFlags::URG));
    m
}

/// Marker values keyed by name, from the bounds spelled in each name.
pub fn marker_oracle(w: &Window) -> BTreeMap<String, f64> {
    let pkts = w.packets();
    let mut m = BTreeMap::new();
    for name in rdpscope_core::flowstats::MARKER_NAMES {
        let v = if let Some(rest) = name.strip_suffix("PUSH") {
            let d = if rest == "Fwd" { Direction::Forward } else { Direction::Backward };
            pkts.iter()
                .filter(|p| p.transport == Transport::Tcp && p.direction == d && p.tcp_flags.0 & TcpFlags::PSH != 0)
                .count()
        } else {
            let d = if name.starts_with("Fwd") { Direction::Forward } else { Direction::Backward };
            let range = &name["FwdFrame".len()..];
            let (lo, hi) = range.split_once('-').unwrap();
            let (lo, hi): (u32, u32) = (lo.parse().unwrap(), hi.parse().unwrap());
            pkts.iter()
                .filter(|p| p.direction == d && p.frame_len >= lo && p.frame_len <= hi)
                .count()
        };
        m.insert(name.to_string(), v as f64);
    }
    m
}

/// Attributes that are integer-valued by construction: counts, totals,
/// extrema, durations and window sizes.
pub fn is_integral(name: &str) -> bool {
    const KEYS: [&str; 10] = ["Max", "Min", "Tot", "Cnt", "Count", "Flags", "Header Len", "Duration", "Init", "Frame"];
    KEYS.iter().any(|k| name.contains(k)) || name.ends_with("PUSH")
}

/// Exact equality for integral attributes, `rel` relative error otherwise.
pub fn agrees(name: &str, actual: f64, expected: f64, rel: f64) -> bool {
    if is_integral(name) {
        return actual == expected;
    }
    let scale = actual.abs().max(expected.abs());
    (actual - expected).abs() <= rel * scale
}
