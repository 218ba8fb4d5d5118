//! Seeded generator of labelled RDP-like captures.
//!
//! Every activity leaves a fixed frame-size signature:
//!
//! | activity  | signature |
//! |-----------|-----------|
//! | Notepad   | two forward 92-byte frames per keystroke, backward PSH echo of 49..=1200 payload bytes |
//! | Browsing  | forward 104-byte moves, forward 97-byte clicks, backward 160..=639-byte page bursts after clicks |
//! | Download  | backward 1280..=1514-byte frames at the configured throughput, forward 60-byte ACKs |
//! | YouTube   | periodic backward bursts of 640..=1279-byte frames |
//! | Clipboard | forward 1280..=1514-byte transfers answered by backward 300..=600-byte frames |
//!
//! Both directions also exchange 60-byte keepalives once per second. Forward
//! 92-, 97- and 104-byte frames are emitted only for scripted input events.
//! With [`SynthTransport::Mixed`], bulk screen traffic moves to a UDP
//! conversation while input stays on TCP.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::{Activity, ActivitySet};
use crate::capture::{CaptureError, Endpoint, PcapWriter, RawPacket, TcpFlags, Transport};
use crate::windowing::LabelTable;

pub const WINDOW_SECONDS: u64 = 30;
pub const WINDOW_US: u64 = WINDOW_SECONDS * 1_000_000;
/// Capture start, 2020-09-13T12:26:40Z, on a whole second.
pub const BASE_EPOCH_US: u64 = 1_600_000_000_000_000;
pub const LOCAL_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
pub const REMOTE_ADDR: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
pub const LOCAL_PORT: u16 = 50_000;
pub const RDP_PORT: u16 = 3389;

const ETH: u32 = 14;
const TCP_HDR: u32 = 40;
const UDP_HDR: u32 = 28;
const MIN_FRAME: u32 = 60;
const FWD_WINDOW: u16 = 64_240;
const BWD_WINDOW: u16 = 65_535;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile list is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthTransport {
    #[default]
    Tcp,
    /// TCP for input plus a UDP conversation for bulk screen traffic.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptAction {
    Key,
    Click,
    Move,
}

/// An input event at a fixed offset from the capture start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub at_ms: u64,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub activities: Vec<Activity>,
    pub duration_s: u64,
    /// Keystrokes per second.
    #[serde(default)]
    pub typing_rate: f64,
    #[serde(default)]
    pub mouse_move_rate: f64,
    #[serde(default)]
    pub click_rate: f64,
    /// Bytes per second of backward bulk frames.
    #[serde(default)]
    pub download_throughput: f64,
    /// Seconds between video bursts.
    #[serde(default)]
    pub video_burst_period: f64,
    #[serde(default)]
    pub clipboard_event_count: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub transport: SynthTransport,
    /// When non-empty, replaces the rate-driven keystrokes, moves and clicks.
    #[serde(default)]
    pub script: Vec<ScriptEvent>,
}

impl ActivityProfile {
    /// Typical rates for each listed activity, zero for the rest.
    pub fn typical(activities: &[Activity], duration_s: u64, seed: u64) -> Self {
        let set = ActivitySet::from_activities(activities);
        let windows = duration_s.div_ceil(WINDOW_SECONDS).max(1) as u32;
        let on = |a: Activity, v: f64| if set.contains(a) { v } else { 0.0 };
        ActivityProfile {
            activities: set.activities().collect(),
            duration_s,
            typing_rate: on(Activity::Notepad, 2.0),
            mouse_move_rate: on(Activity::Browsing, 3.0),
            click_rate: on(Activity::Browsing, 0.3),
            download_throughput: on(Activity::Download, 150_000.0),
            video_burst_period: on(Activity::YouTube, 1.0),
            clipboard_event_count: if set.contains(Activity::Clipboard) { 2 * windows } else { 0 },
            seed,
            transport: SynthTransport::Tcp,
            script: Vec::new(),
        }
    }

    pub fn activity_set(&self) -> ActivitySet {
        ActivitySet::from_activities(&self.activities)
    }

    pub fn windows(&self) -> u64 {
        self.duration_s.div_ceil(WINDOW_SECONDS)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidProfile(m));
        if self.duration_s == 0 {
            return bad("duration_s must be positive".into());
        }
        let rates = [
            ("typing_rate", self.typing_rate),
            ("mouse_move_rate", self.mouse_move_rate),
            ("click_rate", self.click_rate),
            ("download_throughput", self.download_throughput),
            ("video_burst_period", self.video_burst_period),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        let duration_ms = self.duration_s * 1000;
        if let Some(e) = self.script.iter().find(|e| e.at_ms >= duration_ms) {
            return bad(format!("script event at {}ms is past the end of the capture", e.at_ms));
        }
        let set = self.activity_set();
        let scripted = |a: ScriptAction| self.script.iter().any(|e| e.action == a);
        let (keys, mouse) = if self.script.is_empty() {
            (self.key_count() > 0, self.move_count() + self.click_count() > 0)
        } else {
            (scripted(ScriptAction::Key), scripted(ScriptAction::Click) || scripted(ScriptAction::Move))
        };
        let checks = [
            (Activity::Notepad, keys, "keystrokes"),
            (Activity::Browsing, mouse, "mouse events"),
            (Activity::Download, self.download_throughput > 0.0, "download_throughput"),
            (
                Activity::YouTube,
                self.video_burst_period > 0.0 && self.video_burst_period <= self.duration_s as f64,
                "video bursts",
            ),
            (Activity::Clipboard, self.clipboard_event_count > 0, "clipboard events"),
        ];
        for (a, active, what) in checks {
            if set.contains(a) != active {
                let verb = if active { "has" } else { "lacks" };
                return bad(format!("{what}: profile {verb} them but {a} is {}labelled", if active { "not " } else { "" }));
            }
        }
        Ok(())
    }

    fn duration_us(&self) -> u64 {
        self.duration_s * 1_000_000
    }

    fn key_count(&self) -> u64 {
        (self.typing_rate * self.duration_s as f64).floor() as u64
    }

    fn move_count(&self) -> u64 {
        (self.mouse_move_rate * self.duration_s as f64).floor() as u64
    }

    fn click_count(&self) -> u64 {
        (self.click_rate * self.duration_s as f64).floor() as u64
    }
}

/// Scripted event counts embedded in a trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub keystrokes: u64,
    pub moves: u64,
    pub clicks: u64,
    pub download_frames: u64,
    pub video_bursts: u64,
    pub clipboard_events: u64,
    pub windows: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub pcap: Vec<u8>,
    pub labels_csv: String,
    pub truth: GroundTruth,
    pub packets: Vec<RawPacket>,
}

/// `count` instants, the i-th drawn uniformly from `(i + 0.5 ± 0.2)·span/count`.
fn schedule(rng: &mut ChaCha8Rng, count: u64, span_us: u64) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    let interval = span_us as f64 / count as f64;
    (0..count)
        .map(|i| {
            let jitter: f64 = rng.random_range(-0.2..=0.2);
            ((i as f64 + 0.5 + jitter) * interval) as u64
        })
        .collect()
}

struct Emitter {
    tcp: (Endpoint, Endpoint),
    udp: (Endpoint, Endpoint),
    bulk: Transport,
    out: Vec<RawPacket>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Fwd,
    Bwd,
}

impl Emitter {
    fn emit(&mut self, ts: u64, dir: Dir, transport: Transport, frame_len: u32, flags: TcpFlags) {
        let hdr = match transport {
            Transport::Tcp => TCP_HDR,
            Transport::Udp => UDP_HDR,
        };
        let frame_len = frame_len.max(MIN_FRAME);
        let payload_len = frame_len.saturating_sub(ETH + hdr);
        let (local, remote) = match transport {
            Transport::Tcp => self.tcp,
            Transport::Udp => self.udp,
        };
        let (src, dst, window) = match dir {
            Dir::Fwd => (local, remote, FWD_WINDOW),
            Dir::Bwd => (remote, local, BWD_WINDOW),
        };
        let (tcp_flags, tcp_window) = match transport {
            Transport::Tcp => (flags, window),
            Transport::Udp => (TcpFlags::NONE, 0),
        };
        self.out.push(RawPacket {
            ts_us: BASE_EPOCH_US + ts,
            src,
            dst,
            transport,
            frame_len,
            header_len: hdr,
            payload_len,
            tcp_flags,
            tcp_window,
        });
    }

    /// A frame carrying exactly `payload` bytes.
    fn emit_payload(&mut self, ts: u64, dir: Dir, transport: Transport, payload: u32, flags: TcpFlags) {
        let hdr = match transport {
            Transport::Tcp => TCP_HDR,
            Transport::Udp => UDP_HDR,
        };
        self.emit(ts, dir, transport, ETH + hdr + payload, flags);
    }
}

const ACK: TcpFlags = TcpFlags(TcpFlags::ACK);
const PSH_ACK: TcpFlags = TcpFlags(TcpFlags::PSH | TcpFlags::ACK);

pub fn generate_trace(profile: &ActivityProfile) -> Result<SyntheticTrace, SynthError> {
    profile.validate()?;
    let set = profile.activity_set();
    let span = profile.duration_us();
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(profile.seed);
        r.set_stream(k);
        r
    };
    let local_tcp = Endpoint::new(LOCAL_ADDR, LOCAL_PORT);
    let remote_tcp = Endpoint::new(REMOTE_ADDR, RDP_PORT);
    let mut em = Emitter {
        tcp: (local_tcp, remote_tcp),
        udp: (Endpoint::new(LOCAL_ADDR, LOCAL_PORT + 1), Endpoint::new(REMOTE_ADDR, RDP_PORT)),
        bulk: match profile.transport {
            SynthTransport::Tcp => Transport::Tcp,
            SynthTransport::Mixed => Transport::Udp,
        },
        out: Vec::new(),
    };
    let mut truth = GroundTruth {
        windows: profile.windows(),
        ..Default::default()
    };

    for s in 0..profile.duration_s {
        let t = s * 1_000_000;
        em.emit(t, Dir::Fwd, Transport::Tcp, MIN_FRAME, ACK);
        em.emit(t + 5_000, Dir::Bwd, Transport::Tcp, MIN_FRAME, ACK);
        if profile.transport == SynthTransport::Mixed {
            em.emit(t + 500_000, Dir::Fwd, Transport::Udp, MIN_FRAME, TcpFlags::NONE);
            em.emit(t + 505_000, Dir::Bwd, Transport::Udp, MIN_FRAME, TcpFlags::NONE);
        }
    }

    let (keys, moves, clicks) = if profile.script.is_empty() {
        let mut rng = stream(1);
        (
            schedule(&mut rng, profile.key_count(), span),
            schedule(&mut rng, profile.move_count(), span),
            schedule(&mut rng, profile.click_count(), span),
        )
    } else {
        let at = |a: ScriptAction| -> Vec<u64> {
            profile
                .script
                .iter()
                .filter(|e| e.action == a)
                .map(|e| e.at_ms * 1000)
                .collect()
        };
        (at(ScriptAction::Key), at(ScriptAction::Move), at(ScriptAction::Click))
    };

    let mut rng = stream(2);
    for &t in &keys {
        let gap = rng.random_range(500..=3_000u64);
        // both frames of a keystroke stay inside one window
        let window_end = (t / WINDOW_US + 1) * WINDOW_US;
        let t = if t + gap >= window_end { window_end - gap - 1 } else { t };
        em.emit(t, Dir::Fwd, Transport::Tcp, 92, PSH_ACK);
        em.emit(t + gap, Dir::Fwd, Transport::Tcp, 92, PSH_ACK);
        let echo_at = t + rng.random_range(10_000..=80_000u64);
        let echo = rng.random_range(49..=1200u32);
        em.emit_payload(echo_at, Dir::Bwd, Transport::Tcp, echo, PSH_ACK);
    }
    truth.keystrokes = keys.len() as u64;

    let mut rng = stream(3);
    for &t in &moves {
        em.emit(t, Dir::Fwd, Transport::Tcp, 104, PSH_ACK);
    }
    for &t in &clicks {
        em.emit(t, Dir::Fwd, Transport::Tcp, 97, PSH_ACK);
        let start = t + rng.random_range(5_000..=20_000u64);
        let n = rng.random_range(5..=15u64);
        for i in 0..n {
            let size = rng.random_range(160..=639u32);
            let flags = if i + 1 == n { PSH_ACK } else { ACK };
            em.emit(start + i * 200, Dir::Bwd, em.bulk, size, flags);
        }
    }
    truth.moves = moves.len() as u64;
    truth.clicks = clicks.len() as u64;

    if set.contains(Activity::Download) {
        let mut rng = stream(4);
        let target = profile.download_throughput * profile.duration_s as f64;
        let mut sizes = Vec::new();
        let mut total = 0.0;
        while total < target {
            let s = rng.random_range(1280..=1514u32);
            total += s as f64;
            sizes.push(s);
        }
        let times = schedule(&mut rng, sizes.len() as u64, span);
        for (i, (&t, &s)) in times.iter().zip(&sizes).enumerate() {
            let flags = if i % 8 == 7 { PSH_ACK } else { ACK };
            em.emit(t, Dir::Bwd, em.bulk, s, flags);
            if i % 2 == 1 {
                em.emit(t + 100, Dir::Fwd, em.bulk, MIN_FRAME, ACK);
            }
        }
        truth.download_frames = sizes.len() as u64;
    }

    if set.contains(Activity::YouTube) {
        let mut rng = stream(5);
        let bursts = (profile.duration_s as f64 / profile.video_burst_period).floor() as u64;
        for t in schedule(&mut rng, bursts, span) {
            let n = rng.random_range(20..=40u64);
            for i in 0..n {
                let size = rng.random_range(640..=1279u32);
                let flags = if i + 1 == n { PSH_ACK } else { ACK };
                em.emit(t + i * 300, Dir::Bwd, em.bulk, size, flags);
            }
            em.emit(t + n * 300 + 100, Dir::Fwd, em.bulk, MIN_FRAME, ACK);
        }
        truth.video_bursts = bursts;
    }

    if set.contains(Activity::Clipboard) {
        let mut rng = stream(6);
        let events = u64::from(profile.clipboard_event_count);
        for t in schedule(&mut rng, events, span) {
            let n = rng.random_range(3..=6u64);
            for i in 0..n {
                let size = rng.random_range(1280..=1514u32);
                let flags = if i + 1 == n { PSH_ACK } else { ACK };
                em.emit(t + i * 250, Dir::Fwd, Transport::Tcp, size, flags);
            }
            let reply = t + n * 250 + 2_000;
            for i in 0..2 {
                let size = rng.random_range(300..=600u32);
                em.emit(reply + i * 250, Dir::Bwd, Transport::Tcp, size, PSH_ACK);
            }
        }
        truth.clipboard_events = events;
    }

    let mut packets = em.out;
    packets.sort_by_key(|p| p.ts_us);
    let mut writer = PcapWriter::new();
    writer.write_all(&packets)?;

    let rows: BTreeMap<u64, ActivitySet> = (0..truth.windows)
        .map(|k| (BASE_EPOCH_US + k * WINDOW_US, set))
        .collect();
    Ok(SyntheticTrace {
        pcap: writer.into_bytes(),
        labels_csv: LabelTable { rows }.to_csv(),
        truth,
        packets,
    })
}

/// Label combinations and sample counts of the paper's TCP capture.
pub const TCP_COMBINATIONS: [(u32, [bool; 5]); 15] = [
    (240, [true, false, false, false, false]),
    (240, [false, true, false, false, false]),
    (239, [false, false, true, false, false]),
    (243, [false, false, false, true, false]),
    (120, [false, false, false, false, true]),
    (74, [false, true, false, false, true]),
    (43, [true, true, false, false, false]),
    (25, [true, false, true, false, true]),
    (22, [true, false, true, false, false]),
    (62, [false, false, true, true, false]),
    (27, [true, false, false, true, false]),
    (63, [false, true, false, true, false]),
    (22, [false, false, true, false, true]),
    (15, [true, true, false, false, true]),
    (21, [true, false, true, true, true]),
];

/// Label combinations and sample counts of the paper's UDP capture.
pub const UDP_COMBINATIONS: [(u32, [bool; 5]); 10] = [
    (103, [true, false, false, false, false]),
    (92, [false, true, false, false, false]),
    (100, [false, false, true, false, false]),
    (105, [false, false, false, true, false]),
    (100, [false, false, false, false, true]),
    (42, [false, true, false, false, true]),
    (44, [false, true, false, true, false]),
    (42, [true, false, true, false, false]),
    (37, [true, false, true, false, true]),
    (39, [true, false, false, true, false]),
];

/// One profile per label combination, window counts scaled to `total_windows`
/// by largest remainder with at least one window each.
pub fn table_profiles(transport: SynthTransport, total_windows: u64, seed: u64) -> Vec<ActivityProfile> {
    let combos: &[(u32, [bool; 5])] = match transport {
        SynthTransport::Tcp => &TCP_COMBINATIONS,
        SynthTransport::Mixed => &UDP_COMBINATIONS,
    };
    let weight: u64 = combos.iter().map(|c| u64::from(c.0)).sum();
    let total_windows = total_windows.max(combos.len() as u64);
    let exact: Vec<f64> = combos
        .iter()
        .map(|c| total_windows as f64 * f64::from(c.0) / weight as f64)
        .collect();
    let mut counts: Vec<u64> = exact.iter().map(|e| (e.floor() as u64).max(1)).collect();
    let mut order: Vec<usize> = (0..combos.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut i = 0;
    while counts.iter().sum::<u64>() < total_windows {
        counts[order[i % order.len()]] += 1;
        i += 1;
    }
    combos
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(i, ((_, bits), n))| {
            let acts: Vec<Activity> = ActivitySet(*bits).activities().collect();
            let mut p = ActivityProfile::typical(&acts, n * WINDOW_SECONDS, seed.wrapping_add(i as u64));
            p.transport = transport;
            p
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub pcap: String,
    pub labels: String,
    pub activities: ActivitySet,
    pub windows: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    /// `Num samples` per label combination, in first-seen order.
    pub fn combination_counts(&self) -> Vec<(ActivitySet, u64)> {
        let mut out: Vec<(ActivitySet, u64)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(s, _)| *s == e.activities) {
                Some((_, n)) => *n += e.windows,
                None => out.push((e.activities, e.windows)),
            }
        }
        out
    }

    /// The combination table, `Num samples,Download?,...,Clipboard?`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Num samples");
        for a in Activity::ALL {
            out.push_str(&format!(",{a}?"));
        }
        out.push('\n');
        for (set, n) in self.combination_counts() {
            out.push_str(&n.to_string());
            for b in set.0 {
                out.push_str(if b { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRACES_FILE: &str = "traces.json";

/// Writes `trace_NNN.pcap` and `trace_NNN.labels.csv` per profile plus the
/// combination manifest and a trace index.
pub fn generate_corpus(profiles: &[ActivityProfile], dir: &Path) -> Result<CorpusManifest, SynthError> {
    if profiles.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    for p in profiles {
        p.validate()?;
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(profiles.len());
    for (i, p) in profiles.iter().enumerate() {
        let trace = generate_trace(p)?;
        let pcap = format!("trace_{i:03}.pcap");
        let labels = format!("trace_{i:03}.labels.csv");
        fs::write(dir.join(&pcap), &trace.pcap).map_err(io_err(&dir.join(&pcap)))?;
        fs::write(dir.join(&labels), &trace.labels_csv).map_err(io_err(&dir.join(&labels)))?;
        entries.push(CorpusEntry {
            pcap,
            labels,
            activities: p.activity_set(),
            windows: trace.truth.windows,
            seed: p.seed,
        });
    }
    let manifest = CorpusManifest { entries };
    let m = dir.join(MANIFEST_FILE);
    fs::write(&m, manifest.to_csv()).map_err(io_err(&m))?;
    let t = dir.join(TRACES_FILE);
    let index = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&t, index).map_err(io_err(&t))?;
    Ok(manifest)
}

/// Reads the trace index written by [`generate_corpus`].
pub fn read_corpus_index(dir: &Path) -> Result<CorpusManifest, SynthError> {
    let path = dir.join(TRACES_FILE);
    let text = fs::read_to_string(&path).map_err(|source| SynthError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SynthError::Io {
        path,
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}
