//! Flow-meter statistics for one window, computed in a single pass over the
//! merged packet sequence.

use serde::{Deserialize, Serialize};

use super::schema::FLOW_METER_NAMES;
use super::FlowError;
use crate::capture::{Direction, PacketRecord, TcpFlags};
use crate::windowing::Window;

/// Timeouts and thresholds of the flow meter. All times in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Gaps longer than this split active periods; the gap itself is idle time.
    pub activity_timeout_us: u64,
    /// Minimum consecutive same-direction payload packets forming a bulk.
    pub bulk_min_packets: u32,
    /// Maximum gap inside a bulk run.
    pub bulk_max_gap_us: u64,
    /// Gaps longer than this start a new subflow.
    pub subflow_gap_us: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            activity_timeout_us: 5_000_000,
            bulk_min_packets: 4,
            bulk_max_gap_us: 1_000_000,
            subflow_gap_us: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Running {
    n: u64,
    sum: f64,
    min: f64,
    max: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.n += 1;
        self.sum += x;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    fn var(&self) -> f64 {
        if self.n <= 1 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    fn std(&self) -> f64 {
        self.var().sqrt()
    }

    fn min(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.min
        }
    }

    fn max(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.max
        }
    }
}

fn per_second(count: f64, duration_us: u64) -> f64 {
    if duration_us == 0 {
        0.0
    } else {
        count / (duration_us as f64 / 1e6)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Bulk transfer averages for one direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BulkStats {
    pub bulks: u64,
    pub bytes: u64,
    pub packets: u64,
    pub duration_us: u64,
}

impl BulkStats {
    pub fn bytes_per_bulk(&self) -> f64 {
        ratio(self.bytes as f64, self.bulks as f64)
    }

    pub fn packets_per_bulk(&self) -> f64 {
        ratio(self.packets as f64, self.bulks as f64)
    }

    /// Bytes per second of bulk time (the `Blk Rate Avg` attribute).
    pub fn byte_rate(&self) -> f64 {
        per_second(self.bytes as f64, self.duration_us)
    }

    /// Packets per second of bulk time.
    pub fn packet_rate(&self) -> f64 {
        per_second(self.packets as f64, self.duration_us)
    }
}

#[derive(Debug, Clone, Copy)]
struct BulkRun {
    dir: Direction,
    start: u64,
    last: u64,
    packets: u64,
    bytes: u64,
}

#[derive(Debug, Default)]
struct BulkTracker {
    run: Option<BulkRun>,
    fwd: BulkStats,
    bwd: BulkStats,
}

impl BulkTracker {
    fn push(&mut self, p: &PacketRecord, cfg: &FlowConfig) {
        if p.payload_len == 0 {
            return;
        }
        if let Some(run) = &mut self.run {
            if run.dir == p.direction && p.ts_us - run.last <= cfg.bulk_max_gap_us {
                run.last = p.ts_us;
                run.packets += 1;
                run.bytes += u64::from(p.payload_len);
                return;
            }
        }
        self.close(cfg);
        self.run = Some(BulkRun {
            dir: p.direction,
            start: p.ts_us,
            last: p.ts_us,
            packets: 1,
            bytes: u64::from(p.payload_len),
        });
    }

    fn close(&mut self, cfg: &FlowConfig) {
        if let Some(run) = self.run.take() {
            if run.packets >= u64::from(cfg.bulk_min_packets) {
                let s = match run.dir {
                    Direction::Forward => &mut self.fwd,
                    Direction::Backward => &mut self.bwd,
                };
                s.bulks += 1;
                s.bytes += run.bytes;
                s.packets += run.packets;
                s.duration_us += run.last - run.start;
            }
        }
    }
}

/// Every flow-meter attribute of a window, plus the packet-rate variant of
/// the bulk rates that the attribute table leaves out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFeatures {
    /// Aligned to [`FLOW_METER_NAMES`].
    pub values: Vec<f64>,
    pub fwd_bulk: BulkStats,
    pub bwd_bulk: BulkStats,
}

impl FlowFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        FLOW_METER_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

/// Computes the flow-meter block for a window. Length statistics use payload
/// bytes; flags and initial windows consider TCP packets only.
pub fn compute_flow_features(window: &Window, cfg: &FlowConfig) -> Result<FlowFeatures, FlowError> {
    let packets = window.packets();
    let (Some(first), Some(last)) = (packets.first(), packets.last()) else {
        return Err(FlowError::EmptyWindow(window.start_us));
    };
    let duration = last.ts_us - first.ts_us;

    let mut all_len = Running::default();
    let mut fwd_len = Running::default();
    let mut bwd_len = Running::default();
    let mut flow_iat = Running::default();
    let mut fwd_iat = Running::default();
    let mut bwd_iat = Running::default();
    let mut active = Running::default();
    let mut idle = Running::default();
    let mut flags = [0u64; 8];
    let (mut fwd_psh, mut bwd_psh, mut fwd_urg, mut bwd_urg) = (0u64, 0u64, 0u64, 0u64);
    let (mut fwd_hdr, mut bwd_hdr) = (0u64, 0u64);
    let (mut init_fwd_win, mut init_bwd_win) = (-1.0, -1.0);
    let (mut prev, mut prev_fwd, mut prev_bwd): (Option<u64>, Option<u64>, Option<u64>) = (None, None, None);
    let mut active_start = first.ts_us;
    let mut subflows = 1u64;
    let mut bulk = BulkTracker::default();

    for p in &packets {
        let len = f64::from(p.payload_len);
        all_len.push(len);
        if let Some(t) = prev {
            let gap = p.ts_us - t;
            flow_iat.push(gap as f64);
            if gap > cfg.subflow_gap_us {
                subflows += 1;
            }
            if gap > cfg.activity_timeout_us {
                if t > active_start {
                    active.push((t - active_start) as f64);
                }
                idle.push(gap as f64);
                active_start = p.ts_us;
            }
        }
        prev = Some(p.ts_us);

        let fwd = p.is_forward();
        let (lens, iats, last_dir) = if fwd {
            (&mut fwd_len, &mut fwd_iat, &mut prev_fwd)
        } else {
            (&mut bwd_len, &mut bwd_iat, &mut prev_bwd)
        };
        lens.push(len);
        if let Some(t) = *last_dir {
            iats.push((p.ts_us - t) as f64);
        }
        *last_dir = Some(p.ts_us);
        if fwd {
            fwd_hdr += u64::from(p.header_len);
        } else {
            bwd_hdr += u64::from(p.header_len);
        }

        if p.is_tcp() {
            for (bit, count) in flags.iter_mut().enumerate() {
                if p.tcp_flags.has(1 << bit) {
                    *count += 1;
                }
            }
            let psh = u64::from(p.tcp_flags.has(TcpFlags::PSH));
            let urg = u64::from(p.tcp_flags.has(TcpFlags::URG));
            if fwd {
                fwd_psh += psh;
                fwd_urg += urg;
                if init_fwd_win < 0.0 {
                    init_fwd_win = f64::from(p.tcp_window);
                }
            } else {
                bwd_psh += psh;
                bwd_urg += urg;
                if init_bwd_win < 0.0 {
                    init_bwd_win = f64::from(p.tcp_window);
                }
            }
        }
        bulk.push(p, cfg);
    }
    if last.ts_us > active_start {
        active.push((last.ts_us - active_start) as f64);
    }
    bulk.close(cfg);

    let flag = |mask: u8| flags[mask.trailing_zeros() as usize] as f64;
    let n = packets.len() as f64;
    let fwd_n = fwd_len.n as f64;
    let bwd_n = bwd_len.n as f64;
    let sub = subflows as f64;

    let values = vec![
        flag(TcpFlags::ACK),
        active.max(),
        active.mean(),
        active.min(),
        active.std(),
        bulk.bwd.byte_rate(),
        bulk.bwd.bytes_per_bulk(),
        bwd_hdr as f64,
        bwd_iat.max(),
        bwd_iat.mean(),
        bwd_iat.min(),
        bwd_iat.std(),
        bwd_iat.sum,
        bwd_psh as f64,
        bwd_len.max(),
        bwd_len.mean(),
        bwd_len.min(),
        bwd_len.std(),
        bulk.bwd.packets_per_bulk(),
        per_second(bwd_n, duration),
        bwd_len.mean(),
        bwd_urg as f64,
        flag(TcpFlags::CWR),
        flag(TcpFlags::ECE),
        flag(TcpFlags::FIN),
        per_second(all_len.sum, duration),
        duration as f64,
        flow_iat.max(),
        flow_iat.mean(),
        flow_iat.min(),
        flow_iat.std(),
        per_second(n, duration),
        bulk.fwd.byte_rate(),
        bulk.fwd.bytes_per_bulk(),
        fwd_hdr as f64,
        fwd_iat.max(),
        fwd_iat.mean(),
        fwd_iat.min(),
        fwd_iat.std(),
        fwd_iat.sum,
        fwd_psh as f64,
        fwd_len.max(),
        fwd_len.mean(),
        fwd_len.min(),
        fwd_len.std(),
        bulk.fwd.packets_per_bulk(),
        per_second(fwd_n, duration),
        fwd_len.mean(),
        fwd_urg as f64,
        idle.max(),
        idle.mean(),
        idle.min(),
        idle.std(),
        init_bwd_win,
        init_fwd_win,
        flag(TcpFlags::PSH),
        all_len.max(),
        all_len.mean(),
        all_len.min(),
        all_len.std(),
        all_len.var(),
        all_len.mean(),
        flag(TcpFlags::RST),
        flag(TcpFlags::SYN),
        bwd_len.sum / sub,
        bwd_n / sub,
        fwd_len.sum / sub,
        fwd_n / sub,
        bwd_n,
        fwd_n,
        bwd_len.sum,
        fwd_len.sum,
        flag(TcpFlags::URG),
    ];
    debug_assert_eq!(values.len(), FLOW_METER_NAMES.len());
    Ok(FlowFeatures {
        values,
        fwd_bulk: bulk.fwd,
        bwd_bulk: bulk.bwd,
    })
}
