//! Frame-size side channels: keystrokes, mouse events and typing bursts.
//!
//! Only TCP packets are inspected. Each keystroke travels as two forward
//! 92-byte frames; clicks and moves as single forward 97- and 104-byte
//! frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{Direction, PacketRecord, TcpFlags};
use crate::windowing::Window;

pub const KEYSTROKE_FRAME: u32 = 92;
pub const CLICK_FRAME: u32 = 97;
pub const MOVE_FRAME: u32 = 104;

#[derive(Debug, Error, PartialEq)]
pub enum SideChannelError {
    #[error("window at {0}us has no TCP conversation")]
    NoTcpConversation(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideChannelConfig {
    /// Accepted deviation from the nominal frame sizes, in bytes.
    pub tolerance: u32,
    pub burst_gap_us: u64,
    pub echo_window_us: u64,
}

impl Default for SideChannelConfig {
    fn default() -> Self {
        SideChannelConfig {
            tolerance: 0,
            burst_gap_us: 1_000_000,
            echo_window_us: 200_000,
        }
    }
}

impl SideChannelConfig {
    fn matches(&self, p: &PacketRecord, size: u32) -> bool {
        p.direction == Direction::Forward && p.frame_len.abs_diff(size) <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub start_us: u64,
    pub end_us: u64,
    pub keystrokes: u64,
    /// Backward PSH payload sizes attributed to this burst's keystrokes.
    pub echo_sizes: Vec<u32>,
    /// At least two echoes, all of one size.
    pub uniform_echo: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeystrokeReport {
    pub frame_count_92: u64,
    pub keystroke_estimate: u64,
    /// Odd frame count; one frame did not pair up.
    pub residual_frame: bool,
    pub bursts: Vec<Burst>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MouseEventKind {
    Click,
    Move,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MouseEvent {
    pub ts_us: u64,
    pub kind: MouseEventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MouseReport {
    pub click_packets: u64,
    pub move_packets: u64,
    pub events: Vec<MouseEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start_us: u64,
    pub keystrokes: KeystrokeReport,
    pub mouse: MouseReport,
}

fn tcp_packets(window: &Window) -> Result<Vec<&PacketRecord>, SideChannelError> {
    if !window.has_tcp() {
        return Err(SideChannelError::NoTcpConversation(window.start_us));
    }
    Ok(window.tcp_packets())
}

/// Counts only; `bursts` is left empty.
pub fn count_keystrokes(window: &Window, config: &SideChannelConfig) -> Result<KeystrokeReport, SideChannelError> {
    let frames = tcp_packets(window)?
        .into_iter()
        .filter(|p| config.matches(p, KEYSTROKE_FRAME))
        .count() as u64;
    Ok(KeystrokeReport {
        frame_count_92: frames,
        keystroke_estimate: frames / 2,
        residual_frame: frames % 2 == 1,
        bursts: Vec::new(),
    })
}

pub fn detect_mouse_events(window: &Window, config: &SideChannelConfig) -> Result<MouseReport, SideChannelError> {
    let mut report = MouseReport {
        click_packets: 0,
        move_packets: 0,
        events: Vec::new(),
    };
    for p in tcp_packets(window)? {
        let kind = if config.matches(p, CLICK_FRAME) {
            report.click_packets += 1;
            MouseEventKind::Click
        } else if config.matches(p, MOVE_FRAME) {
            report.move_packets += 1;
            MouseEventKind::Move
        } else {
            continue;
        };
        report.events.push(MouseEvent { ts_us: p.ts_us, kind });
    }
    Ok(report)
}

/// Pairs keystroke frames in time order and groups the pairs into bursts.
/// A burst ends at a gap above `burst_gap_us` between keystrokes or at a
/// click strictly between two keystrokes.
pub fn segment_typing_bursts(window: &Window, config: &SideChannelConfig) -> Result<KeystrokeReport, SideChannelError> {
    let packets = tcp_packets(window)?;
    let mut report = count_keystrokes(window, config)?;

    let frames: Vec<u64> = packets
        .iter()
        .filter(|p| config.matches(p, KEYSTROKE_FRAME))
        .map(|p| p.ts_us)
        .collect();
    // (first frame, second frame) per keystroke
    let keys: Vec<(u64, u64)> = frames.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let clicks: Vec<u64> = packets
        .iter()
        .filter(|p| config.matches(p, CLICK_FRAME))
        .map(|p| p.ts_us)
        .collect();
    let echoes: Vec<(u64, u32)> = packets
        .iter()
        .filter(|p| p.direction == Direction::Backward && p.tcp_flags.has(TcpFlags::PSH) && p.payload_len > 0)
        .map(|p| (p.ts_us, p.payload_len))
        .collect();

    let mut bursts: Vec<Burst> = Vec::new();
    let mut key_burst = Vec::with_capacity(keys.len());
    for (i, &(start, end)) in keys.iter().enumerate() {
        let split = match i.checked_sub(1).map(|j| keys[j]) {
            None => true,
            Some((prev_start, _)) => {
                start - prev_start > config.burst_gap_us
                    || clicks.iter().any(|&c| c > prev_start && c < start)
            }
        };
        if split {
            bursts.push(Burst {
                start_us: start,
                end_us: end,
                keystrokes: 0,
                echo_sizes: Vec::new(),
                uniform_echo: false,
            });
        }
        let b = bursts.last_mut().expect("burst opened above");
        b.keystrokes += 1;
        b.end_us = end;
        key_burst.push(bursts.len() - 1);
    }

    // each echo goes to the latest keystroke at or before it, if close enough
    for &(ts, size) in &echoes {
        let k = keys.partition_point(|&(s, _)| s <= ts);
        if k == 0 {
            continue;
        }
        if ts - keys[k - 1].0 <= config.echo_window_us {
            bursts[key_burst[k - 1]].echo_sizes.push(size);
        }
    }
    for b in &mut bursts {
        b.uniform_echo = b.echo_sizes.len() >= 2 && b.echo_sizes.iter().all(|&s| s == b.echo_sizes[0]);
    }
    report.bursts = bursts;
    Ok(report)
}

/// Keystroke bursts and mouse events for one window.
pub fn analyze_window(window: &Window, config: &SideChannelConfig) -> Result<WindowReport, SideChannelError> {
    Ok(WindowReport {
        start_us: window.start_us,
        keystrokes: segment_typing_bursts(window, config)?,
        mouse: detect_mouse_events(window, config)?,
    })
}
