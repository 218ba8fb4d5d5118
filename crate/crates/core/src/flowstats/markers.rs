//! RDP-specific frame-length bins and PUSH counters.

use super::schema::MARKER_NAMES;
use super::FlowError;
use crate::capture::{Direction, TcpFlags};
use crate::windowing::Window;

/// Inclusive on-wire frame-length bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameBin {
    pub direction: Direction,
    pub lo: u32,
    pub hi: u32,
}

impl FrameBin {
    pub fn contains(&self, direction: Direction, frame_len: u32) -> bool {
        direction == self.direction && (self.lo..=self.hi).contains(&frame_len)
    }
}

const fn fwd(lo: u32, hi: u32) -> FrameBin {
    FrameBin {
        direction: Direction::Forward,
        lo,
        hi,
    }
}

const fn bwd(lo: u32, hi: u32) -> FrameBin {
    FrameBin {
        direction: Direction::Backward,
        lo,
        hi,
    }
}

/// Bins aligned with the first twelve entries of [`MARKER_NAMES`]. The
/// forward bins overlap and are counted independently.
pub const FRAME_BINS: [FrameBin; 12] = [
    fwd(91, 93),
    fwd(80, 91),
    fwd(90, 94),
    fwd(96, 98),
    fwd(103, 105),
    fwd(1280, 2559),
    bwd(40, 79),
    bwd(80, 159),
    bwd(160, 319),
    bwd(320, 639),
    bwd(640, 1279),
    bwd(1280, 2559),
];

/// Frame bins over every packet of the window; PUSH counters over TCP only.
/// Output is aligned to [`MARKER_NAMES`].
pub fn compute_rdp_markers(window: &Window) -> Result<Vec<f64>, FlowError> {
    if window.is_empty() {
        return Err(FlowError::EmptyWindow(window.start_us));
    }
    let mut counts = [0u64; MARKER_NAMES.len()];
    for conv in &window.conversations {
        for p in &conv.packets {
            for (slot, bin) in counts.iter_mut().zip(FRAME_BINS.iter()) {
                if bin.contains(p.direction, p.frame_len) {
                    *slot += 1;
                }
            }
            if p.is_tcp() && p.tcp_flags.has(TcpFlags::PSH) {
                match p.direction {
                    Direction::Backward => counts[12] += 1,
                    Direction::Forward => counts[13] += 1,
                }
            }
        }
    }
    Ok(counts.iter().map(|c| *c as f64).collect())
}
