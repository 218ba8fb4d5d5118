use std::fmt;

use serde::{Deserialize, Serialize};

/// The five user activities, in the fixed column order used by every
/// label file, feature CSV and report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activity {
    Download,
    Browsing,
    Notepad,
    YouTube,
    Clipboard,
}

impl Activity {
    pub const ALL: [Activity; 5] = [
        Activity::Download,
        Activity::Browsing,
        Activity::Notepad,
        Activity::YouTube,
        Activity::Clipboard,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lower-case column name used in label and feature files.
    pub fn column(self) -> &'static str {
        match self {
            Activity::Download => "download",
            Activity::Browsing => "browsing",
            Activity::Notepad => "notepad",
            Activity::YouTube => "youtube",
            Activity::Clipboard => "clipboard",
        }
    }

    pub fn from_column(s: &str) -> Option<Self> {
        Activity::ALL.into_iter().find(|a| a.column().eq_ignore_ascii_case(s) || a.to_string().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activity::Download => "Download",
            Activity::Browsing => "Browsing",
            Activity::Notepad => "Notepad",
            Activity::YouTube => "YouTube",
            Activity::Clipboard => "Clipboard",
        };
        f.write_str(name)
    }
}

/// Multi-hot activity labels for one window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivitySet(pub [bool; 5]);

impl ActivitySet {
    pub const EMPTY: ActivitySet = ActivitySet([false; 5]);

    pub fn from_activities(acts: &[Activity]) -> Self {
        let mut bits = [false; 5];
        for a in acts {
            bits[a.index()] = true;
        }
        ActivitySet(bits)
    }

    pub fn contains(&self, a: Activity) -> bool {
        self.0[a.index()]
    }

    pub fn insert(&mut self, a: Activity) {
        self.0[a.index()] = true;
    }

    pub fn activities(&self) -> impl Iterator<Item = Activity> + '_ {
        Activity::ALL.into_iter().filter(|a| self.contains(*a))
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Packs the set into the low five bits, `Download` first.
    pub fn bits(&self) -> u8 {
        self.0
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, b)| if *b { acc | (1 << i) } else { acc })
    }
}

impl fmt::Display for ActivitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("idle");
        }
        let names: Vec<String> = self.activities().map(|a| a.to_string()).collect();
        f.write_str(&names.join("+"))
    }
}
