use serde::{Deserialize, Serialize};

/// Bumped whenever the attribute list or its order changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Flow-meter attributes, in table order.
pub const FLOW_METER_NAMES: [&str; 73] = [
    "ACK Flag Cnt",
    "Active Max",
    "Active Mean",
    "Active Min",
    "Active Std",
    "Bwd Blk Rate Avg",
    "Bwd Byts/b Avg",
    "Bwd Header Len",
    "Bwd IAT Max",
    "Bwd IAT Mean",
    "Bwd IAT Min",
    "Bwd IAT Std",
    "Bwd IAT Tot",
    "Bwd PSH Flags",
    "Bwd Pkt Len Max",
    "Bwd Pkt Len Mean",
    "Bwd Pkt Len Min",
    "Bwd Pkt Len Std",
    "Bwd Pkts/b Avg",
    "Bwd Pkts/s",
    "Bwd Seg Size Avg",
    "Bwd URG Flags",
    "CWE Flag Count",
    "ECE Flag Cnt",
    "FIN Flag Cnt",
    "Flow Byts/s",
    "Flow Duration",
    "Flow IAT Max",
    "Flow IAT Mean",
    "Flow IAT Min",
    "Flow IAT Std",
    "Flow Pkts/s",
    "Fwd Blk Rate Avg",
    "Fwd Byts/b Avg",
    "Fwd Header Len",
    "Fwd IAT Max",
    "Fwd IAT Mean",
    "Fwd IAT Min",
    "Fwd IAT Std",
    "Fwd IAT Tot",
    "Fwd PSH Flags",
    "Fwd Pkt Len Max",
    "Fwd Pkt Len Mean",
    "Fwd Pkt Len Min",
    "Fwd Pkt Len Std",
    "Fwd Pkts/b Avg",
    "Fwd Pkts/s",
    "Fwd Seg Size Avg",
    "Fwd URG Flags",
    "Idle Max",
    "Idle Mean",
    "Idle Min",
    "Idle Std",
    "Init Bwd Win Byts",
    "Init Fwd Win Byts",
    "PSH Flag Cnt",
    "Pkt Len Max",
    "Pkt Len Mean",
    "Pkt Len Min",
    "Pkt Len Std",
    "Pkt Len Var",
    "Pkt Size Avg",
    "RST Flag Cnt",
    "SYN Flag Cnt",
    "Subflow Bwd Byts",
    "Subflow Bwd Pkts",
    "Subflow Fwd Byts",
    "Subflow Fwd Pkts",
    "Tot Bwd Pkts",
    "Tot Fwd Pkts",
    "TotLen Bwd Pkts",
    "TotLen Fwd Pkts",
    "URG Flag Cnt",
];

/// Frame-length bins and PUSH counters, in table order.
pub const MARKER_NAMES: [&str; 14] = [
    "FwdFrame91-93",
    "FwdFrame80-91",
    "FwdFrame90-94",
    "FwdFrame96-98",
    "FwdFrame103-105",
    "FwdFrame1280-2559",
    "BwdFrame40-79",
    "BwdFrame80-159",
    "BwdFrame160-319",
    "BwdFrame320-639",
    "BwdFrame640-1279",
    "BwdFrame1280-2559",
    "BwdPUSH",
    "FwdPUSH",
];

pub const DCT_NAME: &str = "dct_col";
pub const DEFAULT_COMPONENTS: usize = 20;

pub fn svd_name(i: usize) -> String {
    format!("svd{i}")
}

pub fn ica_name(i: usize) -> String {
    format!("ica{i}")
}

/// Ordered, unique attribute names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub names: Vec<String>,
}

impl FeatureSchema {
    /// The 87 traffic attributes measured directly from a window.
    pub fn base() -> Self {
        let names = FLOW_METER_NAMES.iter().chain(MARKER_NAMES.iter()).map(|s| s.to_string()).collect();
        FeatureSchema {
            version: SCHEMA_VERSION,
            names,
        }
    }

    /// Base attributes followed by `dct_col`, `svd0..` and `ica0..`.
    pub fn augmented(components: usize) -> Self {
        let mut s = Self::base();
        s.names.extend(derived_names(components));
        s
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub fn derived_names(components: usize) -> Vec<String> {
    std::iter::once(DCT_NAME.to_string())
        .chain((0..components).map(svd_name))
        .chain((0..components).map(ica_name))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn names_are_unique() {
        let s = FeatureSchema::augmented(DEFAULT_COMPONENTS);
        let set: HashSet<_> = s.names.iter().collect();
        assert_eq!(set.len(), s.len());
        assert_eq!(s.len(), 87 + 41);
        assert_eq!(s.names.last().unwrap(), "ica19");
        assert_eq!(s.index_of("dct_col"), Some(87));
    }
}
