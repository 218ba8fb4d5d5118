//! Shared inputs for the benchmarks.

use rdpscope_core::pipeline::{extract_capture, Dataset, ExtractConfig};
use rdpscope_core::synthgen::{generate_trace, table_profiles, ActivityProfile, SynthTransport, LOCAL_ADDR};
use rdpscope_core::{Activity, FeatureSchema, LocalEndpoint};

pub fn extract_config() -> ExtractConfig {
    ExtractConfig::new(LocalEndpoint::new(LOCAL_ADDR))
}

/// Pcap bytes and label CSV of a busy trace with every activity present.
pub fn busy_trace(windows: u64) -> (Vec<u8>, String) {
    let profile = ActivityProfile::typical(&Activity::ALL, windows * 30, 7);
    let trace = generate_trace(&profile).expect("valid profile");
    (trace.pcap, trace.labels_csv)
}

/// Base feature rows of a table-shaped synthetic corpus.
pub fn dataset(windows: u64) -> Dataset {
    let mut vectors = Vec::new();
    for p in table_profiles(SynthTransport::Tcp, windows, 11) {
        let trace = generate_trace(&p).expect("valid profile");
        let ex = extract_capture(&trace.pcap, &trace.labels_csv, &extract_config()).expect("synthetic trace extracts");
        vectors.extend(ex.vectors);
    }
    Dataset::from_vectors(&vectors, &FeatureSchema::base()).expect("base schema")
}
