#![no_main]

use libfuzzer_sys::fuzz_target;
use nlmag::certify::{energy_gaps, estimate_minimum};
use nlmag::descent::read_trace_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = read_trace_csv(data) {
        let _ = energy_gaps(&trace, estimate_minimum(&trace));
    }
});
