#![no_main]

use libfuzzer_sys::fuzz_target;
use nlmag::ConvergenceCertificate;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cert) = ConvergenceCertificate::parse(text) {
            assert!(cert.q < 1.0);
            let _ = ConvergenceCertificate::parse(&cert.to_text());
        }
    }
});
