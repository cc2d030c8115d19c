#![no_main]

use libfuzzer_sys::fuzz_target;
use nlmag::material::{read_bh_csv, MonotoneSpline};

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = read_bh_csv(data) {
        if let Ok(spline) = MonotoneSpline::build(&points, None) {
            let _ = spline.value(1.0);
            let _ = spline.energy(2.5);
        }
    }
});
