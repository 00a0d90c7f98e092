#![no_main]

use admil::brownian::{decode_samples, encode_samples, BrownianPath};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = decode_samples(data) {
        assert_eq!(encode_samples(&samples), data);
        if let Ok(mut path) = BrownianPath::from_samples(&samples, 0, 0) {
            let _ = path.sample_at(0.5);
            let _ = path.sample_at(2.0);
        }
    }
});
