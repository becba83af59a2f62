#![no_main]

use libfuzzer_sys::fuzz_target;
use luglab_core::population::{simulate, SimConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mut cfg) = SimConfig::from_json(text) {
        // Keep runs short; only the decoding and validation are under test.
        cfg.n_total = cfg.n_total.min(64);
        cfg.rounds = cfg.rounds.min(4);
        if cfg.validate().is_ok() {
            let out = simulate(&cfg).expect("validated config simulates");
            assert_eq!(out.rows.len() as u64, cfg.rounds);
        }
    }
});
