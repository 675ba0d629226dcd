//! Fuzz the key-value config parser and the typed merge behind it.
//!
//! Run with: cargo +nightly fuzz run config_parse

#![no_main]

use libfuzzer_sys::fuzz_target;

use symmfem_cli::config::{parse_config_text, RunConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // parsing must never panic; applying parsed pairs must never panic
        if let Ok(pairs) = parse_config_text(text) {
            let mut cfg = RunConfig::default();
            for (k, v) in &pairs {
                let _ = cfg.apply(k, v);
            }
            let _ = cfg.validate();
        }
    }
});
