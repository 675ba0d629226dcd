//! Fuzz the n:N grid-list parser.
//!
//! Run with: cargo +nightly fuzz run grids_parse

#![no_main]

use libfuzzer_sys::fuzz_target;

use symmfem_cli::config::parse_grids;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_grids(text);
    }
});
