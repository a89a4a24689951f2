#![no_main]

use hashtag_privacy::obfuscate::{parse_taxonomy, write_taxonomy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(records) = parse_taxonomy(data) else { return };
    assert_eq!(parse_taxonomy(&write_taxonomy(&records)).unwrap(), records);
});
