#![no_main]

use hashtag_privacy::corpus::{parse_locations, write_locations};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(locations) = parse_locations(data) else { return };
    let mut out = Vec::new();
    write_locations(&locations, &mut out).unwrap();
    let again = parse_locations(std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(again, locations);
});
