#![no_main]

use hashtag_privacy::corpus::parse_posts;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(records) = parse_posts(data) {
        for (line, _) in records {
            assert!(line >= 1);
        }
    }
});
