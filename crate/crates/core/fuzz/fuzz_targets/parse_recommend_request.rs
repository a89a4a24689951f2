#![no_main]

use hashtag_privacy::service::RecommendRequest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(req) = serde_json::from_slice::<RecommendRequest>(data) else { return };
    let text = serde_json::to_string(&req).unwrap();
    let again: RecommendRequest = serde_json::from_str(&text).unwrap();
    assert_eq!(again, req);
});
