#![no_main]

use hashtag_privacy::embedding::parse_embeddings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(table) = parse_embeddings(data) else { return };
    if let Ok(text) = table.to_text() {
        let again = parse_embeddings(&text).unwrap();
        assert_eq!(again.dim(), table.dim());
        assert_eq!(again.texts(), table.texts());
    }
});
