#![no_main]

use hashtag_privacy::corpus::{generate_synthetic, SynthConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = serde_json::from_slice::<SynthConfig>(data) else { return };
    let size = cfg.n_locations.saturating_mul(cfg.posts_per_location);
    let vocab = cfg
        .n_noise_hashtags
        .saturating_add(cfg.n_locations.saturating_mul(cfg.signature_hashtags_per_location));
    if size <= 2_000 && vocab <= 2_000 && cfg.n_users <= 1_000 && cfg.hashtags_per_post <= 64 {
        let _ = generate_synthetic(&cfg);
    }
});
