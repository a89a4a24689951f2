#![no_main]

use hashtag_privacy::forest::RandomForestModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(model) = RandomForestModel::from_json(data) else { return };
    let dim = model.vocab_dimension().min(64) as u32;
    let post = model.posterior_for(&(0..dim).step_by(3).collect::<Vec<_>>());
    let total: f64 = post.probs().iter().sum();
    assert!(post.probs().is_empty() || (total - 1.0).abs() < 1e-9);
});
