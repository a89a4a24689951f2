#![no_main]

use hashtag_privacy::corpus::{parse_corpus, write_locations, write_posts};
use libfuzzer_sys::fuzz_target;

// Input is "<posts>\0<locations>".
fuzz_target!(|data: &str| {
    let (posts, locations) = data.split_once('\0').unwrap_or((data, ""));
    let Ok(corpus) = parse_corpus(posts, locations) else { return };
    let (mut p, mut l) = (Vec::new(), Vec::new());
    write_posts(&corpus, &mut p).unwrap();
    write_locations(corpus.locations(), &mut l).unwrap();
    let again = parse_corpus(std::str::from_utf8(&p).unwrap(), std::str::from_utf8(&l).unwrap()).unwrap();
    assert_eq!(again, corpus);
});
