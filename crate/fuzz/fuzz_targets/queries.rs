#![no_main]

use libfuzzer_sys::fuzz_target;
use rem::io::{parse_queries, parse_query_table};

// First byte picks the predictor dimension, the rest is the query text.
fuzz_target!(|data: &[u8]| {
    let Some((&p, rest)) = data.split_first() else {
        return;
    };
    let p = usize::from(p % 4);
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    for points in [parse_queries(text, p), parse_query_table(text, p)]
        .into_iter()
        .flatten()
    {
        assert!(points
            .iter()
            .all(|q| q.len() == p && q.iter().all(|v| v.is_finite())));
    }
});
