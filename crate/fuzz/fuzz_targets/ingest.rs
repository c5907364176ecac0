#![no_main]

use libfuzzer_sys::fuzz_target;
use rem::measures::{empirical_quantile, lcm_grid};

// Input is the observations file and the units file separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(2, |&b| b == 0);
    let obs = parts.next().unwrap_or_default();
    let units = parts.next().unwrap_or_default();
    let Ok(ds) = rem::io::ingest_readers(obs, units) else {
        return;
    };
    assert_eq!(ds.unit_ids.len(), ds.measures.len());
    assert_eq!(ds.unit_ids.len(), ds.covariates.len());
    assert!(ds.covariates.iter().all(|z| z.len() == ds.dim()));
    let sizes: Vec<usize> = ds.measures.iter().map(|m| m.size()).collect();
    if let Ok(m) = lcm_grid(&sizes, 64) {
        for measure in &ds.measures {
            let q = empirical_quantile(measure, m).unwrap();
            assert!(q.values().windows(2).all(|w| w[0] <= w[1]));
        }
    }
});
