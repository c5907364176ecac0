//! Independent reference computations used only by tests.
#![allow(dead_code)]

/// Least-squares projection of `v` onto nondecreasing vectors inside an
/// optional box, by exhaustive enumeration.
///
/// The optimum is constant on consecutive blocks and takes the clipped block
/// mean on each; every one of the `2^(n-1)` block partitions is tried and the
/// best feasible candidate kept. Exponential, so only for `n <= 12` or so.
pub fn brute_force_projection(v: &[f64], bounds: Option<(f64, f64)>) -> Vec<f64> {
    let n = v.len();
    assert!((1..=16).contains(&n));
    let clip = |x: f64| match bounds {
        Some((lo, hi)) => x.max(lo).min(hi),
        None => x,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << (n - 1)) {
        // bit j set => a block boundary between j and j + 1
        let mut cand = vec![0.0; n];
        let mut start = 0;
        for end in 0..n {
            let cut = end == n - 1 || mask & (1 << end) != 0;
            if cut {
                let block = &v[start..=end];
                let m = block.iter().sum::<f64>() / block.len() as f64;
                for c in &mut cand[start..=end] {
                    *c = clip(m);
                }
                start = end + 1;
            }
        }
        if cand.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let obj: f64 = cand.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, cand));
        }
    }
    best.expect("the all-pooled partition is always feasible").1
}

/// Squared L2 distance between two step quantile functions with arbitrary
/// (unequal) numbers of equal-probability cells, integrated exactly over the
/// merged breakpoints.
pub fn exact_step_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let mut breaks: Vec<(u64, u64)> = Vec::new();
    // breakpoints i/na and j/nb as fractions over na*nb
    for i in 0..=na {
        breaks.push(((i * nb) as u64, 0));
    }
    for j in 0..=nb {
        breaks.push(((j * na) as u64, 0));
    }
    breaks.sort();
    breaks.dedup();
    let total = (na * nb) as f64;
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0].0, w[1].0);
        let mid = (lo + hi) as f64 / 2.0 / total;
        let ia = ((mid * na as f64).floor() as usize).min(na - 1);
        let ib = ((mid * nb as f64).floor() as usize).min(nb - 1);
        let d = a[ia] - b[ib];
        acc += d * d * (hi - lo) as f64 / total;
    }
    acc
}

/// Global Fréchet weights computed directly from the defining formula with a
/// cofactor inverse, for p <= 2.
pub fn global_weights_direct(z: &[Vec<f64>], query: &[f64]) -> Vec<f64> {
    let n = z.len();
    let p = z[0].len();
    let mean: Vec<f64> = (0..p)
        .map(|k| z.iter().map(|r| r[k]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; p]; p];
    for r in z {
        for a in 0..p {
            for b in 0..p {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / n as f64;
            }
        }
    }
    let inv = match p {
        1 => vec![vec![1.0 / cov[0][0]]],
        2 => {
            let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
            vec![
                vec![cov[1][1] / det, -cov[0][1] / det],
                vec![-cov[1][0] / det, cov[0][0] / det],
            ]
        }
        _ => panic!("direct weights only for p <= 2"),
    };
    z.iter()
        .map(|r| {
            let mut s = 1.0;
            for a in 0..p {
                for b in 0..p {
                    s += (r[a] - mean[a]) * inv[a][b] * (query[b] - mean[b]);
                }
            }
            s
        })
        .collect()
}
