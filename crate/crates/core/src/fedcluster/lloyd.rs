//! Centralised Lloyd iterations sharing the federated tie and empty-cluster
//! rules.

use super::CentroidSet;
use crate::matrix::Matrix;

fn lloyd_step(data: &Matrix, centres: &CentroidSet) -> (Vec<usize>, CentroidSet) {
    let (k, d) = (centres.k(), centres.dim());
    let labels = centres.assign(data);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in data.iter_rows().zip(&labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut next = centres.centres.clone();
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (dst, s) in next.row_mut(c).iter_mut().zip(&sums[c]) {
                *dst = s / n;
            }
        }
    }
    (labels, CentroidSet::new(next))
}

/// Runs exactly `iters` Lloyd iterations from `init` and returns the final
/// nearest-centre labels with the final centres.
pub fn centralized_lloyd(data: &Matrix, init: &CentroidSet, iters: usize) -> (Vec<usize>, CentroidSet) {
    let mut centres = init.clone();
    for _ in 0..iters {
        centres = lloyd_step(data, &centres).1;
    }
    (centres.assign(data), centres)
}

/// Iterates until the assignment stops changing or `max_iters` is reached.
/// Returns labels, centres and the number of iterations performed.
pub fn lloyd_until_converged(
    data: &Matrix,
    init: &CentroidSet,
    max_iters: usize,
) -> (Vec<usize>, CentroidSet, usize) {
    let mut centres = init.clone();
    let mut prev: Option<Vec<usize>> = None;
    for it in 0..max_iters {
        let (labels, next) = lloyd_step(data, &centres);
        if prev.as_ref() == Some(&labels) {
            return (labels, centres, it);
        }
        prev = Some(labels);
        centres = next;
    }
    (centres.assign(data), centres, max_iters)
}
