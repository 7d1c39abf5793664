use std::collections::HashMap;

use super::EvalError;

fn comb2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table. Two
/// labelings that are both a single cluster (or both all singletons) score 1.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> Result<f64, EvalError>
where
    A: Eq + std::hash::Hash,
    B: Eq + std::hash::Hash,
{
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    // Sums are over integers, so map iteration order does not matter.
    let index: f64 = table.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len() as u64);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
